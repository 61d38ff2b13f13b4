"""Independent FDNW writer/reader.

Format (little-endian): magic "FDNW", u32 version=1, u32 tensor count;
per record u16 name_len, UTF-8 name, u8 dtype (0 = f32), u8 rank,
u32 dims[rank], raw f32 payload in C order; trailing u32 CRC-32 over all
preceding bytes. Serialization is deterministic: records are written in
the dict's insertion order, so re-exporting the same mapping is
byte-identical.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"FDNW"
VERSION = 1


def write_fdnw(records: dict[str, np.ndarray], path: str | Path) -> None:
    body = bytearray(MAGIC)
    body += struct.pack("<II", VERSION, len(records))
    for name, arr in records.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<BB", 0, a.ndim)
        body += struct.pack(f"<{a.ndim}I", *a.shape)
        body += a.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    # no partial files: write to a sibling temp name, then replace
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(bytes(body))
    tmp.replace(path)


def read_fdnw(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise ValueError("not an FDNW file")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc:
        raise ValueError("FDNW checksum mismatch")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"unsupported FDNW version {version}")
    off = 12
    end = len(raw) - 4
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        dtype, rank = struct.unpack_from("<BB", raw, off)
        off += 2
        if dtype != 0:
            raise ValueError(f"record {name!r}: unsupported dtype {dtype}")
        dims = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        out[name] = np.frombuffer(raw, "<f4", count=n, offset=off).reshape(dims).copy()
        off += 4 * n
    if off != end:
        raise ValueError("trailing bytes in FDNW file")
    return out
