"""Image file reading and writing.

Binary PGM (P5) and PPM (P6) with maxval 255 are parsed natively so test
fixtures need no codec dependency; PNG (and other Pillow formats) are
supported for convenience.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .imaging import ImageBuffer

__all__ = ["read_image", "write_pnm"]


def _read_pnm(raw: bytes) -> ImageBuffer:
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    # Header tokens: magic, width, height, maxval. '#' starts a comment.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        m = re.match(rb"\d+", raw[pos:])
        if not m:
            raise ValueError("malformed PNM header")
        tokens.append(int(m.group()))
        pos += m.end()
    width, height, maxval = tokens
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    data = np.frombuffer(raw[pos : pos + n], dtype=np.uint8)
    if data.size != n:
        raise ValueError("truncated PNM payload")
    return ImageBuffer(width, height, channels, data.reshape(height, width, channels).copy())


def read_image(path: str | Path) -> ImageBuffer:
    """Read PGM/PPM natively, anything else through Pillow (as RGB or gray)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] in (b"P5", b"P6"):
        return _read_pnm(raw)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.uint8)
    return ImageBuffer.from_array(arr)


def write_pnm(img: ImageBuffer, path: str | Path) -> None:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    Path(path).write_bytes(header + img.data.tobytes())
