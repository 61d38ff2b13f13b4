"""Minimal deterministic CNN inference engine.

Channel-major float32 tensors, a small fixed layer set, static shape
checking against the weight file before any execution, and a portable
little-endian weight format ("FDNW") with a trailing CRC-32.

Hot layers (convolutions, pooling) run on the selected kernel backend;
everything here is pure and single-threaded for reproducibility.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import impl as _kernels

__all__ = [
    "Tensor",
    "LayerSpec",
    "NetworkSpec",
    "NetworkError",
    "ShapeError",
    "WeightLoadError",
    "run_network",
    "read_weights",
    "write_weights",
    "FDNW_MAGIC",
]

FDNW_MAGIC = b"FDNW"
FDNW_VERSION = 1

LAYER_KINDS = frozenset(
    {
        "conv2d",
        "depthwise_conv2d",
        "max_pool",
        "prelu",
        "relu",
        "dense",
        "softmax_channel",
        "sigmoid",
        "add_residual",
        "pad",
    }
)

PARAMETERIZED = {"conv2d": ("weight", "bias"), "depthwise_conv2d": ("weight", "bias"),
                 "dense": ("weight", "bias"), "prelu": ("slope",)}


class NetworkError(ValueError):
    """Base error for network construction and execution problems."""


class ShapeError(NetworkError):
    """Tensor/parameter shape mismatch; message names the offending layer."""


class WeightLoadError(NetworkError):
    """Weight file missing, malformed, or inconsistent with the network."""


@dataclass(frozen=True)
class Tensor:
    shape: tuple[int, int, int]  # (channels, height, width)
    data: np.ndarray  # float32, shape == self.shape

    def __post_init__(self):
        c, h, w = self.shape
        if c < 0 or h < 0 or w < 0:
            raise ValueError("tensor dims must be non-negative")
        if self.data.shape != self.shape:
            raise ValueError(f"data shape {self.data.shape} != {self.shape}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Tensor":
        a = np.ascontiguousarray(arr, dtype=np.float32)
        if a.ndim != 3:
            raise ValueError("expected a (c, h, w) array")
        return cls(a.shape, a)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    stride: int = 1
    pad: int = 0  # symmetric spatial zero padding (conv kinds)
    kernel: int = 0  # pooling window side
    ceil_mode: bool = False
    padding: tuple[int, int, int, int] | None = None  # pad layer: t, b, l, r
    channel_padding: tuple[int, int] | None = None  # pad layer: before, after
    source: str | None = None  # input layer name; None = previous layer
    residual: str | None = None  # second operand for add_residual

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "max_pool" and self.kernel < 1:
            raise ValueError(f"layer {self.name!r}: max_pool needs kernel >= 1")
        if self.kind == "add_residual" and self.residual is None:
            raise ValueError(f"layer {self.name!r}: add_residual needs a residual source")
        if self.kind == "pad" and self.padding is None and self.channel_padding is None:
            raise ValueError(f"layer {self.name!r}: pad needs explicit padding")
        if self.stride < 1:
            raise ValueError(f"layer {self.name!r}: stride must be >= 1")


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    taps: dict[str, str] = field(default_factory=dict)  # tap name -> layer name

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate layer names")
        seen: set[str] = set()
        for l in self.layers:
            for ref in (l.source, l.residual):
                if ref is not None and ref not in seen:
                    raise ValueError(
                        f"layer {l.name!r} references {ref!r} before it exists"
                    )
            seen.add(l.name)
        for tap, layer in self.taps.items():
            if layer not in seen:
                raise ValueError(f"tap {tap!r} references unknown layer {layer!r}")


def _pool_out(size: int, kernel: int, stride: int, ceil_mode: bool) -> int:
    span = size - kernel
    if ceil_mode:
        n = -(-span // stride) + 1
        # partial windows must still start inside the input
        if (n - 1) * stride >= size:
            n -= 1
        return n
    return span // stride + 1


def _infer_shapes(
    spec: NetworkSpec, weights: dict[str, np.ndarray], input_shape: tuple[int, int, int]
) -> dict[str, tuple[int, int, int]]:
    """Static pass: validate every layer and weight record, return shapes.

    Raises before execution so a bad weight file never half-runs a network.
    """
    used: set[str] = set()

    def param(layer: LayerSpec, suffix: str) -> np.ndarray:
        key = f"{layer.name}.{suffix}"
        if key not in weights:
            raise WeightLoadError(f"{spec.name}: missing weight record {key!r}")
        used.add(key)
        return weights[key]

    shapes: dict[str, tuple[int, int, int]] = {}
    prev = input_shape
    for l in spec.layers:
        c, h, w = shapes[l.source] if l.source is not None else prev
        if l.kind == "conv2d":
            k = param(l, "weight")
            b = param(l, "bias")
            if k.ndim != 4 or k.shape[1] != c:
                raise ShapeError(
                    f"{spec.name}/{l.name}: kernel {k.shape} does not accept "
                    f"{c} input channels"
                )
            if b.shape != (k.shape[0],):
                raise ShapeError(f"{spec.name}/{l.name}: bias shape {b.shape}")
            oh = (h + 2 * l.pad - k.shape[2]) // l.stride + 1
            ow = (w + 2 * l.pad - k.shape[3]) // l.stride + 1
            if oh < 1 or ow < 1:
                raise ShapeError(f"{spec.name}/{l.name}: kernel larger than input")
            out = (k.shape[0], oh, ow)
        elif l.kind == "depthwise_conv2d":
            k = param(l, "weight")
            b = param(l, "bias")
            if k.ndim != 3 or k.shape[0] != c:
                raise ShapeError(
                    f"{spec.name}/{l.name}: depthwise kernel {k.shape} vs {c} channels"
                )
            if b.shape != (c,):
                raise ShapeError(f"{spec.name}/{l.name}: bias shape {b.shape}")
            oh = (h + 2 * l.pad - k.shape[1]) // l.stride + 1
            ow = (w + 2 * l.pad - k.shape[2]) // l.stride + 1
            if oh < 1 or ow < 1:
                raise ShapeError(f"{spec.name}/{l.name}: kernel larger than input")
            out = (c, oh, ow)
        elif l.kind == "dense":
            k = param(l, "weight")
            b = param(l, "bias")
            if k.ndim != 2 or k.shape[1] != c * h * w:
                raise ShapeError(
                    f"{spec.name}/{l.name}: dense weight {k.shape} vs input {c * h * w}"
                )
            if b.shape != (k.shape[0],):
                raise ShapeError(f"{spec.name}/{l.name}: bias shape {b.shape}")
            out = (k.shape[0], 1, 1)
        elif l.kind == "prelu":
            s = param(l, "slope")
            if s.shape != (c,):
                raise ShapeError(f"{spec.name}/{l.name}: slope shape {s.shape} vs {c}")
            out = (c, h, w)
        elif l.kind == "max_pool":
            if l.kernel > h or l.kernel > w:
                raise ShapeError(f"{spec.name}/{l.name}: pool kernel larger than input")
            out = (
                c,
                _pool_out(h, l.kernel, l.stride, l.ceil_mode),
                _pool_out(w, l.kernel, l.stride, l.ceil_mode),
            )
        elif l.kind == "pad":
            t, bo, le, r = l.padding or (0, 0, 0, 0)
            cb, ca = l.channel_padding or (0, 0)
            out = (c + cb + ca, h + t + bo, w + le + r)
        elif l.kind == "add_residual":
            other = shapes[l.residual]
            if other != (c, h, w):
                raise ShapeError(
                    f"{spec.name}/{l.name}: residual shape {other} != {(c, h, w)}"
                )
            out = (c, h, w)
        else:  # relu, sigmoid, softmax_channel
            out = (c, h, w)
        shapes[l.name] = out
        prev = out
    unused = set(weights) - used
    if unused:
        raise WeightLoadError(
            f"{spec.name}: unused weight records {sorted(unused)}"
        )
    return shapes


def run_network(
    spec: NetworkSpec, weights: dict[str, np.ndarray], x: Tensor
) -> dict[str, Tensor]:
    """Run all layers in order; return the declared taps (or the last layer)."""
    _infer_shapes(spec, weights, x.shape)
    outputs: dict[str, np.ndarray] = {}
    cur = x.data
    for l in spec.layers:
        src = outputs[l.source] if l.source is not None else cur
        if l.kind == "conv2d":
            k = np.ascontiguousarray(weights[f"{l.name}.weight"], dtype=np.float32)
            b = np.ascontiguousarray(weights[f"{l.name}.bias"], dtype=np.float32)
            cur = _kernels.conv2d(np.ascontiguousarray(src), k, b, l.stride, l.pad)
        elif l.kind == "depthwise_conv2d":
            k = np.ascontiguousarray(weights[f"{l.name}.weight"], dtype=np.float32)
            b = np.ascontiguousarray(weights[f"{l.name}.bias"], dtype=np.float32)
            cur = _kernels.depthwise_conv2d(
                np.ascontiguousarray(src), k, b, l.stride, l.pad
            )
        elif l.kind == "max_pool":
            cur = _kernels.max_pool(
                np.ascontiguousarray(src), l.kernel, l.stride, l.ceil_mode
            )
        elif l.kind == "dense":
            k = weights[f"{l.name}.weight"].astype(np.float32)
            b = weights[f"{l.name}.bias"].astype(np.float32)
            cur = (k @ src.reshape(-1) + b).reshape(-1, 1, 1).astype(np.float32)
        elif l.kind == "prelu":
            s = weights[f"{l.name}.slope"].astype(np.float32).reshape(-1, 1, 1)
            cur = np.where(src > 0, src, src * s).astype(np.float32)
        elif l.kind == "relu":
            cur = np.maximum(src, np.float32(0.0))
        elif l.kind == "sigmoid":
            z = np.clip(src, -100.0, 100.0)
            cur = (1.0 / (1.0 + np.exp(-z, dtype=np.float64))).astype(np.float32)
        elif l.kind == "softmax_channel":
            z = src - src.max(axis=0, keepdims=True)
            e = np.exp(z, dtype=np.float64)
            cur = (e / e.sum(axis=0, keepdims=True)).astype(np.float32)
        elif l.kind == "pad":
            t, bo, le, r = l.padding or (0, 0, 0, 0)
            cb, ca = l.channel_padding or (0, 0)
            cur = np.pad(src, ((cb, ca), (t, bo), (le, r))).astype(np.float32)
        else:  # add_residual
            cur = (src + outputs[l.residual]).astype(np.float32)
        outputs[l.name] = cur
    taps = spec.taps or {"output": spec.layers[-1].name}
    return {t: Tensor.from_array(outputs[layer]) for t, layer in taps.items()}


# ---------------------------------------------------------------------------
# FDNW weight files


def write_weights(records: dict[str, np.ndarray], path: str | Path) -> None:
    """Serialize named float32 tensors; layout documented in the reader."""
    body = bytearray()
    body += FDNW_MAGIC
    body += struct.pack("<II", FDNW_VERSION, len(records))
    for name, arr in records.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb))
        body += nb
        body += struct.pack("<BB", 0, a.ndim)
        body += struct.pack(f"<{a.ndim}I", *a.shape)
        body += a.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(body))


def read_weights(path: str | Path) -> dict[str, np.ndarray]:
    """Parse an FDNW file.

    Little-endian: magic "FDNW", u32 version=1, u32 tensor_count; per record
    u16 name_len, UTF-8 name, u8 dtype (0 = f32), u8 rank, u32 dims[rank],
    raw f32 payload (C order); trailing u32 CRC-32 of all preceding bytes.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != FDNW_MAGIC:
        raise WeightLoadError("not an FDNW weight file")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc:
        raise WeightLoadError("FDNW checksum mismatch")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != FDNW_VERSION:
        raise WeightLoadError(f"unsupported FDNW version {version}")
    off = 12
    end = len(raw) - 4
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        if off + 2 > end:
            raise WeightLoadError("truncated FDNW record header")
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        if off + 2 > end:
            raise WeightLoadError(f"truncated FDNW record {name!r}")
        dtype, rank = struct.unpack_from("<BB", raw, off)
        off += 2
        if dtype != 0:
            raise WeightLoadError(f"record {name!r}: unknown dtype {dtype}")
        dims = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if off + 4 * n > end:
            raise WeightLoadError(f"record {name!r}: payload extends past file end")
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        if name in records:
            raise WeightLoadError(f"duplicate record {name!r}")
        records[name] = arr.astype(np.float32)
    if off != end:
        raise WeightLoadError("trailing bytes after last FDNW record")
    return records
