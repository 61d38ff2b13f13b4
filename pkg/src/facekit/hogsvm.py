"""HOG descriptors, a minimal linear-SVM trainer, and the HOG face detector.

Dalal-Triggs-style geometry pinned to a 64x64 window: 8 px cells, 2x2-cell
blocks at 1-cell stride, 9 unsigned orientation bins, L2-hys normalization.
Descriptor length works out to 7*7*2*2*9 = 1764.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detections import BoundingBox, Detection, nms_hard
from .imaging import ImageBuffer, build_pyramid, to_grayscale
from .kernels import impl as _kernels

__all__ = [
    "HogConfig",
    "LinearSvmModel",
    "gradients",
    "hog_descriptor",
    "train_linear_svm",
    "detect_hog",
    "save_svm_model",
    "load_svm_model",
]

HSVM_MAGIC = b"HSVM"
HSVM_VERSION = 1


@dataclass(frozen=True)
class HogConfig:
    cell: int = 8
    block: int = 2  # block side, in cells
    block_stride: int = 1  # in cells
    bins: int = 9
    window: int = 64  # square detection window, in pixels
    clip: float = 0.2  # L2-hys clipping value

    def __post_init__(self):
        if self.window % self.cell != 0:
            raise ValueError("window must be divisible by cell")
        if self.block > self.window // self.cell:
            raise ValueError("block exceeds window extent")

    @property
    def cells_per_side(self) -> int:
        return self.window // self.cell

    @property
    def blocks_per_side(self) -> int:
        return (self.cells_per_side - self.block) // self.block_stride + 1

    @property
    def descriptor_length(self) -> int:
        return self.blocks_per_side**2 * self.block**2 * self.bins


@dataclass(frozen=True)
class LinearSvmModel:
    weights: np.ndarray  # float64, length = descriptor length
    bias: float
    threshold: float
    config: HogConfig | None = field(default_factory=HogConfig)
    # config is None for raw (non-HOG) feature vectors, e.g. trainer tests

    def __post_init__(self):
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")
        if self.config is not None and self.weights.shape != (
            self.config.descriptor_length,
        ):
            raise ValueError(
                f"weights length {self.weights.shape[0]} does not match "
                f"descriptor length {self.config.descriptor_length}"
            )


def gradients(img: ImageBuffer | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered-difference gradients: (magnitude, orientation in [0, 180))."""
    if isinstance(img, ImageBuffer):
        plane = to_grayscale(img).plane()
    else:
        plane = np.asarray(img)
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise ValueError("gradients need an image of at least 3x3")
    p = plane.astype(np.float64)
    # [-1, 0, 1] kernel with clamped edges
    left = np.empty_like(p)
    right = np.empty_like(p)
    left[:, 1:] = p[:, :-1]
    left[:, 0] = p[:, 0]
    right[:, :-1] = p[:, 1:]
    right[:, -1] = p[:, -1]
    gx = right - left
    up = np.empty_like(p)
    down = np.empty_like(p)
    up[1:, :] = p[:-1, :]
    up[0, :] = p[0, :]
    down[:-1, :] = p[1:, :]
    down[-1, :] = p[-1, :]
    gy = down - up
    mag = np.sqrt(gx * gx + gy * gy)
    ori = np.degrees(np.arctan2(gy, gx)) % 180.0
    return mag, ori


def hog_descriptor(img: ImageBuffer | np.ndarray, cfg: HogConfig | None = None) -> np.ndarray:
    """HOG descriptor of one detection window; raises on wrong window size."""
    cfg = cfg or HogConfig()
    if isinstance(img, ImageBuffer):
        plane = to_grayscale(img).plane()
    else:
        plane = np.asarray(img)
    if plane.shape != (cfg.window, cfg.window):
        raise ValueError(
            f"expected a {cfg.window}x{cfg.window} window, got {plane.shape}"
        )
    mag, ori = gradients(plane)
    return _descriptor_from_gradients(mag, ori, cfg)


def _descriptor_from_gradients(mag: np.ndarray, ori: np.ndarray, cfg: HogConfig) -> np.ndarray:
    bin_width = 180.0 / cfg.bins
    pos = ori / bin_width - 0.5  # bin centers at (i + 0.5) * width
    bin_lo = np.floor(pos).astype(np.int64)
    frac = pos - bin_lo
    bin_lo %= cfg.bins
    hist = _kernels.cell_histograms(
        np.ascontiguousarray(mag),
        np.ascontiguousarray(bin_lo),
        np.ascontiguousarray(frac),
        cfg.cell,
        cfg.bins,
    )
    return _blocks_from_histograms(hist, cfg)


def _blocks_from_histograms(hist: np.ndarray, cfg: HogConfig) -> np.ndarray:
    nb = cfg.blocks_per_side
    out = np.empty(nb * nb * cfg.block * cfg.block * cfg.bins, dtype=np.float64)
    blk = cfg.block * cfg.block * cfg.bins
    i = 0
    for by in range(nb):
        for bx in range(nb):
            cy = by * cfg.block_stride
            cx = bx * cfg.block_stride
            v = hist[cy : cy + cfg.block, cx : cx + cfg.block].ravel()
            n = np.sqrt(v @ v + 1e-6 * 1e-6)
            v = np.minimum(v / n, cfg.clip)
            n = np.sqrt(v @ v + 1e-6 * 1e-6)
            out[i : i + blk] = v / n
            i += blk
    return out


def train_linear_svm(
    pos: list[np.ndarray],
    neg: list[np.ndarray],
    lam: float = 1e-4,
    epochs: int = 50,
    seed: int = 0,
    threshold: float = 0.0,
    config: HogConfig | None = None,
) -> LinearSvmModel:
    """Primal sub-gradient descent on hinge loss + (lam/2)||w||^2.

    Step size 1/(lam*t); samples reshuffled each epoch by a generator seeded
    once, so a fixed seed gives bit-identical weights.
    """
    if not pos or not neg:
        raise ValueError("need at least one positive and one negative sample")
    x = np.asarray(list(pos) + list(neg), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("descriptors must have uniform length")
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    if all(np.array_equal(p, n) for p in pos for n in neg):
        warnings.warn("degenerate training data: positives equal negatives")
    rng = np.random.default_rng(seed)
    dim = x.shape[1]
    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(len(x)):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (x[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * x[i]
                b += eta * y[i]
    cfg = config
    if cfg is None and dim == HogConfig().descriptor_length:
        cfg = HogConfig()
    return LinearSvmModel(w, float(b), float(threshold), cfg)


def svm_score(model: LinearSvmModel, descriptor: np.ndarray) -> float:
    return float(descriptor @ model.weights + model.bias)


def _window_scores(mag: np.ndarray, ori: np.ndarray, cfg: HogConfig, model, stride: int):
    """Scores for every stride-aligned window of one pyramid level.

    Cell histograms are computed once per level; each window reads its
    cell sub-grid, so windows must be cell-aligned (stride multiple of cell).
    """
    h, w = mag.shape
    bin_width = 180.0 / cfg.bins
    pos = ori / bin_width - 0.5
    bin_lo = np.floor(pos).astype(np.int64)
    frac = pos - bin_lo
    bin_lo %= cfg.bins
    hist = _kernels.cell_histograms(
        np.ascontiguousarray(mag),
        np.ascontiguousarray(bin_lo),
        np.ascontiguousarray(frac),
        cfg.cell,
        cfg.bins,
    )
    cells = cfg.cells_per_side
    step = stride // cfg.cell
    out = []
    for wy in range(0, hist.shape[0] - cells + 1, step):
        for wx in range(0, hist.shape[1] - cells + 1, step):
            d = _blocks_from_histograms(hist[wy : wy + cells, wx : wx + cells], cfg)
            out.append((wx * cfg.cell, wy * cfg.cell, svm_score(model, d)))
    return out


def detect_hog(
    model: LinearSvmModel,
    img: ImageBuffer,
    pyramid_factor: float = 1.2,
    stride: int = 8,
    nms_iou: float = 0.3,
) -> list[Detection]:
    """Multi-scale HOG scan; scores above model.threshold survive NMS."""
    cfg = model.config
    if cfg is None:
        raise ValueError("model carries no HOG configuration")
    if img.width < cfg.window or img.height < cfg.window:
        return []
    if stride % cfg.cell != 0:
        raise ValueError("stride must be a multiple of the cell size")
    gray = to_grayscale(img)
    raw: list[Detection] = []
    for level in build_pyramid(gray, pyramid_factor, cfg.window):
        mag, ori = gradients(level.image.plane())
        inv = 1.0 / level.scale
        for x, y, score in _window_scores(mag, ori, cfg, model, stride):
            if score > model.threshold:
                box = BoundingBox(x * inv, y * inv, cfg.window * inv, cfg.window * inv)
                prob = 1.0 / (1.0 + np.exp(-score))
                raw.append(Detection(box, float(prob)))
    return nms_hard(raw, nms_iou)


def save_svm_model(model: LinearSvmModel, path: str | Path) -> None:
    """Little-endian binary: magic, u32 version, u32 dim, f32 bias/threshold/weights."""
    w = model.weights.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(HSVM_MAGIC)
        fh.write(struct.pack("<II", HSVM_VERSION, w.size))
        fh.write(struct.pack("<ff", model.bias, model.threshold))
        fh.write(w.tobytes())


def load_svm_model(path: str | Path, config: HogConfig | None = None) -> LinearSvmModel:
    raw = Path(path).read_bytes()
    if raw[:4] != HSVM_MAGIC:
        raise ValueError("not an HSVM model file")
    version, dim = struct.unpack_from("<II", raw, 4)
    if version != HSVM_VERSION:
        raise ValueError(f"unsupported HSVM version {version}")
    bias, threshold = struct.unpack_from("<ff", raw, 12)
    weights = np.frombuffer(raw, dtype="<f4", count=dim, offset=20).astype(np.float64)
    if len(raw) != 20 + 4 * dim:
        raise ValueError("HSVM file length does not match header")
    cfg = config
    if cfg is None and dim == HogConfig().descriptor_length:
        cfg = HogConfig()
    return LinearSvmModel(weights, float(bias), float(threshold), cfg)
