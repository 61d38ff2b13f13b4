"""BlazeFace single-shot detector: front (128x128) and rear (256x256)
variants, SSD-style anchor decode, clipped-sigmoid scoring, six facial
landmarks, and blending NMS.

Both variants use two anchor layers (16x16 cells with 2 anchors, 8x8 with
6) for 896 unit-prior anchors. The backbone topology is data: a JSON layer
list bundled next to the weight file, shared between variants and resolved
at load time, so the engine stays free of hard-coded architecture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .detections import BoundingBox, Detection, Landmark, nms_blend
from .imaging import ImageBuffer, resize_bilinear
from .nnengine import LayerSpec, NetworkSpec, Tensor, run_network

__all__ = [
    "BlazeVariant",
    "Anchor",
    "FRONT",
    "REAR",
    "generate_anchors",
    "decode_predictions",
    "detect_blazeface",
    "spec_from_json",
    "load_bundled_spec",
]

LANDMARK_ORDER = (
    "right_eye",
    "left_eye",
    "nose_tip",
    "mouth_center",
    "right_ear",
    "left_ear",
)


@dataclass(frozen=True)
class BlazeVariant:
    kind: str  # "front" | "rear"
    input_size: int
    anchor_layers: tuple[tuple[int, int], ...]  # (grid cells, anchors per cell)
    score_threshold: float = 0.75
    blend_iou: float = 0.3

    def __post_init__(self):
        if self.kind not in ("front", "rear"):
            raise ValueError(f"unknown variant kind {self.kind!r}")
        if self.input_size not in (128, 256):
            raise ValueError("input_size must be 128 or 256")

    @property
    def anchor_count(self) -> int:
        return sum(g * g * a for g, a in self.anchor_layers)


FRONT = BlazeVariant("front", 128, ((16, 2), (8, 6)))
REAR = BlazeVariant("rear", 256, ((16, 2), (8, 6)))


@dataclass(frozen=True)
class Anchor:
    cx: float
    cy: float
    w: float = 1.0
    h: float = 1.0


def generate_anchors(variant: BlazeVariant) -> list[Anchor]:
    """Unit-prior anchors, grid-row-major within each layer."""
    anchors = []
    for grid, per_cell in variant.anchor_layers:
        for r in range(grid):
            for c in range(grid):
                for _ in range(per_cell):
                    anchors.append(Anchor((c + 0.5) / grid, (r + 0.5) / grid))
    return anchors


def decode_predictions(
    raw_boxes: np.ndarray,
    raw_scores: np.ndarray,
    anchors: list[Anchor],
    input_size: int,
    score_threshold: float = 0.75,
) -> list[Detection]:
    """Anchor-relative decode into input-pixel detections.

    Rows at or below the score threshold are dropped, as are rows whose
    decoded width or height is not positive (degenerate-size guard).
    """
    n = len(anchors)
    if raw_boxes.shape != (n, 16):
        raise ValueError(f"raw_boxes must be ({n}, 16), got {raw_boxes.shape}")
    if raw_scores.shape != (n,):
        raise ValueError(f"raw_scores must be ({n},), got {raw_scores.shape}")
    z = np.clip(np.asarray(raw_scores, dtype=np.float64), -100.0, 100.0)
    scores = 1.0 / (1.0 + np.exp(-z))
    dets: list[Detection] = []
    for i in np.nonzero(scores > score_threshold)[0]:
        a = anchors[i]
        row = raw_boxes[i]
        cx = (a.cx + row[0] / input_size) * input_size
        cy = (a.cy + row[1] / input_size) * input_size
        w = row[2] / input_size * input_size
        h = row[3] / input_size * input_size
        if w <= 0 or h <= 0:
            continue
        marks = tuple(
            Landmark(
                name,
                (a.cx + row[4 + 2 * k] / input_size) * input_size,
                (a.cy + row[5 + 2 * k] / input_size) * input_size,
            )
            for k, name in enumerate(LANDMARK_ORDER)
        )
        dets.append(
            Detection(
                BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h),
                float(scores[i]),
                marks,
            )
        )
    return dets


def spec_from_json(name: str, layers: list[dict], taps: dict[str, str]) -> NetworkSpec:
    """Build a NetworkSpec from the JSON topology layer list."""
    specs = []
    for entry in layers:
        kw = dict(entry)
        if "padding" in kw and kw["padding"] is not None:
            kw["padding"] = tuple(kw["padding"])
        if "channel_padding" in kw and kw["channel_padding"] is not None:
            kw["channel_padding"] = tuple(kw["channel_padding"])
        specs.append(LayerSpec(**kw))
    return NetworkSpec(name, tuple(specs), taps=dict(taps))


def load_bundled_spec(variant: BlazeVariant) -> NetworkSpec:
    """Topology bundled as package data (blazeface_<kind>.topology.json)."""
    path = resources.files("facekit") / "data" / "models" / (
        f"blazeface_{variant.kind}.topology.json"
    )
    doc = json.loads(path.read_text())
    return spec_from_json(doc["name"], doc["layers"], doc["taps"])


def _gather_raw(taps: dict[str, Tensor], variant: BlazeVariant):
    """Flatten the four head tensors into (n, 16) boxes and (n,) logits.

    Channel layout per cell follows the reference export: anchor-major,
    then coordinate (so a head with A anchors has A*16 regression channels).
    """
    boxes = []
    scores = []
    for grid, per_cell in variant.anchor_layers:
        cls = taps[f"cls_{grid}"].data  # (per_cell, grid, grid)
        reg = taps[f"reg_{grid}"].data  # (per_cell * 16, grid, grid)
        if cls.shape != (per_cell, grid, grid):
            raise ValueError(f"cls_{grid} head shape {cls.shape} unexpected")
        if reg.shape != (per_cell * 16, grid, grid):
            raise ValueError(f"reg_{grid} head shape {reg.shape} unexpected")
        # (c, h, w) -> (h, w, c) -> (cells * anchors, ...) row-major
        scores.append(np.moveaxis(cls, 0, 2).reshape(-1))
        reg_hwc = np.moveaxis(reg, 0, 2).reshape(grid * grid * per_cell, 16)
        boxes.append(reg_hwc)
    return np.concatenate(boxes), np.concatenate(scores)


def detect_blazeface(
    img: ImageBuffer,
    variant: BlazeVariant,
    weights: dict[str, np.ndarray],
    spec: NetworkSpec | None = None,
) -> list[Detection]:
    """Resize to the variant's fixed square input, run the backbone, decode,
    blend-NMS, and map boxes back to the original image's pixels."""
    spec = spec or load_bundled_spec(variant)
    size = variant.input_size
    frame = resize_bilinear(img, size, size)
    if frame.channels == 1:
        planes = np.repeat(frame.data[:, :, 0][None], 3, axis=0)
    else:
        planes = np.moveaxis(frame.data, 2, 0)
    x = Tensor.from_array((planes.astype(np.float32) - 127.5) / 127.5)
    taps = run_network(spec, weights, x)
    raw_boxes, raw_scores = _gather_raw(taps, variant)
    anchors = generate_anchors(variant)
    dets = decode_predictions(
        raw_boxes, raw_scores, anchors, size, variant.score_threshold
    )
    dets = nms_blend(dets, variant.blend_iou)
    sx = img.width / size
    sy = img.height / size
    out = []
    for d in dets:
        box = BoundingBox(d.box.x * sx, d.box.y * sy, d.box.w * sx, d.box.h * sy)
        marks = tuple(Landmark(m.name, m.x * sx, m.y * sy) for m in d.landmarks)
        out.append(Detection(box, d.score, marks))
    return out
