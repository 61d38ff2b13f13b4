"""Reference BlazeFace post-processing (anchors, decode, blending NMS).

Vectorized numpy implementation kept separate from the engine's: fixtures
produced here exercise the primary decode path differentially. Boxes are
(x, y, w, h) in input pixels; landmark order follows the MediaPipe heads.
"""

from __future__ import annotations

import numpy as np

LANDMARKS = ("right_eye", "left_eye", "nose_tip", "mouth_center", "right_ear", "left_ear")

ANCHOR_LAYERS = ((16, 2), (8, 6))  # (grid, anchors per cell), both variants


def anchor_centers() -> np.ndarray:
    """(896, 2) normalized anchor centers, grid-row-major."""
    rows = []
    for grid, per_cell in ANCHOR_LAYERS:
        cy, cx = np.mgrid[0:grid, 0:grid]
        centers = np.stack([(cx + 0.5) / grid, (cy + 0.5) / grid], axis=2)
        rows.append(np.repeat(centers.reshape(-1, 2), per_cell, axis=0))
    return np.concatenate(rows)


def decode(raw_boxes: np.ndarray, raw_scores: np.ndarray, input_size: int,
           score_threshold: float = 0.75) -> list[dict]:
    """List of {x, y, w, h, score, landmarks} dicts above threshold."""
    centers = anchor_centers()
    z = np.clip(raw_scores.astype(np.float64), -100.0, 100.0)
    scores = 1.0 / (1.0 + np.exp(-z))
    picked = np.nonzero(scores > score_threshold)[0]
    out = []
    for i in picked:
        row = raw_boxes[i].astype(np.float64)
        w, h = row[2], row[3]
        if w <= 0 or h <= 0:
            continue
        cx = centers[i, 0] * input_size + row[0]
        cy = centers[i, 1] * input_size + row[1]
        marks = [
            {"name": name,
             "x": centers[i, 0] * input_size + row[4 + 2 * k],
             "y": centers[i, 1] * input_size + row[5 + 2 * k]}
            for k, name in enumerate(LANDMARKS)
        ]
        out.append({
            "x": cx - w / 2.0, "y": cy - h / 2.0, "w": w, "h": h,
            "score": float(scores[i]), "landmarks": marks,
        })
    return out


def _iou(a: dict, b: dict) -> float:
    ix = max(0.0, min(a["x"] + a["w"], b["x"] + b["w"]) - max(a["x"], b["x"]))
    iy = max(0.0, min(a["y"] + a["h"], b["y"] + b["h"]) - max(a["y"], b["y"]))
    inter = ix * iy
    union = a["w"] * a["h"] + b["w"] * b["h"] - inter
    return inter / union if union > 0 else 0.0


def blend_nms(dets: list[dict], iou_threshold: float = 0.3) -> list[dict]:
    """Score-weighted cluster blending; seed score kept."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i]["score"])
    used = [False] * len(dets)
    out = []
    for i in order:
        if used[i]:
            continue
        cluster = [j for j in order
                   if not used[j] and _iou(dets[i], dets[j]) > iou_threshold]
        if i not in cluster:
            cluster.insert(0, i)
        for j in cluster:
            used[j] = True
        total = sum(dets[j]["score"] for j in cluster)
        if total <= 0:
            out.append(dets[i])
            continue

        def avg(key):
            return sum(dets[j][key] * dets[j]["score"] for j in cluster) / total

        marks = [
            {"name": m["name"],
             "x": sum(dets[j]["landmarks"][k]["x"] * dets[j]["score"]
                      for j in cluster) / total,
             "y": sum(dets[j]["landmarks"][k]["y"] * dets[j]["score"]
                      for j in cluster) / total}
            for k, m in enumerate(dets[i]["landmarks"])
        ]
        out.append({
            "x": avg("x"), "y": avg("y"), "w": avg("w"), "h": avg("h"),
            "score": dets[i]["score"], "landmarks": marks,
        })
    return out


def reference_detect(taps_nhwc: dict[str, np.ndarray], input_size: int) -> list[dict]:
    """End-to-end decode from the four head tensors (NHWC, batch stripped)."""
    boxes = []
    scores = []
    for grid, per_cell in ANCHOR_LAYERS:
        cls = taps_nhwc[f"cls_{grid}"]
        reg = taps_nhwc[f"reg_{grid}"]
        scores.append(cls.reshape(-1))
        boxes.append(reg.reshape(grid * grid * per_cell, 16))
    dets = decode(np.concatenate(boxes), np.concatenate(scores), input_size)
    return blend_nms(dets)
