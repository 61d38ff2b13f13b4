"""Reference MTCNN pipeline on the torch networks.

Stage semantics follow the documented pipeline contract (pyramid
s0 = 12/min_face, factor 0.709; stride-2 cell decode with floor; square
padding; landmark decode against the pre-regression square; min-mode NMS
in the last stage). Orchestration is numpy + torch, independent of the
engine implementation it is used to test.
"""

from __future__ import annotations

import numpy as np
import torch

from .resampler import resize_bilinear_u8

THRESHOLDS = (0.6, 0.7, 0.7)
LANDMARKS = ("left_eye", "right_eye", "nose_tip", "mouth_left", "mouth_right")


def _normalize(img: np.ndarray) -> np.ndarray:
    chw = np.moveaxis(img, 2, 0).astype(np.float32)
    return (chw - 127.5) / 128.0


def _forward(net, img: np.ndarray) -> list[np.ndarray]:
    with torch.no_grad():
        out = net(torch.from_numpy(_normalize(img)[None]))
    return [o.numpy()[0] for o in out]


def _softmax2(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z, dtype=np.float64)
    return (e / e.sum(axis=0, keepdims=True))[1]


def _nms(boxes: np.ndarray, scores: np.ndarray, thr: float, min_mode=False):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    dead = np.zeros(len(scores), bool)
    keep = []
    for i in order:
        if dead[i]:
            continue
        keep.append(i)
        for j in order:
            if dead[j] or j == i:
                continue
            ix = max(0.0, min(boxes[i, 2], boxes[j, 2]) - max(boxes[i, 0], boxes[j, 0]))
            iy = max(0.0, min(boxes[i, 3], boxes[j, 3]) - max(boxes[i, 1], boxes[j, 1]))
            inter = ix * iy
            denom = min(areas[i], areas[j]) if min_mode else areas[i] + areas[j] - inter
            if denom > 0 and inter / denom > thr:
                dead[j] = True
    return keep


def _refine(boxes: np.ndarray, reg: np.ndarray) -> np.ndarray:
    size = np.stack([boxes[:, 2] - boxes[:, 0], boxes[:, 3] - boxes[:, 1]], axis=1)
    return boxes + reg * np.tile(size, 2)


def _square(boxes: np.ndarray) -> np.ndarray:
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    side = np.maximum(w, h)
    cx = (boxes[:, 0] + boxes[:, 2]) / 2
    cy = (boxes[:, 1] + boxes[:, 3]) / 2
    return np.stack([cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2], 1)


def _crop(img: np.ndarray, box: np.ndarray, size: int) -> np.ndarray:
    x1, y1, x2, y2 = (int(round(float(v))) for v in box)
    h, w = img.shape[:2]
    canvas = np.zeros((max(y2 - y1, 1), max(x2 - x1, 1), 3), np.uint8)
    sx1, sy1 = max(x1, 0), max(y1, 0)
    sx2, sy2 = min(x2, w), min(y2, h)
    if sx2 > sx1 and sy2 > sy1:
        canvas[sy1 - y1 : sy2 - y1, sx1 - x1 : sx2 - x1] = img[sy1:sy2, sx1:sx2]
    return resize_bilinear_u8(canvas, size, size)


def reference_detect(img: np.ndarray, pnet, rnet, onet,
                     min_face: int = 20, factor: float = 0.709) -> list[dict]:
    """Full pipeline on an (h, w, 3) uint8 image; returns detection dicts."""
    h, w = img.shape[:2]
    if min(h, w) < min_face:
        return []
    boxes_all, reg_all, score_all = [], [], []
    scale = 12.0 / min_face
    while min(h, w) * scale >= 12.0:
        sw = max(int(np.ceil(w * scale)), 12)
        sh = max(int(np.ceil(h * scale)), 12)
        prob_logits, reg = _forward(pnet, resize_bilinear_u8(img, sw, sh))
        prob = _softmax2(prob_logits)
        rows, cols = np.where(prob > THRESHOLDS[0])
        if len(rows):
            side = 12.0 / scale
            x1 = np.floor(2.0 * cols / scale)
            y1 = np.floor(2.0 * rows / scale)
            boxes = np.stack([x1, y1, x1 + side, y1 + side], 1)
            scores = prob[rows, cols]
            keep = _nms(boxes, scores, 0.5)
            boxes_all.append(boxes[keep])
            reg_all.append(reg[:, rows, cols].T[keep])
            score_all.append(scores[keep])
        scale *= factor
    if not boxes_all:
        return []
    boxes = np.concatenate(boxes_all)
    regs = np.concatenate(reg_all)
    scores = np.concatenate(score_all)
    keep = _nms(boxes, scores, 0.7)
    boxes = _square(_refine(boxes[keep], regs[keep]))

    # R-Net
    outs = [_forward(rnet, _crop(img, b, 24)) for b in boxes]
    probs = np.array([_softmax2(o[0].reshape(2, 1, 1))[0, 0] for o in outs])
    regs = np.array([o[1].reshape(4) for o in outs])
    alive = probs > THRESHOLDS[1]
    boxes, regs, scores = boxes[alive], regs[alive], probs[alive]
    if not len(boxes):
        return []
    keep = _nms(boxes, scores, 0.7)
    boxes = _square(_refine(boxes[keep], regs[keep]))
    scores = scores[keep]

    # O-Net
    outs = [_forward(onet, _crop(img, b, 48)) for b in boxes]
    probs = np.array([_softmax2(o[0].reshape(2, 1, 1))[0, 0] for o in outs])
    regs = np.array([o[1].reshape(4) for o in outs])
    lms = np.array([o[2].reshape(10) for o in outs])
    alive = probs > THRESHOLDS[2]
    boxes, regs, scores, lms = boxes[alive], regs[alive], probs[alive], lms[alive]
    if not len(boxes):
        return []
    bw = boxes[:, 2] - boxes[:, 0]
    bh = boxes[:, 3] - boxes[:, 1]
    lx = boxes[:, 0:1] + lms[:, 0:5] * bw[:, None]
    ly = boxes[:, 1:2] + lms[:, 5:10] * bh[:, None]
    boxes = _refine(boxes, regs)
    keep = _nms(boxes, scores, 0.7, min_mode=True)
    out = []
    for i in keep:
        x1, y1, x2, y2 = boxes[i]
        if x2 <= x1 or y2 <= y1:
            continue
        out.append({
            "x": float(x1), "y": float(y1),
            "w": float(x2 - x1), "h": float(y2 - y1),
            "score": float(min(max(scores[i], 0.0), 1.0)),
            "landmarks": [
                {"name": n, "x": float(lx[i, k]), "y": float(ly[i, k])}
                for k, n in enumerate(LANDMARKS)
            ],
        })
    return out
