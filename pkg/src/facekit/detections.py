"""Detection geometry shared by all detectors.

Boxes, landmarks, IoU, hard NMS, blending NMS (score-weighted cluster
averaging, the jitter-stabilizing variant) and cascade-style rectangle
grouping. All functions are pure; ties are broken by input index so runs
are bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = [
    "BoundingBox",
    "Landmark",
    "Detection",
    "LANDMARK_NAMES",
    "iou",
    "nms_hard",
    "nms_blend",
    "group_rectangles",
    "detections_to_json",
    "detections_from_json",
]

LANDMARK_NAMES = frozenset(
    {
        "left_eye",
        "right_eye",
        "nose_tip",
        "mouth_left",
        "mouth_right",
        "mouth_center",
        "left_ear",
        "right_ear",
    }
)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box width and height must be > 0")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Landmark:
    name: str
    x: float
    y: float

    def __post_init__(self):
        if self.name not in LANDMARK_NAMES:
            raise ValueError(f"unknown landmark name {self.name!r}")


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float = 1.0
    landmarks: tuple[Landmark, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")
        names = [lm.name for lm in self.landmarks]
        if len(names) != len(set(names)):
            raise ValueError("duplicate landmark name within one detection")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def _by_score(dets: list[Detection]) -> list[int]:
    # Stable sort keeps earlier input index first among equal scores.
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def nms_hard(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy NMS: keep the best-scoring detection, drop overlaps above threshold."""
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in (0, 1]")
    order = _by_score(dets)
    kept: list[Detection] = []
    suppressed = [False] * len(dets)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(dets[i])
        for j in order:
            if not suppressed[j] and j != i and iou(dets[i].box, dets[j].box) > iou_threshold:
                suppressed[j] = True
    return kept


def nms_blend(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Blending NMS: each overlap cluster collapses to its score-weighted mean.

    The cluster seed is the best remaining detection; members overlap the seed
    above the threshold. Box and landmark coordinates are averaged with the
    member scores as weights; the seed's score is kept.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in (0, 1]")
    order = _by_score(dets)
    used = [False] * len(dets)
    out: list[Detection] = []
    for i in order:
        if used[i]:
            continue
        cluster = [j for j in order if not used[j] and iou(dets[i].box, dets[j].box) > iou_threshold]
        if i not in cluster:
            cluster.insert(0, i)
        for j in cluster:
            used[j] = True
        total = sum(dets[j].score for j in cluster)
        if total <= 0.0:
            out.append(dets[i])
            continue

        def wmean(get) -> float:
            return sum(get(dets[j]) * dets[j].score for j in cluster) / total

        box = BoundingBox(
            wmean(lambda d: d.box.x),
            wmean(lambda d: d.box.y),
            wmean(lambda d: d.box.w),
            wmean(lambda d: d.box.h),
        )
        landmarks: tuple[Landmark, ...] = ()
        if dets[i].landmarks:
            names = [lm.name for lm in dets[i].landmarks]
            pts = []
            for k, name in enumerate(names):
                lx = sum(dets[j].landmarks[k].x * dets[j].score for j in cluster) / total
                ly = sum(dets[j].landmarks[k].y * dets[j].score for j in cluster) / total
                pts.append(Landmark(name, lx, ly))
            landmarks = tuple(pts)
        out.append(Detection(box, dets[i].score, landmarks))
    return out


def _similar(a: BoundingBox, b: BoundingBox, eps: float) -> bool:
    # Tolerance scales with the mean box size of the pair.
    delta = eps * 0.25 * (a.w + b.w + a.h + b.h)
    return (
        abs(a.x - b.x) <= delta
        and abs(a.y - b.y) <= delta
        and abs(a.x2 - b.x2) <= delta
        and abs(a.y2 - b.y2) <= delta
    )


def group_rectangles(
    boxes: list[BoundingBox], min_neighbors: int = 3, eps: float = 0.2
) -> list[Detection]:
    """Cluster similar boxes; emit each surviving cluster's mean box.

    Clusters with fewer than ``min_neighbors + 1`` members are dropped.
    Similarity is transitive here (union-find over the pairwise relation),
    matching conventional cascade post-processing.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if min_neighbors < 0:
        raise ValueError("min_neighbors must be >= 0")
    n = len(boxes)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _similar(boxes[i], boxes[j], eps):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    clusters: dict[int, list[BoundingBox]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(boxes[i])

    out: list[Detection] = []
    for root in sorted(clusters):
        members = clusters[root]
        if len(members) < min_neighbors + 1:
            continue
        k = len(members)
        box = BoundingBox(
            sum(b.x for b in members) / k,
            sum(b.y for b in members) / k,
            sum(b.w for b in members) / k,
            sum(b.h for b in members) / k,
        )
        out.append(Detection(box, 1.0))
    return out


def detection_to_dict(det: Detection) -> dict:
    # plain floats: coordinates may arrive as numpy scalars, which the
    # stdlib json encoder rejects
    return {
        "x": float(det.box.x),
        "y": float(det.box.y),
        "w": float(det.box.w),
        "h": float(det.box.h),
        "score": float(det.score),
        "landmarks": [
            {"name": lm.name, "x": float(lm.x), "y": float(lm.y)}
            for lm in det.landmarks
        ],
    }


def detections_to_json(dets: list[Detection], indent: int | None = None) -> str:
    return json.dumps([detection_to_dict(d) for d in dets], indent=indent)


def detections_from_json(text: str) -> list[Detection]:
    out = []
    for rec in json.loads(text):
        lms = tuple(Landmark(p["name"], p["x"], p["y"]) for p in rec.get("landmarks", []))
        out.append(Detection(BoundingBox(rec["x"], rec["y"], rec["w"], rec["h"]), rec["score"], lms))
    return out
