"""Stage-cascade classifiers with Haar and MB-LBP features.

Parses the new-style ``<cascade>`` XML schema (stump trees only), evaluates
single windows, and runs the multi-scale sliding-window detector. Window
scanning is delegated to the selected kernel backend; per-window operations
here double as the slow reference path used by the oracle tests.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .detections import BoundingBox, Detection, group_rectangles
from .imaging import ImageBuffer, IntegralImage, integral, rect_sum, to_grayscale
from .kernels import impl as _kernels

__all__ = [
    "CascadeParseError",
    "HaarFeature",
    "MbLbpFeature",
    "Stump",
    "Stage",
    "CascadeModel",
    "ScanParams",
    "EvalCounter",
    "parse_cascade_xml",
    "eval_haar_feature",
    "eval_mb_lbp",
    "run_cascade_window",
    "scan_cascade",
    "detect_cascade",
]

# Offsets of the eight neighbor blocks in the 3x3 MB-LBP grid, clockwise
# from the top-left; bit 7 corresponds to neighbor 0.
LBP_NEIGHBOR_CELLS = ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0))


class CascadeParseError(ValueError):
    """Raised when cascade XML is malformed; message names the element path."""


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple[tuple[int, int, int, int, float], ...]  # (x, y, w, h, weight)

    def __post_init__(self):
        if not 2 <= len(self.rects) <= 3:
            raise ValueError("Haar feature needs 2 or 3 rectangles")


@dataclass(frozen=True)
class MbLbpFeature:
    x: int
    y: int
    w: int  # single block width; the feature spans a 3x3 block grid
    h: int


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float  # Haar split point (normalized units)
    subsets: tuple[int, ...]  # 8 x u32 LBP code masks; empty for Haar
    left: float
    right: float


@dataclass(frozen=True)
class Stage:
    threshold: float
    stumps: tuple[Stump, ...]

    def __post_init__(self):
        if not self.stumps:
            raise ValueError("stage must have at least one weak classifier")


@dataclass
class ScanParams:
    scale_factor: float = 1.1
    min_size: int = 24
    window_step: int = 1  # at model scale; scaled with the window
    min_neighbors: int = 3

    def __post_init__(self):
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")


@dataclass
class EvalCounter:
    windows: int = 0
    stage_evals: int = 0
    stump_evals: int = 0


@dataclass(frozen=True)
class CascadeModel:
    feature_kind: str  # "haar" | "mb_lbp"
    window_w: int
    window_h: int
    stages: tuple[Stage, ...]
    features: tuple  # HaarFeature or MbLbpFeature entries

    def __post_init__(self):
        if self.feature_kind not in ("haar", "mb_lbp"):
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if not self.stages:
            raise ValueError("cascade must have at least one stage")
        nf = len(self.features)
        for si, st in enumerate(self.stages):
            for stump in st.stumps:
                if not 0 <= stump.feature < nf:
                    raise ValueError(f"stage {si}: feature index {stump.feature} out of range")
        for f in self.features:
            if isinstance(f, HaarFeature):
                for x, y, w, h, wt in f.rects:
                    if x < 0 or y < 0 or x + w > self.window_w or y + h > self.window_h:
                        raise ValueError("Haar rectangle outside model window")
                    if not np.isfinite(wt):
                        raise ValueError("Haar rectangle weight must be finite")
            else:
                if f.x + 3 * f.w > self.window_w or f.y + 3 * f.h > self.window_h:
                    raise ValueError("MB-LBP grid outside model window")

    # ---- flat arrays consumed by the scan kernels ----------------------

    def _cache(self) -> dict:
        # lazily created; frozen dataclass, so bypass __setattr__
        cache = self.__dict__.get("_kernel_cache")
        if cache is None:
            cache = {}
            object.__setattr__(self, "_kernel_cache", cache)
        return cache

    def _flat_uncached(self):
        stages = self.stages
        stage_thresh = np.array([s.threshold for s in stages], dtype=np.float64)
        counts = [len(s.stumps) for s in stages]
        bounds = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        stumps = [t for s in stages for t in s.stumps]
        stump_feat = np.array([t.feature for t in stumps], dtype=np.int32)
        leaf_l = np.array([t.left for t in stumps], dtype=np.float64)
        leaf_r = np.array([t.right for t in stumps], dtype=np.float64)
        flat = {
            "stage_thresh": stage_thresh,
            "stage_lo": bounds[:-1],
            "stage_hi": bounds[1:],
            "stump_feat": stump_feat,
            "leaf_l": leaf_l,
            "leaf_r": leaf_r,
        }
        if self.feature_kind == "haar":
            flat["stump_thresh"] = np.array([t.threshold for t in stumps], dtype=np.float64)
            rcounts = [len(f.rects) for f in self.features]
            rbounds = np.concatenate([[0], np.cumsum(rcounts)]).astype(np.int32)
            flat["feat_lo"] = rbounds[:-1]
            flat["feat_hi"] = rbounds[1:]
            flat["rects"] = np.array(
                [r for f in self.features for r in f.rects], dtype=np.float64
            )
        else:
            flat["subsets"] = np.array([t.subsets for t in stumps], dtype=np.uint32)
            flat["blocks"] = np.array(
                [(f.x, f.y, f.w, f.h) for f in self.features], dtype=np.int64
            )
        return flat

    def _flat(self):
        cache = self._cache()
        if "flat" not in cache:
            cache["flat"] = self._flat_uncached()
        return cache["flat"]


def _text(parent: ET.Element, tag: str, path: str) -> str:
    el = parent.find(tag)
    if el is None or el.text is None:
        raise CascadeParseError(f"missing element {path}/{tag}")
    return el.text.strip()


def _scale_round(v: float) -> int:
    return int(np.floor(v + 0.5))


def parse_cascade_xml(text: str) -> CascadeModel:
    """Parse new-style cascade XML (BOOST stages, stump weak classifiers)."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise CascadeParseError(f"malformed XML: {exc}") from exc
    cascade = root.find("cascade") if root.tag == "opencv_storage" else root
    if cascade is None or cascade.tag != "cascade":
        raise CascadeParseError("missing <cascade> root element")

    feature_type = _text(cascade, "featureType", "cascade")
    if feature_type == "HAAR":
        kind = "haar"
    elif feature_type == "LBP":
        kind = "mb_lbp"
    else:
        raise CascadeParseError(f"cascade/featureType: unsupported {feature_type!r}")
    width = int(_text(cascade, "width", "cascade"))
    height = int(_text(cascade, "height", "cascade"))

    stages_el = cascade.find("stages")
    if stages_el is None:
        raise CascadeParseError("missing cascade/stages")
    stages: list[Stage] = []
    for si, st_el in enumerate(stages_el.findall("_")):
        path = f"cascade/stages/_[{si}]"
        threshold = float(_text(st_el, "stageThreshold", path))
        weak_el = st_el.find("weakClassifiers")
        if weak_el is None:
            raise CascadeParseError(f"missing {path}/weakClassifiers")
        stumps: list[Stump] = []
        for wi, w_el in enumerate(weak_el.findall("_")):
            wpath = f"{path}/weakClassifiers/_[{wi}]"
            nodes = _text(w_el, "internalNodes", wpath).split()
            leaves = [float(v) for v in _text(w_el, "leafValues", wpath).split()]
            if len(leaves) != 2:
                raise CascadeParseError(f"{wpath}: expected stump (tree depth 1)")
            if kind == "haar":
                if len(nodes) != 4:
                    raise CascadeParseError(f"{wpath}: expected stump (tree depth 1)")
                stumps.append(
                    Stump(int(nodes[2]), float(nodes[3]), (), leaves[0], leaves[1])
                )
            else:
                if len(nodes) != 11:
                    raise CascadeParseError(f"{wpath}: expected stump with 8 subset words")
                subsets = tuple(int(v) & 0xFFFFFFFF for v in nodes[3:])
                stumps.append(Stump(int(nodes[2]), 0.0, subsets, leaves[0], leaves[1]))
        if not stumps:
            raise CascadeParseError(f"{path}: empty weakClassifiers")
        stages.append(Stage(threshold, tuple(stumps)))
    if not stages:
        raise CascadeParseError("cascade/stages: no stages")

    feats_el = cascade.find("features")
    if feats_el is None:
        raise CascadeParseError("missing cascade/features")
    features: list = []
    for fi, f_el in enumerate(feats_el.findall("_")):
        fpath = f"cascade/features/_[{fi}]"
        if kind == "haar":
            tilted = f_el.find("tilted")
            if tilted is not None and tilted.text and int(tilted.text.strip()) != 0:
                raise CascadeParseError(f"{fpath}: tilted features unsupported")
            rects_el = f_el.find("rects")
            if rects_el is None:
                raise CascadeParseError(f"missing {fpath}/rects")
            rects = []
            for r_el in rects_el.findall("_"):
                vals = (r_el.text or "").split()
                if len(vals) != 5:
                    raise CascadeParseError(f"{fpath}/rects: expected 'x y w h weight'")
                x, y, w, h = (int(v) for v in vals[:4])
                rects.append((x, y, w, h, float(vals[4])))
            features.append(HaarFeature(tuple(rects)))
        else:
            vals = _text(f_el, "rect", fpath).split()
            if len(vals) != 4:
                raise CascadeParseError(f"{fpath}/rect: expected 'x y w h'")
            x, y, w, h = (int(v) for v in vals)
            features.append(MbLbpFeature(x, y, w, h))

    try:
        return CascadeModel(kind, width, height, tuple(stages), tuple(features))
    except ValueError as exc:
        raise CascadeParseError(str(exc)) from exc


def _scaled_haar_rects(f: HaarFeature, scale: float, win_w: int, win_h: int):
    """Scale rectangles with rounding; re-balance the first weight to zero-sum.

    Rounded rectangles are nudged back inside the window so boundary windows
    never index past the integral table.
    """
    scaled = []
    for x, y, w, h, wt in f.rects:
        sw = min(max(1, _scale_round(w * scale)), win_w)
        sh = min(max(1, _scale_round(h * scale)), win_h)
        sx = min(_scale_round(x * scale), win_w - sw)
        sy = min(_scale_round(y * scale), win_h - sh)
        scaled.append([sx, sy, sw, sh, wt])
    tail = sum(r[4] * r[2] * r[3] for r in scaled[1:])
    area0 = scaled[0][2] * scaled[0][3]
    scaled[0][4] = -tail / area0 if area0 > 0 else 0.0
    return scaled


def _scaled_lbp_grid(f: MbLbpFeature, scale: float, win_w: int, win_h: int):
    """Scaled 3x3 block grid, nudged back inside the window after rounding."""
    bw = min(max(1, _scale_round(f.w * scale)), win_w // 3)
    bh = min(max(1, _scale_round(f.h * scale)), win_h // 3)
    bx = min(_scale_round(f.x * scale), win_w - 3 * bw)
    by = min(_scale_round(f.y * scale), win_h - 3 * bh)
    return bx, by, bw, bh


def eval_haar_feature(
    ii: IntegralImage,
    f: HaarFeature,
    wx: int,
    wy: int,
    scale: float,
    inv_norm: float,
    window_w: int = 24,
    window_h: int = 24,
) -> float:
    """Normalized Haar feature value at one window position."""
    win_w = _scale_round(window_w * scale)
    win_h = _scale_round(window_h * scale)
    inv_area = 1.0 / (win_w * win_h)
    val = 0.0
    for sx, sy, sw, sh, wt in _scaled_haar_rects(f, scale, win_w, win_h):
        val += wt * rect_sum(ii, wx + sx, wy + sy, sw, sh)
    return val * inv_area * inv_norm


def eval_mb_lbp(
    ii: IntegralImage,
    f: MbLbpFeature,
    wx: int,
    wy: int,
    scale: float,
    window_w: int = 24,
    window_h: int = 24,
) -> int:
    """8-bit MB-LBP code at one window position (>= comparison, ties set bits)."""
    win_w = _scale_round(window_w * scale)
    win_h = _scale_round(window_h * scale)
    fx, fy, bw, bh = _scaled_lbp_grid(f, scale, win_w, win_h)
    bx = wx + fx
    by = wy + fy

    def block(gr: int, gc: int) -> int:
        return rect_sum(ii, bx + gc * bw, by + gr * bh, bw, bh)

    center = block(1, 1)
    code = 0
    for k, (gr, gc) in enumerate(LBP_NEIGHBOR_CELLS):
        if block(gr, gc) >= center:
            code |= 1 << (7 - k)
    return code


def _window_inv_norm(ii: IntegralImage, wx: int, wy: int, win_w: int, win_h: int) -> float:
    area = win_w * win_h
    total = rect_sum(ii, wx, wy, win_w, win_h)
    s = ii.sq_sums
    sq = int(s[wy + win_h, wx + win_w] - s[wy, wx + win_w] - s[wy + win_h, wx] + s[wy, wx])
    mean = total / area
    var = max(sq / area - mean * mean, 1.0)
    return 1.0 / np.sqrt(var)


def run_cascade_window(
    model: CascadeModel,
    ii: IntegralImage,
    wx: int,
    wy: int,
    scale: float,
    counter: EvalCounter | None = None,
) -> bool:
    """Evaluate one window; stages short-circuit on the first rejection."""
    win_w = _scale_round(model.window_w * scale)
    win_h = _scale_round(model.window_h * scale)
    if model.feature_kind == "haar":
        inv_norm = _window_inv_norm(ii, wx, wy, win_w, win_h)
    if counter is not None:
        counter.windows += 1
    for stage in model.stages:
        if counter is not None:
            counter.stage_evals += 1
        stage_sum = 0.0
        for stump in stage.stumps:
            if counter is not None:
                counter.stump_evals += 1
            f = model.features[stump.feature]
            if model.feature_kind == "haar":
                val = eval_haar_feature(
                    ii, f, wx, wy, scale, inv_norm, model.window_w, model.window_h
                )
                stage_sum += stump.left if val < stump.threshold else stump.right
            else:
                code = eval_mb_lbp(ii, f, wx, wy, scale, model.window_w, model.window_h)
                bit = (stump.subsets[code >> 5] >> (code & 31)) & 1
                stage_sum += stump.left if bit else stump.right
        if stage_sum < stage.threshold:
            return False
    return True


def _scan_scales(model: CascadeModel, img_w: int, img_h: int, p: ScanParams):
    scales = []
    scale = p.min_size / model.window_w
    if scale < 1.0:
        scale = 1.0
    while True:
        win_w = _scale_round(model.window_w * scale)
        win_h = _scale_round(model.window_h * scale)
        if win_w > img_w or win_h > img_h:
            break
        scales.append(scale)
        scale *= p.scale_factor
    return scales


def scan_cascade(
    model: CascadeModel, img: ImageBuffer, p: ScanParams | None = None
) -> tuple[list[BoundingBox], EvalCounter]:
    """All accepted windows (pre-grouping) plus evaluation counters."""
    p = p or ScanParams()
    gray = to_grayscale(img)
    ii = integral(gray)
    flat = model._flat()
    sums = np.ascontiguousarray(ii.sums.ravel())
    sq = np.ascontiguousarray(ii.sq_sums.ravel())
    stride = ii.width + 1
    boxes: list[BoundingBox] = []
    counter = EvalCounter()
    for scale in _scan_scales(model, img.width, img.height, p):
        win_w = _scale_round(model.window_w * scale)
        win_h = _scale_round(model.window_h * scale)
        step = max(1, _scale_round(p.window_step * scale))
        if model.feature_kind == "haar":
            key = ("haar", scale, stride)
            pack = model._cache().get(key)
            if pack is None:
                inv_area = 1.0 / (win_w * win_h)
                offs = []
                weights = []
                for f in model.features:
                    for sx, sy, sw, sh, wt in _scaled_haar_rects(f, scale, win_w, win_h):
                        offs.append(
                            (
                                sy * stride + sx,
                                sy * stride + sx + sw,
                                (sy + sh) * stride + sx,
                                (sy + sh) * stride + sx + sw,
                            )
                        )
                        weights.append(wt * inv_area)
                pack = (
                    np.array(offs, dtype=np.int64).reshape(-1, 4),
                    np.array(weights, dtype=np.float64),
                )
                model._cache()[key] = pack
            xy, windows, stage_evals, stump_evals = _kernels.haar_scan(
                sums,
                sq,
                stride,
                img.width,
                img.height,
                win_w,
                win_h,
                step,
                flat["stage_thresh"],
                flat["stage_lo"],
                flat["stage_hi"],
                flat["stump_feat"],
                flat["stump_thresh"],
                flat["leaf_l"],
                flat["leaf_r"],
                flat["feat_lo"],
                flat["feat_hi"],
                pack[0],
                pack[1],
            )
        else:
            key = ("mb_lbp", scale, stride)
            grid_pack = model._cache().get(key)
            if grid_pack is None:
                grid = []
                for f in model.features:
                    bx, by, bw, bh = _scaled_lbp_grid(f, scale, win_w, win_h)
                    grid.append(
                        [
                            (by + gr * bh) * stride + (bx + gc * bw)
                            for gr in range(4)
                            for gc in range(4)
                        ]
                    )
                grid_pack = np.array(grid, dtype=np.int64).reshape(-1, 16)
                model._cache()[key] = grid_pack
            xy, windows, stage_evals, stump_evals = _kernels.lbp_scan(
                sums,
                stride,
                img.width,
                img.height,
                win_w,
                win_h,
                step,
                flat["stage_thresh"],
                flat["stage_lo"],
                flat["stage_hi"],
                flat["stump_feat"],
                flat["subsets"],
                flat["leaf_l"],
                flat["leaf_r"],
                grid_pack,
            )
        counter.windows += windows
        counter.stage_evals += stage_evals
        counter.stump_evals += stump_evals
        for x, y in xy:
            boxes.append(BoundingBox(float(x), float(y), float(win_w), float(win_h)))
    return boxes, counter


def detect_cascade(
    model: CascadeModel,
    img: ImageBuffer,
    p: ScanParams | None = None,
    counter: EvalCounter | None = None,
) -> list[Detection]:
    """Multi-scale detection; accepted windows are grouped into detections."""
    p = p or ScanParams()
    if img.width < model.window_w or img.height < model.window_h:
        return []
    boxes, c = scan_cascade(model, img, p)
    if counter is not None:
        counter.windows += c.windows
        counter.stage_evals += c.stage_evals
        counter.stump_evals += c.stump_evals
    return group_rectangles(boxes, p.min_neighbors, eps=0.2)
