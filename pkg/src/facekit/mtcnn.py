"""Three-stage MTCNN pipeline: P-Net proposals over an image pyramid,
R-Net refinement, O-Net output with five facial landmarks.

Stage logic works on (n, 4) float box arrays in corner form (x1, y1, x2, y2)
and converts to the Detection contract only at the very end. Each stage can
empty the candidate set, in which case later networks never run; the stage
counter records how many networks actually executed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detections import BoundingBox, Detection, Landmark
from .imaging import ImageBuffer, resize_bilinear
from .nnengine import LayerSpec, NetworkSpec, Tensor, run_network

__all__ = [
    "MtcnnParams",
    "StageOutputs",
    "MtcnnCounter",
    "compute_scale_pyramid",
    "pnet_decode",
    "refine_boxes",
    "square_pad",
    "crop_resize",
    "detect_mtcnn",
    "pnet_spec",
    "rnet_spec",
    "onet_spec",
]

LANDMARK_ORDER = ("left_eye", "right_eye", "nose_tip", "mouth_left", "mouth_right")


@dataclass(frozen=True)
class MtcnnParams:
    min_face_size: int = 20
    scale_factor: float = 0.709
    stage_thresholds: tuple[float, float, float] = (0.6, 0.7, 0.7)
    nms_intra_scale: float = 0.5
    nms_merge: float = 0.7
    nms_rnet: float = 0.7
    nms_onet: float = 0.7  # min-mode

    def __post_init__(self):
        if not 0.0 < self.scale_factor < 1.0:
            raise ValueError("scale_factor must lie in (0, 1)")
        for t in self.stage_thresholds:
            if not 0.0 < t < 1.0:
                raise ValueError("stage thresholds must lie in (0, 1)")
        if self.min_face_size < 12:
            raise ValueError("min_face_size must be >= 12")


@dataclass
class StageOutputs:
    boxes: np.ndarray  # (n, 4) x1, y1, x2, y2
    offsets: np.ndarray  # (n, 4) dx1, dy1, dx2, dy2
    scores: np.ndarray  # (n,)
    landmarks: np.ndarray | None = None  # (n, 10) x1..x5, y1..y5

    def __post_init__(self):
        n = len(self.scores)
        if self.boxes.shape != (n, 4) or self.offsets.shape != (n, 4):
            raise ValueError("stage outputs must be parallel arrays")
        if self.landmarks is not None and self.landmarks.shape != (n, 10):
            raise ValueError("landmarks must be (n, 10)")


@dataclass
class MtcnnCounter:
    network_runs: int = 0  # forward passes, pyramid levels and crops included
    stages_executed: int = 0  # 1 = P only, 2 = P+R, 3 = full pipeline


def compute_scale_pyramid(min_face: int, factor: float, w: int, h: int) -> list[float]:
    """Descending scales s0 = 12/min_face, s_k = s0 * factor^k while the
    scaled short side still fits a 12 px P-Net window."""
    if min(w, h) < min_face:
        return []
    scales = []
    scale = 12.0 / min_face
    while min(w, h) * scale >= 12.0:
        scales.append(scale)
        scale *= factor
    return scales


def pnet_decode(
    prob_map: np.ndarray, reg_map: np.ndarray, scale: float, threshold: float
) -> StageOutputs:
    """Map P-Net output cells (stride 2, receptive field 12) back to image
    coordinates; one candidate per cell above threshold, row-major order."""
    rows, cols = np.where(prob_map > threshold)
    side = 12.0 / scale
    x1 = np.floor(2.0 * cols / scale)
    y1 = np.floor(2.0 * rows / scale)
    boxes = np.stack([x1, y1, x1 + side, y1 + side], axis=1) if len(rows) else np.empty((0, 4))
    offsets = reg_map[:, rows, cols].T if len(rows) else np.empty((0, 4))
    return StageOutputs(boxes, np.asarray(offsets, dtype=np.float64), prob_map[rows, cols].astype(np.float64))


def refine_boxes(boxes: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Apply per-box regression offsets scaled by the box side lengths."""
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    out = boxes.copy()
    out[:, 0] += offsets[:, 0] * w
    out[:, 1] += offsets[:, 1] * h
    out[:, 2] += offsets[:, 2] * w
    out[:, 3] += offsets[:, 3] * h
    return out


def square_pad(boxes: np.ndarray) -> np.ndarray:
    """Grow each box to a square of side max(w, h) about its center."""
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    side = np.maximum(w, h)
    cx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    cy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    out = np.empty_like(boxes)
    out[:, 0] = cx - side / 2.0
    out[:, 1] = cy - side / 2.0
    out[:, 2] = cx + side / 2.0
    out[:, 3] = cy + side / 2.0
    return out


def _rgb_planes(img: ImageBuffer) -> np.ndarray:
    if img.channels == 3:
        return np.moveaxis(img.data, 2, 0)
    return np.repeat(img.data[:, :, 0][None, :, :], 3, axis=0)


def _normalize(planes: np.ndarray) -> np.ndarray:
    return ((planes.astype(np.float32) - 127.5) / 128.0).astype(np.float32)


def crop_resize(img: ImageBuffer, box: np.ndarray, size: int) -> Tensor:
    """Crop a (possibly out-of-image) box, zero-pad, resize, normalize."""
    x1, y1, x2, y2 = (int(round(v)) for v in box)
    w = max(x2 - x1, 1)
    h = max(y2 - y1, 1)
    canvas = np.zeros((h, w, img.channels), dtype=np.uint8)
    sx1, sy1 = max(x1, 0), max(y1, 0)
    sx2, sy2 = min(x2, img.width), min(y2, img.height)
    if sx2 > sx1 and sy2 > sy1:
        canvas[sy1 - y1 : sy2 - y1, sx1 - x1 : sx2 - x1] = img.data[sy1:sy2, sx1:sx2]
    patch = resize_bilinear(ImageBuffer.from_array(canvas), size, size)
    return Tensor.from_array(_normalize(_rgb_planes(patch)))


def _nms_indices(boxes: np.ndarray, scores: np.ndarray, threshold: float, min_mode: bool) -> list[int]:
    """Greedy NMS on corner boxes; overlap = inter / (min area or union)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    keep: list[int] = []
    dead = np.zeros(len(scores), dtype=bool)
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
            if denom > 0 and inter / denom > threshold:
                dead[j] = True
    return keep


# ---------------------------------------------------------------------------
# network topologies (canonical MTCNN layer stacks)


def pnet_spec() -> NetworkSpec:
    return NetworkSpec(
        "pnet",
        (
            LayerSpec("conv1", "conv2d"),
            LayerSpec("prelu1", "prelu"),
            LayerSpec("pool1", "max_pool", kernel=2, stride=2, ceil_mode=True),
            LayerSpec("conv2", "conv2d"),
            LayerSpec("prelu2", "prelu"),
            LayerSpec("conv3", "conv2d"),
            LayerSpec("prelu3", "prelu"),
            LayerSpec("conv4_1", "conv2d", source="prelu3"),
            LayerSpec("prob", "softmax_channel", source="conv4_1"),
            LayerSpec("conv4_2", "conv2d", source="prelu3"),
        ),
        taps={"prob": "prob", "reg": "conv4_2"},
    )


def rnet_spec() -> NetworkSpec:
    return NetworkSpec(
        "rnet",
        (
            LayerSpec("conv1", "conv2d"),
            LayerSpec("prelu1", "prelu"),
            LayerSpec("pool1", "max_pool", kernel=3, stride=2, ceil_mode=True),
            LayerSpec("conv2", "conv2d"),
            LayerSpec("prelu2", "prelu"),
            LayerSpec("pool2", "max_pool", kernel=3, stride=2, ceil_mode=True),
            LayerSpec("conv3", "conv2d"),
            LayerSpec("prelu3", "prelu"),
            LayerSpec("fc1", "dense"),
            LayerSpec("prelu4", "prelu"),
            LayerSpec("fc2_1", "dense", source="prelu4"),
            LayerSpec("prob", "softmax_channel", source="fc2_1"),
            LayerSpec("fc2_2", "dense", source="prelu4"),
        ),
        taps={"prob": "prob", "reg": "fc2_2"},
    )


def onet_spec() -> NetworkSpec:
    return NetworkSpec(
        "onet",
        (
            LayerSpec("conv1", "conv2d"),
            LayerSpec("prelu1", "prelu"),
            LayerSpec("pool1", "max_pool", kernel=3, stride=2, ceil_mode=True),
            LayerSpec("conv2", "conv2d"),
            LayerSpec("prelu2", "prelu"),
            LayerSpec("pool2", "max_pool", kernel=3, stride=2, ceil_mode=True),
            LayerSpec("conv3", "conv2d"),
            LayerSpec("prelu3", "prelu"),
            LayerSpec("pool3", "max_pool", kernel=2, stride=2, ceil_mode=True),
            LayerSpec("conv4", "conv2d"),
            LayerSpec("prelu4", "prelu"),
            LayerSpec("fc1", "dense"),
            LayerSpec("prelu5", "prelu"),
            LayerSpec("fc2_1", "dense", source="prelu5"),
            LayerSpec("prob", "softmax_channel", source="fc2_1"),
            LayerSpec("fc2_2", "dense", source="prelu5"),
            LayerSpec("fc2_3", "dense", source="prelu5"),
        ),
        taps={"prob": "prob", "reg": "fc2_2", "landmarks": "fc2_3"},
    )


def detect_mtcnn(
    img: ImageBuffer,
    weights_p: dict[str, np.ndarray],
    weights_r: dict[str, np.ndarray],
    weights_o: dict[str, np.ndarray],
    params: MtcnnParams | None = None,
    counter: MtcnnCounter | None = None,
) -> list[Detection]:
    params = params or MtcnnParams()
    counter = counter if counter is not None else MtcnnCounter()
    p_spec, r_spec, o_spec = pnet_spec(), rnet_spec(), onet_spec()
    t1, t2, t3 = params.stage_thresholds

    # stage 1: P-Net over the pyramid
    counter.stages_executed = 1
    scales = compute_scale_pyramid(
        params.min_face_size, params.scale_factor, img.width, img.height
    )
    all_boxes: list[np.ndarray] = []
    all_offsets: list[np.ndarray] = []
    all_scores: list[np.ndarray] = []
    for scale in scales:
        sw = max(int(np.ceil(img.width * scale)), 12)
        sh = max(int(np.ceil(img.height * scale)), 12)
        level = resize_bilinear(img, sw, sh)
        x = Tensor.from_array(_normalize(_rgb_planes(level)))
        out = run_network(p_spec, weights_p, x)
        counter.network_runs += 1
        stage = pnet_decode(out["prob"].data[1], out["reg"].data, scale, t1)
        if len(stage.scores) == 0:
            continue
        keep = _nms_indices(stage.boxes, stage.scores, params.nms_intra_scale, False)
        all_boxes.append(stage.boxes[keep])
        all_offsets.append(stage.offsets[keep])
        all_scores.append(stage.scores[keep])
    if not all_boxes:
        return []
    boxes = np.concatenate(all_boxes)
    offsets = np.concatenate(all_offsets)
    scores = np.concatenate(all_scores)
    keep = _nms_indices(boxes, scores, params.nms_merge, False)
    boxes, offsets, scores = boxes[keep], offsets[keep], scores[keep]
    boxes = square_pad(refine_boxes(boxes, offsets))

    # stage 2: R-Net on 24x24 crops
    counter.stages_executed = 2
    probs = np.empty(len(boxes))
    regs = np.empty((len(boxes), 4))
    for i, box in enumerate(boxes):
        out = run_network(r_spec, weights_r, crop_resize(img, box, 24))
        counter.network_runs += 1
        probs[i] = out["prob"].data[1, 0, 0]
        regs[i] = out["reg"].data[:, 0, 0]
    alive = probs > t2
    boxes, regs, scores = boxes[alive], regs[alive], probs[alive]
    if len(boxes) == 0:
        return []
    keep = _nms_indices(boxes, scores, params.nms_rnet, False)
    boxes, regs, scores = boxes[keep], regs[keep], scores[keep]
    boxes = square_pad(refine_boxes(boxes, regs))

    # stage 3: O-Net on 48x48 crops
    counter.stages_executed = 3
    probs = np.empty(len(boxes))
    regs = np.empty((len(boxes), 4))
    lms = np.empty((len(boxes), 10))
    for i, box in enumerate(boxes):
        out = run_network(o_spec, weights_o, crop_resize(img, box, 48))
        counter.network_runs += 1
        probs[i] = out["prob"].data[1, 0, 0]
        regs[i] = out["reg"].data[:, 0, 0]
        lms[i] = out["landmarks"].data[:, 0, 0]
    alive = probs > t3
    boxes, regs, scores, lms = boxes[alive], regs[alive], probs[alive], lms[alive]
    if len(boxes) == 0:
        return []
    # landmarks decode against the pre-regression square box
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    lx = boxes[:, 0:1] + lms[:, 0:5] * w[:, None]
    ly = boxes[:, 1:2] + lms[:, 5:10] * h[:, None]
    boxes = refine_boxes(boxes, regs)
    keep = _nms_indices(boxes, scores, params.nms_onet, True)

    dets: list[Detection] = []
    for i in keep:
        x1, y1, x2, y2 = boxes[i]
        if x2 <= x1 or y2 <= y1:
            continue
        marks = tuple(
            Landmark(name, float(lx[i, k]), float(ly[i, k]))
            for k, name in enumerate(LANDMARK_ORDER)
        )
        score = float(min(max(scores[i], 0.0), 1.0))
        dets.append(
            Detection(BoundingBox(float(x1), float(y1), float(x2 - x1), float(y2 - y1)), score, marks)
        )
    return dets
