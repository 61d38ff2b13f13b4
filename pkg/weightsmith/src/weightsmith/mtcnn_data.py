"""Synthetic face/non-face crop corpus for MTCNN training.

Faces from the scikit-image LFW subset and the astronaut portrait are
pasted onto texture backgrounds at known boxes; training crops are jittered
squares around those boxes with standard MTCNN sample classes:

  positive  IoU > 0.65   class 1, regression target
  part      0.40..0.65   regression only
  negative  IoU < 0.30   class 0

Regression targets are corner offsets normalized by the crop side.
Landmark targets use a fixed frontal template in face-box coordinates
(the corpus has no annotated landmarks; the template matches the LFW
alignment closely enough for fixture purposes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .resampler import resize_bilinear_u8

# x-fractions then y-fractions of the face box, engine landmark order:
# left_eye, right_eye, nose_tip, mouth_left, mouth_right
LANDMARK_TEMPLATE = np.array(
    [0.32, 0.68, 0.50, 0.36, 0.64, 0.40, 0.40, 0.62, 0.78, 0.78]
)


@dataclass
class Composite:
    image: np.ndarray  # (h, w, 3) uint8
    box: tuple[float, float, float, float] | None  # x1, y1, x2, y2


def _face_sources() -> list[np.ndarray]:
    from skimage import data as skdata

    faces = []
    lfw = skdata.lfw_subset()
    for i in range(100):
        g = (lfw[i] * 255.0).clip(0, 255).astype(np.uint8)
        faces.append(np.stack([g, g, g], axis=2))
    astro = skdata.astronaut()  # face box measured on the 512x512 original
    faces.append(astro[66:162, 176:272])
    return faces


def _backgrounds() -> list[np.ndarray]:
    from skimage import data as skdata

    return [skdata.coffee(), skdata.chelsea(), skdata.rocket(),
            skdata.astronaut()[256:, :256]]


def build_composites(rng: np.random.Generator, count: int) -> list[Composite]:
    faces = _face_sources()
    bgs = _backgrounds()
    out: list[Composite] = []
    for i in range(count):
        bg = bgs[rng.integers(len(bgs))]
        h, w = bg.shape[:2]
        size = int(rng.integers(140, 200))
        y0 = int(rng.integers(0, h - size + 1))
        x0 = int(rng.integers(0, w - size + 1))
        canvas = bg[y0 : y0 + size, x0 : x0 + size].copy()
        if rng.random() < 0.2:
            out.append(Composite(canvas, None))  # pure background
            continue
        face = faces[rng.integers(len(faces))]
        if rng.random() < 0.5:
            face = face[:, ::-1]
        side = int(rng.integers(36, int(size * 0.75)))
        patch = resize_bilinear_u8(np.ascontiguousarray(face), side, side)
        px = int(rng.integers(0, size - side + 1))
        py = int(rng.integers(0, size - side + 1))
        gain = rng.uniform(0.8, 1.2)
        shifted = np.clip(patch.astype(np.float64) * gain, 0, 255).astype(np.uint8)
        canvas[py : py + side, px : px + side] = shifted
        out.append(Composite(canvas, (px, py, px + side, py + side)))
    return out


def _iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / ua if ua > 0 else 0.0


def _crop(image: np.ndarray, square, size: int) -> np.ndarray:
    x1, y1, x2, y2 = (int(round(v)) for v in square)
    h, w = image.shape[:2]
    cw, ch = max(x2 - x1, 1), max(y2 - y1, 1)
    canvas = np.zeros((ch, cw, 3), np.uint8)
    sx1, sy1 = max(x1, 0), max(y1, 0)
    sx2, sy2 = min(x2, w), min(y2, h)
    if sx2 > sx1 and sy2 > sy1:
        canvas[sy1 - y1 : sy2 - y1, sx1 - x1 : sx2 - x1] = image[sy1:sy2, sx1:sx2]
    return resize_bilinear_u8(canvas, size, size)


def sample_crops(composites: list[Composite], size: int, rng: np.random.Generator,
                 per_image: int = 8):
    """Returns (x, cls, cls_mask, reg, reg_mask, lmk) numpy arrays.

    x: (n, 3, size, size) normalized float32; cls in {0, 1}; masks select
    which loss applies to each sample (parts train regression only).
    """
    xs, cls, cls_m, regs, reg_m, lmks = [], [], [], [], [], []

    def add(image, square, label, reg, lmk):
        patch = _crop(image, square, size)
        chw = np.moveaxis(patch, 2, 0).astype(np.float32)
        xs.append((chw - 127.5) / 128.0)
        cls.append(label if label >= 0 else 0)
        cls_m.append(1.0 if label >= 0 else 0.0)
        regs.append(reg if reg is not None else np.zeros(4))
        reg_m.append(0.0 if reg is None else 1.0)
        lmks.append(lmk if lmk is not None else np.zeros(10))

    for comp in composites:
        h, w = comp.image.shape[:2]
        if comp.box is None:
            for _ in range(per_image // 2):
                s = rng.integers(24, min(h, w) // 2)
                x1 = rng.integers(0, w - s)
                y1 = rng.integers(0, h - s)
                add(comp.image, (x1, y1, x1 + s, y1 + s), 0, None, None)
            continue
        bx1, by1, bx2, by2 = comp.box
        side = bx2 - bx1
        made_neg = 0
        for _ in range(per_image * 4):
            if len(xs) and made_neg >= per_image:
                break
            s = side * rng.uniform(0.8, 1.25)
            dx = rng.uniform(-0.35, 0.35) * side
            dy = rng.uniform(-0.35, 0.35) * side
            cx = (bx1 + bx2) / 2 + dx
            cy = (by1 + by2) / 2 + dy
            sq = (cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2)
            overlap = _iou(sq, comp.box)
            if overlap > 0.65:
                label = 1
            elif overlap > 0.4:
                label = -1  # part: regression only
            else:
                continue
            reg = np.array([
                (bx1 - sq[0]) / s, (by1 - sq[1]) / s,
                (bx2 - sq[2]) / s, (by2 - sq[3]) / s,
            ])
            lmk = np.empty(10)
            lmk[0:5] = (bx1 + LANDMARK_TEMPLATE[0:5] * side - sq[0]) / s
            lmk[5:10] = (by1 + LANDMARK_TEMPLATE[5:10] * side - sq[1]) / s
            add(comp.image, sq, label, reg, lmk)
        # negatives: random squares far from the face
        tries = 0
        while made_neg < per_image and tries < per_image * 10:
            tries += 1
            s = rng.integers(24, min(h, w) - 1)
            x1 = rng.integers(0, w - s)
            y1 = rng.integers(0, h - s)
            sq = (x1, y1, x1 + s, y1 + s)
            if _iou(sq, comp.box) < 0.3:
                add(comp.image, sq, 0, None, None)
                made_neg += 1

    order = rng.permutation(len(xs))
    stack = lambda a, dt: np.asarray(a, dtype=dt)[order]
    return (stack(xs, np.float32), stack(cls, np.int64), stack(cls_m, np.float32),
            stack(regs, np.float32), stack(reg_m, np.float32), stack(lmks, np.float32))
