"""Train the bundled HOG face model from scikit-image sample data.

Positives come from the LFW subset faces, negatives from the subset's
non-face patches plus random crops of texture-heavy sample photos. The
result is a small frontal-face model good enough for the scene suite; it
is not a production-grade detector.

Usage: python3 scripts/train_hog_model.py [out.hsvm]
"""

import sys
from pathlib import Path

import numpy as np
from skimage import data as skdata

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from facekit.hogsvm import (  # noqa: E402
    HogConfig,
    LinearSvmModel,
    hog_descriptor,
    save_svm_model,
    svm_score,
    train_linear_svm,
)
from facekit.imaging import ImageBuffer, resize_bilinear, to_grayscale  # noqa: E402


def to_window(img01: np.ndarray, side: int) -> np.ndarray:
    buf = ImageBuffer.from_array((img01 * 255.0).clip(0, 255).astype(np.uint8))
    return resize_bilinear(buf, side, side).plane()


def random_crops(gray: np.ndarray, rng, count: int, side: int) -> list[np.ndarray]:
    h, w = gray.shape
    out = []
    for _ in range(count):
        s = int(rng.integers(side, min(h, w)))
        y = int(rng.integers(0, h - s + 1))
        x = int(rng.integers(0, w - s + 1))
        buf = ImageBuffer.from_array(gray[y : y + s, x : x + s])
        out.append(resize_bilinear(buf, side, side).plane())
    return out


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent
        / "src" / "facekit" / "data" / "models" / "face.hsvm"
    )
    cfg = HogConfig()
    rng = np.random.default_rng(7)

    lfw = skdata.lfw_subset()  # first 100 are faces, rest are not
    pos_imgs = [to_window(lfw[i], cfg.window) for i in range(100)]
    neg_imgs = [to_window(lfw[i], cfg.window) for i in range(100, len(lfw))]
    for photo in (skdata.coffee(), skdata.chelsea(), skdata.rocket()):
        gray = to_grayscale(ImageBuffer.from_array(photo)).plane()
        neg_imgs += random_crops(gray, rng, 80, cfg.window)

    pos = [hog_descriptor(p, cfg) for p in pos_imgs]
    neg = [hog_descriptor(n, cfg) for n in neg_imgs]
    model = train_linear_svm(pos, neg, lam=1e-4, epochs=60, seed=0, config=cfg)

    # conservative threshold: above nearly all negatives
    neg_scores = sorted(svm_score(model, d) for d in neg)
    pos_scores = sorted(svm_score(model, d) for d in pos)
    thr = max(neg_scores[int(0.99 * len(neg_scores))], 0.0) + 0.1
    model = LinearSvmModel(model.weights, model.bias, float(thr), cfg)
    save_svm_model(model, out)
    print(f"wrote {out}")
    print(f"pos score range [{pos_scores[0]:.3f}, {pos_scores[-1]:.3f}]")
    print(f"neg score range [{neg_scores[0]:.3f}, {neg_scores[-1]:.3f}]")
    print(f"threshold {thr:.3f}")


if __name__ == "__main__":
    main()
