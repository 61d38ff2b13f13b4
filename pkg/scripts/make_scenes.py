#!/usr/bin/env python3
"""Generate the bundled benchmark scene suite from scikit-image sample photos.

Three scenes: no faces, one large frontal face, two small frontal faces.
Outputs binary PPM files plus scenes.json with ground-truth boxes (pixel
coordinates at the stored scene resolution).

Run from the repository root: python3 scripts/make_scenes.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import skimage.data
import skimage.transform

OUT = Path(__file__).resolve().parent.parent / "src" / "facekit" / "data" / "scenes"

# Face bounding box in the 512x512 astronaut photo (frontal face).
ASTRO_FACE = (176, 66, 96, 96)


def save_ppm(arr: np.ndarray, path: Path) -> None:
    h, w, _ = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(arr.astype(np.uint8).tobytes())


def resize(arr: np.ndarray, w: int, h: int) -> np.ndarray:
    out = skimage.transform.resize(arr, (h, w), anti_aliasing=True)
    return (out * 255).round().astype(np.uint8)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    astronaut = skimage.data.astronaut()  # 512x512 RGB, public domain (NASA)
    coffee = skimage.data.coffee()  # 400x600 RGB, no faces

    # Scene 1: empty (no faces), 640x480.
    empty = resize(coffee, 640, 480)
    save_ppm(empty, OUT / "empty.ppm")

    # Scene 2: one large face, the unmodified astronaut photo.
    save_ppm(astronaut, OUT / "one_large.ppm")

    # Scene 3: two small faces composited onto the empty background.
    two = empty.copy()
    fx, fy, fw, fh = ASTRO_FACE
    m = 28  # margin of context around the face crop
    crop = astronaut[fy - m : fy + fh + m, fx - m : fx + fw + m]
    truths = []
    for (px, py), side in (((96, 96), 120), ((392, 232), 96)):
        scale = side / crop.shape[0]
        patch = resize(crop, side, side)
        two[py : py + side, px : px + side] = patch
        truths.append(
            {
                "x": px + m * scale,
                "y": py + m * scale,
                "w": fw * scale,
                "h": fh * scale,
            }
        )
    save_ppm(two, OUT / "two_small.ppm")

    scenes = [
        {
            "id": "empty",
            "image": "empty.ppm",
            "label": "empty",
            "expected_face_count": 0,
            "ground_truth": [],
        },
        {
            "id": "one_large",
            "image": "one_large.ppm",
            "label": "one_large",
            "expected_face_count": 1,
            "ground_truth": [dict(zip("xywh", ASTRO_FACE))],
        },
        {
            "id": "two_small",
            "image": "two_small.ppm",
            "label": "two_small",
            "expected_face_count": 2,
            "ground_truth": truths,
        },
    ]
    (OUT / "scenes.json").write_text(json.dumps(scenes, indent=2) + "\n")
    print(f"wrote scenes to {OUT}")


if __name__ == "__main__":
    main()
