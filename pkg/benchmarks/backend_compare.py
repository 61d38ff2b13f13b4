"""Compare the numba kernel backend against the pure-numpy fallback.

The backend is chosen at import time from FACEKIT_NUMBA, so each backend is
measured in its own subprocess with the flag set accordingly. Run:

    python3 benchmarks/backend_compare.py [--iterations N]
"""

import argparse
import json
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path


def worker(iterations: int) -> dict:
    import facekit
    from facekit.backend import BACKEND_NAME
    from facekit.bench import bundled_scenes, _prepared_frame
    from facekit.cascade import ScanParams, detect_cascade, parse_cascade_xml
    from facekit.hogsvm import detect_hog, load_svm_model
    from facekit import blazeface as bf
    from facekit.nnengine import read_weights

    models = Path(facekit.__file__).parent / "data" / "models"
    scene = next(s for s in bundled_scenes() if s.label == "one_large")
    frame = _prepared_frame(scene, (256, 256))
    params = ScanParams(scale_factor=1.2, min_size=32, window_step=2)

    haar = parse_cascade_xml((models / "haarcascade_frontalface_default.xml").read_text())
    lbp = parse_cascade_xml((models / "lbpcascade_frontalface.xml").read_text())
    hog = load_svm_model(models / "face.hsvm")
    bf_weights = read_weights(models / "blazeface_front.fdnw")
    bf_frame = _prepared_frame(scene, (bf.FRONT.input_size,) * 2)

    cases = {
        "haar_256": lambda: detect_cascade(haar, frame, params),
        "lbp_256": lambda: detect_cascade(lbp, frame, params),
        "hog_256": lambda: detect_hog(hog, frame),
        "blazeface_front": lambda: bf.detect_blazeface(bf_frame, bf.FRONT, bf_weights),
    }
    out = {"backend": BACKEND_NAME, "timings_ms": {}}
    for name, fn in cases.items():
        fn()  # warmup (and jit compilation on the numba backend)
        fn()
        samples = []
        for _ in range(iterations):
            t0 = time.perf_counter()
            fn()
            samples.append((time.perf_counter() - t0) * 1000.0)
        out["timings_ms"][name] = statistics.median(samples)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iterations", type=int, default=9)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.worker:
        json.dump(worker(args.iterations), sys.stdout)
        return 0

    results = {}
    for backend, flag in (("numba", "1"), ("numpy", "0")):
        env = dict(os.environ, FACEKIT_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, __file__, "--worker", "--iterations", str(args.iterations)],
            env=env, capture_output=True, text=True, check=True,
        )
        payload = json.loads(proc.stdout)
        if payload["backend"] != backend:
            print(f"note: requested {backend}, got {payload['backend']}", file=sys.stderr)
        results[backend] = payload["timings_ms"]

    width = max(len(k) for k in results["numba"])
    print(f"{'case':<{width}}  {'numba ms':>9}  {'numpy ms':>9}  {'speedup':>7}")
    for case, nb in results["numba"].items():
        np_ms = results["numpy"][case]
        print(f"{case:<{width}}  {nb:>9.2f}  {np_ms:>9.2f}  {np_ms / nb:>6.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
