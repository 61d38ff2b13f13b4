"""Command-line entry point wiring detectors and the bench harness to files.

Exit codes: 0 success, 2 bad arguments, 3 model load failure, 4 image read
failure, 5 empty sample sets. Every failure prints a single line starting
with ``error:`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import bench as bench_mod
from . import blazeface as bf
from .bench import (
    BenchConfig,
    bundled_scenes,
    emit_csv,
    group_stats,
    load_scene_suite,
    read_mean_table,
    resolution_sweep,
    run_benchmark,
    score_algorithm,
    summarize,
)
from .cascade import ScanParams, detect_cascade, parse_cascade_xml
from .detections import detections_to_json
from .hogsvm import detect_hog, load_svm_model
from .imaging import resize_bilinear
from .imgio import read_image
from .mtcnn import detect_mtcnn
from .nnengine import read_weights

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MODEL = 3
EXIT_IMAGE = 4
EXIT_EMPTY = 5

ALGORITHMS = ("haar", "lbp", "hog", "mtcnn", "blazeface-front", "blazeface-rear")

MODEL_FILES = {
    "haar": ("haarcascade_frontalface_default.xml",),
    "lbp": ("lbpcascade_frontalface.xml",),
    "hog": ("face.hsvm",),
    "mtcnn": ("mtcnn_pnet.fdnw", "mtcnn_rnet.fdnw", "mtcnn_onet.fdnw"),
    "blazeface-front": ("blazeface_front.fdnw",),
    "blazeface-rear": ("blazeface_rear.fdnw",),
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # single-line machine-parsable failures, exit code 2
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _bundled_models_dir() -> Path:
    from importlib import resources

    return Path(str(resources.files("facekit"))) / "data" / "models"


def _models_dir(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("FD_MODELS_DIR")
    if env:
        return Path(env)
    return _bundled_models_dir()


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        size = (int(w), int(h))
    except ValueError:
        raise CliError(EXIT_USAGE, f"bad size {text!r}, expected WxH") from None
    if size[0] < 1 or size[1] < 1:
        raise CliError(EXIT_USAGE, f"bad size {text!r}, dimensions must be >= 1")
    return size


def _model_path(models_dir: Path, filename: str) -> Path:
    path = models_dir / filename
    if not path.is_file():
        raise CliError(EXIT_MODEL, f"model file not found: {path}")
    return path


def load_detector(algo: str, models_dir: Path):
    """Detector callable for an algorithm name; blazeface callables carry a
    ``native_size`` attribute so the harness can honor the fixed input."""
    try:
        if algo in ("haar", "lbp"):
            path = _model_path(models_dir, MODEL_FILES[algo][0])
            model = parse_cascade_xml(path.read_text())
            params = ScanParams()
            return lambda frame: detect_cascade(model, frame, params)
        if algo == "hog":
            path = _model_path(models_dir, MODEL_FILES[algo][0])
            model = load_svm_model(path)
            return lambda frame: detect_hog(model, frame)
        if algo == "mtcnn":
            wp, wr, wo = (
                read_weights(_model_path(models_dir, f)) for f in MODEL_FILES[algo]
            )
            return lambda frame: detect_mtcnn(frame, wp, wr, wo)
        if algo in ("blazeface-front", "blazeface-rear"):
            variant = bf.FRONT if algo.endswith("front") else bf.REAR
            weights = read_weights(_model_path(models_dir, MODEL_FILES[algo][0]))
            spec = bf.load_bundled_spec(variant)

            def detector(frame, _v=variant, _w=weights, _s=spec):
                return bf.detect_blazeface(frame, _v, _w, _s)

            detector.native_size = variant.input_size
            return detector
    except CliError:
        raise
    except Exception as exc:  # corrupt file, shape mismatch, bad CRC ...
        raise CliError(EXIT_MODEL, f"cannot load {algo} model: {exc}") from exc
    raise CliError(EXIT_USAGE, f"unknown algorithm {algo!r}")


def _read_frame(path: str) -> "ImageBuffer":
    try:
        return read_image(path)
    except Exception as exc:
        raise CliError(EXIT_IMAGE, f"cannot read image {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_detect(args) -> int:
    models = _models_dir(args.models)
    img = _read_frame(args.input)
    detector = load_detector(args.algo, models)
    native = getattr(detector, "native_size", None)
    if args.size:
        size = _parse_size(args.size)
        if native and size != (native, native):
            print(
                f"warning: {args.algo} has a fixed {native}x{native} input; "
                f"requested {size[0]}x{size[1]} ignored",
                file=sys.stderr,
            )
        else:
            img = resize_bilinear(img, size[0], size[1])
    t0 = time.perf_counter()
    dets = detector(img)
    elapsed = (time.perf_counter() - t0) * 1000.0
    doc = detections_to_json(dets)
    if args.json:
        Path(args.json).write_text(doc + "\n")
        print(f"{len(dets)} detection(s) in {elapsed:.1f} ms -> {args.json}")
    else:
        print(doc)
        print(f"{len(dets)} detection(s) in {elapsed:.1f} ms", file=sys.stderr)
    return EXIT_OK


def _load_bench_config(path: str) -> tuple[BenchConfig, list, Path | None]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(EXIT_USAGE, f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_USAGE, f"bad config JSON: {exc}") from None
    try:
        res = doc["resolution"]
        resolution = _parse_size(res) if isinstance(res, str) else (res[0], res[1])
        cfg = BenchConfig(
            algorithms=tuple(doc["algorithms"]),
            resolution=resolution,
            iterations=doc.get("iterations"),
            duration_ms=doc.get("duration_ms"),
            warmup_iterations=doc.get("warmup_iterations", 10),
            realtime_budget_ms=doc.get("realtime_budget_ms", 40.0),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_USAGE, f"bad bench config: {exc}") from None
    scenes = (
        load_scene_suite(doc["scenes"]) if "scenes" in doc else bundled_scenes()
    )
    models = Path(doc["models_dir"]) if "models_dir" in doc else None
    return cfg, scenes, models


def cmd_bench(args) -> int:
    cfg, scenes, cfg_models = _load_bench_config(args.config)
    models = _models_dir(args.models) if args.models else (cfg_models or _models_dir(None))
    detectors = {name: load_detector(name, models) for name in cfg.algorithms}
    samples = run_benchmark(cfg, scenes, detectors)
    if not samples:
        raise CliError(EXIT_EMPTY, "benchmark produced no samples")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(samples, out / "samples.csv")
    stats = group_stats(samples)
    emit_csv(sorted(stats.items()), out / "stats.csv")
    for (name, res, fc), st in sorted(stats.items()):
        tag = "realtime" if bench_mod.realtime_check(st, cfg.realtime_budget_ms) else "over budget"
        print(
            f"{name} {res[0]}x{res[1]} faces={fc}: "
            f"mean {st.mean_ms:.2f} ms sd {st.sd_ms:.2f} ({tag})"
        )
    return EXIT_OK


def cmd_sweep(args) -> int:
    models = _models_dir(args.models)
    resolutions = [_parse_size(tok) for tok in args.resolutions.split(",") if tok]
    if not resolutions:
        raise CliError(EXIT_USAGE, "no resolutions given")
    detector = load_detector(args.algo, models)
    native = getattr(detector, "native_size", None)
    series, notices = resolution_sweep(
        args.algo,
        detector,
        resolutions,
        bundled_scenes() if args.scenes is None else load_scene_suite(args.scenes),
        iterations=args.iterations,
        native_sizes=(native,) if native else None,
    )
    for note in notices:
        print(f"notice: {note}", file=sys.stderr)
    if not series:
        raise CliError(EXIT_EMPTY, "sweep produced no samples")
    import csv as _csv

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["algorithm", "resolution", "n", "mean_ms", "sd_ms", "min_ms", "q1_ms",
             "median_ms", "q3_ms", "max_ms"]
        )
        for res, st in series:
            writer.writerow(
                [args.algo, f"{res[0]}x{res[1]}", st.n, repr(st.mean_ms),
                 repr(st.sd_ms), repr(st.min_ms), repr(st.q1_ms),
                 repr(st.median_ms), repr(st.q3_ms), repr(st.max_ms)]
            )
    for res, st in series:
        print(f"{res[0]}x{res[1]}: mean {st.mean_ms:.2f} ms over {st.n}")
    return EXIT_OK


def cmd_score(args) -> int:
    models = _models_dir(args.models)
    size = _parse_size(args.size)
    scenes = bundled_scenes() if args.scenes is None else load_scene_suite(args.scenes)
    detector = load_detector(args.algo, models)
    native = getattr(detector, "native_size", None)
    resolution = (native, native) if native else size
    results = {}
    for scene in scenes:
        frame = _read_frame(str(scene.image_path))
        if (frame.width, frame.height) != resolution:
            frame = resize_bilinear(frame, resolution[0], resolution[1])
        results[scene.label] = detector(frame)
    card = score_algorithm(args.algo, resolution, results, scenes)
    emit_csv([card], args.out)
    print(
        f"{args.algo} at {resolution[0]}x{resolution[1]}: {card.points}/3 "
        f"(empty={card.no_false_positives_empty} one_large={card.finds_one_large} "
        f"two_small={card.finds_two_small})"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        a = read_mean_table(args.csv_a)
        b = read_mean_table(args.csv_b)
    except FileNotFoundError as exc:
        raise CliError(EXIT_USAGE, f"cannot read table: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    if not a or not b:
        raise CliError(EXIT_EMPTY, "mean tables are empty")
    try:
        rows = bench_mod.compare_runs(a, b)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    emit_csv(rows, args.out)
    for name, _, _, speedup in rows:
        print(f"{name}: {speedup:.2f}x")
    return EXIT_OK


def cmd_info(args) -> int:
    models = _models_dir(args.models)
    algos = [args.algo] if args.algo else list(ALGORITHMS)
    for algo in algos:
        try:
            print(f"{algo}: {_describe(algo, models)}")
        except CliError as exc:
            print(f"{algo}: unavailable ({exc})")
    return EXIT_OK


def _describe(algo: str, models_dir: Path) -> str:
    if algo in ("haar", "lbp"):
        path = _model_path(models_dir, MODEL_FILES[algo][0])
        model = parse_cascade_xml(path.read_text())
        return (
            f"{model.feature_kind} cascade, {len(model.stages)} stages, "
            f"{len(model.features)} features, window "
            f"{model.window_w}x{model.window_h}"
        )
    if algo == "hog":
        path = _model_path(models_dir, MODEL_FILES[algo][0])
        model = load_svm_model(path)
        cfg = model.config
        win = f"{cfg.window}x{cfg.window}" if cfg else "unknown"
        return f"linear SVM, {model.weights.size}-dim descriptor, window {win}"
    if algo == "mtcnn":
        sizes = []
        for f in MODEL_FILES[algo]:
            w = read_weights(_model_path(models_dir, f))
            sizes.append(len(w))
        return (
            f"3-stage cascade CNN (P/R/O), {sizes[0]}/{sizes[1]}/{sizes[2]} "
            "weight records, inputs 12/24/48"
        )
    if algo in ("blazeface-front", "blazeface-rear"):
        variant = bf.FRONT if algo.endswith("front") else bf.REAR
        _model_path(models_dir, MODEL_FILES[algo][0])
        return (
            f"single-shot detector, input {variant.input_size}x"
            f"{variant.input_size}, {variant.anchor_count} anchors"
        )
    raise CliError(EXIT_USAGE, f"unknown algorithm {algo!r}")


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="facekit", description="Face detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect faces in one image")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--input", required=True)
    p.add_argument("--size", help="resize input to WxH before detection")
    p.add_argument("--models", help="model directory (default: FD_MODELS_DIR or bundled)")
    p.add_argument("--json", help="write the detection JSON array to this path")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("bench", help="timed benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--models")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="latency across input resolutions")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--resolutions", required=True, help="comma-separated WxH list")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--scenes")
    p.add_argument("--models")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("score", help="0-3 quality score on the scene suite")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--size", default="256x256")
    p.add_argument("--scenes")
    p.add_argument("--models")
    p.add_argument("--out", default="scores.csv")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("compare", help="per-algorithm speedup between two runs")
    p.add_argument("csv_a")
    p.add_argument("csv_b")
    p.add_argument("--out", default="speedup.csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("info", help="print model metadata")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--models")
    p.set_defaults(func=cmd_info)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
