"""Measurement harness: scene suites, timed detection loops, summary
statistics, resolution sweeps, 0-3 quality scoring, realtime checks, and
cross-run speedup comparison, plus the CSV emitters for all of it.

Timing discipline: the scene is loaded and resized to the target
resolution once, outside the timed region; the timed region covers one
full detect call (grayscale conversion, detection, post-processing) on a
monotonic clock. Loops are strictly sequential, one algorithm and one
scene at a time.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .detections import BoundingBox, Detection, iou
from .imaging import ImageBuffer, resize_bilinear
from .imgio import read_image

__all__ = [
    "SceneSpec",
    "BenchConfig",
    "TimingSample",
    "TimingStats",
    "ScoreCard",
    "load_scene_suite",
    "bundled_scenes",
    "run_benchmark",
    "summarize",
    "group_stats",
    "compare_runs",
    "realtime_check",
    "resolution_sweep",
    "score_algorithm",
    "emit_csv",
    "emit_boxplot_data",
    "read_mean_table",
]

SCENE_LABELS = ("empty", "one_large", "two_small")

Detector = Callable[[ImageBuffer], list[Detection]]


@dataclass(frozen=True)
class SceneSpec:
    id: str
    image_path: Path
    label: str
    expected_face_count: int
    ground_truth: tuple[BoundingBox, ...] = ()

    def __post_init__(self):
        if self.label not in SCENE_LABELS:
            raise ValueError(f"unknown scene label {self.label!r}")
        if self.expected_face_count not in (0, 1, 2):
            raise ValueError("expected_face_count must be 0, 1 or 2")
        if self.ground_truth and len(self.ground_truth) != self.expected_face_count:
            raise ValueError("ground_truth count must equal expected_face_count")


@dataclass(frozen=True)
class BenchConfig:
    algorithms: tuple[str, ...]
    resolution: tuple[int, int]  # (w, h)
    iterations: int | None = None
    duration_ms: float | None = None
    warmup_iterations: int = 10
    realtime_budget_ms: float = 40.0

    def __post_init__(self):
        if (self.iterations is None) == (self.duration_ms is None):
            raise ValueError("set exactly one of iterations or duration_ms")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.duration_ms is not None and self.duration_ms <= 0:
            raise ValueError("duration_ms must be > 0")
        if self.realtime_budget_ms <= 0:
            raise ValueError("realtime budget must be > 0")


@dataclass(frozen=True)
class TimingSample:
    algorithm: str
    scene_id: str
    face_count: int
    resolution: tuple[int, int]
    elapsed_ms: float

    def __post_init__(self):
        if self.elapsed_ms < 0:
            raise ValueError("elapsed must be >= 0")


@dataclass(frozen=True)
class TimingStats:
    n: int
    mean_ms: float
    sd_ms: float
    min_ms: float
    q1_ms: float
    median_ms: float
    q3_ms: float
    max_ms: float

    def __post_init__(self):
        if not (self.min_ms <= self.q1_ms <= self.median_ms <= self.q3_ms <= self.max_ms):
            raise ValueError("five-number summary out of order")
        if self.sd_ms < 0:
            raise ValueError("sd must be >= 0")


@dataclass(frozen=True)
class ScoreCard:
    algorithm: str
    resolution: tuple[int, int]
    no_false_positives_empty: bool
    finds_one_large: bool
    finds_two_small: bool

    @property
    def points(self) -> int:
        return int(self.no_false_positives_empty) + int(self.finds_one_large) + int(
            self.finds_two_small
        )


# ---------------------------------------------------------------------------
# scenes


def load_scene_suite(path: str | Path) -> list[SceneSpec]:
    """Scene list from a scenes.json; image paths resolve relative to it."""
    path = Path(path)
    doc = json.loads(path.read_text())
    scenes = []
    for entry in doc:
        gt = tuple(
            BoundingBox(b["x"], b["y"], b["w"], b["h"]) for b in entry["ground_truth"]
        )
        scenes.append(
            SceneSpec(
                id=entry["id"],
                image_path=path.parent / entry["image"],
                label=entry["label"],
                expected_face_count=entry["expected_face_count"],
                ground_truth=gt,
            )
        )
    return scenes


def bundled_scenes() -> list[SceneSpec]:
    from importlib import resources

    return load_scene_suite(
        Path(str(resources.files("facekit"))) / "data" / "scenes" / "scenes.json"
    )


def _scaled_truth(scene: SceneSpec, resolution: tuple[int, int]) -> list[BoundingBox]:
    img = read_image(scene.image_path)
    sx = resolution[0] / img.width
    sy = resolution[1] / img.height
    return [BoundingBox(b.x * sx, b.y * sy, b.w * sx, b.h * sy) for b in scene.ground_truth]


# ---------------------------------------------------------------------------
# measurement


def _prepared_frame(scene: SceneSpec, resolution: tuple[int, int]) -> ImageBuffer:
    img = read_image(scene.image_path)
    if (img.width, img.height) == resolution:
        return img
    return resize_bilinear(img, resolution[0], resolution[1])


def run_benchmark(
    cfg: BenchConfig,
    scenes: Sequence[SceneSpec],
    detectors: dict[str, Detector],
) -> list[TimingSample]:
    """Timed samples per algorithm per scene, in execution order.

    A detector may expose a ``native_size`` attribute (fixed-input models);
    the harness then resizes the scene to that square size instead of
    cfg.resolution and records the native size in each sample.
    """
    if not scenes:
        raise ValueError("scene list must not be empty")
    samples: list[TimingSample] = []
    for name in cfg.algorithms:
        detector = detectors[name]
        native = getattr(detector, "native_size", None)
        resolution = (native, native) if native else cfg.resolution
        for scene in scenes:
            frame = _prepared_frame(scene, resolution)
            for _ in range(cfg.warmup_iterations):
                detector(frame)
            if cfg.iterations is not None:
                for _ in range(cfg.iterations):
                    t0 = time.perf_counter()
                    detector(frame)
                    elapsed = (time.perf_counter() - t0) * 1000.0
                    samples.append(
                        TimingSample(name, scene.id, scene.expected_face_count, resolution, elapsed)
                    )
            else:
                budget = cfg.duration_ms / 1000.0
                start = time.perf_counter()
                while True:
                    t0 = time.perf_counter()
                    detector(frame)
                    t1 = time.perf_counter()
                    samples.append(
                        TimingSample(
                            name, scene.id, scene.expected_face_count, resolution,
                            (t1 - t0) * 1000.0,
                        )
                    )
                    if t1 - start >= budget:
                        break
    return samples


def summarize(elapsed_ms: Iterable[float]) -> TimingStats:
    """Five-number summary + mean/sd; sample sd (n-1), type-7 quartiles."""
    xs = np.asarray(list(elapsed_ms), dtype=np.float64)
    if xs.size == 0:
        raise ValueError("cannot summarize an empty group")
    sd = float(xs.std(ddof=1)) if xs.size > 1 else 0.0
    q1, med, q3 = (float(v) for v in np.percentile(xs, [25, 50, 75]))
    return TimingStats(
        n=int(xs.size),
        mean_ms=float(xs.mean()),
        sd_ms=sd,
        min_ms=float(xs.min()),
        q1_ms=q1,
        median_ms=med,
        q3_ms=q3,
        max_ms=float(xs.max()),
    )


def group_stats(
    samples: Sequence[TimingSample],
) -> dict[tuple[str, tuple[int, int], int], TimingStats]:
    """Stats per (algorithm, resolution, face_count); empty groups absent."""
    groups: dict[tuple[str, tuple[int, int], int], list[float]] = {}
    for s in samples:
        groups.setdefault((s.algorithm, s.resolution, s.face_count), []).append(
            s.elapsed_ms
        )
    return {k: summarize(v) for k, v in groups.items()}


def realtime_check(stats: TimingStats, budget_ms: float = 40.0) -> bool:
    """True when the mean fits the frame budget; boundary inclusive."""
    return stats.mean_ms <= budget_ms


def compare_runs(
    a: dict[str, float], b: dict[str, float]
) -> list[tuple[str, float, float, float]]:
    """Per-algorithm speedup mean_b / mean_a; keys must match exactly."""
    missing = sorted(set(a) ^ set(b))
    if missing:
        raise ValueError(f"algorithm keys differ between runs: {missing}")
    return [(name, a[name], b[name], b[name] / a[name]) for name in a]


def read_mean_table(path: str | Path) -> dict[str, float]:
    """algorithm -> mean_ms from any CSV with those two columns."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "algorithm" not in rows[0] or "mean_ms" not in rows[0]:
        raise ValueError(f"{path}: need 'algorithm' and 'mean_ms' columns")
    return {r["algorithm"]: float(r["mean_ms"]) for r in rows}


def resolution_sweep(
    algorithm: str,
    detector: Detector,
    resolutions: Sequence[tuple[int, int]],
    scenes: Sequence[SceneSpec],
    iterations: int = 5,
    warmup_iterations: int = 2,
    native_sizes: Sequence[int] | None = None,
) -> tuple[list[tuple[tuple[int, int], TimingStats]], list[str]]:
    """Timing stats per requested resolution.

    Fixed-input detectors pass their allowed square sizes via native_sizes;
    other resolutions are skipped with a notice instead of an error.
    """
    if not resolutions:
        raise ValueError("resolution list must not be empty")
    series: list[tuple[tuple[int, int], TimingStats]] = []
    notices: list[str] = []
    for res in resolutions:
        if native_sizes is not None and not (
            res[0] == res[1] and res[0] in native_sizes
        ):
            notices.append(
                f"skip {algorithm} at {res[0]}x{res[1]}: fixed input sizes "
                f"{sorted(native_sizes)}"
            )
            continue
        cfg = BenchConfig(
            algorithms=(algorithm,),
            resolution=res,
            iterations=iterations,
            warmup_iterations=warmup_iterations,
        )
        samples = run_benchmark(cfg, scenes, {algorithm: detector})
        series.append((res, summarize([s.elapsed_ms for s in samples])))
    return series, notices


# ---------------------------------------------------------------------------
# quality scoring


def _greedy_match(dets: list[Detection], truths: list[BoundingBox]) -> int:
    """Count truths matched at IoU >= 0.5 by distinct detections."""
    # best-IoU detection per truth; each detection matches at most once
    available = list(range(len(dets)))
    matched = 0
    for truth in truths:
        best, best_iou = None, 0.5
        for i in available:
            v = iou(dets[i].box, truth)
            if v >= best_iou:
                best, best_iou = i, v
        if best is not None:
            available.remove(best)
            matched += 1
    return matched


def score_algorithm(
    algorithm: str,
    resolution: tuple[int, int],
    results: dict[str, list[Detection]],
    scenes: Sequence[SceneSpec],
) -> ScoreCard:
    """0-3 scoring over the three scene labels at the given resolution."""
    by_label = {s.label: s for s in scenes}
    for label in SCENE_LABELS:
        if label not in by_label:
            raise ValueError(f"scene suite lacks a {label!r} scene")
        if label not in results:
            raise ValueError(f"results lack the {label!r} scene")
    empty_ok = len(results["empty"]) == 0
    one = by_label["one_large"]
    one_ok = _greedy_match(results["one_large"], _scaled_truth(one, resolution)) >= 1
    two = by_label["two_small"]
    two_ok = _greedy_match(results["two_small"], _scaled_truth(two, resolution)) == 2
    return ScoreCard(algorithm, resolution, empty_ok, one_ok, two_ok)


# ---------------------------------------------------------------------------
# CSV emitters


def _res_str(res: tuple[int, int]) -> str:
    return f"{res[0]}x{res[1]}"


def _write_rows(path: str | Path, header: list[str], rows: list[list]) -> None:
    if not rows:
        raise ValueError("refusing to write an empty CSV")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_csv(rows: Sequence, path: str | Path) -> None:
    """Serialize samples, stats, scorecards, or speedup tuples by row type."""
    rows = list(rows)
    if not rows:
        raise ValueError("refusing to write an empty CSV")
    first = rows[0]
    if isinstance(first, TimingSample):
        _write_rows(
            path,
            ["algorithm", "scene_id", "face_count", "resolution", "elapsed_ms"],
            [
                [s.algorithm, s.scene_id, s.face_count, _res_str(s.resolution), repr(s.elapsed_ms)]
                for s in rows
            ],
        )
    elif isinstance(first, tuple) and len(first) == 2 and isinstance(first[1], TimingStats):
        # ((algorithm, resolution, face_count), TimingStats) pairs
        _write_rows(
            path,
            ["algorithm", "resolution", "face_count", "n", "mean_ms", "sd_ms",
             "min_ms", "q1_ms", "median_ms", "q3_ms", "max_ms"],
            [
                [k[0], _res_str(k[1]), k[2], st.n, repr(st.mean_ms), repr(st.sd_ms),
                 repr(st.min_ms), repr(st.q1_ms), repr(st.median_ms), repr(st.q3_ms),
                 repr(st.max_ms)]
                for k, st in rows
            ],
        )
    elif isinstance(first, ScoreCard):
        _write_rows(
            path,
            ["algorithm", "resolution", "no_false_positives", "finds_one_large",
             "finds_two_small", "points"],
            [
                [c.algorithm, _res_str(c.resolution), int(c.no_false_positives_empty),
                 int(c.finds_one_large), int(c.finds_two_small), c.points]
                for c in rows
            ],
        )
    elif isinstance(first, tuple) and len(first) == 4:
        _write_rows(
            path,
            ["algorithm", "mean_a_ms", "mean_b_ms", "speedup"],
            [[n, repr(a), repr(b), repr(s)] for n, a, b, s in rows],
        )
    else:
        raise TypeError(f"cannot serialize rows of type {type(first).__name__}")


def emit_boxplot_data(
    stats_by_group: dict[tuple[str, tuple[int, int], int], TimingStats],
    path: str | Path,
) -> None:
    """Five-number summary per algorithm and face count (box-plot input)."""
    rows = [
        [k[0], _res_str(k[1]), k[2], repr(st.min_ms), repr(st.q1_ms),
         repr(st.median_ms), repr(st.q3_ms), repr(st.max_ms)]
        for k, st in sorted(stats_by_group.items())
    ]
    _write_rows(
        path,
        ["algorithm", "resolution", "face_count", "min_ms", "q1_ms", "median_ms",
         "q3_ms", "max_ms"],
        rows,
    )
