"""Bench harness tests: statistics oracle, timing-loop contracts with stub
detectors, scoring rules, speedup comparison against the bundled published
numbers, and CSV round trips."""

import csv
import math
import time
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from facekit.bench import (
    BenchConfig,
    SceneSpec,
    ScoreCard,
    TimingSample,
    TimingStats,
    bundled_scenes,
    compare_runs,
    emit_boxplot_data,
    emit_csv,
    group_stats,
    read_mean_table,
    realtime_check,
    resolution_sweep,
    run_benchmark,
    score_algorithm,
    summarize,
)
from facekit.detections import BoundingBox, Detection
from facekit.imgio import read_image

DATA = Path(str(resources.files("facekit"))) / "data"


class TestTypes:
    def test_scene_truth_count_must_match(self):
        with pytest.raises(ValueError, match="ground_truth"):
            SceneSpec("x", Path("x.ppm"), "one_large", 1,
                      (BoundingBox(0, 0, 1, 1), BoundingBox(2, 2, 1, 1)))

    def test_bench_config_exactly_one_mode(self):
        with pytest.raises(ValueError):
            BenchConfig(("a",), (64, 64))
        with pytest.raises(ValueError):
            BenchConfig(("a",), (64, 64), iterations=3, duration_ms=100.0)
        BenchConfig(("a",), (64, 64), iterations=3)
        BenchConfig(("a",), (64, 64), duration_ms=100.0)

    def test_negative_elapsed_rejected(self):
        with pytest.raises(ValueError):
            TimingSample("a", "s", 0, (64, 64), -1.0)

    def test_stats_ordering_enforced(self):
        with pytest.raises(ValueError):
            TimingStats(3, 1.0, 0.0, 5.0, 4.0, 3.0, 2.0, 1.0)

    def test_bundled_scenes(self):
        scenes = bundled_scenes()
        assert [s.label for s in scenes] == ["empty", "one_large", "two_small"]
        assert [s.expected_face_count for s in scenes] == [0, 1, 2]
        assert [len(s.ground_truth) for s in scenes] == [0, 1, 2]
        for s in scenes:
            img = read_image(s.image_path)
            assert img.width > 0


class TestSummarize:
    def test_hand_case(self):
        st = summarize([10.0, 20.0, 30.0])
        assert st.mean_ms == 20.0
        assert st.sd_ms == pytest.approx(10.0)  # sqrt((100+0+100)/2)
        assert st.median_ms == 20.0
        assert (st.min_ms, st.max_ms) == (10.0, 30.0)

    def test_single_sample(self):
        st = summarize([7.0])
        assert st.mean_ms == 7.0 and st.sd_ms == 0.0
        assert st.min_ms == st.q1_ms == st.median_ms == st.q3_ms == st.max_ms == 7.0

    def test_constant_samples(self):
        assert summarize([4.0] * 9).sd_ms == 0.0

    def test_empty_group_is_error(self):
        with pytest.raises(ValueError):
            summarize([])

    def test_matches_direct_formula_oracle(self):
        # independent evaluation: mean/sd by literal formula, quartiles by
        # hand-rolled type-7 interpolation on the sorted data
        rng = np.random.default_rng(33)
        xs = rng.exponential(20.0, size=1000).tolist()
        st = summarize(xs)
        n = len(xs)
        mean = sum(xs) / n
        sd = math.sqrt(sum((v - mean) ** 2 for v in xs) / (n - 1))
        srt = sorted(xs)

        def type7(p):
            pos = (n - 1) * p
            lo = int(math.floor(pos))
            frac = pos - lo
            hi = min(lo + 1, n - 1)
            return srt[lo] * (1 - frac) + srt[hi] * frac

        assert st.mean_ms == pytest.approx(mean, rel=1e-9)
        assert st.sd_ms == pytest.approx(sd, rel=1e-9)
        for got, p in ((st.q1_ms, 0.25), (st.median_ms, 0.5), (st.q3_ms, 0.75)):
            assert got == pytest.approx(type7(p), rel=1e-9)


def scene_suite():
    return bundled_scenes()


class TestRunBenchmark:
    def test_iteration_counting(self):
        calls = []

        def stub(frame):
            calls.append(frame)
            return []

        cfg = BenchConfig(("stub",), (64, 64), iterations=5, warmup_iterations=2)
        samples = run_benchmark(cfg, scene_suite()[:1], {"stub": stub})
        assert len(samples) == 5  # warmups excluded from output
        assert len(calls) == 7  # 2 warmups + 5 timed
        assert all(s.algorithm == "stub" and s.resolution == (64, 64) for s in samples)

    def test_duration_mode_bounded(self):
        def stub(frame):
            time.sleep(0.010)
            return []

        cfg = BenchConfig(("stub",), (64, 64), duration_ms=300.0, warmup_iterations=1)
        samples = run_benchmark(cfg, scene_suite()[:1], {"stub": stub})
        assert 20 <= len(samples) <= 40

    def test_resize_outside_timed_region(self):
        frames = []

        def stub(frame):
            frames.append(frame)
            time.sleep(0.005)
            return []

        cfg = BenchConfig(("stub",), (48, 48), iterations=4, warmup_iterations=1)
        samples = run_benchmark(cfg, scene_suite()[:1], {"stub": stub})
        # all calls observe the pre-resized frame, and it is the same object:
        # the resize happened exactly once, before the loop
        assert all(f is frames[0] for f in frames)
        assert frames[0].width == 48 and frames[0].height == 48
        # timed region is the detect call alone: close to the stub's sleep
        for s in samples:
            assert 4.0 <= s.elapsed_ms <= 50.0

    def test_native_size_detector_override(self):
        def stub(frame):
            assert frame.width == frame.height == 128
            return []

        stub.native_size = 128
        cfg = BenchConfig(("stub",), (64, 64), iterations=2, warmup_iterations=0)
        samples = run_benchmark(cfg, scene_suite()[:1], {"stub": stub})
        assert all(s.resolution == (128, 128) for s in samples)

    def test_empty_scene_list(self):
        with pytest.raises(ValueError):
            run_benchmark(
                BenchConfig(("a",), (64, 64), iterations=1), [], {"a": lambda f: []}
            )


class TestCompareAndRealtime:
    def test_realtime_paper_rows(self):
        mk = lambda mu: TimingStats(10, mu, 1.0, mu, mu, mu, mu, mu)
        assert realtime_check(mk(25.2)) is True
        assert realtime_check(mk(71.2)) is False
        assert realtime_check(mk(40.0)) is True  # boundary inclusive

    def test_identical_tables_all_one(self):
        t = {"a": 10.0, "b": 33.3}
        assert all(row[3] == pytest.approx(1.0) for row in compare_runs(t, t))

    def test_paper_table1_speedups(self):
        a = read_mean_table(DATA / "bench" / "paper_sd845.csv")
        b = read_mean_table(DATA / "bench" / "paper_sd800.csv")
        rows = {name: round(s, 2) for name, _, _, s in compare_runs(a, b)}
        assert rows == {
            "mtcnn": 2.13,
            "blazeface": 3.05,
            "lbp": 5.02,
            "haar": 5.64,
            "hog": 3.60,
        }

    def test_key_mismatch(self):
        with pytest.raises(ValueError, match="keys differ"):
            compare_runs({"a": 1.0}, {"b": 1.0})


class TestSweep:
    def test_quadratic_stub_ordering(self):
        def stub_for(frame):
            # cost proportional to pixel count
            time.sleep(frame.width * frame.height * 2e-7)
            return []

        series, notices = resolution_sweep(
            "stub", stub_for, [(128, 128), (256, 256)], scene_suite()[:1],
            iterations=3, warmup_iterations=0,
        )
        assert notices == []
        assert [res for res, _ in series] == [(128, 128), (256, 256)]
        assert series[0][1].mean_ms < series[1][1].mean_ms

    def test_fixed_size_detector_skips(self):
        series, notices = resolution_sweep(
            "bf", lambda f: [], [(64, 64), (128, 128)], scene_suite()[:1],
            iterations=1, warmup_iterations=0, native_sizes=(128, 256),
        )
        assert [res for res, _ in series] == [(128, 128)]
        assert len(notices) == 1 and "64x64" in notices[0]

    def test_empty_resolutions(self):
        with pytest.raises(ValueError):
            resolution_sweep("x", lambda f: [], [], scene_suite()[:1])


def oracle_results(scenes, resolution):
    """Perfect detections: the scaled ground truth itself."""
    out = {}
    for s in scenes:
        img = read_image(s.image_path)
        sx, sy = resolution[0] / img.width, resolution[1] / img.height
        out[s.label] = [
            Detection(BoundingBox(b.x * sx, b.y * sy, b.w * sx, b.h * sy))
            for b in s.ground_truth
        ]
    return out


class TestScoring:
    def test_nothing_everywhere_scores_one(self):
        scenes = scene_suite()
        card = score_algorithm(
            "null", (256, 256), {l: [] for l in ("empty", "one_large", "two_small")},
            scenes,
        )
        assert card.points == 1
        assert card.no_false_positives_empty
        assert not card.finds_one_large and not card.finds_two_small

    def test_perfect_oracle_scores_three(self):
        scenes = scene_suite()
        card = score_algorithm(
            "oracle", (256, 256), oracle_results(scenes, (256, 256)), scenes
        )
        assert card.points == 3

    def test_one_of_two_small(self):
        scenes = scene_suite()
        results = oracle_results(scenes, (256, 256))
        results["two_small"] = results["two_small"][:1]
        card = score_algorithm("partial", (256, 256), results, scenes)
        assert card.finds_one_large and not card.finds_two_small
        assert card.points == 2

    def test_distinct_detections_required(self):
        # one detection cannot match both truths
        scenes = scene_suite()
        results = oracle_results(scenes, (256, 256))
        results["two_small"] = [results["two_small"][0], results["two_small"][0]]
        card = score_algorithm("dup", (256, 256), results, scenes)
        assert not card.finds_two_small


class TestEmitters:
    def test_samples_round_trip(self, tmp_path):
        samples = [
            TimingSample("haar", "empty", 0, (256, 256), 12.25),
            TimingSample("haar", "one_large", 1, (256, 256), 13.625),
        ]
        p = tmp_path / "samples.csv"
        emit_csv(samples, p)
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["algorithm"] == "haar"
        assert rows[0]["resolution"] == "256x256"
        assert float(rows[0]["elapsed_ms"]) == pytest.approx(12.25, abs=1e-9)
        assert float(rows[1]["elapsed_ms"]) == pytest.approx(13.625, abs=1e-9)

    def test_stats_round_trip(self, tmp_path):
        st = summarize([np.pi, np.e, 4.0, 5.5])
        p = tmp_path / "stats.csv"
        emit_csv([(("lbp", (128, 128), 2), st)], p)
        with open(p, newline="") as fh:
            (row,) = list(csv.DictReader(fh))
        assert row["algorithm"] == "lbp" and row["face_count"] == "2"
        for fieldname, want in (
            ("mean_ms", st.mean_ms), ("sd_ms", st.sd_ms), ("min_ms", st.min_ms),
            ("q1_ms", st.q1_ms), ("median_ms", st.median_ms), ("q3_ms", st.q3_ms),
            ("max_ms", st.max_ms),
        ):
            assert float(row[fieldname]) == pytest.approx(want, abs=1e-9)

    def test_scorecards_csv(self, tmp_path):
        p = tmp_path / "scores.csv"
        emit_csv([ScoreCard("hog", (256, 256), True, True, False)], p)
        text = p.read_text()
        assert text.splitlines()[0] == (
            "algorithm,resolution,no_false_positives,finds_one_large,"
            "finds_two_small,points"
        )
        assert text.splitlines()[1] == "hog,256x256,1,1,0,2"

    def test_speedup_csv(self, tmp_path):
        p = tmp_path / "speedup.csv"
        emit_csv([("haar", 71.2, 401.8, 401.8 / 71.2)], p)
        with open(p, newline="") as fh:
            (row,) = list(csv.DictReader(fh))
        assert float(row["speedup"]) == pytest.approx(401.8 / 71.2, abs=1e-9)

    def test_empty_rows_error_no_file(self, tmp_path):
        p = tmp_path / "nope.csv"
        with pytest.raises(ValueError):
            emit_csv([], p)
        assert not p.exists()

    def test_boxplot_data(self, tmp_path):
        samples = [
            TimingSample("haar", "empty", 0, (256, 256), v) for v in (1.0, 2.0, 3.0)
        ] + [TimingSample("haar", "two_small", 2, (256, 256), v) for v in (4.0, 6.0)]
        p = tmp_path / "boxes.csv"
        emit_boxplot_data(group_stats(samples), p)
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert rows[0]["face_count"] == "0" and float(rows[0]["median_ms"]) == 2.0
        assert rows[1]["face_count"] == "2" and float(rows[1]["median_ms"]) == 5.0
