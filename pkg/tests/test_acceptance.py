"""Acceptance gate: end-to-end behavioral criteria for the toolkit.

Each test class maps to one acceptance criterion. Numeric expectations are
checked against independent oracles implemented in this file (naive loops,
closed-form statistics), never against the library's own fast paths.
"""

import csv
import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

import facekit
from facekit.bench import (
    BenchConfig,
    ScoreCard,
    bundled_scenes,
    compare_runs,
    emit_csv,
    read_mean_table,
    realtime_check,
    run_benchmark,
    score_algorithm,
    summarize,
    _prepared_frame,
    _scaled_truth,
)
from facekit.cascade import (
    EvalCounter,
    ScanParams,
    detect_cascade,
    parse_cascade_xml,
    run_cascade_window,
    scan_cascade,
    _scale_round,
)
from facekit.detections import BoundingBox, Detection
from facekit.hogsvm import (
    HogConfig,
    LinearSvmModel,
    gradients,
    load_svm_model,
    _window_scores,
)
from facekit.imaging import ImageBuffer, integral, rect_sum, to_grayscale
from facekit.kernels import impl as _kernels

DATA = Path(facekit.__file__).parent / "data"
MODELS = DATA / "models"

# coarse scan settings keep the timing criteria inside their wall-clock
# budgets; the trends under test do not depend on scan density
TREND_PARAMS = ScanParams(scale_factor=1.35, min_size=48, window_step=2)


def load_cascade(name: str):
    return parse_cascade_xml((MODELS / name).read_text())


def scenes_by_label():
    return {s.label: s for s in bundled_scenes()}


# ---------------------------------------------------------------------------
# criterion 1: published two-device comparison reproduces the known speedups


class TestPaperComparison:
    def test_speedups_match_published_table(self):
        t0 = time.perf_counter()
        fast = read_mean_table(DATA / "bench" / "paper_sd845.csv")
        slow = read_mean_table(DATA / "bench" / "paper_sd800.csv")
        got = {name: round(s, 2) for name, _, _, s in compare_runs(fast, slow)}
        expected = {
            "mtcnn": 2.13,
            "blazeface": 3.05,
            "lbp": 5.02,
            "haar": 5.64,
            "hog": 3.60,
        }
        assert set(got) == set(expected)
        for name, want in expected.items():
            assert abs(got[name] - want) <= 0.005, name
        assert time.perf_counter() - t0 < 1.0


# ---------------------------------------------------------------------------
# criterion 2: realtime verdicts for the published per-device means


class TestRealtimeVerdicts:
    def test_sd845_budget_40ms(self):
        t0 = time.perf_counter()
        means = read_mean_table(DATA / "bench" / "paper_sd845.csv")
        verdicts = {
            name: realtime_check(summarize([mean]), budget_ms=40.0)
            for name, mean in means.items()
        }
        assert verdicts == {
            "lbp": True,
            "hog": True,
            "haar": False,
            "blazeface": False,
            "mtcnn": False,
        }
        assert time.perf_counter() - t0 < 1.0


# ---------------------------------------------------------------------------
# criterion 3: oracle equivalences


class TestOracles:
    def test_integral_rect_sum_brute_force(self):
        rng = np.random.default_rng(7)
        for w, h in ((1, 1), (5, 3), (17, 9), (32, 32)):
            pixels = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
            img = ImageBuffer.from_array(pixels)
            ii = integral(img)
            arr = pixels.astype(np.int64)
            rects = [(0, 0, w, h)]
            for _ in range(200):
                x = int(rng.integers(0, w))
                y = int(rng.integers(0, h))
                rw = int(rng.integers(1, w - x + 1))
                rh = int(rng.integers(1, h - y + 1))
                rects.append((x, y, rw, rh))
            for x, y, rw, rh in rects:
                want = int(arr[y : y + rh, x : x + rw].sum())
                assert rect_sum(ii, x, y, rw, rh) == want

    @staticmethod
    def _naive_conv(x, k, bias, stride, pad):
        ci, h, w = x.shape
        co, _, kh, kw = k.shape
        xp = np.zeros((ci, h + 2 * pad, w + 2 * pad), np.float64)
        xp[:, pad : pad + h, pad : pad + w] = x
        oh = (h + 2 * pad - kh) // stride + 1
        ow = (w + 2 * pad - kw) // stride + 1
        out = np.zeros((co, oh, ow), np.float64)
        for o in range(co):
            for oy in range(oh):
                for ox in range(ow):
                    acc = float(bias[o])
                    for i in range(ci):
                        for ky in range(kh):
                            for kx in range(kw):
                                acc += (
                                    float(k[o, i, ky, kx])
                                    * xp[i, oy * stride + ky, ox * stride + kx]
                                )
                    out[o, oy, ox] = acc
        return out

    @staticmethod
    def _naive_depthwise(x, k, bias, stride, pad):
        c, h, w = x.shape
        _, kh, kw = k.shape
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad), np.float64)
        xp[:, pad : pad + h, pad : pad + w] = x
        oh = (h + 2 * pad - kh) // stride + 1
        ow = (w + 2 * pad - kw) // stride + 1
        out = np.zeros((c, oh, ow), np.float64)
        for i in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    acc = float(bias[i])
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += (
                                float(k[i, ky, kx])
                                * xp[i, oy * stride + ky, ox * stride + kx]
                            )
                    out[i, oy, ox] = acc
        return out

    @staticmethod
    def _naive_pool(x, kernel, stride, ceil_mode):
        c, h, w = x.shape

        def osize(size):
            if not ceil_mode:
                return (size - kernel) // stride + 1
            n = -(-(size - kernel) // stride) + 1
            if (n - 1) * stride >= size:  # last window must start inside
                n -= 1
            return n

        oh, ow = osize(h), osize(w)
        out = np.empty((c, oh, ow), np.float64)
        for i in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    y0, x0 = oy * stride, ox * stride
                    out[i, oy, ox] = x[i, y0 : min(y0 + kernel, h), x0 : min(x0 + kernel, w)].max()
        return out

    def test_conv_ops_match_naive_loops(self):
        rng = np.random.default_rng(11)
        checked = 0
        for ci in (1, 2, 3):
            for kh in (1, 2, 3):
                for stride in (1, 2):
                    for pad in (0, 1):
                        h = int(rng.integers(kh + 2, 11))
                        w = int(rng.integers(kh + 2, 11))
                        co = int(rng.integers(1, 4))
                        x = rng.standard_normal((ci, h, w)).astype(np.float32)
                        k = rng.standard_normal((co, ci, kh, kh)).astype(np.float32)
                        b = rng.standard_normal(co).astype(np.float32)
                        got = _kernels.conv2d(x, k, b, stride, pad)
                        want = self._naive_conv(x, k, b, stride, pad)
                        assert np.abs(got - want).max() <= 1e-5
                        kd = rng.standard_normal((ci, kh, kh)).astype(np.float32)
                        bd = rng.standard_normal(ci).astype(np.float32)
                        got = _kernels.depthwise_conv2d(x, kd, bd, stride, pad)
                        want = self._naive_depthwise(x, kd, bd, stride, pad)
                        assert np.abs(got - want).max() <= 1e-5
                        checked += 2
        for kernel in (2, 3):
            for stride in (1, 2, 3):
                for ceil_mode in (False, True):
                    for _ in range(3):
                        c = int(rng.integers(1, 4))
                        h = int(rng.integers(kernel + 1, 13))
                        w = int(rng.integers(kernel + 1, 13))
                        x = rng.standard_normal((c, h, w)).astype(np.float32)
                        got = _kernels.max_pool(x, kernel, stride, ceil_mode)
                        want = self._naive_pool(x, kernel, stride, ceil_mode)
                        assert got.shape == want.shape
                        assert np.abs(got - want).max() <= 1e-5
                        checked += 1
        assert checked >= 100

    @pytest.mark.parametrize(
        "model_file",
        ["haarcascade_frontalface_default.xml", "lbpcascade_frontalface.xml"],
    )
    def test_scan_matches_exhaustive_enumeration(self, model_file):
        model = load_cascade(model_file)
        scene = scenes_by_label()["one_large"]
        img = to_grayscale(_prepared_frame(scene, (128, 128)))
        p = ScanParams(scale_factor=1.25, min_size=24, window_step=2)
        fast, _ = scan_cascade(model, img, p)
        fast_set = {(b.x, b.y, b.w, b.h) for b in fast}

        ii = integral(img)
        slow_set = set()
        scale = p.min_size / model.window_w
        if scale < 1.0:
            scale = 1.0
        while True:
            win_w = _scale_round(model.window_w * scale)
            win_h = _scale_round(model.window_h * scale)
            if win_w > img.width or win_h > img.height:
                break
            step = max(1, _scale_round(p.window_step * scale))
            for wy in range(0, img.height - win_h + 1, step):
                for wx in range(0, img.width - win_w + 1, step):
                    if run_cascade_window(model, ii, wx, wy, scale):
                        slow_set.add((float(wx), float(wy), float(win_w), float(win_h)))
            scale *= p.scale_factor
        assert fast_set == slow_set
        assert slow_set  # the scan must accept something, or the check is vacuous

    def test_hog_window_scores_match_dot_product(self):
        model = load_svm_model(MODELS / "face.hsvm")
        cfg = model.config
        rng = np.random.default_rng(3)
        plane = rng.integers(0, 256, size=(96, 112), dtype=np.uint8)
        mag, ori = gradients(plane)
        got = _window_scores(mag, ori, cfg, model, stride=cfg.cell * 2)

        # naive oracle: histogram with loops, then L2-hys blocks and a dot
        bin_width = 180.0 / cfg.bins
        ch, cw = mag.shape[0] // cfg.cell, mag.shape[1] // cfg.cell
        hist = np.zeros((ch, cw, cfg.bins), np.float64)
        for y in range(ch * cfg.cell):
            for x in range(cw * cfg.cell):
                posn = ori[y, x] / bin_width - 0.5
                lo = math.floor(posn)
                frac = posn - lo
                lo %= cfg.bins
                hist[y // cfg.cell, x // cfg.cell, lo] += mag[y, x] * (1.0 - frac)
                hist[y // cfg.cell, x // cfg.cell, (lo + 1) % cfg.bins] += mag[y, x] * frac

        def window_descriptor(cy0, cx0):
            parts = []
            for by in range(cfg.blocks_per_side):
                for bx in range(cfg.blocks_per_side):
                    cy = cy0 + by * cfg.block_stride
                    cx = cx0 + bx * cfg.block_stride
                    v = hist[cy : cy + cfg.block, cx : cx + cfg.block].ravel()
                    n = math.sqrt(float(v @ v) + 1e-6 * 1e-6)
                    v = np.minimum(v / n, cfg.clip)
                    n = math.sqrt(float(v @ v) + 1e-6 * 1e-6)
                    parts.append(v / n)
            return np.concatenate(parts)

        assert got
        for x, y, score in got:
            d = window_descriptor(y // cfg.cell, x // cfg.cell)
            want = float(d @ model.weights + model.bias)
            assert abs(score - want) <= 1e-9

    def test_summarize_matches_direct_formulas(self):
        rng = np.random.default_rng(23)
        for n in (1, 2, 3, 10, 617):
            xs = list(rng.gamma(2.0, 12.0, size=n))
            st = summarize(xs)
            srt = sorted(xs)
            mean = sum(xs) / n
            sd = math.sqrt(sum((v - mean) ** 2 for v in xs) / (n - 1)) if n > 1 else 0.0

            def q(p):
                # linear interpolation between closest ranks (type 7)
                pos = (n - 1) * p
                lo = math.floor(pos)
                hi = min(lo + 1, n - 1)
                frac = pos - lo
                return srt[lo] * (1 - frac) + srt[hi] * frac

            def close(a, b):
                return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))

            assert st.n == n
            assert close(st.mean_ms, mean)
            assert close(st.sd_ms, sd)
            assert close(st.min_ms, srt[0])
            assert close(st.q1_ms, q(0.25))
            assert close(st.median_ms, q(0.5))
            assert close(st.q3_ms, q(0.75))
            assert close(st.max_ms, srt[-1])


# ---------------------------------------------------------------------------
# criterion 4: cascaded cost, empty scene cheaper than a scene with faces


class TestCascadedCost:
    @pytest.mark.parametrize(
        "model_file",
        ["haarcascade_frontalface_default.xml", "lbpcascade_frontalface.xml"],
    )
    def test_empty_scene_is_cheaper(self, model_file):
        model = load_cascade(model_file)
        scenes = scenes_by_label()
        labels = ("empty", "two_small")
        frames = {}
        stage_evals = {}
        elapsed = {label: [] for label in labels}
        for label in labels:
            frames[label] = _prepared_frame(scenes[label], (640, 480))
            counter = EvalCounter()
            detect_cascade(model, frames[label], TREND_PARAMS, counter)  # warmup
            stage_evals[label] = counter.stage_evals
        assert stage_evals["empty"] < stage_evals["two_small"]
        # The wall-clock gap is a few percent, so a load spike on shared
        # hardware can invert one measurement round; allow a bounded number
        # of re-measurements. Scenes are interleaved within a round so clock
        # drift hits both groups equally.
        for attempt in range(3):
            elapsed = {label: [] for label in labels}
            for _ in range(200):
                for label in labels:
                    t0 = time.perf_counter()
                    detect_cascade(model, frames[label], TREND_PARAMS)
                    elapsed[label].append(time.perf_counter() - t0)
            medians = {label: statistics.median(v) for label, v in elapsed.items()}
            if medians["empty"] < medians["two_small"]:
                break
        assert medians["empty"] < medians["two_small"], medians


# ---------------------------------------------------------------------------
# criterion 5: latency grows with resolution


class TestResolutionMonotonicity:
    RESOLUTIONS = ((128, 128), (256, 256), (480, 360), (640, 480))

    def _medians(self, detect):
        scene = scenes_by_label()["one_large"]
        meds = []
        for res in self.RESOLUTIONS:
            frame = _prepared_frame(scene, res)
            detect(frame)  # warmup
            elapsed = []
            for _ in range(9):
                t0 = time.perf_counter()
                detect(frame)
                elapsed.append(time.perf_counter() - t0)
            meds.append(statistics.median(elapsed))
        return meds

    @pytest.mark.parametrize(
        "model_file",
        ["haarcascade_frontalface_default.xml", "lbpcascade_frontalface.xml"],
    )
    def test_cascades(self, model_file):
        model = load_cascade(model_file)
        meds = self._medians(lambda f: detect_cascade(model, f, TREND_PARAMS))
        assert all(a < b for a, b in zip(meds, meds[1:])), meds

    def test_hog(self):
        model = load_svm_model(MODELS / "face.hsvm")
        meds = self._medians(lambda f: facekit.hogsvm.detect_hog(model, f))
        assert all(a < b for a, b in zip(meds, meds[1:])), meds


# ---------------------------------------------------------------------------
# criterion 6: quality scoring


class TestScoring:
    @staticmethod
    def _results(detect, resolution):
        out = {}
        for scene in bundled_scenes():
            out[scene.label] = detect(scene, resolution)
        return out

    def test_null_detector_scores_one(self):
        results = self._results(lambda scene, res: [], (256, 256))
        card = score_algorithm("null", (256, 256), results, bundled_scenes())
        assert card.points == 1
        assert card.no_false_positives_empty
        assert not card.finds_one_large and not card.finds_two_small

    def test_ground_truth_oracle_scores_three(self):
        def oracle(scene, res):
            return [
                Detection(b, 1.0) for b in _scaled_truth(scene, res)
            ]

        results = self._results(oracle, (256, 256))
        card = score_algorithm("oracle", (256, 256), results, bundled_scenes())
        assert card.points == 3

    def test_haar_resolution_dependence(self):
        model = load_cascade("haarcascade_frontalface_default.xml")

        def run(scene, res):
            return detect_cascade(model, _prepared_frame(scene, res))

        for size in (32, 64):
            card = score_algorithm(
                "haar", (size, size), self._results(run, (size, size)), bundled_scenes()
            )
            assert not card.finds_one_large, size
            assert not card.finds_two_small, size
        card = score_algorithm(
            "haar", (256, 256), self._results(run, (256, 256)), bundled_scenes()
        )
        assert card.finds_one_large


# ---------------------------------------------------------------------------
# criterion 7: determinism across repeated runs


class TestDeterminism:
    def test_two_runs_identical_apart_from_elapsed(self, tmp_path):
        cfg = BenchConfig(
            algorithms=("haar", "lbp"),
            resolution=(128, 128),
            iterations=3,
            warmup_iterations=1,
        )
        haar = load_cascade("haarcascade_frontalface_default.xml")
        lbp = load_cascade("lbpcascade_frontalface.xml")
        detectors = {
            "haar": lambda f: detect_cascade(haar, f),
            "lbp": lambda f: detect_cascade(lbp, f),
        }
        scenes = bundled_scenes()

        def one_run(tag):
            samples = run_benchmark(cfg, scenes, detectors)
            detections = {}
            for scene in scenes:
                frame = _prepared_frame(scene, cfg.resolution)
                for name, det in detectors.items():
                    detections[(name, scene.id)] = [
                        (d.box.x, d.box.y, d.box.w, d.box.h, d.score)
                        for d in det(frame)
                    ]
            path = tmp_path / f"{tag}.csv"
            emit_csv(samples, path)
            return detections, path

        det_a, csv_a = one_run("a")
        det_b, csv_b = one_run("b")
        assert det_a == det_b

        def masked(path):
            rows = list(csv.reader(path.open()))
            i = rows[0].index("elapsed_ms")
            return [[v for j, v in enumerate(r) if j != i] for r in rows]

        assert masked(csv_a) == masked(csv_b)


# ---------------------------------------------------------------------------
# criterion 9 (observation): rear-camera model latency across scene content


class TestRearSceneObservation:
    def test_record_per_scene_medians(self, capsys):
        import facekit.blazeface as bf
        from facekit.nnengine import read_weights

        weights = read_weights(MODELS / "blazeface_rear.fdnw")
        meds = {}
        for scene in bundled_scenes():
            frame = _prepared_frame(scene, (bf.REAR.input_size,) * 2)
            bf.detect_blazeface(frame, bf.REAR, weights)  # warmup
            elapsed = []
            for _ in range(7):
                t0 = time.perf_counter()
                bf.detect_blazeface(frame, bf.REAR, weights)
                elapsed.append((time.perf_counter() - t0) * 1000.0)
            meds[scene.label] = statistics.median(elapsed)
        order = sorted(meds, key=meds.get)
        # observation only: a fixed-input network does roughly constant work,
        # so no ordering is enforced; the medians are reported for the record
        print(f"rear per-scene medians (ms): {meds}; ordering: {order}")
        assert all(v > 0 for v in meds.values())
