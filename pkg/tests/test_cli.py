"""CLI contract tests: exit codes, error prefix, file outputs."""

import csv
import json
from pathlib import Path

import pytest

from facekit import cli
from facekit.detections import BoundingBox, Detection

SCENES = Path(cli.__file__).parent / "data" / "scenes"
BENCH = Path(cli.__file__).parent / "data" / "bench"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestDetect:
    def test_zero_faces_empty_json(self, capsys):
        code, out, err = run(
            capsys, "detect", "--algo", "haar",
            "--input", str(SCENES / "empty.ppm"), "--size", "128x128",
        )
        assert code == 0
        assert out.splitlines()[0] == "[]"
        assert "0 detection(s)" in err

    def test_one_large_found(self, capsys, tmp_path):
        dst = tmp_path / "dets.json"
        code, out, err = run(
            capsys, "detect", "--algo", "haar",
            "--input", str(SCENES / "one_large.ppm"), "--size", "256x256",
            "--json", str(dst),
        )
        assert code == 0
        dets = json.loads(dst.read_text())
        assert len(dets) == 1
        assert dets[0]["w"] > 30

    def test_missing_model_exit_3(self, capsys, tmp_path):
        code, out, err = run(
            capsys, "detect", "--algo", "haar",
            "--input", str(SCENES / "empty.ppm"), "--models", str(tmp_path),
        )
        assert code == 3
        assert err.startswith("error:")

    def test_missing_image_exit_4(self, capsys):
        code, out, err = run(
            capsys, "detect", "--algo", "haar", "--input", "/no/such.ppm"
        )
        assert code == 4
        assert err.startswith("error:")

    def test_bad_algo_exit_2(self, capsys):
        code, out, err = run(capsys, "detect", "--algo", "nope", "--input", "x")
        assert code == 2
        assert err.splitlines()[-1].startswith("error:")

    def test_bad_size_exit_2(self, capsys):
        code, out, err = run(
            capsys, "detect", "--algo", "haar",
            "--input", str(SCENES / "empty.ppm"), "--size", "wide",
        )
        assert code == 2
        assert err.startswith("error:")

    def test_fixed_size_override_warning(self, capsys, monkeypatch):
        def fake_loader(algo, models_dir):
            def stub(frame):
                assert frame.width == frame.height == 512  # resize skipped
                return []

            stub.native_size = 128
            return stub

        monkeypatch.setattr(cli, "load_detector", fake_loader)
        code, out, err = run(
            capsys, "detect", "--algo", "blazeface-front",
            "--input", str(SCENES / "one_large.ppm"), "--size", "64x64",
        )
        assert code == 0
        assert "warning:" in err and "128x128" in err


class TestBench:
    def test_iterations_config(self, capsys, tmp_path):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({
            "algorithms": ["lbp"],
            "resolution": "128x128",
            "iterations": 2,
            "warmup_iterations": 0,
        }))
        code, out, err = run(
            capsys, "bench", "--config", str(cfg), "--out-dir", str(tmp_path)
        )
        assert code == 0
        with open(tmp_path / "samples.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6  # 3 scenes x 2 iterations
        assert {r["scene_id"] for r in rows} == {"empty", "one_large", "two_small"}
        assert (tmp_path / "stats.csv").exists()
        assert "lbp 128x128" in out

    def test_bad_config_exit_2(self, capsys, tmp_path):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({"algorithms": ["lbp"], "resolution": "64x64"}))
        code, out, err = run(capsys, "bench", "--config", str(cfg))
        assert code == 2  # neither iterations nor duration_ms
        assert err.startswith("error:")

    def test_missing_config_exit_2(self, capsys):
        code, out, err = run(capsys, "bench", "--config", "/no/cfg.json")
        assert code == 2


class TestSweep:
    def test_real_sweep(self, capsys, tmp_path):
        dst = tmp_path / "sweep.csv"
        code, out, err = run(
            capsys, "sweep", "--algo", "lbp", "--resolutions", "64x64,96x96",
            "--iterations", "1", "--out", str(dst),
        )
        assert code == 0
        with open(dst, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["resolution"] for r in rows] == ["64x64", "96x96"]

    def test_fixed_size_skips_with_notice(self, capsys, monkeypatch, tmp_path):
        def fake_loader(algo, models_dir):
            def stub(frame):
                return []

            stub.native_size = 128
            return stub

        monkeypatch.setattr(cli, "load_detector", fake_loader)
        dst = tmp_path / "sweep.csv"
        code, out, err = run(
            capsys, "sweep", "--algo", "blazeface-front",
            "--resolutions", "64x64,128x128", "--iterations", "1",
            "--out", str(dst),
        )
        assert code == 0
        assert "notice:" in err and "64x64" in err
        with open(dst, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["resolution"] for r in rows] == ["128x128"]

    def test_all_skipped_exit_5(self, capsys, monkeypatch, tmp_path):
        def fake_loader(algo, models_dir):
            def stub(frame):
                return []

            stub.native_size = 128
            return stub

        monkeypatch.setattr(cli, "load_detector", fake_loader)
        code, out, err = run(
            capsys, "sweep", "--algo", "blazeface-front",
            "--resolutions", "64x64", "--out", str(tmp_path / "s.csv"),
        )
        assert code == 5
        assert err.splitlines()[-1].startswith("error:")


class TestScoreCompareInfo:
    def test_score_haar_full_marks(self, capsys, tmp_path):
        dst = tmp_path / "scores.csv"
        code, out, err = run(
            capsys, "score", "--algo", "haar", "--size", "256x256",
            "--out", str(dst),
        )
        assert code == 0
        with open(dst, newline="") as fh:
            (row,) = list(csv.DictReader(fh))
        assert row["points"] == "3"

    def test_score_haar_tiny_resolution(self, capsys, tmp_path):
        code, out, err = run(
            capsys, "score", "--algo", "haar", "--size", "32x32",
            "--out", str(tmp_path / "scores.csv"),
        )
        assert code == 0
        assert "one_large=False" in out and "two_small=False" in out

    def test_compare_matches_published_column(self, capsys, tmp_path):
        dst = tmp_path / "speedup.csv"
        code, out, err = run(
            capsys, "compare", str(BENCH / "paper_sd845.csv"),
            str(BENCH / "paper_sd800.csv"), "--out", str(dst),
        )
        assert code == 0
        assert "haar: 5.64x" in out and "mtcnn: 2.13x" in out
        with open(dst, newline="") as fh:
            rows = {r["algorithm"]: float(r["speedup"]) for r in csv.DictReader(fh)}
        assert rows["lbp"] == pytest.approx(72.8 / 14.5)

    def test_compare_missing_file_exit_2(self, capsys, tmp_path):
        code, out, err = run(
            capsys, "compare", "/no/a.csv", str(BENCH / "paper_sd800.csv"),
            "--out", str(tmp_path / "s.csv"),
        )
        assert code == 2

    def test_info_lists_cascades(self, capsys):
        code, out, err = run(capsys, "info")
        assert code == 0
        assert "haar cascade, 25 stages" in out
        assert "mb_lbp cascade, 20 stages" in out
        assert "1764-dim descriptor" in out

    def test_models_dir_env(self, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv("FD_MODELS_DIR", str(tmp_path))
        code, out, err = run(
            capsys, "detect", "--algo", "haar",
            "--input", str(SCENES / "empty.ppm"),
        )
        assert code == 3  # env dir takes precedence and lacks the model
