"""Command-line surface tests: pipeline plumbing, exit codes, formats."""

import json
import os

import numpy as np
import pytest
from PIL import Image

from occlusia.cli import ARROW_STEP, _write_overlay, run
from occlusia.inference import ScoredBoundaryMap
from occlusia.orientmap import load_map
from occlusia.synth import SceneSpec, ShapeSpec, render, save_scene


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small synth -> train -> infer run shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run(["synth", "--out", str(data), "--n", "3", "--seed", "5",
                "--width", "48", "--height", "48"]) == 0
    model = root / "model.docm"
    assert run(["train", "--data", str(data), "--out", str(model),
                "--epochs", "2", "--lr", "1e-4", "--seed", "5"]) == 0
    pred = root / "pred"
    assert run(["infer", "--model", str(model),
                "--image", str(data / "scene_0000.png"),
                "--out", str(pred)]) == 0
    return {"root": root, "data": data, "model": model, "pred": pred}


def no_temp_leftovers(directory):
    return not [f for f in os.listdir(directory) if ".tmp" in f]


class TestSynth:
    def test_writes_scene_artifacts_and_manifest(self, pipeline):
        data = pipeline["data"]
        for ext in (".png", ".ids.png", ".classes.json", ".edge.fmap",
                    ".orient.fmap", ".fragments.json", ".segments.json",
                    ".matrix.json"):
            assert (data / f"scene_0001{ext}").exists()
        manifest = json.loads((data / "dataset.json").read_text())
        assert manifest["count"] == 3
        assert manifest["scenes"] == ["scene_0000", "scene_0001", "scene_0002"]
        assert no_temp_leftovers(data)

    def test_same_seed_byte_identical(self, pipeline, tmp_path):
        other = tmp_path / "again"
        assert run(["synth", "--out", str(other), "--n", "3", "--seed", "5",
                    "--width", "48", "--height", "48"]) == 0
        for name in sorted(os.listdir(pipeline["data"])):
            a = (pipeline["data"] / name).read_bytes()
            b = (other / name).read_bytes()
            assert a == b, name


class TestTrain:
    def test_writes_model_and_loss_csv(self, pipeline):
        assert pipeline["model"].read_bytes()[:4] == b"DOCM"
        rows = (pipeline["root"] / "model.docm.loss.csv").read_text().splitlines()
        assert rows[0] == "epoch,mean_loss"
        assert len(rows) == 3
        assert rows[1].startswith("1,") and rows[2].startswith("2,")

    def test_config_file_sets_epochs_and_cli_wins(self, pipeline, tmp_path):
        cfg = tmp_path / "train.json"
        cfg.write_text(json.dumps({"epochs": 3, "lr": 1e-4}))
        out = tmp_path / "m3.docm"
        assert run(["train", "--data", str(pipeline["data"]), "--out", str(out),
                    "--config", str(cfg)]) == 0
        assert len((tmp_path / "m3.docm.loss.csv").read_text().splitlines()) == 4
        out1 = tmp_path / "m1.docm"
        assert run(["train", "--data", str(pipeline["data"]), "--out", str(out1),
                    "--config", str(cfg), "--epochs", "1"]) == 0
        assert len((tmp_path / "m1.docm.loss.csv").read_text().splitlines()) == 2

    def test_loss_variant_flag(self, pipeline, tmp_path):
        out = tmp_path / "sym.docm"
        assert run(["train", "--data", str(pipeline["data"]), "--out", str(out),
                    "--epochs", "1", "--lr", "1e-4",
                    "--loss-variant", "symmetric"]) == 0

    def test_unknown_config_key_exits_2(self, pipeline, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"learning_rate": 0.1}))
        out = tmp_path / "never.docm"
        assert run(["train", "--data", str(pipeline["data"]), "--out", str(out),
                    "--config", str(cfg)]) == 2
        assert not out.exists()

    def test_nonpositive_epochs_exits_2_without_writing(self, pipeline, tmp_path):
        out = tmp_path / "never.docm"
        for flags in (["--epochs", "0"], ["--lr", "-1"], ["--batch", "0"]):
            assert run(["train", "--data", str(pipeline["data"]),
                        "--out", str(out)] + flags) == 2
            assert not out.exists()

    def test_missing_data_dir_exits_2(self, tmp_path):
        assert run(["train", "--data", str(tmp_path / "nope"),
                    "--out", str(tmp_path / "m.docm")]) == 2


class TestInfer:
    def test_writes_four_fmaps_and_overlay(self, pipeline):
        pred = pipeline["pred"]
        for ext in (".edge_conf.fmap", ".orient.fmap", ".orient_conf.fmap",
                    ".total.fmap"):
            assert (pred.parent / (pred.name + ext)).exists()
        overlay = pred.parent / "pred.overlay.png"
        assert overlay.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert Image.open(overlay).size == (48, 48)

    def test_rerun_byte_identical(self, pipeline, tmp_path):
        out = tmp_path / "pred2"
        for _ in range(2):
            assert run(["infer", "--model", str(pipeline["model"]),
                        "--image", str(pipeline["data"] / "scene_0000.png"),
                        "--out", str(out)]) == 0
        for ext in (".edge_conf.fmap", ".orient.fmap", ".total.fmap",
                    ".overlay.png"):
            a = (tmp_path / ("pred2" + ext)).read_bytes()
            b = (pipeline["pred"].parent / ("pred" + ext)).read_bytes()
            assert a == b, ext

    def test_missing_model_exits_2(self, pipeline, tmp_path):
        assert run(["infer", "--model", str(tmp_path / "nope.docm"),
                    "--image", str(pipeline["data"] / "scene_0000.png"),
                    "--out", str(tmp_path / "x")]) == 2

    def test_bad_scales_exit_2_without_writing(self, pipeline, tmp_path):
        out = tmp_path / "y"
        for scales in ("abc", "0", "1.0,-2"):
            assert run(["infer", "--model", str(pipeline["model"]),
                        "--image", str(pipeline["data"] / "scene_0000.png"),
                        "--out", str(out), "--scales", scales]) == 2
        assert not (tmp_path / "y.edge_conf.fmap").exists()


class TestOverlay:
    def test_edges_tinted_and_arrows_decimated(self, tmp_path):
        h = w = 48
        conf = np.zeros((h, w), dtype=np.float32)
        orient = np.full((h, w), np.nan, dtype=np.float32)
        cols = np.arange(8, 28)
        conf[10, cols] = 0.9
        orient[10, cols] = np.pi / 2  # direction step points up the rows
        scored = ScoredBoundaryMap(edge_conf=conf, orient=orient,
                                   orient_conf=(conf > 0).astype(np.float32),
                                   total=2.0 * (conf > 0).astype(np.float32))
        path = tmp_path / "ov.png"
        _write_overlay(str(path), np.zeros((h, w)), scored)
        px = np.asarray(Image.open(path))
        # every ARROW_STEP-th support pixel in scan order carries an arrow
        arrow_cols = cols[::ARROW_STEP]
        for c in arrow_cols:
            assert tuple(px[8, c]) == (255, 214, 64)
            assert tuple(px[6, c]) == (96, 255, 128)
        # a non-arrow boundary pixel keeps the score tint
        plain = [c for c in cols if c not in set(arrow_cols)][0]
        r, g, b = px[10, plain]
        assert r > 200 and g < 60 and b < 60
        assert tuple(px[30, 30]) == (0, 0, 0)


class TestEval:
    def test_prediction_equals_ground_truth_is_all_ones(self, pipeline, tmp_path):
        gt = str(pipeline["data"] / "scene_0000")
        out = tmp_path / "perfect.csv"
        assert run(["eval", "--pred", gt, "--gt", gt, "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "threshold,recall,accuracy"
        assert len(rows) == 34
        for row in rows[1:]:
            t, r, a = row.split(",")
            assert r == "1.000000" and a == "1.000000"

    def test_batch_mode_writes_33_rows(self, pipeline, tmp_path):
        out = tmp_path / "curve.csv"
        assert run(["eval", "--data", str(pipeline["data"]),
                    "--model", str(pipeline["model"]), "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 34
        assert rows[1].startswith("0.000000,")
        assert rows[-1].startswith("2.000000,")

    def test_threads_env_does_not_change_output(self, pipeline, tmp_path,
                                                monkeypatch):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        args = ["eval", "--data", str(pipeline["data"]),
                "--model", str(pipeline["model"])]
        assert run(args + ["--out", str(a)]) == 0
        monkeypatch.setenv("OCCLUSIA_THREADS", "3")
        assert run(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_threads_env_exits_2(self, pipeline, tmp_path, monkeypatch):
        monkeypatch.setenv("OCCLUSIA_THREADS", "many")
        assert run(["eval", "--data", str(pipeline["data"]),
                    "--model", str(pipeline["model"]),
                    "--out", str(tmp_path / "x.csv")]) == 2

    def test_pr_csv_written_in_pair_mode(self, pipeline, tmp_path):
        gt = str(pipeline["data"] / "scene_0000")
        out = tmp_path / "aor.csv"
        pr = tmp_path / "pr.csv"
        assert run(["eval", "--pred", gt, "--gt", gt, "--out", str(out),
                    "--pr-out", str(pr)]) == 0
        rows = pr.read_text().splitlines()
        assert rows[0] == "threshold,precision,recall,f1"
        assert len(rows) == 34

    def test_pr_out_rejected_in_batch_mode(self, pipeline, tmp_path):
        out = tmp_path / "never.csv"
        assert run(["eval", "--data", str(pipeline["data"]),
                    "--model", str(pipeline["model"]), "--out", str(out),
                    "--pr-out", str(tmp_path / "pr.csv")]) == 2
        assert not out.exists()

    def test_needs_an_input_combination(self, tmp_path):
        assert run(["eval", "--out", str(tmp_path / "x.csv")]) == 2


class TestMatch:
    def test_reproduces_generator_ground_truth(self, pipeline, tmp_path):
        data = pipeline["data"]
        out = tmp_path / "rebuilt"
        assert run(["match", "--ids", str(data / "scene_0000.ids.png"),
                    "--classes", str(data / "scene_0000.classes.json"),
                    "--segments", str(data / "scene_0000.segments.json"),
                    "--out", str(out)]) == 0
        rebuilt = load_map(str(out))
        gt = load_map(str(data / "scene_0000"))
        assert rebuilt.edge.tobytes() == gt.edge.tobytes()
        both = (rebuilt.edge > 0) & np.isfinite(rebuilt.orient) & np.isfinite(gt.orient)
        d = np.abs(np.angle(np.exp(1j * (rebuilt.orient[both] - gt.orient[both]))))
        assert both.any() and float(d.max()) < np.pi / 2
        report = json.loads((tmp_path / "rebuilt.report.json").read_text())
        assert set(report) == {"warnings", "unlabelled"}

    def test_missing_segments_file_exits_2(self, pipeline, tmp_path):
        data = pipeline["data"]
        assert run(["match", "--ids", str(data / "scene_0000.ids.png"),
                    "--classes", str(data / "scene_0000.classes.json"),
                    "--segments", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path / "x")]) == 2


class TestStats:
    def test_two_disk_scene_matrix_csv(self, tmp_path):
        spec = SceneSpec(
            width=64, height=64,
            shapes=[
                ShapeSpec("disk", {"cx": 26.0, "cy": 30.0, "r": 14.0}, "person"),
                ShapeSpec("disk", {"cx": 41.0, "cy": 33.0, "r": 15.0}, "dog"),
            ],
            seed=5,
        )
        save_scene(str(tmp_path / "s"), render(spec))
        out = tmp_path / "stats.csv"
        assert run(["stats", str(tmp_path / "s.matrix.json"),
                    "--out", str(out)]) == 0
        assert out.read_text() == (
            "owner,dog,person,bg\n"
            "dog,0,0,1\n"
            "person,1,0,1\n"
            "bg,0,0,0\n"
        )

    def test_directory_input_merges_all_matrices(self, pipeline, tmp_path):
        out = tmp_path / "merged.csv"
        assert run(["stats", str(pipeline["data"]), "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0].startswith("owner,")
        assert rows[0].split(",")[-1] == "bg"

    def test_no_matrix_files_exits_2(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run(["stats", str(empty), "--out", str(tmp_path / "x.csv")]) == 2


class TestAorPlot:
    def test_writes_deterministic_svg(self, pipeline, tmp_path):
        gt = str(pipeline["data"] / "scene_0000")
        csv = tmp_path / "c.csv"
        assert run(["eval", "--pred", gt, "--gt", gt, "--out", str(csv)]) == 0
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        for out in (a, b):
            assert run(["aor-plot", "--csv", str(csv), "--labels", "run",
                        "--out", str(out)]) == 0
        text = a.read_text()
        assert "boundary recall" in text and "occlusion accuracy" in text
        assert ">run<" in text
        assert a.read_bytes() == b.read_bytes()

    def test_missing_csv_exits_2(self, tmp_path):
        assert run(["aor-plot", "--csv", str(tmp_path / "nope.csv"),
                    "--out", str(tmp_path / "x.svg")]) == 2


class TestHelp:
    @pytest.mark.parametrize("argv", [["--help"], ["synth", "--help"],
                                      ["eval", "--help"]])
    def test_help_exits_zero(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            run(argv)
        assert exc.value.code == 0
        assert "occlusia" in capsys.readouterr().out
