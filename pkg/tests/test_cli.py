"""End-to-end CLI tests running main() in process."""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from yofflenet.cli import EXIT_CONFIG, EXIT_DATA, EXIT_FORMAT, main

GOLDEN = Path(__file__).parent / "data" / "golden_eval"


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAnalyze:
    def test_text_report_and_ratio(self, capsys, tmp_path):
        code, out, _ = run(capsys, "analyze", "--variant", "s+p",
                           "--out", str(tmp_path))
        assert code == 0
        assert "1,919,764" in out
        ratio = float(out.split("compression")[1].split("x")[0])
        assert ratio >= 4.0
        assert (tmp_path / "analyze_spp.csv").exists()
        assert (tmp_path / "analyze_spp.json").exists()

    def test_s_larger_than_sp(self, capsys):
        _, out_sp, _ = run(capsys, "analyze", "--variant", "s+p", "--format", "json")
        _, out_s, _ = run(capsys, "analyze", "--variant", "s", "--format", "json")
        sp = json.loads(out_sp)["totals"]["params"]
        s = json.loads(out_s)["totals"]["params"]
        assert s > sp

    def test_csv_deterministic(self, capsys):
        _, a, _ = run(capsys, "analyze", "--variant", "base-csp", "--format", "csv")
        _, b, _ = run(capsys, "analyze", "--variant", "base-csp", "--format", "csv")
        assert a == b

    def test_invalid_variant_lists_choices(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["analyze", "--variant", "nano"])
        assert exc.value.code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "s+p" in err and "base-csp" in err

    def test_bad_input_size(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["analyze", "--variant", "s+p", "--input-size", "100"])
        assert exc.value.code == EXIT_CONFIG


@pytest.fixture(scope="module")
def weights_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "sp64.yofw"
    code = main(["init-weights", "--variant", "s+p", "--input-size", "64",
                 "--seed", "5", "--out", str(path)])
    assert code == 0
    return path


@pytest.fixture()
def blank_image(tmp_path):
    path = tmp_path / "blank.png"
    Image.fromarray(np.full((48, 64, 3), 128, dtype=np.uint8)).save(path)
    return path


class TestInfer:
    def test_blank_image_high_conf_is_empty(self, capsys, tmp_path, weights_file,
                                             blank_image):
        out_dir = tmp_path / "dets"
        code, _, _ = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                         "--weights", str(weights_file), "--conf", "0.999",
                         "--out", str(out_dir), str(blank_image))
        assert code == 0
        assert (out_dir / "blank.txt").read_text() == ""

    def test_line_count_matches_detections(self, capsys, tmp_path, weights_file,
                                           blank_image):
        out_dir = tmp_path / "dets"
        code, out, _ = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                           "--weights", str(weights_file), "--conf", "0.0",
                           "--out", str(out_dir), str(blank_image))
        assert code == 0
        reported = int(out.split("blank.png:")[1].split("detections")[0])
        lines = [l for l in (out_dir / "blank.txt").read_text().splitlines() if l]
        assert len(lines) == reported > 0
        for line in lines:
            parts = line.split()
            assert len(parts) == 6
            float(parts[1])

    def test_rerun_is_byte_identical(self, capsys, tmp_path, weights_file, blank_image):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out_dir in (out_a, out_b):
            code, _, _ = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                             "--weights", str(weights_file), "--conf", "0.1",
                             "--out", str(out_dir), str(blank_image))
            assert code == 0
        assert (out_a / "blank.txt").read_bytes() == (out_b / "blank.txt").read_bytes()

    def test_unreadable_image_warns_and_fails_at_end(self, capsys, tmp_path,
                                                     weights_file, blank_image):
        bogus = tmp_path / "broken.png"
        bogus.write_bytes(b"not an image")
        out_dir = tmp_path / "dets"
        code, _, _ = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                         "--weights", str(weights_file), "--out", str(out_dir),
                         str(blank_image), str(bogus))
        assert code == EXIT_DATA
        assert (out_dir / "blank.txt").exists()
        assert not (out_dir / "broken.txt").exists()

    def test_draw_writes_annotated_copy(self, capsys, tmp_path, weights_file,
                                        blank_image):
        out_dir = tmp_path / "dets"
        code, _, _ = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                         "--weights", str(weights_file), "--conf", "0.0", "--draw",
                         "--out", str(out_dir), str(blank_image))
        assert code == 0
        assert (out_dir / "blank.png").exists()

    def test_threaded_matches_sequential(self, capsys, tmp_path, weights_file):
        rng = np.random.default_rng(3)
        images = []
        for i in range(3):
            path = tmp_path / f"img{i}.png"
            Image.fromarray(rng.integers(0, 255, (40, 56, 3), dtype=np.uint8)).save(path)
            images.append(str(path))
        seq, par = tmp_path / "seq", tmp_path / "par"
        for out_dir, threads in ((seq, "1"), (par, "2")):
            code, _, _ = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                             "--weights", str(weights_file), "--conf", "0.1",
                             "--threads", threads, "--out", str(out_dir), *images)
            assert code == 0
        for i in range(3):
            assert (seq / f"img{i}.txt").read_bytes() == (par / f"img{i}.txt").read_bytes()

    def test_boxes_mapped_into_original_image(self, capsys, tmp_path, weights_file):
        # detections come back in source-image pixels, clamped to its bounds
        path = tmp_path / "wide.png"
        Image.fromarray(np.full((30, 90, 3), 200, dtype=np.uint8)).save(path)
        out_dir = tmp_path / "dets"
        code, _, _ = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                         "--weights", str(weights_file), "--conf", "0.0",
                         "--out", str(out_dir), str(path))
        assert code == 0
        lines = [l for l in (out_dir / "wide.txt").read_text().splitlines() if l]
        assert lines
        for line in lines:
            _, _, l, t, r, b = line.split()
            assert 0 <= float(l) <= 90 and 0 <= float(r) <= 90
            assert 0 <= float(t) <= 30 and 0 <= float(b) <= 30

    def test_corrupt_weights_is_format_error(self, capsys, tmp_path, blank_image):
        bad = tmp_path / "bad.yofw"
        bad.write_bytes(b"JUNKJUNKJUNK")
        code, _, err = run(capsys, "infer", "--variant", "s+p", "--input-size", "64",
                           "--weights", str(bad), "--out", str(tmp_path / "o"),
                           str(blank_image))
        assert code == EXIT_FORMAT
        assert "error" in err


class TestBench:
    def test_report_fields_and_order_statistics(self, capsys):
        code, out, _ = run(capsys, "bench", "--variant", "s+p", "--input-size", "32",
                           "--iterations", "100", "--warmup", "2", "--format", "json")
        assert code == 0
        report = json.loads(out)
        assert report["warmup"] == 2
        assert report["iterations"] == 100
        assert report["p95_ms"] >= report["median_ms"]
        assert report["fps"] > 0
        assert "platform" in report["host"]

    def test_warmup_flagged_in_report(self, capsys):
        _, out0, _ = run(capsys, "bench", "--variant", "s+p", "--input-size", "32",
                         "--iterations", "2", "--warmup", "0")
        _, out10, _ = run(capsys, "bench", "--variant", "s+p", "--input-size", "32",
                          "--iterations", "2", "--warmup", "10")
        assert "0 warmup" in out0
        assert "10 warmup" in out10

    def test_fps_ordering_sp_vs_base(self, capsys):
        # directional claim only; absolute numbers are host-specific
        _, sp, _ = run(capsys, "bench", "--variant", "s+p", "--input-size", "416",
                       "--iterations", "2", "--warmup", "1", "--format", "json")
        _, base, _ = run(capsys, "bench", "--variant", "base-csp", "--input-size",
                         "416", "--iterations", "2", "--warmup", "1",
                         "--format", "json")
        assert json.loads(sp)["fps"] > json.loads(base)["fps"]


class TestEval:
    def test_golden_fixture(self, capsys, tmp_path):
        code, out, _ = run(capsys, "eval", "--detections", str(GOLDEN / "detections"),
                           "--labels", str(GOLDEN / "labels"), "--format", "json",
                           "--out", str(tmp_path))
        assert code == 0
        report = json.loads(out)
        assert report["mAP"] == pytest.approx(8 / 9, abs=1e-9)
        assert report["classes"]["Pedestrian"]["ap"] == pytest.approx(2 / 3, abs=1e-9)
        assert (tmp_path / "eval.json").exists()
        assert (tmp_path / "eval.csv").exists()

    def test_perfect_detections_give_map_one(self, capsys, tmp_path):
        labels = tmp_path / "labels"
        dets = tmp_path / "dets"
        labels.mkdir()
        dets.mkdir()
        rng = np.random.default_rng(0)
        for i in range(4):
            lines_gt, lines_det = [], []
            for cls in ("Car", "Pedestrian", "Cyclist"):
                l, t = rng.uniform(0, 200, 2)
                w, h = rng.uniform(20, 80, 2)
                lines_gt.append(f"{cls} 0.0 0 0.0 {l:.2f} {t:.2f} {l+w:.2f} {t+h:.2f} "
                                "0 0 0 0 0 0 0")
                lines_det.append(f"{cls} 0.9 {l:.2f} {t:.2f} {l+w:.2f} {t+h:.2f}")
            (labels / f"{i:06d}.txt").write_text("\n".join(lines_gt) + "\n")
            (dets / f"{i:06d}.txt").write_text("\n".join(lines_det) + "\n")
        code, out, _ = run(capsys, "eval", "--detections", str(dets),
                           "--labels", str(labels), "--format", "json")
        assert code == 0
        assert json.loads(out)["mAP"] == pytest.approx(1.0)

    def test_empty_detections_give_zero(self, capsys, tmp_path):
        labels = tmp_path / "labels"
        dets = tmp_path / "dets"
        labels.mkdir()
        dets.mkdir()
        (labels / "x.txt").write_text(
            "Car 0.0 0 0.0 10 10 50 50 0 0 0 0 0 0 0\n"
            "Pedestrian 0.0 0 0.0 60 10 80 60 0 0 0 0 0 0 0\n"
            "Cyclist 0.0 0 0.0 90 10 130 60 0 0 0 0 0 0 0\n")
        (dets / "x.txt").write_text("")
        code, out, _ = run(capsys, "eval", "--detections", str(dets),
                           "--labels", str(labels), "--format", "json")
        assert code == 0
        report = json.loads(out)
        assert report["mAP"] == pytest.approx(0.0)
        assert report["classes"]["Car"]["num_gt"] == 1
        assert all(c["num_det"] == 0 for c in report["classes"].values())

    def test_id_mismatch_is_data_error(self, capsys, tmp_path):
        labels = tmp_path / "labels"
        dets = tmp_path / "dets"
        labels.mkdir()
        dets.mkdir()
        (labels / "a.txt").write_text("Car 0.0 0 0.0 10 10 50 50 0 0 0 0 0 0 0\n")
        (dets / "b.txt").write_text("")
        code, _, err = run(capsys, "eval", "--detections", str(dets),
                           "--labels", str(labels))
        assert code == EXIT_DATA
        assert "a" in err and "b" in err


class TestAnchorsCmd:
    def _write_labels(self, path, sizes):
        path.mkdir()
        for i, (w, h) in enumerate(sizes):
            (path / f"{i:06d}.txt").write_text(
                f"Car 0.0 0 0.0 100.0 100.0 {100 + w:.1f} {100 + h:.1f} "
                "0 0 0 0 0 0 0\n")

    def test_bimodal_recovery(self, capsys, tmp_path):
        labels = tmp_path / "labels"
        self._write_labels(labels, [(10, 10)] * 20 + [(50, 50)] * 20)
        out_file = tmp_path / "anchors.txt"
        code, out, _ = run(capsys, "anchors", "--labels", str(labels), "--k", "2",
                           "--seed", "0", "--out", str(out_file))
        assert code == 0
        pairs = [tuple(float(v) for v in line.split())
                 for line in out_file.read_text().splitlines()]
        assert pairs == [(10.0, 10.0), (50.0, 50.0)]
        assert "mean best IoU 1.0000" in out

    def test_deterministic(self, capsys, tmp_path):
        labels = tmp_path / "labels"
        rng = np.random.default_rng(2)
        self._write_labels(labels, rng.uniform(10, 120, (30, 2)).tolist())
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for out_file in (a, b):
            code, _, _ = run(capsys, "anchors", "--labels", str(labels), "--k", "4",
                             "--seed", "7", "--out", str(out_file))
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_insufficient_boxes(self, capsys, tmp_path):
        labels = tmp_path / "labels"
        self._write_labels(labels, [(10, 10), (10, 10)])
        code, _, err = run(capsys, "anchors", "--labels", str(labels), "--k", "6",
                           "--out", str(tmp_path / "x.txt"))
        assert code == EXIT_DATA
        assert "distinct" in err


class TestSplitCmd:
    def test_manifest_files(self, capsys, tmp_path):
        ids_file = tmp_path / "ids.txt"
        ids_file.write_text("\n".join(f"{i:06d}" for i in range(10)) + "\n")
        out = tmp_path / "split"
        code, msg, _ = run(capsys, "split", "--ids", str(ids_file), "--seed", "3",
                           "--out", str(out))
        assert code == 0
        assert "train 5 / val 3 / test 2" in msg
        train = (out / "train.txt").read_text().split()
        val = (out / "val.txt").read_text().split()
        test = (out / "test.txt").read_text().split()
        assert len(train) == 5 and len(val) == 3 and len(test) == 2
        assert set(train) | set(val) | set(test) == {f"{i:06d}" for i in range(10)}

    def test_no_ids_is_data_error(self, capsys, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("")
        code, _, err = run(capsys, "split", "--ids", str(empty),
                           "--out", str(tmp_path / "o"))
        assert code == EXIT_DATA
