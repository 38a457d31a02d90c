import numpy as np
import pytest

from partcrf import io
from partcrf.cli import main
from partcrf.relations import load_relations


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    assert main(["demo", "--out", str(root), "--count", "2"]) == 0
    return root


def _infer(demo, out, *extra):
    d = demo / "data"
    return main(["infer", "--unary", str(d / "eye00.unary"), "--image", str(d / "eye00.png"),
                 "--relations", str(demo / "relations.txt"), "--labels", str(demo / "labels.txt"),
                 "--config", str(demo / "config.txt"), "--out", str(out), *extra])


def test_demo_layout(demo):
    for name in ("labels.txt", "relations.txt", "config.txt", "palette.txt", "grid.txt",
                 "data/eye00.png", "data/eye00.unary", "data/eye01.gt.png"):
        assert (demo / name).exists(), name


def test_infer_writes_labels_trace_and_plot(demo, tmp_path, capsys):
    rc = _infer(demo, tmp_path / "pred.png", "--trace", str(tmp_path / "t.tsv"), "--plot", str(tmp_path / "t.png"))
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("iterations\t")
    pred = io.load_labelmap(tmp_path / "pred.png", 4)
    assert pred.shape == (64, 64)
    assert (tmp_path / "t.tsv").read_text().startswith("iteration\tmax_delta")
    assert (tmp_path / "t.png").read_bytes()[:4] == b"\x89PNG"


def test_infer_without_relations_uses_numeric_labels(demo, tmp_path):
    d = demo / "data"
    rc = main(["infer", "--unary", str(d / "eye01.unary"), "--image", str(d / "eye01.png"),
               "--out", str(tmp_path / "p.png")])
    assert rc == 0


def test_eval_reports_iou(demo, tmp_path, capsys):
    _infer(demo, tmp_path / "pred.png")
    capsys.readouterr()
    rc = main(["eval", "--pred", str(tmp_path / "pred.png"), "--gt", str(demo / "data/eye00.gt.png"),
               "--labels", str(demo / "labels.txt"), "--plot", str(tmp_path / "iou.png")])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split("\t") == ["label", "intersection", "union", "iou"]
    assert lines[-1].startswith("mean\t")
    assert 0.5 < float(lines[-1].split("\t")[-1]) <= 1.0
    assert (tmp_path / "iou.png").exists()


def test_learn_relations_from_ground_truth(demo, tmp_path, capsys):
    rc = main(["learn-relations", "--gt-dir", str(demo / "data"), "--labels", str(demo / "labels.txt"),
               "--threshold", "0.5", "--out", str(tmp_path / "rel.txt")])
    assert rc == 0
    labels = io.load_labelset(demo / "labels.txt")
    table = load_relations(tmp_path / "rel.txt", labels)
    assert (labels.index("eye"), labels.index("head")) in table.containment


def test_sweep_selects_and_writes_config(demo, tmp_path, capsys):
    rc = main(["sweep", "--grid", str(demo / "grid.txt"), "--val-dir", str(demo / "data"),
               "--config", str(demo / "config.txt"), "--relations", str(demo / "relations.txt"),
               "--labels", str(demo / "labels.txt"), "--out", str(tmp_path / "best.txt"),
               "--plot", str(tmp_path / "sweep.png")])
    assert rc == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 3
    assert io.load_config(tmp_path / "best.txt").weight_containment > 0
    assert (tmp_path / "sweep.png").exists()


def test_verify_and_visualize(demo, tmp_path, capsys):
    assert main(["verify", "--count", "20"]) == 0
    assert capsys.readouterr().out.count("PASS") == 3
    rc = main(["visualize", "--labels", str(demo / "data/eye00.gt.png"), "--palette", str(demo / "palette.txt"),
               "--out", str(tmp_path / "v.png")])
    assert rc == 0
    rgb = io.load_image(tmp_path / "v.png").pixels
    pal = io.load_palette(demo / "palette.txt")
    gt = io.load_labelmap(demo / "data/eye00.gt.png")
    assert tuple(rgb[0, 0].astype(int)) == pal[int(gt[0, 0])]


@pytest.mark.parametrize("argv", [
    ["eval", "--pred", "missing.png", "--gt", "missing.png", "--labels", "missing.txt"],
    ["visualize", "--labels", "nowhere.png", "--out", "x.png"],
])
def test_errors_are_one_line_with_exit_2(argv, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1
    assert err.startswith(f"partcrf {argv[0]}: error:")


def test_size_mismatch_is_reported(demo, tmp_path, capsys):
    io.save_labelmap(np.zeros((3, 3), int), tmp_path / "small.png")
    rc = main(["eval", "--pred", str(tmp_path / "small.png"), "--gt", str(demo / "data/eye00.gt.png"),
               "--labels", str(demo / "labels.txt")])
    assert rc == 2
    assert "3x3" in capsys.readouterr().err


def test_corrupt_unary_reports_offset(demo, tmp_path, capsys):
    bad = tmp_path / "bad.unary"
    bad.write_bytes((demo / "data/eye00.unary").read_bytes()[:30])
    rc = main(["infer", "--unary", str(bad), "--image", str(demo / "data/eye00.png"), "--out", str(tmp_path / "p.png")])
    assert rc == 2
    assert "truncated" in capsys.readouterr().err
