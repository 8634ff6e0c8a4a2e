import filecmp
import json
import logging

import numpy as np
import pytest

from brainmri import cli
from brainmri.errors import ArgumentError, LayoutError, NumericError
from brainmri.imgcore import load_pgm, resize_bilinear, save_pgm
from brainmri.metrics import CLASS_NAMES, METRIC_NAMES, parse_report_csv
from brainmri.nnet import MiniBackbone, build_model, save_checkpoint
from brainmri.nnet.train import TrainConfig
from brainmri.phantoms import write_dataset_tree
from brainmri.pipeline import (
    STAGES,
    Manifest,
    PipelineConfig,
    evaluate_checkpoint,
    ingest,
    load_config,
    preprocess_image,
    run_pipeline,
)

PAPER_COUNTS = {"glioma": 926, "meningioma": 937, "no_tumor": 500, "pituitary": 901}
SMOKE_COUNTS = {"glioma": 6, "meningioma": 5, "no_tumor": 4, "pituitary": 5}


def touch_tree(root, counts):
    for cls, n in counts.items():
        d = root / cls
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            (d / f"img_{i:04d}.jpg").write_bytes(b"")


def smoke_config(root, out, **kw):
    return PipelineConfig(root=str(root), out=str(out), size=64, train=TrainConfig(epochs=2, batch_size=8), **kw)


@pytest.fixture(scope="module")
def smoke_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("phantom") / "data"
    write_dataset_tree(root, SMOKE_COUNTS, seed=0, size=120)
    return root


@pytest.fixture(scope="module")
def smoke_run(smoke_tree, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    return out, run_pipeline(smoke_config(smoke_tree, out))


# ---------------------------------------------------------------- ingest


def test_ingest_paper_counts(tmp_path):
    touch_tree(tmp_path, PAPER_COUNTS)
    m = ingest(tmp_path, seed=0)
    assert m.total == 3264
    assert m.counts() == PAPER_COUNTS
    for cls, n in PAPER_COUNTS.items():
        got = {s: m.counts(s)[cls] for s in ("train", "val", "test")}
        assert abs(got["test"] - 0.2 * n) <= 1 and abs(got["val"] - 0.1 * n) <= 1
        assert sum(got.values()) == n


def test_ingest_deterministic_and_sorted(tmp_path):
    touch_tree(tmp_path, {c: 30 for c in CLASS_NAMES})
    a, b = ingest(tmp_path, seed=3), ingest(tmp_path, seed=3)
    assert a.entries == b.entries
    assert ingest(tmp_path, seed=4).entries != a.entries
    paths = [e.path for e in a.entries if e.label == 0]
    assert paths == sorted(paths)
    assert len({e.path for e in a.entries}) == a.total


def test_ingest_recursive_and_filters(tmp_path):
    touch_tree(tmp_path, {c: 1 for c in CLASS_NAMES})
    sub = tmp_path / "glioma" / "b"
    sub.mkdir()
    (sub / "x.PNG").write_bytes(b"")
    (sub / "notes.txt").write_bytes(b"")
    m = ingest(tmp_path)
    assert "glioma/b/x.PNG" in [e.path for e in m.entries]
    assert m.counts()["glioma"] == 2


def test_ingest_layout_errors(tmp_path, caplog):
    touch_tree(tmp_path, {"glioma": 3, "meningioma": 3, "pituitary": 3})
    with pytest.raises(LayoutError, match="no_tumor"):
        ingest(tmp_path)
    (tmp_path / "no_tumor").mkdir()
    with caplog.at_level(logging.WARNING):
        m = ingest(tmp_path)
    assert m.counts()["no_tumor"] == 0
    assert "no_tumor has no images" in caplog.text
    with pytest.raises(LayoutError):
        ingest(tmp_path / "missing")


def test_manifest_round_trip(tmp_path):
    touch_tree(tmp_path / "d", {c: 7 for c in CLASS_NAMES})
    m = ingest(tmp_path / "d", seed=9)
    m.save(tmp_path / "manifest.txt")
    back = Manifest.load(tmp_path / "manifest.txt")
    assert back.entries == m.entries and back.seed == 9
    assert back.root == m.root
    (tmp_path / "bad.txt").write_text("train\t7\tx.pgm\n")
    with pytest.raises(LayoutError):
        Manifest.load(tmp_path / "bad.txt")


# ---------------------------------------------------------------- config


def test_load_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(
        "[pipeline]\nseed = 5\nsize = 96\n"
        "[stages]\naugment = off\n"
        "[bias]\niterations = 7\n"
        "[denoise]\nmethod = tv\ntv_weight = 0.2\n"
        "[augment]\nhflip = no\n"
        "[train]\nepochs = 3\nlearning_rate = 0.001\n"
    )
    c = load_config(ini)
    assert (c.seed, c.size, c.denoise_method, c.tv.weight) == (5, 96, "tv", 0.2)
    assert c.stages["augment"] is False and c.stages["crop"] is True
    assert c.n4.max_iterations == 7 and c.augment.hflip is False
    assert c.train.epochs == 3 and c.train.learning_rate == 0.001
    for bad in ("[train]\nepoch = 3\n", "[nope]\na = 1\n", "[stages]\nfly = on\n", "[pipeline]\nseed = x\n"):
        ini.write_text(bad)
        with pytest.raises(ArgumentError):
            load_config(ini)
    with pytest.raises(ArgumentError):
        PipelineConfig(denoise_method="median").validate()


# ---------------------------------------------------------------- stages


def test_all_stages_off_is_resize():
    img = np.random.default_rng(0).random((90, 70))
    cfg = PipelineConfig(stages={s: False for s in STAGES})
    res = preprocess_image(img, cfg)
    np.testing.assert_array_equal(res.image, resize_bilinear(img, 150, 150))
    assert res.outputs == {}


def test_disabling_later_stage_keeps_earlier_outputs(smoke_tree):
    img = load_pgm(smoke_tree / "glioma" / "scan_0000.pgm")
    full = preprocess_image(img, PipelineConfig(size=64))
    stages = dict(full_stages := {s: True for s in STAGES})
    stages["strip"] = False
    partial = preprocess_image(img, PipelineConfig(size=64, stages=stages))
    for name in ("crop", "bias", "denoise"):
        np.testing.assert_array_equal(full.outputs[name], partial.outputs[name])
    assert "strip" in full.outputs and "strip" not in partial.outputs
    assert set(full_stages) == set(STAGES)


def test_crop_fallback_warns():
    cfg = PipelineConfig(size=32, stages={s: s == "crop" for s in STAGES})
    res = preprocess_image(np.zeros((50, 40)), cfg)
    assert res.info["crop_fallback"] and res.image.shape == (32, 32)


# ---------------------------------------------------------------- pipeline


def test_pipeline_report(smoke_run):
    out, rep = smoke_run
    assert set(rep["stages"]) == {"ingest", "preprocess", "augment", "train", "evaluate"}
    assert rep["stages"]["ingest"]["total"] == 20
    plan = rep["stages"]["augment"]["plan"]
    train_counts = rep["stages"]["ingest"]["splits"]["train"]
    assert {c: train_counts[c] + plan[c] for c in CLASS_NAMES} == {c: max(train_counts.values()) for c in CLASS_NAMES}
    ev = rep["stages"]["evaluate"]
    assert set(ev["per_class"]) == set(CLASS_NAMES)
    assert np.asarray(ev["confusion"]).shape == (4, 4)
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk["stages"]["ingest"]["total"] == 20
    assert "timings" not in on_disk and set(json.loads((out / "timings.json").read_text())) >= {"preprocess", "train"}
    for name in ("manifest.txt", "curves.csv", "confusion.csv", "report.txt", "report.csv", "model.ckpt"):
        assert (out / name).is_file(), name
    for stage in ("1_crop", "2_bias", "2_bias_field", "3_denoise", "4_strip", "4_strip_mask"):
        assert len(list((out / "stages" / stage).rglob("*.pgm"))) == 20, stage
    n_aug = len(list((out / "augmented").rglob("*.pgm")))
    assert n_aug == rep["stages"]["augment"]["synthetic"] > 0
    assert load_pgm(next((out / "stages" / "4_strip").rglob("*.pgm"))).shape == (64, 64)


def test_pipeline_rerun_identical(smoke_tree, smoke_run, tmp_path):
    first, _ = smoke_run
    second = tmp_path / "out"
    run_pipeline(smoke_config(smoke_tree, second))
    cmp = filecmp.dircmp(first, second, ignore=["timings.json"])

    def diffs(d):
        bad = d.left_only + d.right_only + d.diff_files + d.funny_files
        for sub in d.subdirs.values():
            bad += diffs(sub)
        return bad

    assert diffs(cmp) == []
    # dircmp is shallow on stat; check bytes explicitly too
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file() and p.name != "timings.json")
    for rel in files:
        assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel


def test_pipeline_names_failing_file(tmp_path):
    root = tmp_path / "d"
    touch_tree(root, {c: 1 for c in CLASS_NAMES})
    with pytest.raises(Exception, match="glioma/img_0000.jpg"):
        run_pipeline(smoke_config(root, tmp_path / "o"))


def test_evaluate_constant_model(smoke_tree, smoke_run, tmp_path):
    out, _ = smoke_run
    model = build_model(MiniBackbone(channels=(4, 4), input_size=64), seed=0)
    model.layers[-1].params["w"][:] = 0.0
    model.layers[-1].params["b"][:] = [0.0, 0.0, 5.0, 0.0]
    ckpt = tmp_path / "const.ckpt"
    save_checkpoint(model, ckpt)
    manifest = Manifest.load(out / "manifest.txt")
    res = evaluate_checkpoint(ckpt, manifest, "test", 64)
    cm = res["matrix"]
    assert cm[:, 2].sum() == cm.sum()
    labels = [e.label for e in manifest.split("test")]
    assert res["report"].overall_accuracy == labels.count(2) / len(labels)
    parsed = parse_report_csv(res["report"].to_csv())
    for cls, m in res["report"].per_class.items():
        for k in METRIC_NAMES:
            assert parsed[cls][k] == pytest.approx(getattr(m, k), abs=5e-7)


# ---------------------------------------------------------------- CLI


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_cli_usage_errors(capsys):
    assert run_cli() == 1
    assert run_cli("frobnicate") == 1
    assert run_cli("denoise", "x.pgm", "--method", "median") == 1
    assert run_cli("pipeline") == 1
    capsys.readouterr()


def test_cli_data_errors(tmp_path, capsys):
    assert run_cli("ingest", tmp_path / "missing") == 2
    assert run_cli("denoise", tmp_path / "missing.pgm") == 2
    (tmp_path / "bad.ckpt").write_bytes(b"not a checkpoint")
    img = tmp_path / "a.pgm"
    save_pgm(np.zeros((8, 8)), img)
    assert run_cli("predict", tmp_path / "bad.ckpt", img, "--out", tmp_path / "o") == 2
    ini = tmp_path / "c.ini"
    ini.write_text("[train]\nepoch = 3\n")
    assert run_cli("ingest", tmp_path, "--config", ini) == 1
    assert "data error" in capsys.readouterr().err


def test_cli_numeric_error(monkeypatch, tmp_path, capsys):
    def boom(args, config):
        raise NumericError("loss is not finite")

    monkeypatch.setitem(cli.COMMANDS, "ingest", boom)
    assert run_cli("ingest", tmp_path) == 3
    assert "numeric error" in capsys.readouterr().err


def test_cli_ingest_and_pipeline_flags(tmp_path, capsys):
    touch_tree(tmp_path / "d", PAPER_COUNTS)
    assert run_cli("ingest", tmp_path / "d", "--out", tmp_path / "o", "--seed", 2) == 0
    m = Manifest.load(tmp_path / "o" / "manifest.txt")
    assert m.total == 3264 and m.seed == 2
    assert "3264" in capsys.readouterr().out
    args = cli.build_parser().parse_args(["pipeline", "r", "--seed", "4", "--epochs", "3", "--method", "tv", "--no-vflip"])
    c = cli._make_config(args)
    assert (c.seed, c.augment.seed, c.train.epochs, c.denoise_method, c.augment.vflip) == (4, 4, 3, "tv", False)


def test_cli_image_commands(smoke_tree, smoke_run, tmp_path, capsys):
    src = smoke_tree / "meningioma"
    assert run_cli("preprocess", src, "--out", tmp_path / "pre") == 0
    pre = sorted((tmp_path / "pre").glob("*.pgm"))
    assert len([p for p in pre if "_logfield" not in p.name]) == SMOKE_COUNTS["meningioma"]
    assert load_pgm(pre[0]).shape == (150, 150)
    assert run_cli("denoise", tmp_path / "pre", "--method", "gaussian", "--reference", tmp_path / "pre",
                   "--out", tmp_path / "dn") == 0
    rows = (tmp_path / "dn" / "psnr.csv").read_text().splitlines()
    assert rows[0] == "image,method,psnr_input,psnr_output" and len(rows) == 1 + len(pre)
    assert run_cli("strip", tmp_path / "dn", "--save-mask", "--out", tmp_path / "st") == 0
    assert len(list((tmp_path / "st").glob("*_mask.pgm"))) == len(pre)
    out, _ = smoke_run
    ini = tmp_path / "size.ini"
    ini.write_text("[pipeline]\nsize = 64\n")
    assert run_cli("evaluate", out / "model.ckpt", out / "manifest.txt", "--config", ini, "--preprocess",
                   "--out", tmp_path / "ev") == 0
    assert (tmp_path / "ev" / "confusion.csv").read_text() == (out / "confusion.csv").read_text()
    assert run_cli("predict", out / "model.ckpt", src, "--out", tmp_path / "pr") == 0
    lines = (tmp_path / "pr" / "predictions.csv").read_text().splitlines()
    assert lines[0] == "image,label," + ",".join(CLASS_NAMES) and len(lines) == 1 + SMOKE_COUNTS["meningioma"]
    capsys.readouterr()


def test_cli_augment(tmp_path, capsys):
    root = tmp_path / "bal"
    for cls, n in {"glioma": 3, "meningioma": 1, "no_tumor": 2, "pituitary": 3}.items():
        (root / cls).mkdir(parents=True)
        for i in range(n):
            save_pgm(np.full((16, 16), 0.1 * (i + 1)), root / cls / f"s{i}.pgm")
    assert run_cli("augment", root, "--out", tmp_path / "aug") == 0
    made = {cls: len(list((tmp_path / "aug" / cls).glob("*.pgm"))) for cls in CLASS_NAMES if (tmp_path / "aug" / cls).exists()}
    assert made == {"meningioma": 2, "no_tumor": 1}
    assert run_cli("augment", root, "--out", tmp_path / "aug2", "--target-count", 1) == 1
    capsys.readouterr()
