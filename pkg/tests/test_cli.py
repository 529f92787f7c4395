import csv
import filecmp
import shutil
import subprocess
import sys

import numpy as np
import pytest

from msstnet.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def dir_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    same, diff, err = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not diff and not err and all(dir_equal(a / d, b / d) for d in cmp.common_dirs)


TINY = ["--preset", "tiny", "--config"]


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text("C = 2\nepochs = 3\ndecay_epochs = 2\nbase_lr = 0.01\n")
    return p


@pytest.fixture
def tiny_data(tmp_path, tiny_cfg):
    out = tmp_path / "data"
    assert run("synth", *TINY, tiny_cfg, "--clips", 20, "--seed", 3, "--out", out) == 0
    return out


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("synth", "--clips", 16, "--seed", 7, "--out", a) == 0
    assert run("synth", "--clips", 16, "--seed", 7, "--out", b) == 0
    assert dir_equal(a, b)


def test_synth_manifest_rows(tmp_path, tiny_data):
    rows = 0
    for split in ("train", "val"):
        with open(tiny_data / split / "manifest.csv") as fh:
            rows += sum(1 for _ in csv.DictReader(fh))
    assert rows == 20


def test_synth_missing_clips_is_usage_error(tmp_path, capsys):
    assert run("synth", "--out", tmp_path / "x") == 2
    assert "--clips" in capsys.readouterr().err


def test_synth_too_few_clips(tmp_path):
    assert run("synth", "--clips", 3, "--out", tmp_path / "x") == 2


def test_config_echo_and_unknown_key(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("learning_rate = 0.1\n")
    assert run("flops", "--config", bad) == 2
    assert "unknown config keys: learning_rate" in capsys.readouterr().err
    assert run("flops") == 0
    out = capsys.readouterr().out
    assert "# D = 64" in out and "# epochs = 40" in out


def test_train_eval_cycle(tmp_path, tiny_cfg, tiny_data, capsys):
    out = tmp_path / "run"
    assert run("train", *TINY, tiny_cfg, "--data", tiny_data, "--out", out, "--seed", 1) == 0
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,lr,train_loss,train_acc,val_war,val_uar" and len(log) == 4
    assert [r.split(",")[1] for r in log[1:]] == ["0.01", "0.01", "0.001"]
    assert (out / "config.txt").exists()

    ev = tmp_path / "ev"
    assert run("eval", *TINY, tiny_cfg, "--checkpoint", out / "checkpoint.bin", "--data", tiny_data, "--out", ev) == 0
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    assert summary.startswith("WAR=")
    assert (ev / "report.csv").read_text().splitlines()[-1] == "# " + summary
    with open(ev / "predictions.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4


def test_train_rerun_reproduces_log(tmp_path, tiny_cfg, tiny_data):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("train", *TINY, tiny_cfg, "--data", tiny_data, "--out", a, "--epochs", 2) == 0
    assert run("train", *TINY, tiny_cfg, "--data", tiny_data, "--out", b, "--epochs", 2, "--workers", 2) == 0
    assert (a / "train_log.csv").read_bytes() == (b / "train_log.csv").read_bytes()


def test_epochs_one(tmp_path, tiny_cfg, tiny_data):
    out = tmp_path / "one"
    assert run("train", *TINY, tiny_cfg, "--data", tiny_data, "--out", out, "--epochs", 1) == 0
    assert len((out / "train_log.csv").read_text().splitlines()) == 2


def test_default_schedule_echoed_in_log(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("C = 2\nclip_norm = 1.0\n")
    data, out = tmp_path / "d", tmp_path / "o"
    assert run("synth", *TINY, cfg, "--clips", 4, "--out", data) == 0
    assert run("train", *TINY, cfg, "--data", data, "--out", out) == 0
    lrs = [r.split(",")[1] for r in (out / "train_log.csv").read_text().splitlines()[1:]]
    assert len(lrs) == 40
    assert set(lrs[:20]) == {"0.1"} and set(lrs[20:35]) == {"0.01"} and set(lrs[35:]) == {"0.001"}


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_3(tmp_path, tiny_cfg, tiny_data):
    hot = tmp_path / "hot.cfg"
    hot.write_text(tiny_cfg.read_text().replace("base_lr = 0.01", "base_lr = 1e6"))
    assert run("train", *TINY, hot, "--data", tiny_data, "--out", tmp_path / "r") == 3


def test_eval_missing_checkpoint(tmp_path, tiny_cfg, tiny_data):
    assert run("eval", *TINY, tiny_cfg, "--checkpoint", tmp_path / "nope.bin", "--data", tiny_data, "--out", tmp_path / "e") == 2


def test_eval_empty_dataset(tmp_path, tiny_cfg):
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "manifest.csv").write_text("clip_id,label,file\n")
    ck = tmp_path / "m.bin"
    from msstnet.config import load_config
    from msstnet.model import MSSTNet

    MSSTNet(load_config(tiny_cfg, "tiny").model).save(ck)
    assert run("eval", *TINY, tiny_cfg, "--checkpoint", ck, "--data", empty, "--out", tmp_path / "e") == 2


def test_eval_predictions_relabel_invariance(tmp_path, capsys):
    r = np.random.default_rng(0)
    labels, preds = r.integers(0, 4, 50), r.integers(0, 4, 50)
    perm = np.array([2, 0, 3, 1])
    for name, (l, p) in {"a": (labels, preds), "b": (perm[labels], perm[preds])}.items():
        with open(tmp_path / f"{name}.csv", "w") as fh:
            fh.write("clip_id,true_label,pred_label\n")
            for i, (x, y) in enumerate(zip(l, p)):
                fh.write(f"c{i},{x},{y}\n")
    assert run("eval", "--predictions", tmp_path / "a.csv", "--out", tmp_path / "ea") == 0
    sa = capsys.readouterr().out.strip().splitlines()[-1]
    assert run("eval", "--predictions", tmp_path / "b.csv", "--out", tmp_path / "eb") == 0
    sb = capsys.readouterr().out.strip().splitlines()[-1]
    assert sa == sb


def test_eval_overfit_training_set(tmp_path, capsys):
    cfg = tmp_path / "o.cfg"
    cfg.write_text("C = 2\nepochs = 200\ndecay_epochs =\nbase_lr = 0.01\nbatch_size = 8\n")
    data, out, ev = tmp_path / "d", tmp_path / "o", tmp_path / "e"
    assert run("synth", *TINY, cfg, "--clips", 10, "--out", data) == 0
    # validate on the training clips so the kept checkpoint is the overfit one
    shutil.rmtree(data / "val")
    shutil.copytree(data / "train", data / "val")
    assert run("train", *TINY, cfg, "--data", data, "--out", out) == 0
    assert run("eval", *TINY, cfg, "--checkpoint", out / "checkpoint.bin", "--data", data, "--split", "train", "--out", ev) == 0
    war = float(capsys.readouterr().out.strip().splitlines()[-1].split(",")[0].split("=")[1])
    assert war >= 99.0


def test_flops_frames_table(capsys):
    assert run("flops", "--preset", "full", "--frames", "4,8,12,16") == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert lines[0].split() == ["T", "FLOPs", "(G)", "FLOPs/T", "(G)", "ratio"]
    assert len(lines) == 5
    ratios = [float(l.split()[-1]) for l in lines[1:]]
    assert ratios[0] == 1.0 and abs(ratios[3] - 4) < 0.05


def test_flops_default_positive(tmp_path, capsys):
    assert run("flops", "--out", tmp_path) == 0
    total = [l for l in capsys.readouterr().out.splitlines() if l.startswith("total")][0]
    assert int(total.split()[1].replace(",", "")) > 0
    assert (tmp_path / "flops.csv").exists()


def test_flops_bad_frames():
    assert run("flops", "--frames", "4,x") == 2


def test_dump_requires_capture(tmp_path, capsys):
    assert run("dump", "--out", tmp_path) == 2
    assert "--capture" in capsys.readouterr().err


def test_dump_writes_grids(tmp_path, tiny_cfg, tiny_data):
    out = tmp_path / "maps"
    assert run("dump", *TINY, tiny_cfg, "--capture", "--data", tiny_data, "--out", out) == 0
    assert (out / "stage0_pre_t0.txt").exists() and (out / "attention_stage0.csv").exists()
    assert np.loadtxt(out / "stage0_post_t1.txt").shape == (2, 2)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "msstnet", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("synth", "train", "eval", "flops", "dump"):
        assert cmd in r.stdout
