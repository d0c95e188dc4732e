import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest
import toml
from PIL import Image

from dilated_sgan.cli import main
from dilated_sgan.config import ConfigError, RunConfig, load_config, parse_override

TINY = {
    "toy_kind": "stripes", "toy_height": 64, "toy_width": 64,
    "toy_params": {"band_width": 2}, "patch_size": 32,
    "deconv_filters": [8, 8], "dilated_filters": [8], "dilation_rates": [1, 2],
    "disc_filters": [8], "disc_kernel": 5, "batch_size": 2, "epochs": 2,
    "minibatches_per_epoch": 2, "checkpoint_every": 1, "sample_every": 1,
    "noise_height": 4, "noise_width": 4, "count": 3, "max_lag": 8,
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(toml.dumps(TINY))
    return str(path)


@pytest.fixture
def trained_run(tmp_path, tiny_config):
    out = tmp_path / "run"
    assert main(["train", "--config", tiny_config, "--out", str(out)]) == 0
    return out


def test_make_toy_data(tmp_path):
    out = tmp_path / "toy.png"
    code = main(["make-toy-data", "--kind", "stripes", "--height", "32",
                 "--width", "40", "--param", "band_width=3", "--out", str(out)])
    assert code == 0
    img = Image.open(out)
    assert img.mode == "L" and img.size == (40, 32)
    row = np.asarray(img)[0]
    assert list(row[:7]) == [255, 255, 255, 0, 0, 0, 255]


def test_make_toy_data_bad_param(tmp_path, capsys):
    code = main(["make-toy-data", "--kind", "stripes", "--param", "band_width=0",
                 "--out", str(tmp_path / "x.png")])
    assert code == 1
    assert "band_width" in capsys.readouterr().err


def test_train_writes_artifacts(trained_run):
    names = set(os.listdir(trained_run))
    assert {"config.toml", "train_log.csv", "final.ckpt",
            "checkpoint_epoch0001.ckpt", "checkpoint_epoch0002.ckpt",
            "samples_epoch0002.png"} <= names
    snap = toml.load(trained_run / "config.toml")
    assert snap["deconv_filters"] == [8, 8] and snap["epochs"] == 2


def test_invalid_epochs_exit_1(tmp_path, tiny_config, capsys):
    code = main(["train", "--config", tiny_config, "--epochs", "0",
                 "--out", str(tmp_path / "r")])
    assert code == 1
    assert "epochs" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()


def test_unknown_key_named(tmp_path, tiny_config, capsys):
    code = main(["train", "--config", tiny_config, "--set", "lerning_rate=0.1",
                 "--out", str(tmp_path / "r")])
    assert code == 1
    assert "lerning_rate" in capsys.readouterr().err


def test_missing_data_file(tmp_path, tiny_config, capsys):
    code = main(["train", "--config", tiny_config, "--data", "/no/such.png",
                 "--out", str(tmp_path / "r")])
    assert code == 1
    assert "data_path" in capsys.readouterr().err


def test_argparse_error_exit_1():
    assert main(["train", "--epochs", "many"]) == 1
    assert main([]) == 1


def test_snapshot_rerun_reproduces(trained_run, tmp_path):
    again = tmp_path / "again"
    code = main(["train", "--config", str(trained_run / "config.toml"),
                 "--out", str(again)])
    assert code == 0
    a = (trained_run / "train_log.csv").read_text().splitlines()
    b = (again / "train_log.csv").read_text().splitlines()
    # identical apart from wall time
    strip = lambda lines: [l.rsplit(",", 1)[0] for l in lines]
    assert strip(a) == strip(b)


def test_generate(trained_run, tmp_path):
    out = tmp_path / "gen"
    code = main(["generate", "--checkpoint", str(trained_run / "final.ckpt"),
                 "--count", "4", "--noise-h", "3", "--noise-w", "5",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    pngs = sorted(p for p in os.listdir(out) if p.endswith(".png"))
    assert pngs == [f"sample_{i:03d}.png" for i in range(4)]
    assert Image.open(out / pngs[0]).size == (20, 12)


def test_generate_missing_checkpoint(tmp_path):
    assert main(["generate", "--checkpoint", str(tmp_path / "none.ckpt"),
                 "--out", str(tmp_path / "g")]) == 1


def test_generate_corrupt_checkpoint_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["generate", "--checkpoint", str(bad), "--out",
                 str(tmp_path / "g")]) == 2


def _png_dir(path, images):
    path.mkdir()
    for i, img in enumerate(images):
        Image.fromarray(img).save(path / f"{i}.png")
    return str(path)


def test_evaluate_identical_dirs(tmp_path, capsys):
    rng = np.random.default_rng(0)
    imgs = [(rng.random((32, 32)) > 0.5).astype(np.uint8) * 255 for _ in range(2)]
    real = _png_dir(tmp_path / "real", imgs)
    syn = _png_dir(tmp_path / "syn", imgs)
    out = tmp_path / "ev"
    code = main(["evaluate", "--real-dir", real, "--synthetic-dir", syn,
                 "--set", "max_lag=8", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert all(v == 0 for v in report["chi2"].values())
    assert {"curves.csv", "envelopes.csv", "config.toml"} <= set(os.listdir(out))
    assert "TV_i" in capsys.readouterr().out


def test_evaluate_from_checkpoint_and_compare(trained_run, tmp_path, tiny_config,
                                              capsys):
    outs = []
    for seed in ("1", "2"):
        out = tmp_path / f"ev{seed}"
        code = main(["evaluate", "--config", tiny_config, "--checkpoint",
                     str(trained_run / "final.ckpt"), "--seed", seed,
                     "--quiet", "--out", str(out)])
        assert code == 0
        outs.append(out / "report.json")
    report = json.loads(outs[0].read_text())
    assert report["checkpoint"] == "final.ckpt:step-4"
    assert report["n_real"] == report["n_synthetic"] == 3
    capsys.readouterr()
    assert main(["compare", str(outs[0]), str(outs[1]), "--name-a", "s1",
                 "--name-b", "s2"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert [c.strip() for c in header.split("|")] == ["metric", "Real", "s1", "s2"]


def test_evaluate_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    syn = _png_dir(tmp_path / "syn", [np.zeros((32, 32), np.uint8)])
    code = main(["evaluate", "--real-dir", str(tmp_path / "empty"),
                 "--synthetic-dir", syn, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "real_dir" in capsys.readouterr().err


def test_output_root_env(tmp_path, tiny_config, monkeypatch):
    monkeypatch.setenv("DSGAN_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["train", "--config", tiny_config, "--set",
                 'output_dir="rel"', "--epochs", "1"]) == 0
    assert (tmp_path / "root" / "rel" / "final.ckpt").exists()


def test_config_precedence(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("epochs = 7\nbatch_size = 4\n")
    config = load_config(str(path), {"epochs": 9})
    assert (config.epochs, config.batch_size, config.seed) == (9, 4, 0)


@pytest.mark.parametrize("text, expected", [
    ("epochs=3", ("epochs", 3)), ("learning_rate=1e-3", ("learning_rate", 1e-3)),
    ("toy_kind=stripes", ("toy_kind", "stripes")),
    ("lbp_radii=[1, 3]", ("lbp_radii", [1, 3])),
    ('toy_params={band_width=2}', ("toy_params", {"band_width": 2}))])
def test_parse_override(text, expected):
    assert parse_override(text) == expected


@pytest.mark.parametrize("data, key", [
    ({"epochs": "ten"}, "epochs"), ({"batch_size": True}, "batch_size"),
    ({"patch_size": 100}, "patch_size"), ({"toy_kind": "dots"}, "toy_kind"),
    ({"learning_rate": -1.0}, "learning_rate")])
def test_config_errors_name_key(data, key):
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_dict(data)


def test_console_script(tmp_path):
    exe = shutil.which("dsgan")
    cmd = [exe] if exe else [sys.executable, "-m", "dilated_sgan.cli"]
    done = subprocess.run(cmd + ["make-toy-data", "--height", "16", "--width",
                                 "16", "--out", str(tmp_path / "t.png")],
                          capture_output=True, text=True)
    assert done.returncode == 0, done.stderr
    assert (tmp_path / "t.png").exists()
