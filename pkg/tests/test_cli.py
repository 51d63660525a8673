import csv
import json
import os
import subprocess
import sys

import pytest

from frnet.cli import run
from frnet.config import default_document, load_run_config
from frnet.errors import ConfigError

QUICK = {"train": {"epochs": 2}, "synth": {"trials_per_class": 10}}


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FRNET_LOG", "error")
    (tmp_path / "c.json").write_text(json.dumps(QUICK))
    assert run(["synth", "--config", "c.json", "--out", "d"]) == 0
    return tmp_path


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "frnet.log"}


# --- configuration --------------------------------------------------------

def test_precedence_defaults_file_flags(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 4, "train": {"epochs": 7, "batch_size": 16}}))
    cfg = load_run_config(path, {"seed": 9, "train": {"batch_size": 8}})
    assert (cfg.seed, cfg.train.seed, cfg.synth.seed) == (9, 9, 9)
    assert (cfg.train.epochs, cfg.train.batch_size, cfg.train.learning_rate) == (7, 8, 1e-3)


@pytest.mark.parametrize("doc, key", [
    ({"train": {"epochz": 1}}, "train.epochz"),
    ({"network": {"fr_channels": 30}}, "network.channel_split_factor"),
    ({"optimizer": {}}, "optimizer"),
    ({"train": {"seed": 3}}, "train.seed"),
    ({"train": {"learning_rate": "fast"}}, "train.learning_rate"),
])
def test_invalid_config_names_key(tmp_path, doc, key):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match=key):
        load_run_config(path)


def test_packaged_defaults_are_complete():
    doc = default_document()
    assert set(doc) == {"seed", "network", "train", "synth", "paths"}
    load_run_config()


# --- subcommands ----------------------------------------------------------

def test_xval_writes_reports_and_is_reproducible(workdir):
    args = ["xval", "--config", "c.json", "--data", "d/synth.eegb"]
    assert run(args + ["--out", "a"]) == 0
    assert run(args + ["--out", "b", "--jobs", "2"]) == 0
    a = tree(workdir / "a")
    assert a == tree(workdir / "b")
    for k in range(5):
        assert {f"fold{k}/report.json", f"fold{k}/checkpoint.frwt", f"fold{k}/checkpoint.frwt.json",
                f"fold{k}/history.csv"} <= set(a)
    agg = json.loads(a["aggregate.json"])
    assert agg["folds"] == 5 and "accuracy" in agg["metrics"]
    header = a["fold0/history.csv"].decode().splitlines()[0]
    assert header == "epoch,train_loss,val_loss,val_acc,lr"
    assert "asctime" not in a["run_config.json"].decode()
    assert (workdir / "a" / "frnet.log").exists()


def test_train_eval_explain_chain(workdir):
    assert run(["train", "--config", "c.json", "--data", "d/synth.eegb", "--out", "t"]) == 0
    sidecar = json.loads((workdir / "t" / "checkpoint.frwt.json").read_text())
    assert set(sidecar) == {"network", "train"}
    weights = "t/checkpoint.frwt"
    assert run(["eval", "--data", "d/synth.eegb", "--weights", weights, "--out", "e"]) == 0
    report = json.loads((workdir / "e" / "report.json").read_text())
    assert report["n"] == 40
    assert (workdir / "e" / "roc.csv").exists()
    assert run(["explain", "--data", "d/synth.eegb", "--weights", weights, "--out", "x",
                "--class", "2", "--layer", "fr.F_hat"]) == 0
    lines = (workdir / "x" / "trial0000_fr.F_hat.csv").read_text().splitlines()
    assert lines[0] == "time_index,activation" and len(lines) == 1 + 64
    assert (workdir / "x" / "trial0039_electrodes.csv").exists()


def test_ablate_table_has_six_rows(workdir):
    assert run(["ablate", "--config", "c.json", "--data", "d/synth.eegb", "--out", "ab"]) == 0
    with open(workdir / "ab" / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["variant"] for r in rows] == ["full", "wo_mfe", "wo_fr", "tfs_only", "cfs_only", "neither"]
    params = {r["variant"]: int(r["parameters"]) for r in rows}
    assert params["wo_fr"] < params["full"]


def test_error_exit_codes(workdir, capsys):
    (workdir / "bad.json").write_text(json.dumps({"train": {"epochz": 1}}))
    assert run(["xval", "--config", "bad.json", "--data", "d/synth.eegb", "--out", "o"]) == 2
    assert "train.epochz" in capsys.readouterr().err
    assert run(["xval", "--out", "o"]) == 2
    assert run(["eval", "--data", "d/synth.eegb", "--out", "o"]) == 2
    assert run(["train", "--data", "missing.eegb", "--out", "o"]) == 1
    assert run(["xval", "--data", "d/synth.eegb", "--ablation", "nope"]) == 2


def test_bad_log_level(workdir, monkeypatch):
    monkeypatch.setenv("FRNET_LOG", "loud")
    assert run(["synth", "--out", "d2"]) == 2


def test_gradcheck_entry_point():
    env = dict(os.environ, FRNET_LOG="error")
    res = subprocess.run([sys.executable, "-m", "frnet", "gradcheck", "--seed", "7"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stdout + res.stderr
    rows = res.stdout.splitlines()[1:]
    assert len(rows) >= 25 and all(r.endswith("PASS") for r in rows)
