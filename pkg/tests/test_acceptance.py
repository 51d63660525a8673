"""Acceptance criteria at their pinned tolerances.

Each test prints one PASS/FAIL line (collected again in the terminal summary)
before asserting. The desk-scale tests share two full ``xval`` runs through
the CLI and take roughly ten minutes on one core.
"""
import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, special

from frnet.cli import read_checkpoint, run
from frnet.config import default_document, load_run_config
from frnet.data import SynthSpec, load_eegb, synthesize
from frnet.evaluation import binary_auc, cohen_kappa, paired_t_test
from frnet.explain import grad_cam
from frnet.gradsuite import TOLERANCE, run_suite
from frnet.kernels import Tensor
from frnet.network import ABLATIONS, fr_forward, fuse_scores, predict_logits
from frnet.training import TrainConfig, TrainState, evaluate, plan_folds, plateau_update, xavier_init

pytestmark = pytest.mark.slow

DESK_SECONDS = 600.0
SUITE_SECONDS = 120.0


def output_tree(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "frnet.log"}


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    """Synthetic desk set plus two seed-0 ``xval`` runs with default settings."""
    root = tmp_path_factory.mktemp("desk")
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv("FRNET_LOG", "error")
        assert run(["synth", "--out", str(root / "data")]) == 0
        data = str(root / "data" / "synth.eegb")
        start = time.perf_counter()
        assert run(["xval", "--data", data, "--out", str(root / "run1")]) == 0
        seconds = time.perf_counter() - start
        assert run(["xval", "--data", data, "--out", str(root / "run2")]) == 0
    return {"root": root, "data": data, "seconds": seconds,
            "aggregate": json.loads((root / "run1" / "aggregate.json").read_text())}


def test_gradient_suite(verdict):
    start = time.perf_counter()
    rows = run_suite(0)
    seconds = time.perf_counter() - start
    worst = max(rows, key=lambda r: r.max_error)
    ok = all(r.passed and r.max_error < TOLERANCE for r in rows) and seconds < SUITE_SECONDS
    verdict("gradient suite", ok,
            f"{len(rows)} checks, worst {worst.name} {worst.max_error:.2e} (< {TOLERANCE:g}), {seconds:.1f} s")
    assert ok


def test_fusion_invariants(verdict):
    rng = np.random.default_rng(7)
    x, y = rng.normal(0, 3, 1000), rng.normal(0, 3, 1000)
    c = rng.uniform(-10, 10, 1000)
    a, b = fuse_scores(Tensor(x[:, None]), Tensor(y[:, None]))
    a2, _ = fuse_scores(Tensor((x + c)[:, None]), Tensor((y + c)[:, None]))
    sum_err = float(np.abs(a.data + b.data - 1.0).max())
    shift_err = float(np.abs(a2.data - a.data).max())
    ok = sum_err <= 1e-12 and shift_err <= 1e-12
    verdict("fusion invariants", ok, f"max |sum-1| {sum_err:.1e}, max shift change {shift_err:.1e} (<= 1e-12)")
    assert ok


def test_reweighting_identity(verdict, desk_config, rng):
    params = xavier_init(desk_config, 0)
    for name in ("fr.tfs.proj", "fr.cfs.fc_y"):
        params[f"{name}.weight"].data[:] = 0.0
        params[f"{name}.bias"].data[:] = 0.0
    out, inter = fr_forward(Tensor(rng.normal(size=(4, 32, 1, 64))), params, desk_config)
    err = float(np.abs(out.data - (inter.F1.data + inter.F2.data) / 2).max())
    verdict("reweighting identity", err <= 1e-10, f"max deviation from (F1+F2)/2 {err:.1e} (<= 1e-10)")
    assert err <= 1e-10


def test_desk_learning(verdict, desk):
    agg = desk["aggregate"]
    train_acc, test_mean = agg["train_accuracy"], agg["metrics"]["accuracy"]["mean"]
    ok = min(train_acc) >= 0.95 and test_mean >= 0.90 and desk["seconds"] < DESK_SECONDS
    verdict("desk learning", ok, f"train accuracy per fold {train_acc} (>= 0.95), mean test {test_mean:.4f} "
            f"(>= 0.90), {desk['seconds']:.0f} s (< {DESK_SECONDS:.0f})")
    assert ok


def test_ablation_machinery(verdict, tmp_path, monkeypatch, desk):
    monkeypatch.setenv("FRNET_LOG", "error")
    cfg = tmp_path / "short.json"
    cfg.write_text(json.dumps({"train": {"epochs": 2, "folds": 2}}))
    assert run(["ablate", "--config", str(cfg), "--data", desk["data"], "--out", str(tmp_path / "abl")]) == 0
    with open(tmp_path / "abl" / "ablation.csv", newline="") as fh:
        rows = {r["variant"]: r for r in csv.DictReader(fh)}
    counts = {v: int(r["parameters"]) for v, r in rows.items()}
    trained = set(rows) == set(ABLATIONS) and all(math.isfinite(float(r["accuracy_mean"])) for r in rows.values())
    smaller = all(counts[v] < counts["full"] for v in ABLATIONS if v != "full")
    ok = trained and smaller and counts["wo_fr"] < counts["full"]
    verdict("ablation machinery", ok, f"{len(rows)} variants trained, parameters {counts}")
    assert ok


def test_hyperparameter_fidelity(verdict):
    doc = default_document()
    run_cfg = load_run_config()
    net, train = run_cfg.network, run_cfg.train
    got = {"beta": net.temporal_scale_factor, "gamma": net.channel_split_factor, "alpha": net.scale_base,
           "lr": train.learning_rate, "weight_decay": train.weight_decay, "batch": train.batch_size,
           "epochs": train.epochs, "folds": train.folds}
    want = {"beta": 4, "gamma": 4, "alpha": 2, "lr": 0.001, "weight_decay": 1e-4, "batch": 64,
            "epochs": 200, "folds": 5}
    raw = (doc["network"]["temporal_scale_factor"], doc["network"]["channel_split_factor"],
           doc["network"]["scale_base"], doc["train"]["learning_rate"], doc["train"]["weight_decay"],
           doc["train"]["batch_size"], doc["train"]["epochs"], doc["train"]["folds"])
    ok = got == want and raw == tuple(want.values())
    verdict("hyperparameter fidelity", ok, ", ".join(f"{k}={v}" for k, v in got.items()))
    assert ok


def quad_two_sided_p(t: float, dof: int) -> float:
    norm = special.gamma((dof + 1) / 2) / (math.sqrt(dof * math.pi) * special.gamma(dof / 2))
    tail, _ = integrate.quad(lambda u: norm * (1 + u * u / dof) ** (-(dof + 1) / 2), abs(t), np.inf,
                             epsabs=1e-14, epsrel=1e-13)
    return 2 * tail


def test_metric_oracles(verdict):
    kappa = cohen_kappa(np.array([[20, 5], [10, 15]])).value
    auc = binary_auc([0.1, 0.4, 0.35, 0.8], [False, False, True, True])
    tt = paired_t_test([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    t_err = abs(tt.t - 2 * math.sqrt(3))
    p_err = abs(tt.p - quad_two_sided_p(tt.t, 2))
    ok = kappa == 0.4 and auc == 0.75 and t_err <= 1e-12 and p_err <= 1e-6
    verdict("metric oracles", ok, f"kappa {kappa!r}, AUC {auc!r}, |t-2*sqrt(3)| {t_err:.1e}, "
            f"p {tt.p:.6f} (quadrature gap {p_err:.1e})")
    assert ok


def test_lr_schedule_trace(verdict):
    cfg = TrainConfig(patience=2, decay_factor=0.5, learning_rate=1e-3)
    state = TrainState(params=None, lr=cfg.learning_rate)
    rates, decay_epochs = [], []
    for epoch, loss in enumerate([1.0, 1.1, 1.1, 1.1], start=1):
        before = state.decays
        plateau_update(state, loss, cfg)
        rates.append(state.lr)
        if state.decays > before:
            decay_epochs.append(epoch)
    expected = [cfg.learning_rate * cfg.decay_factor ** j for j in (0, 0, 0, 1)]
    ok = decay_epochs == [4] and rates == expected
    verdict("lr schedule trace", ok, f"decays after epochs {decay_epochs} (want [4]), rates {rates}")
    assert ok


def test_grad_cam_localization(verdict, desk):
    data = load_eegb(desk["data"])
    spec = load_run_config().synth
    plan = plan_folds(data, load_run_config().train)
    fractions = []
    for fold, (_, _, test_idx) in enumerate(plan):
        params, net = read_checkpoint(desk["root"] / "run1" / f"fold{fold}" / "checkpoint.frwt")
        lo, hi = spec.window[0] * net.stem_pool // spec.length, spec.window[1] * net.stem_pool // spec.length
        test = data.subset(test_idx)
        _, probs = evaluate(test, params, net)
        for i in np.flatnonzero(probs.argmax(axis=1) == test.labels):
            amap = grad_cam(test.trials[i], params, net, int(test.labels[i]))
            fractions.append(amap.mass_fraction(lo, hi))
    fractions = np.array(fractions)
    share = float((fractions >= 0.6).mean())
    verdict("grad-cam localization", share >= 0.8,
            f"{share:.3f} of {fractions.size} correct test trials have >= 0.6 mass in the active window "
            f"(>= 0.80 required; median mass {np.median(fractions):.3f})")
    assert share >= 0.8


def test_determinism(verdict, desk):
    a, b = output_tree(desk["root"] / "run1"), output_tree(desk["root"] / "run2")
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    reports = sum(k.endswith("report.json") for k in a)
    checkpoints = sum(k.endswith(".frwt") for k in a)
    ok = not differing and reports == 5 and checkpoints == 5
    verdict("determinism", ok, f"{len(a)} files compared ({reports} reports, {checkpoints} checkpoints), "
            f"differing: {differing or 'none'}")
    assert ok


def test_length_independence(verdict, desk):
    params, net = read_checkpoint(desk["root"] / "run1" / "fold0" / "checkpoint.frwt")
    shapes = []
    for length in (net.trial_length, 2 * net.trial_length):
        ts = synthesize(SynthSpec(length=length, trials_per_class=3, seed=5))
        logits = predict_logits(ts.trials, params, net)
        shapes.append((length, logits.shape, bool(np.all(np.isfinite(logits)))))
    ok = all(shape == (12, net.classes) and finite for _, shape, finite in shapes)
    verdict("length independence", ok, ", ".join(f"W={w} -> logits {s}" for w, s, _ in shapes))
    assert ok

