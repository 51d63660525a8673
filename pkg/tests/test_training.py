import math

import numpy as np
import pytest

from frnet.data import SynthSpec, synthesize
from frnet.errors import ConfigError, InvalidInputError, PartitionError
from frnet.kernels import cross_entropy
from frnet.network import NetworkConfig, forward, layer_specs
from frnet.training import (
    TrainConfig,
    TrainState,
    adam_step,
    aggregate_reports,
    cross_validate,
    evaluate_loss,
    fit_fold,
    plan_folds,
    plateau_update,
    stratified_folds,
    xavier_bound,
    xavier_init,
)

TINY_NET = NetworkConfig(electrodes=4, trial_length=64, classes=2, stem_filters=2, stem_temporal_kernel=8,
                         mfe_branch_kernels=(3,), mfe_filters_per_branch=4, fr_channels=8, pred_filters=4,
                         pred_kernel=4)


def tiny_data(per_class=10, seed=0):
    spec = SynthSpec(classes=2, trials_per_class=per_class, channels=4, length=64, sampling_rate=64.0,
                     frequencies=[5.0, 12.0], seed=seed)
    return synthesize(spec)


# --- initialisation -------------------------------------------------------

def test_xavier_bounds_and_constants(desk_config):
    params = xavier_init(desk_config, 0)
    for name, spec in layer_specs(desk_config).items():
        data = params[name].data
        if spec.kind == "weight":
            assert np.abs(data).max() < xavier_bound(spec.shape)
        elif spec.kind == "bn_scale":
            assert np.all(data == 1.0)
        else:
            assert np.all(data == 0.0)


def test_xavier_bound_formula():
    assert xavier_bound((4, 3, 1, 5)) == math.sqrt(6 / (15 + 20))
    assert xavier_bound((7, 9)) == math.sqrt(6 / 16)


def test_xavier_sample_mean_is_small():
    cfg = NetworkConfig(electrodes=8, trial_length=256, fr_channels=128, channel_split_factor=4)
    params = xavier_init(cfg, 1)
    w = params["fr.f1.weight"].data
    assert w.size > 10_000
    assert abs(w.mean()) < 0.01 * xavier_bound(w.shape)


def test_xavier_is_seeded(desk_config):
    a, b, c = xavier_init(desk_config, 5), xavier_init(desk_config, 5), xavier_init(desk_config, 6)
    assert all(np.array_equal(a[n].data, b[n].data) for n in a.names())
    assert not np.array_equal(a["fr.f1.weight"].data, c["fr.f1.weight"].data)


# --- Adam -----------------------------------------------------------------

def test_adam_zero_gradient_fixed_point(small_params):
    before = {n: small_params[n].data.copy() for n in small_params.names()}
    state = TrainState.start(small_params, TrainConfig())
    for n in small_params.names():
        small_params[n].grad = np.zeros_like(small_params[n].data)
    adam_step(state, TrainConfig(weight_decay=0.0))
    assert all(np.array_equal(before[n], small_params[n].data) for n in before)


def test_adam_first_step_is_lr_sized(small_params, rng):
    cfg = TrainConfig(weight_decay=0.0)
    before = {n: small_params[n].data.copy() for n in small_params.names()}
    state = TrainState.start(small_params, cfg)
    for n in small_params.names():
        small_params[n].grad = rng.normal(size=small_params[n].shape) * 10.0 ** rng.integers(-3, 3)
    adam_step(state, cfg)
    for n in before:
        g = small_params[n].grad
        step = before[n] - small_params[n].data
        # bias-corrected first step is g / (|g| + eps): a sign step up to eps
        np.testing.assert_allclose(step, cfg.learning_rate * g / (np.abs(g) + cfg.adam_epsilon), rtol=1e-9)
        assert np.all(np.abs(step) <= cfg.learning_rate)


def test_adam_coupled_weight_decay_enters_gradient(small_params):
    cfg = TrainConfig(weight_decay=0.5)
    name = "pred.fc.weight"
    w0 = small_params[name].data.copy()
    state = TrainState.start(small_params, cfg)
    adam_step(state, cfg)
    # zero loss gradient: the decay term alone drives a sign step towards zero
    np.testing.assert_allclose(small_params[name].data, w0 - cfg.learning_rate * np.sign(w0), rtol=1e-6)


def test_adam_rejects_non_finite_gradient(small_params):
    state = TrainState.start(small_params, TrainConfig())
    small_params["pred.fc.bias"].grad = np.array([np.nan, 0.0, 0.0])
    with pytest.raises(InvalidInputError, match="pred.fc.bias"):
        adam_step(state, TrainConfig())


def test_loss_decreases_over_first_steps():
    data = tiny_data(8)
    runs = []
    for seed in range(10):
        params = xavier_init(TINY_NET, seed)
        cfg = TrainConfig(learning_rate=1e-3)
        state = TrainState.start(params, cfg)
        params.set_requires_grad(True)
        losses = []
        for _ in range(11):
            params.zero_grad()
            loss = cross_entropy(forward(data.trials, params, TINY_NET, training=True,
                                         rng=np.random.default_rng(0)), data.labels)
            losses.append(loss.item())
            loss.backward()
            adam_step(state, cfg)
        runs.append(losses[-1] < losses[0])
    assert np.mean(runs) >= 0.95


# --- plateau schedule -----------------------------------------------------

def run_schedule(losses, **kw):
    cfg = TrainConfig(**kw)
    state = TrainState(params=None, lr=cfg.learning_rate)
    trace = []
    for loss in losses:
        plateau_update(state, loss, cfg)
        trace.append((state.lr, state.patience_counter, state.best_val_loss))
    return trace


def test_plateau_decreasing_losses_never_decay():
    trace = run_schedule([5, 4, 3, 2, 1], patience=2)
    assert all(lr == 1e-3 and a == 0 for lr, a, _ in trace)


def test_plateau_trace_tau_two():
    trace = run_schedule([1.0, 1.1, 1.1, 1.1], patience=2, decay_factor=0.5)
    assert [lr for lr, _, _ in trace] == [1e-3, 1e-3, 1e-3, 5e-4]
    assert [a for _, a, _ in trace] == [0, 1, 2, 0]


def test_plateau_double_decay_and_best_loss_monotone():
    losses = [1.0] + [2.0] * 6
    trace = run_schedule(losses, patience=2, decay_factor=0.5)
    assert trace[-1][0] == 1e-3 / 4
    bests = [b for _, _, b in trace]
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))


def test_plateau_rejects_nan():
    with pytest.raises(InvalidInputError):
        run_schedule([float("nan")])


def test_train_config_validation():
    with pytest.raises(ConfigError, match="train.decay_factor"):
        TrainConfig(decay_factor=1.0)
    with pytest.raises(ConfigError, match="train.folds"):
        TrainConfig(folds=1)
    with pytest.raises(ConfigError, match="train.nope"):
        TrainConfig.from_dict({"nope": 1})


# --- fit_fold -------------------------------------------------------------

def test_fit_fold_bookkeeping_and_determinism():
    data = tiny_data(6)
    train, val = data.subset(range(8)), data.subset(range(8, 12))
    cfg = TrainConfig(epochs=3, batch_size=64)
    seen = []
    a = fit_fold(train, val, TINY_NET, cfg, on_epoch=seen.append)
    b = fit_fold(train, val, TINY_NET, cfg)
    assert len(a.state.history) == 3 and [r.epoch for r in seen] == [1, 2, 3]
    assert a.state.step == 3  # one minibatch per epoch when batch >= |train|
    assert [r.val_loss for r in a.state.history] == [r.val_loss for r in b.state.history]
    for n in a.best_params.names():
        np.testing.assert_array_equal(a.best_params[n].data, b.best_params[n].data)


def test_best_snapshot_reproduces_its_validation_loss():
    data = tiny_data(6)
    train, val = data.subset(range(8)), data.subset(range(8, 12))
    fit = fit_fold(train, val, TINY_NET, TrainConfig(epochs=4))
    recorded = fit.state.history[fit.best_epoch - 1].val_loss
    assert abs(evaluate_loss(val, fit.best_params, TINY_NET)[0] - recorded) < 1e-10
    assert recorded == min(r.val_loss for r in fit.state.history)


def test_fit_fold_learns_separable_set():
    data = tiny_data(32, seed=3)
    train, val = data.subset(range(48)), data.subset(range(48, 64))
    fit = fit_fold(train, val, TINY_NET, TrainConfig(epochs=60, batch_size=16))
    assert evaluate_loss(train, fit.best_params, TINY_NET)[1] >= 0.95


def test_fit_fold_empty_split():
    data = tiny_data(4)
    with pytest.raises(InvalidInputError):
        fit_fold(data.subset([]), data, TINY_NET, TrainConfig(epochs=1))


# --- folds ----------------------------------------------------------------

def test_stratified_folds_counts():
    labels = np.repeat(np.arange(4), 25)
    folds = stratified_folds(labels, 5, np.random.default_rng(0))
    assert sorted(np.concatenate(folds).tolist()) == list(range(100))
    for f in folds:
        assert f.size == 20
        assert np.bincount(labels[f], minlength=4).tolist() == [5, 5, 5, 5]


def test_stratified_folds_infeasible():
    with pytest.raises(PartitionError):
        stratified_folds(np.array([0, 0, 0, 1, 1, 1, 1, 1, 1, 1]), 5, np.random.default_rng(0))


def test_fold_plan_partitions():
    data = tiny_data(10)
    for train, val, test in plan_folds(data, TrainConfig()):
        parts = [set(train.tolist()), set(val.tolist()), set(test.tolist())]
        assert sum(map(len, parts)) == len(data) and len(set.union(*parts)) == len(data)
        assert np.bincount(data.labels[val], minlength=2).min() >= 1


def test_cross_validate_aggregate_and_parallel_equivalence():
    data = tiny_data(10)
    cfg = TrainConfig(epochs=2)
    seq = cross_validate(data, TINY_NET, cfg)
    par = cross_validate(data, TINY_NET, cfg, jobs=2)
    accs = [f.report.accuracy for f in seq.folds]
    assert seq.aggregate["accuracy"]["mean"] == pytest.approx(np.mean(accs), abs=1e-15)
    assert seq.aggregate == par.aggregate
    for a, b in zip(seq.folds, par.folds):
        np.testing.assert_array_equal(a.best_params["pred.fc.weight"].data, b.best_params["pred.fc.weight"].data)


def test_cross_validate_class_mismatch():
    with pytest.raises(ConfigError):
        cross_validate(tiny_data(5), TINY_NET.with_updates(classes=3), TrainConfig(epochs=1))


def test_aggregate_uses_population_std():
    from frnet.evaluation import confusion_and_scores
    r1 = confusion_and_scores([0, 1], [0, 1], 2)
    r2 = confusion_and_scores([0, 0], [0, 1], 2)
    agg = aggregate_reports([r1, r2])
    assert agg["accuracy"] == {"mean": 0.75, "std": 0.25}
