"""Training procedure: Xavier init, Adam with weight decay, cross-entropy,
patience-based learning-rate decay and stratified k-fold cross-validation."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .data import TrialSet
from .errors import ConfigError, InvalidInputError, PartitionError
from .evaluation import EvalReport, confusion_and_scores
from .kernels import cross_entropy
from .network import NetworkConfig, NetworkParams, forward, layer_specs, predict_logits, softmax

log = logging.getLogger(__name__)

cross_entropy_loss = cross_entropy


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    decay_factor: float = 0.5
    patience: int = 10
    batch_size: int = 64
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = False
    folds: int = 5
    val_fraction: float = 0.2
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"train.{key}: {msg}")

        need(self.epochs >= 1, "epochs", "must be >= 1")
        need(self.learning_rate > 0, "learning_rate", "must be > 0")
        need(0 < self.decay_factor < 1, "decay_factor", "must lie in (0, 1)")
        need(self.patience >= 0, "patience", "must be >= 0")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.weight_decay >= 0, "weight_decay", "must be >= 0")
        need(self.folds >= 2, "folds", "must be >= 2")
        need(0 < self.val_fraction < 1, "val_fraction", "must lie in (0, 1)")
        need(0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "adam_beta1", "betas must lie in [0, 1)")
        need(self.adam_epsilon > 0, "adam_epsilon", "must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"train.{unknown[0]}: unknown key")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    lr: float
    train_acc: float = float("nan")


@dataclass
class TrainState:
    params: NetworkParams
    lr: float
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    patience_counter: int = 0
    best_val_loss: float = math.inf
    epoch: int = 0
    decays: int = 0
    history: list[EpochRecord] = field(default_factory=list)

    @classmethod
    def start(cls, params: NetworkParams, config: TrainConfig) -> "TrainState":
        return cls(
            params=params,
            lr=config.learning_rate,
            m={n: np.zeros_like(t.data) for n, t in params.tensors.items()},
            v={n: np.zeros_like(t.data) for n, t in params.tensors.items()},
        )


# ---------------------------------------------------------------------------
# initialisation and optimisation


def xavier_bound(shape: tuple[int, ...]) -> float:
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    elif len(shape) == 2:
        fan_out, fan_in = shape
    else:
        raise ValueError(f"no Xavier fan for shape {shape}")
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_init(config: NetworkConfig, seed: int = 0) -> NetworkParams:
    """Uniform Xavier weights, zero biases, unit BN scale and zero BN shift."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, spec in sorted(layer_specs(config).items()):
        if spec.kind == "weight":
            b = xavier_bound(spec.shape)
            arrays[name] = rng.uniform(-b, b, size=spec.shape)
        elif spec.kind == "bn_scale":
            arrays[name] = np.ones(spec.shape)
        else:
            arrays[name] = np.zeros(spec.shape)
    return NetworkParams.from_arrays(config, arrays)


def adam_step(state: TrainState, config: TrainConfig) -> TrainState:
    """One bias-corrected Adam update from the gradients stored on the parameters.

    Weight decay is added to the gradient (L2-coupled) unless
    ``config.decoupled_weight_decay`` is set, in which case the weights are
    shrunk directly by ``lr * weight_decay``.
    """
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    wd = config.weight_decay
    for name in state.params.names():
        t = state.params[name]
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise InvalidInputError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in state.params.names():
        t = state.params[name]
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if wd and not config.decoupled_weight_decay:
            g = g + wd * t.data
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if wd and config.decoupled_weight_decay:
            t.data -= state.lr * wd * t.data
        t.data -= update
    return state


def plateau_update(state: TrainState, val_loss: float, config: TrainConfig) -> TrainState:
    """Track the best validation loss; decay the rate once patience is exhausted."""
    if not math.isfinite(val_loss):
        raise InvalidInputError(f"validation loss is not finite: {val_loss}")
    if val_loss < state.best_val_loss:
        state.best_val_loss = val_loss
        state.patience_counter = 0
    else:
        state.patience_counter += 1
    if state.patience_counter > config.patience:
        state.lr *= config.decay_factor
        state.decays += 1
        state.patience_counter = 0
    return state


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitResult:
    state: TrainState
    best_params: NetworkParams
    best_epoch: int


def evaluate_loss(ts: TrialSet, params: NetworkParams, config: NetworkConfig,
                  batch_size: int = 128) -> tuple[float, float]:
    """Eval-mode (mean cross-entropy, accuracy) over a trial set."""
    logits = predict_logits(ts.trials, params, config, batch_size)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(len(ts)), ts.labels].mean())
    acc = float((logits.argmax(axis=1) == ts.labels).mean())
    return loss, acc


def fit_fold(train: TrialSet, val: TrialSet, net_config: NetworkConfig, config: TrainConfig,
             seed: Optional[int] = None, params: Optional[NetworkParams] = None,
             on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> FitResult:
    """Train for ``config.epochs`` epochs and keep the lowest-validation-loss snapshot."""
    if len(train) == 0 or len(val) == 0:
        raise InvalidInputError("fit_fold needs non-empty train and validation sets")
    seed = config.seed if seed is None else seed
    init_seq, shuffle_seq, dropout_seq = np.random.SeedSequence(seed).spawn(3)
    if params is None:
        params = xavier_init(net_config, int(init_seq.generate_state(1)[0]))
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    state = TrainState.start(params, config)
    best = params.copy()
    best_epoch = 0
    n = len(train)

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total, correct = 0.0, 0
        params.set_requires_grad(True)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            params.zero_grad()
            logits = forward(train.trials[idx], params, net_config, training=True, rng=dropout_rng)
            loss = cross_entropy(logits, train.labels[idx])
            loss.backward()
            adam_step(state, config)
            total += loss.item() * idx.size
            correct += int((logits.data.argmax(axis=1) == train.labels[idx]).sum())
        params.zero_grad()
        val_loss, val_acc = evaluate_loss(val, params, net_config)
        record = EpochRecord(epoch, total / n, val_loss, val_acc, state.lr, correct / n)
        if val_loss < state.best_val_loss:
            best = params.copy()
            best_epoch = epoch
        plateau_update(state, val_loss, config)
        state.epoch = epoch
        state.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("epoch %d train_loss=%.4f val_loss=%.4f val_acc=%.3f lr=%.2e",
                  epoch, record.train_loss, val_loss, val_acc, record.lr)
    params.set_requires_grad(False)
    return FitResult(state, best, best_epoch)


# ---------------------------------------------------------------------------
# partitioning and cross-validation


def stratified_folds(labels: np.ndarray, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split indices into ``folds`` disjoint folds with every class spread round-robin."""
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if folds < 2:
        raise PartitionError("need at least two folds")
    short = classes[counts < folds]
    if short.size:
        raise PartitionError(f"class {int(short[0])} has fewer trials than the {folds} folds")
    buckets: list[list[int]] = [[] for _ in range(folds)]
    offset = 0
    for k in classes:
        idx = rng.permutation(np.flatnonzero(labels == k))
        for j, i in enumerate(idx):
            buckets[(j + offset) % folds].append(int(i))
        offset += idx.size
    return [np.sort(np.array(b, dtype=np.int64)) for b in buckets]


def stratified_holdout(indices: np.ndarray, labels: np.ndarray, fraction: float,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Carve a stratified validation subset (about ``fraction`` per class) out of ``indices``."""
    indices = np.asarray(indices)
    keep, hold = [], []
    for k in np.unique(labels[indices]):
        idx = rng.permutation(indices[labels[indices] == k])
        n_val = int(round(fraction * idx.size))
        n_val = min(max(n_val, 1), idx.size - 1) if idx.size > 1 else 0
        hold.extend(idx[:n_val])
        keep.extend(idx[n_val:])
    if not hold:
        raise PartitionError("validation holdout is empty")
    return np.sort(np.array(keep, dtype=np.int64)), np.sort(np.array(hold, dtype=np.int64))


def evaluate(ts: TrialSet, params: NetworkParams, config: NetworkConfig) -> tuple[EvalReport, np.ndarray]:
    probs = softmax(predict_logits(ts.trials, params, config))
    return confusion_and_scores(probs, ts.labels, config.classes), probs


@dataclass
class FoldResult:
    fold: int
    report: EvalReport
    history: list[EpochRecord]
    best_params: NetworkParams
    best_epoch: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    train_accuracy: float


@dataclass
class CVResult:
    folds: list[FoldResult]
    aggregate: dict[str, dict[str, float]]


def aggregate_reports(reports: list[EvalReport]) -> dict[str, dict[str, float]]:
    """Unweighted mean and population std of the per-fold metrics."""
    cols = {
        "accuracy": [r.accuracy for r in reports],
        "f_measure": [r.f_measure for r in reports],
        "kappa": [r.kappa.value for r in reports],
        "auc_macro": [r.auc.macro if r.auc is not None else float("nan") for r in reports],
    }
    return {k: {"mean": float(np.mean(v)), "std": float(np.std(v))} for k, v in cols.items()}


def plan_folds(data: TrialSet, config: TrainConfig) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """(train, val, test) index triples for every fold, fully determined by the seed."""
    rng = np.random.default_rng(config.seed)
    test_folds = stratified_folds(data.labels, config.folds, rng)
    plan = []
    for i, test_idx in enumerate(test_folds):
        rest = np.sort(np.concatenate([f for j, f in enumerate(test_folds) if j != i]))
        train_idx, val_idx = stratified_holdout(rest, data.labels, config.val_fraction,
                                                np.random.default_rng(config.seed + i))
        plan.append((train_idx, val_idx, test_idx))
    return plan


def run_fold(data: TrialSet, net_config: NetworkConfig, config: TrainConfig, fold: int,
             split: tuple[np.ndarray, np.ndarray, np.ndarray]) -> FoldResult:
    train_idx, val_idx, test_idx = split
    train = data.subset(train_idx)
    fit = fit_fold(train, data.subset(val_idx), net_config, config, seed=config.seed + fold)
    report, _ = evaluate(data.subset(test_idx), fit.best_params, net_config)
    _, train_acc = evaluate_loss(train, fit.best_params, net_config)
    log.info("fold %d: test accuracy %.4f, kappa %.4f (best epoch %d)",
             fold, report.accuracy, report.kappa.value, fit.best_epoch)
    return FoldResult(fold, report, fit.state.history, fit.best_params, fit.best_epoch,
                      train_idx, val_idx, test_idx, train_acc)


def _run_fold_args(args):
    return run_fold(*args)


def cross_validate(data: TrialSet, net_config: NetworkConfig, config: TrainConfig, jobs: int = 1) -> CVResult:
    """Stratified k-fold CV; each fold is the test set once, with a validation
    subset held out of the remaining folds for model selection."""
    if net_config.classes != data.classes:
        raise ConfigError(f"network.classes={net_config.classes} but data has {data.classes} classes")
    plan = plan_folds(data, config)
    tasks = [(data, net_config, config, i, split) for i, split in enumerate(plan)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold_args, tasks))
    else:
        results = [run_fold(*t) for t in tasks]
    return CVResult(results, aggregate_reports([r.report for r in results]))
