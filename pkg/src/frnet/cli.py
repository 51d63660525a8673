"""Command-line entry point: ``frnet {synth,train,xval,eval,gradcheck,explain,ablate}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, load_run_config
from .data import TrialSet, load_eegb, save_eegb, synthesize
from .errors import ConfigError, FrnetError
from .evaluation import write_confusion_csv, write_roc_csv
from .explain import electrode_attribution, export_electrodes, export_map, grad_cam
from .gradsuite import format_table, run_suite
from .network import ABLATION_LABELS, ABLATIONS, NetworkConfig, NetworkParams, load_weights, save_weights
from .network.params import layer_specs
from .training import (
    CVResult,
    EpochRecord,
    TrainConfig,
    cross_validate,
    evaluate,
    evaluate_loss,
    fit_fold,
    stratified_holdout,
)

log = logging.getLogger("frnet")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
COMMANDS = ("synth", "train", "xval", "eval", "gradcheck", "explain", "ablate")
HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_acc", "lr")


# ---------------------------------------------------------------------------
# output helpers


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_history(history: Sequence[EpochRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc), repr(r.lr)])


def write_checkpoint(params: NetworkParams, net: NetworkConfig, train: TrainConfig, path: Path) -> None:
    """FRWT weights plus a JSON sidecar (``<path>.json``) holding both configs."""
    path.parent.mkdir(parents=True, exist_ok=True)
    save_weights(params.arrays(), path)
    _write_text(path.with_suffix(path.suffix + ".json"),
                _json_text({"network": net.to_dict(), "train": train.to_dict()}))


def read_checkpoint(path: Path) -> tuple[NetworkParams, NetworkConfig]:
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise ConfigError(f"weights {path}: missing sidecar {sidecar.name}")
    net = NetworkConfig.from_dict(json.loads(sidecar.read_text())["network"])
    return NetworkParams.from_arrays(net, load_weights(path)), net


def write_cv(result: CVResult, net: NetworkConfig, train: TrainConfig, out: Path) -> None:
    for f in result.folds:
        d = out / f"fold{f.fold}"
        d.mkdir(parents=True, exist_ok=True)
        report = f.report.to_dict()
        report.update(fold=f.fold, best_epoch=f.best_epoch, train_accuracy=f.train_accuracy,
                      train_size=int(f.train_idx.size), val_size=int(f.val_idx.size),
                      test_size=int(f.test_idx.size))
        _write_text(d / "report.json", _json_text(report))
        write_confusion_csv(f.report, d / "confusion.csv")
        write_history(f.history, d / "history.csv")
        write_checkpoint(f.best_params, net, train, d / "checkpoint.frwt")
    aggregate = {"folds": len(result.folds), "metrics": result.aggregate,
                 "train_accuracy": [f.train_accuracy for f in result.folds],
                 "test_accuracy": [f.report.accuracy for f in result.folds]}
    _write_text(out / "aggregate.json", _json_text(aggregate))


# ---------------------------------------------------------------------------
# subcommands


def _load_data(run: RunConfig) -> TrialSet:
    if not run.data:
        raise ConfigError("paths.data: this command needs --data or paths.data in the config")
    return load_eegb(run.data)


def _network(run: RunConfig, data: TrialSet) -> NetworkConfig:
    net = run.network_for(data.channels, data.length, data.classes)
    log.info("network: C=%d W=%d M=%d ablation=%s", net.electrodes, net.trial_length, net.classes, net.ablation)
    return net


def cmd_synth(run: RunConfig, args, out: Path) -> int:
    ts = synthesize(run.synth)
    path = out / "synth.eegb"
    save_eegb(ts, path)
    print(f"wrote {len(ts)} trials ({ts.channels} x {ts.length}, {ts.classes} classes) to {path}")
    return 0


def cmd_train(run: RunConfig, args, out: Path) -> int:
    data = _load_data(run)
    net = _network(run, data)
    rng = np.random.default_rng(run.seed)
    train_idx, val_idx = stratified_holdout(np.arange(len(data)), data.labels, run.train.val_fraction, rng)
    fit = fit_fold(data.subset(train_idx), data.subset(val_idx), net, run.train)
    write_checkpoint(fit.best_params, net, run.train, out / "checkpoint.frwt")
    write_history(fit.state.history, out / "history.csv")
    report, _ = evaluate(data.subset(val_idx), fit.best_params, net)
    _, train_acc = evaluate_loss(data.subset(train_idx), fit.best_params, net)
    summary = report.to_dict()
    summary.update(best_epoch=fit.best_epoch, train_accuracy=train_acc)
    _write_text(out / "report.json", _json_text(summary))
    print(f"best epoch {fit.best_epoch}: train accuracy {train_acc:.4f}, validation accuracy {report.accuracy:.4f}")
    return 0


def cmd_xval(run: RunConfig, args, out: Path) -> int:
    data = _load_data(run)
    net = _network(run, data)
    result = cross_validate(data, net, run.train, jobs=args.jobs)
    write_cv(result, net, run.train, out)
    acc = result.aggregate["accuracy"]
    print(f"{len(result.folds)}-fold accuracy {acc['mean']:.4f} +/- {acc['std']:.4f}")
    return 0


def cmd_eval(run: RunConfig, args, out: Path) -> int:
    if not args.weights:
        raise ConfigError("weights: eval needs --weights")
    data = _load_data(run)
    params, net = read_checkpoint(Path(args.weights))
    if data.channels != net.electrodes or data.classes != net.classes:
        raise ConfigError(f"network.electrodes/classes: checkpoint expects C={net.electrodes}, "
                          f"M={net.classes}; data has C={data.channels}, M={data.classes}")
    report, probs = evaluate(data, params, net)
    _write_text(out / "report.json", report.to_json() + "\n")
    write_confusion_csv(report, out / "confusion.csv")
    write_roc_csv(probs, data.labels, out / "roc.csv")
    print(f"accuracy {report.accuracy:.4f}, kappa {report.kappa.value:.4f}")
    return 0


def cmd_gradcheck(run: RunConfig, args, out: Path) -> int:
    rows = run_suite(run.seed)
    print(format_table(rows))
    return 0 if all(r.passed for r in rows) else 1


def cmd_explain(run: RunConfig, args, out: Path) -> int:
    if not args.weights:
        raise ConfigError("weights: explain needs --weights")
    data = _load_data(run)
    params, net = read_checkpoint(Path(args.weights))
    layer = args.layer or "fr"
    out.mkdir(parents=True, exist_ok=True)
    predicted = evaluate(data, params, net)[1].argmax(axis=1)
    for i in range(len(data)):
        target = args.target_class if args.target_class is not None else int(predicted[i])
        amap = grad_cam(data.trials[i], params, net, target, layer, trial_id=i)
        export_map(amap, out / f"trial{i:04d}_{layer}.csv")
        export_electrodes(electrode_attribution(data.trials[i], params, net, target),
                          out / f"trial{i:04d}_electrodes.csv")
    print(f"wrote attribution maps for {len(data)} trials (layer {layer}) to {out}")
    return 0


def _ablate_variant(args):
    data, net, train, variant = args
    cfg = net.with_updates(ablation=variant)
    return variant, cross_validate(data, cfg, train)


def cmd_ablate(run: RunConfig, args, out: Path) -> int:
    data = _load_data(run)
    net = _network(run, data)
    variants = [args.ablation] if args.ablation else list(ABLATIONS)
    tasks = [(data, net, run.train, v) for v in variants]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_ablate_variant, tasks))
    else:
        results = [_ablate_variant(t) for t in tasks]
    rows = []
    for variant, cv in results:
        cfg = net.with_updates(ablation=variant)
        write_cv(cv, cfg, run.train, out / variant)
        n_params = sum(int(np.prod(s.shape)) for s in layer_specs(cfg).values())
        agg = cv.aggregate
        rows.append([variant, ABLATION_LABELS[variant], n_params,
                     agg["accuracy"]["mean"], agg["accuracy"]["std"], agg["kappa"]["mean"], agg["kappa"]["std"]])
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "label", "parameters", "accuracy_mean", "accuracy_std", "kappa_mean", "kappa_std"])
        w.writerows([r[:3] + [f"{v:.6f}" for v in r[3:]] for r in rows])
    print(f"{'variant':<10}{'parameters':>12}{'accuracy':>18}")
    for r in rows:
        print(f"{r[0]:<10}{r[2]:>12}{r[3]:>10.4f} +/- {r[4]:.4f}")
    return 0


HANDLERS = {
    "synth": cmd_synth, "train": cmd_train, "xval": cmd_xval, "eval": cmd_eval,
    "gradcheck": cmd_gradcheck, "explain": cmd_explain, "ablate": cmd_ablate,
}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frnet", description="Feature-reweighting EEG classifier.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="PATH", help="JSON config overlaid on the packaged defaults")
    p.add_argument("--data", metavar="PATH", help="EEGB trial file")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, help="run seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for folds/variants")
    p.add_argument("--ablation", metavar="NAME", help=f"one of {', '.join(ABLATIONS)}")
    p.add_argument("--layer", metavar="NAME", help="feature map for explain (default: fr)")
    p.add_argument("--class", dest="target_class", type=int, metavar="INT",
                   help="target class for explain (default: predicted class)")
    p.add_argument("--weights", metavar="PATH", help="FRWT checkpoint for eval/explain")
    return p


def _overrides(args) -> dict:
    doc: dict = {}
    if args.seed is not None:
        doc["seed"] = args.seed
    paths = {k: v for k, v in (("data", args.data), ("out", args.out)) if v is not None}
    if paths:
        doc["paths"] = paths
    if args.ablation is not None and args.command != "ablate":
        doc["network"] = {"ablation": args.ablation}
    return doc


def _setup_logging(out: Optional[Path]) -> None:
    level_name = os.environ.get("FRNET_LOG", "info").strip().lower()
    if level_name not in LOG_LEVELS:
        raise ConfigError(f"FRNET_LOG: expected one of {', '.join(LOG_LEVELS)}, got {level_name!r}")
    root = logging.getLogger("frnet")
    root.setLevel(LOG_LEVELS[level_name])
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(console)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(out / "frnet.log", mode="w")
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(fh)
    root.propagate = False


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError(f"jobs: must be >= 1, got {args.jobs}")
        if args.ablation is not None and args.ablation not in ABLATIONS:
            raise ConfigError(f"network.ablation: unknown variant {args.ablation!r}; expected one of "
                              f"{', '.join(ABLATIONS)}")
        run_cfg = load_run_config(args.config, _overrides(args))
        out = Path(run_cfg.out)
        _setup_logging(None if args.command == "gradcheck" else out)
        if args.command not in ("gradcheck",):
            _write_text(out / "run_config.json", _json_text({k: v for k, v in run_cfg.to_document().items()
                                                             if k != "paths"}))
        return HANDLERS[args.command](run_cfg, args, out)
    except ConfigError as exc:
        print(f"frnet {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (FrnetError, OSError) as exc:
        print(f"frnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
