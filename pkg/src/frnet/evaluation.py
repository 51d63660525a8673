"""Classification metrics: confusion matrix, accuracy, macro F, Cohen's kappa,
one-vs-rest ROC-AUC and the paired t-test."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidInputError


@dataclass
class Kappa:
    value: float
    p_o: float
    p_e: float
    undefined: bool = False


@dataclass
class AucResult:
    per_class: list[float]
    macro: float
    undefined: list[int] = field(default_factory=list)


@dataclass
class TTestResult:
    t: float
    p: float
    dof: int
    degenerate: bool = False


@dataclass
class EvalReport:
    confusion: np.ndarray
    accuracy: float
    f_measure: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    kappa: Kappa
    auc: Optional[AucResult] = None

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        d = {
            "n": self.total,
            "accuracy": self.accuracy,
            "f_measure": self.f_measure,
            "kappa": None if self.kappa.undefined else self.kappa.value,
            "p_o": self.kappa.p_o,
            "p_e": self.kappa.p_e,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": self.confusion.astype(int).tolist(),
        }
        if self.auc is not None:
            d["auc"] = {"per_class": [None if math.isnan(v) else v for v in self.auc.per_class],
                        "macro": None if math.isnan(self.auc.macro) else self.auc.macro}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def confusion_matrix(predicted: Sequence[int], labels: Sequence[int], classes: int) -> np.ndarray:
    predicted, labels = np.asarray(predicted, dtype=np.int64), np.asarray(labels, dtype=np.int64)
    if predicted.shape != labels.shape:
        raise InvalidInputError(f"{predicted.size} predictions for {labels.size} labels")
    if labels.size and (min(predicted.min(), labels.min()) < 0 or max(predicted.max(), labels.max()) >= classes):
        raise InvalidInputError(f"class indices must lie in [0, {classes})")
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (labels, predicted), 1)
    return cm


def cohen_kappa(confusion: np.ndarray) -> Kappa:
    """kappa = (P_o - P_e) / (1 - P_e) with P_e from the row/column marginals.

    Integer count matrices are evaluated as a single ratio of exact integers,
    so textbook cases come out exact.
    """
    cm = np.asarray(confusion)
    total = cm.sum()
    if total <= 0:
        raise InvalidInputError("kappa of an empty confusion matrix")
    rows, cols = cm.sum(axis=1), cm.sum(axis=0)
    if np.issubdtype(cm.dtype, np.integer):
        n, agree, chance = int(total), int(np.trace(cm)), int(np.dot(rows.astype(object), cols.astype(object)))
        p_o, p_e = agree / n, chance / (n * n)
        if chance == n * n:
            return Kappa(float("nan"), p_o, p_e, undefined=True)
        return Kappa((n * agree - chance) / (n * n - chance), p_o, p_e)
    total = float(total)
    p_o = float(np.trace(cm)) / total
    p_e = float(np.dot(rows, cols)) / total ** 2
    if p_e == 1.0:
        return Kappa(float("nan"), p_o, p_e, undefined=True)
    return Kappa((p_o - p_e) / (1.0 - p_e), p_o, p_e)


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def confusion_and_scores(predictions, labels: Sequence[int], classes: int) -> EvalReport:
    """Build a report from class indices (N,) or probability rows (N, M).

    Probability rows are reduced by argmax and additionally feed ROC-AUC.
    Precision, recall and F1 use 0 for 0/0; the F-measure is their macro mean.
    """
    pred = np.asarray(predictions)
    labels = np.asarray(labels, dtype=np.int64)
    probs = None
    if pred.ndim == 2:
        if pred.shape != (labels.size, classes):
            raise InvalidInputError(f"probability rows {pred.shape} do not match {labels.size} labels x {classes} classes")
        if not np.allclose(pred.sum(axis=1), 1.0, atol=1e-6):
            raise InvalidInputError("probability rows must sum to 1")
        probs = pred.astype(np.float64)
        pred = probs.argmax(axis=1)
    cm = confusion_matrix(pred, labels, classes)
    tp = np.diag(cm).astype(float)
    precision = [_safe_div(tp[k], cm[:, k].sum()) for k in range(classes)]
    recall = [_safe_div(tp[k], cm[k].sum()) for k in range(classes)]
    f1 = [_safe_div(2 * p * r, p + r) for p, r in zip(precision, recall)]
    report = EvalReport(
        confusion=cm,
        accuracy=_safe_div(float(np.trace(cm)), float(cm.sum())),
        f_measure=float(np.mean(f1)),
        precision=precision,
        recall=recall,
        f1=f1,
        kappa=cohen_kappa(cm),
    )
    if probs is not None:
        report.auc = roc_auc_ovr(probs, labels, strict=False)
    return report


# ---------------------------------------------------------------------------
# ROC-AUC


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    xs = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auc(scores: Sequence[float], positive: Sequence[bool]) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("AUC undefined: need at least one positive and one negative")
    r = midranks(scores)[positive].sum()
    return float((r - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc_ovr(probabilities: np.ndarray, labels: Sequence[int], strict: bool = True) -> AucResult:
    """Per-class one-vs-rest AUC and their unweighted mean.

    With ``strict`` a class lacking positives or negatives raises; otherwise
    its AUC is NaN, it is listed in ``undefined`` and left out of the mean.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    per_class, undefined = [], []
    for k in range(probs.shape[1]):
        try:
            per_class.append(binary_auc(probs[:, k], labels == k))
        except InvalidInputError:
            if strict:
                raise InvalidInputError(f"AUC undefined for class {k}: it is never (or always) the true label")
            per_class.append(float("nan"))
            undefined.append(k)
    valid = [v for v in per_class if not math.isnan(v)]
    return AucResult(per_class, float(np.mean(valid)) if valid else float("nan"), undefined)


def roc_points(scores: Sequence[float], positive: Sequence[bool]) -> list[tuple[float, float, float]]:
    """(threshold, FPR, TPR) for every distinct score, descending, starting at (inf, 0, 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = positive.sum(), (~positive).sum()
    pts = [(float("inf"), 0.0, 0.0)]
    for thr in np.unique(scores)[::-1]:
        sel = scores >= thr
        pts.append((float(thr), _safe_div((sel & ~positive).sum(), n_neg), _safe_div((sel & positive).sum(), n_pos)))
    return pts


# ---------------------------------------------------------------------------
# paired t-test


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise InvalidInputError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: int) -> float:
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on ``a - b`` with n-1 degrees of freedom."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("paired samples must be 1-D and equally long")
    n = a.size
    if n < 2:
        raise InvalidInputError("paired t-test needs at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        return TTestResult(float("nan"), float("nan"), n - 1, degenerate=True)
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    return TTestResult(t, student_t_two_sided_p(t, n - 1), n - 1)


# ---------------------------------------------------------------------------
# exports


def write_confusion_csv(report: EvalReport, path: Union[str, Path]) -> None:
    m = report.confusion.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + [str(k) for k in range(m)])
        for k in range(m):
            w.writerow([str(k)] + [str(int(v)) for v in report.confusion[k]])


def write_roc_csv(probabilities: np.ndarray, labels: Sequence[int], path: Union[str, Path]) -> None:
    probs = np.asarray(probabilities)
    labels = np.asarray(labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "threshold", "fpr", "tpr"])
        for k in range(probs.shape[1]):
            pos = labels == k
            if pos.all() or not pos.any():
                continue
            for thr, fpr, tpr in roc_points(probs[:, k], pos):
                w.writerow([k, f"{thr:.9g}", f"{fpr:.9g}", f"{tpr:.9g}"])
