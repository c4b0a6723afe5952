"""One-vs-rest evaluation: confusion counts, per-class rates, ROC/AUC, run aggregation."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels

METRIC_NAMES = ("recall", "precision", "fpr", "specificity", "f1", "g_mean", "auc")


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    @property
    def num_classes(self):
        return self.tp.shape[0]

    def __getitem__(self, c):
        return {"tp": int(self.tp[c]), "fp": int(self.fp[c]), "tn": int(self.tn[c]), "fn": int(self.fn[c])}


@dataclass
class ClassMetrics:
    recall: float
    precision: float
    fpr: float
    specificity: float
    f1: float
    g_mean: float
    auc: float = float("nan")


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray


def confusion(predictions, labels, num_classes: int) -> ConfusionCounts:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError("predictions and labels differ in length")
    for arr in (pred, true):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError("class index out of range")
    m = kernels.confusion_matrix(true, pred, num_classes)
    tp = np.diag(m).copy()
    fp = m.sum(axis=0) - tp
    fn = m.sum(axis=1) - tp
    tn = true.size - tp - fp - fn
    return ConfusionCounts(tp, fp, tn, fn)


def _ratio(num, den):
    return num / den if den else 0.0


def class_metrics(tp, fp, tn, fn) -> ClassMetrics:
    """Rates from one-vs-rest counts; any 0/0 rate is reported as 0."""
    recall = _ratio(tp, tp + fn)
    precision = _ratio(tp, tp + fp)
    fpr = _ratio(fp, fp + tn)
    specificity = _ratio(tn, tn + fp)
    f1 = _ratio(2 * recall * precision, recall + precision)
    g_mean = float(np.sqrt(recall * specificity))
    return ClassMetrics(recall, precision, fpr, specificity, f1, g_mean)


def roc_auc(scores, labels) -> tuple[RocCurve, float]:
    """ROC curve from a descending-threshold sweep (ties collapsed) and its trapezoidal area."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative sample")
    order = np.argsort(-scores, kind="mergesort")
    fp, tp = kernels.roc_sweep(scores[order], labels[order])
    # integer trapezoid sum, divided once, keeps the area exact up to one rounding
    area2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = area2 / (2.0 * n_pos * n_neg)
    return RocCurve(fp / n_neg, tp / n_pos), auc


def evaluate(probs, labels, num_classes: int):
    """Per-class metrics (with AUC) and ROC curves for a probability matrix."""
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    counts = confusion(probs.argmax(axis=1), labels, num_classes)
    per_class, curves = [], []
    for c in range(num_classes):
        m = class_metrics(*(counts[c][k] for k in ("tp", "fp", "tn", "fn")))
        pos = labels == c
        if pos.any() and not pos.all():
            curve, m.auc = roc_auc(probs[:, c], pos)
        else:
            curve = None
        per_class.append(m)
        curves.append(curve)
    return per_class, curves, counts


def macro(per_class: list[ClassMetrics]) -> dict[str, float]:
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(m, name) for m in per_class], dtype=float)
        vals = vals[~np.isnan(vals)]
        out[name] = float(vals.mean()) if vals.size else float("nan")
    return out


@dataclass
class RunAggregate:
    class_names: list[str]
    mean: dict[str, np.ndarray]  # metric -> per-class mean
    std: dict[str, np.ndarray]
    macro_mean: dict[str, float]
    macro_std: dict[str, float]
    n_runs: int


def aggregate_runs(runs: list[list[ClassMetrics]], class_names) -> RunAggregate:
    """Per-cell mean and sample standard deviation (ddof=1, 0 for a single run)."""
    if not runs:
        raise ValueError("need at least one run")
    c = len(class_names)
    if any(len(r) != c for r in runs):
        raise ValueError("runs disagree on the class set")
    n = len(runs)
    mean, std, mmean, mstd = {}, {}, {}, {}
    for name in METRIC_NAMES:
        table = np.array([[getattr(m, name) for m in r] for r in runs], dtype=float)
        mean[name] = table.mean(axis=0)
        std[name] = table.std(axis=0, ddof=1) if n > 1 else np.zeros(c)
        with np.errstate(invalid="ignore"):
            macros = np.array([np.nanmean(row) if not np.isnan(row).all() else np.nan for row in table])
        mmean[name] = float(macros.mean())
        mstd[name] = float(macros.std(ddof=1)) if n > 1 else 0.0
    return RunAggregate(list(class_names), mean, std, mmean, mstd, n)


def write_report(out_dir, class_names, per_class: list[ClassMetrics], curves, run_label="run"):
    """Write ``metrics.csv``, ``metrics.json`` and one ROC CSV per class."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "class", "metric", "value"])
        for name, m in zip(class_names, per_class):
            for metric in METRIC_NAMES:
                w.writerow([run_label, name, metric, repr(float(getattr(m, metric)))])
        for metric, value in macro(per_class).items():
            w.writerow([run_label, "macro", metric, repr(value)])
    payload = {
        "run": run_label,
        "classes": {name: asdict(m) for name, m in zip(class_names, per_class)},
        "macro": macro(per_class),
    }
    (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    roc_dir = out_dir / "roc"
    roc_dir.mkdir(exist_ok=True)
    for i, (name, curve) in enumerate(zip(class_names, curves)):
        if curve is None:
            continue
        with open(roc_dir / f"class_{i:02d}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr"])
            w.writerows(zip(curve.fpr.tolist(), curve.tpr.tolist()))


def format_table(aggregates: dict[str, RunAggregate], metric: str = "f1") -> str:
    """Text table in percent, one column per method, rows per class plus the macro average."""
    methods = list(aggregates)
    names = next(iter(aggregates.values())).class_names
    width = max(12, max(len(n) for n in names) + 2)
    lines = [f"{metric} (%)".ljust(width) + "".join(m.rjust(18) for m in methods)]
    for i, name in enumerate(names):
        row = name.ljust(width)
        for m in methods:
            a = aggregates[m]
            row += f"{100 * a.mean[metric][i]:.2f} ± {100 * a.std[metric][i]:.2f}".rjust(18)
        lines.append(row)
    row = "Average".ljust(width)
    for m in methods:
        a = aggregates[m]
        row += f"{100 * a.macro_mean[metric]:.2f} ± {100 * a.macro_std[metric]:.2f}".rjust(18)
    lines.append(row)
    return "\n".join(lines)
