"""Class grouping: proxy F1 scores, singleton groups for undetected classes, 1-D k-means on counts."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import metrics, nn
from .data import TrainingView
from .training import ERMObjective, Schedule, fit


class GroupingError(ValueError):
    """Group count incompatible with the class/F1 pattern."""


@dataclass
class ProxyReport:
    per_class_f1: np.ndarray
    per_class_count: np.ndarray
    epochs_run: int


def proxy_train(view: TrainingView, hyper: nn.TrainHyper, seed: int = 0, schedule: Schedule | None = None):
    """Plain cross-entropy training followed by per-class F1 on the validation split."""
    if len(view.val) == 0:
        raise ValueError("empty validation split")
    params, trace = fit(view, hyper, ERMObjective(), schedule, seed)
    return proxy_report(params, view, trace.final_epoch), params


def proxy_report(params, view: TrainingView, epochs_run: int) -> ProxyReport:
    pred = nn.predict_proba(params, view.val.x).argmax(axis=1)
    counts = metrics.confusion(pred, view.val.y, view.num_classes)
    f1 = np.array([metrics.class_metrics(*(counts[c][k] for k in ("tp", "fp", "tn", "fn"))).f1
                   for c in range(view.num_classes)])
    return ProxyReport(f1, view.train_counts(), epochs_run)


def _inertia(values, labels, k):
    total = 0.0
    for j in range(k):
        v = values[labels == j]
        if v.size:
            total += float(((v - v.mean()) ** 2).sum())
    return total


def _optimal_1d(sorted_vals, k):
    """Exact 1-D k-means by dynamic programming over contiguous segments of sorted values."""
    n = sorted_vals.size
    c1 = np.r_[0.0, np.cumsum(sorted_vals)]
    c2 = np.r_[0.0, np.cumsum(sorted_vals ** 2)]

    def cost(i, j):  # segment [i, j)
        s = c1[j] - c1[i]
        return (c2[j] - c2[i]) - s * s / (j - i)

    dp = np.full((k + 1, n + 1), np.inf)
    cut = np.zeros((k + 1, n + 1), dtype=int)
    dp[0, 0] = 0.0
    for m in range(1, k + 1):
        for j in range(m, n + 1):
            for i in range(m - 1, j):
                c = dp[m - 1, i] + cost(i, j)
                if c < dp[m, j]:
                    dp[m, j], cut[m, j] = c, i
    labels = np.empty(n, dtype=int)
    j = n
    for m in range(k, 0, -1):
        i = cut[m, j]
        labels[i:j] = m - 1
        j = i
    return np.array([sorted_vals[labels == m].mean() for m in range(k)])


def _kmeanspp(values, k, rng):
    centers = [values[rng.integers(values.size)]]
    for _ in range(1, k):
        d2 = np.min((values[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        if d2.sum() == 0:
            centers.append(values[rng.integers(values.size)])
        else:
            centers.append(values[rng.choice(values.size, p=d2 / d2.sum())])
    return np.array(centers, dtype=float)


def _lloyd(values, centers, max_iter=300):
    k = centers.size
    labels = None
    for _ in range(max_iter):
        new = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        for j in range(k):
            if not np.any(new == j):
                # empty cluster: steal the point farthest from its own center
                far = int(np.argmax(np.abs(values - centers[new])))
                new[far] = j
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([values[labels == j].mean() for j in range(k)])
    return labels, centers


def kmeans_1d(values, k: int, seed: int = 0, n_init: int = 10):
    """Cluster scalars with Lloyd's algorithm and return labels ordered by ascending center.

    Lloyd runs from ``n_init`` k-means++ seedings and from the exact
    dynamic-programming partition; the lowest within-cluster sum of squares
    wins, so the result is the global optimum for 1-D data.
    """
    values = np.asarray(values, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > np.unique(values).size:
        raise ValueError(f"k={k} exceeds the {np.unique(values).size} distinct values")
    rng = np.random.default_rng(seed)
    starts = [_optimal_1d(np.sort(values), k)] + [_kmeanspp(values, k, rng) for _ in range(n_init)]
    best = None
    for c0 in starts:
        labels, centers = _lloyd(values, np.sort(c0))
        score = _inertia(values, labels, k)
        if best is None or score < best[0] - 1e-12 * max(1.0, best[0]):
            best = (score, labels, centers)
    _, labels, centers = best
    remap = np.empty(k, dtype=int)
    remap[np.argsort(centers, kind="stable")] = np.arange(k)
    return remap[labels]


@dataclass
class GroupAssignment:
    gamma: np.ndarray  # (K, C) 0/1
    group_sizes: np.ndarray
    singleton_classes: list[int]

    @property
    def num_groups(self):
        return self.gamma.shape[0]

    @property
    def group_of_class(self) -> np.ndarray:
        return self.gamma.argmax(axis=0)

    def validate(self):
        if not np.all(self.gamma.sum(axis=0) == 1):
            raise GroupingError("every class must belong to exactly one group")
        if not np.all(self.gamma.sum(axis=1) >= 1):
            raise GroupingError("empty group")


def assignment_from_labels(group_of_class, class_counts, singletons=()) -> GroupAssignment:
    g = np.asarray(group_of_class, dtype=int)
    k = int(g.max()) + 1
    gamma = np.zeros((k, g.size), dtype=np.int64)
    gamma[g, np.arange(g.size)] = 1
    sizes = gamma @ np.asarray(class_counts, dtype=np.int64)
    ga = GroupAssignment(gamma, sizes, list(singletons))
    ga.validate()
    return ga


def build_groups(
    report: ProxyReport,
    num_groups: int,
    zero_f1_threshold: float = 0.01,
    seed: int = 0,
    count_scale: str = "log",
) -> GroupAssignment:
    """Singleton groups for classes with F1 below the threshold, k-means on counts for the rest.

    Group order: singletons by class index, then clusters by descending total size.
    """
    f1 = np.asarray(report.per_class_f1, dtype=float)
    counts = np.asarray(report.per_class_count, dtype=np.int64)
    c = f1.size
    if not 2 <= num_groups <= c:
        raise GroupingError(f"need 2 <= K <= C, got K={num_groups}, C={c}")
    singles = [i for i in range(c) if f1[i] < zero_f1_threshold]
    rest = [i for i in range(c) if f1[i] >= zero_f1_threshold]
    k_rest = num_groups - len(singles)
    if (rest and k_rest < 1) or (not rest and k_rest != 0):
        raise GroupingError(
            f"K={num_groups} incompatible with {len(singles)} near-zero-F1 classes and {len(rest)} others"
        )
    if k_rest > len(rest):
        raise GroupingError(f"cannot split {len(rest)} remaining classes into {k_rest} clusters")
    group_of = np.empty(c, dtype=int)
    for j, cls in enumerate(singles):
        group_of[cls] = j
    if rest:
        if count_scale == "log":
            feats = np.log10(np.maximum(counts[rest], 1).astype(float))
        elif count_scale == "raw":
            feats = counts[rest].astype(float)
        else:
            raise ValueError(f"unknown count_scale {count_scale!r}")
        if k_rest == len(rest):
            labels = np.arange(k_rest)
        else:
            # sorted input makes the clustering independent of class order
            order = np.argsort(feats, kind="stable")
            labels = np.empty(len(rest), dtype=int)
            labels[order] = kmeans_1d(feats[order], k_rest, seed)
        members = [[rest[i] for i in range(len(rest)) if labels[i] == j] for j in range(k_rest)]
        members.sort(key=lambda m: (-int(counts[m].sum()), min(m)))
        for j, m in enumerate(members):
            group_of[m] = len(singles) + j
    return assignment_from_labels(group_of, counts, singles)


@dataclass
class CalibrationVector:
    v: np.ndarray
    b: float


def calibration_vector(group_sizes, b: float) -> CalibrationVector:
    n = np.asarray(group_sizes, dtype=np.float64)
    if np.any(n < 1):
        raise ValueError("group sizes must be >= 1")
    if b < 0:
        raise ValueError("B must be nonnegative")
    return CalibrationVector(b / np.sqrt(n), float(b))


def groups_to_json(path, groups: GroupAssignment, report: ProxyReport, class_names, b, threshold, seed, **extra):
    payload = {
        "class_names": list(class_names),
        "per_class_f1": [float(v) for v in report.per_class_f1],
        "per_class_count": [int(v) for v in report.per_class_count],
        "singleton_classes": [int(i) for i in groups.singleton_classes],
        "group_of_class": [int(g) for g in groups.group_of_class],
        "num_groups": groups.num_groups,
        "group_sizes": [int(s) for s in groups.group_sizes],
        "B": float(b),
        "calibration": calibration_vector(groups.group_sizes, b).v.tolist(),
        "zero_f1_threshold": float(threshold),
        "seed": int(seed),
        **extra,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    with open(path, "w") as fh:
        fh.write(text)
    return payload


def groups_from_json(path):
    """Return ``(GroupAssignment, payload)`` from a groups file."""
    with open(path) as fh:
        payload = json.load(fh)
    ga = assignment_from_labels(payload["group_of_class"], payload["per_class_count"], payload["singleton_classes"])
    return ga, payload
