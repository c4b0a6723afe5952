"""Independent reference implementations used as test oracles."""
import itertools

import mpmath
import numpy as np

from gdrcil import nn


def blob_view(counts=(60, 40, 20), dim=2, sep=4.0, seed=0, val_frac=0.3):
    """Small well-separated training view for fast end-to-end checks."""
    from gdrcil.data import Subset, TrainingView

    r = np.random.default_rng(seed)
    xs, ys = [], []
    for c, n in enumerate(counts):
        center = np.zeros(dim)
        center[c % dim] = sep * (1 + c // dim)
        xs.append(r.normal(center, 0.5, size=(n, dim)))
        ys.append(np.full(n, c))
    x, y = np.vstack(xs), np.concatenate(ys)
    order = r.permutation(len(y))
    x, y = x[order], y[order]
    x = (x - x.mean(axis=0)) / x.std(axis=0)  # the pipeline always standardises
    nv = int(len(y) * val_frac)
    names = [f"c{i}" for i in range(len(counts))]
    return TrainingView(Subset(x[nv:], y[nv:]), Subset(x[:nv], y[:nv]), names)


def fd_gradients(params, x, y, w, h=1e-5, dropout_rate=0.0, seed=None):
    """Central finite differences of ``sum_i w_i * nll_i`` for every parameter entry.

    With dropout, the same rng seed is replayed for every evaluation so the
    masks stay fixed.
    """
    def loss():
        rng = None if seed is None else np.random.default_rng(seed)
        probs, _ = nn.forward(params, x, dropout_rate, rng)
        return float(w @ nn.per_sample_nll(probs, y))

    out = []
    for tensor in [*params.weights, *params.biases]:
        g = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            old = tensor[idx]
            tensor[idx] = old + h
            up = loss()
            tensor[idx] = old - h
            down = loss()
            tensor[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric):
    """Largest per-tensor ``|a - n| / max(|a|, |n|)`` in the Frobenius norm."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        if scale > 0:
            worst = max(worst, float(np.linalg.norm(a - n) / scale))
    return worst


def mp_update(omega, losses, v, beta, dps=50):
    """Exponentiated weight step in 50-digit arithmetic, no max shift."""
    with mpmath.workdps(dps):
        w = [mpmath.mpf(o) * mpmath.exp(mpmath.mpf(beta) * (mpmath.mpf(l) + mpmath.mpf(c)))
             for o, l, c in zip(omega, losses, v)]
        s = mpmath.fsum(w)
        return np.array([float(x / s) for x in w])


def brute_confusion(pred, labels, c):
    tp, fp, tn, fn = (np.zeros(c, dtype=np.int64) for _ in range(4))
    for k in range(c):
        for p, t in zip(pred, labels):
            if p == k and t == k:
                tp[k] += 1
            elif p == k:
                fp[k] += 1
            elif t == k:
                fn[k] += 1
            else:
                tn[k] += 1
    return tp, fp, tn, fn


def pair_auc(scores, labels):
    """Share of positive/negative pairs ranked correctly, ties counting one half."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def exhaustive_partition_sse(values, k):
    """Minimum within-cluster sum of squares over every assignment of points to k labels."""
    values = np.asarray(values, dtype=float)
    best = np.inf
    for labels in itertools.product(range(k), repeat=values.size):
        labels = np.asarray(labels)
        if np.unique(labels).size != k:
            continue
        sse = sum(((values[labels == j] - values[labels == j].mean()) ** 2).sum() for j in range(k))
        best = min(best, sse)
    return best


def contiguous_partition_sse(values, k):
    """Same optimum restricted to contiguous runs of the sorted values (optimal in 1-D)."""
    v = np.sort(np.asarray(values, dtype=float))
    best = np.inf
    for cuts in itertools.combinations(range(1, v.size), k - 1):
        parts = np.split(v, cuts)
        best = min(best, sum(((p - p.mean()) ** 2).sum() for p in parts))
    return best


def sse(values, labels):
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels)
    return sum(((values[labels == j] - values[labels == j].mean()) ** 2).sum() for j in np.unique(labels))
