"""Pure-numpy implementations of the hot per-batch kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
"""
import numpy as np

BACKEND = "numpy"


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def nll(probs, y, floor):
    p = probs[np.arange(probs.shape[0]), y]
    return -np.log(np.maximum(p, floor))


def softmax_xent_grad(probs, y, w):
    """Per-sample weighted gradient of ``sum_i w_i * nll_i`` w.r.t. the logits."""
    g = probs.copy()
    g[np.arange(g.shape[0]), y] -= 1.0
    g *= w[:, None]
    return g


def scaled_xent_grad(probs, target, coef):
    """``coef_i * (probs_i - target_i)`` for soft targets."""
    return coef[:, None] * (probs - target)


def relu_dropout_forward(a, scale):
    h = np.maximum(a, 0.0)
    if scale is not None:
        h *= scale
    return h


def relu_dropout_backward(dh, h, scale):
    da = np.where(h > 0.0, dh, 0.0)
    if scale is not None:
        da *= scale
    return da


def group_mean(values, g, k):
    counts = np.bincount(g, minlength=k).astype(np.float64)
    sums = np.bincount(g, weights=values, minlength=k)
    denom = counts + (counts == 0)
    return sums / denom, counts


def confusion_matrix(y_true, y_pred, c):
    idx = y_true.astype(np.int64) * c + y_pred.astype(np.int64)
    return np.bincount(idx, minlength=c * c).reshape(c, c)


def roc_sweep(sorted_scores, sorted_labels):
    """Cumulative (fp, tp) counts at each distinct threshold of descending scores.

    Returns integer arrays starting with 0; tied scores collapse into one step.
    """
    pos = sorted_labels.astype(np.int64)
    tp = np.cumsum(pos)
    fp = np.cumsum(1 - pos)
    n = sorted_scores.shape[0]
    if n == 0:
        return np.zeros(1, np.int64), np.zeros(1, np.int64)
    last = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    return np.r_[0, fp[last]], np.r_[0, tp[last]]
