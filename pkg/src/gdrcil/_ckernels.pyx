# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the per-batch kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fmax, log

cnp.import_array()

BACKEND = "cython"


def softmax(const double[:, :] logits):
    cdef Py_ssize_t n = logits.shape[0], c = logits.shape[1], i, j
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double m, s
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(c):
            out[i, j] = exp(logits[i, j] - m)
            s += out[i, j]
        for j in range(c):
            out[i, j] = out[i, j] / s
    return out_arr


def nll(const double[:, :] probs, const cnp.int64_t[:] y, double floor):
    cdef Py_ssize_t n = probs.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double p
    for i in range(n):
        p = probs[i, y[i]]
        if p < floor:
            p = floor
        out[i] = -log(p)
    return out_arr


def softmax_xent_grad(const double[:, :] probs, const cnp.int64_t[:] y, const double[:] w):
    cdef Py_ssize_t n = probs.shape[0], c = probs.shape[1], i, j
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double wi
    for i in range(n):
        wi = w[i]
        for j in range(c):
            out[i, j] = probs[i, j] * wi
        out[i, y[i]] = (probs[i, y[i]] - 1.0) * wi
    return out_arr


def scaled_xent_grad(const double[:, :] probs, const double[:, :] target, const double[:] coef):
    cdef Py_ssize_t n = probs.shape[0], c = probs.shape[1], i, j
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(c):
            out[i, j] = coef[i] * (probs[i, j] - target[i, j])
    return out_arr


def relu_dropout_forward(a, scale):
    # flat contiguous loops with a branch-free max so the compiler can vectorise
    out_arr = np.empty_like(a, dtype=np.float64)
    cdef const double[::1] av = np.ravel(a)
    cdef double[::1] out = out_arr.reshape(-1)
    cdef const double[::1] s
    cdef Py_ssize_t i, n = av.shape[0]
    if scale is None:
        for i in range(n):
            out[i] = fmax(av[i], 0.0)
    else:
        s = np.ravel(scale)
        for i in range(n):
            out[i] = fmax(av[i], 0.0) * s[i]
    return out_arr


def relu_dropout_backward(dh, h, scale):
    out_arr = np.empty_like(dh, dtype=np.float64)
    cdef const double[::1] dv = np.ravel(dh)
    cdef const double[::1] hv = np.ravel(h)
    cdef double[::1] out = out_arr.reshape(-1)
    cdef const double[::1] s
    cdef Py_ssize_t i, n = dv.shape[0]
    if scale is None:
        for i in range(n):
            out[i] = dv[i] if hv[i] > 0.0 else 0.0
    else:
        s = np.ravel(scale)
        for i in range(n):
            out[i] = (dv[i] if hv[i] > 0.0 else 0.0) * s[i]
    return out_arr


def group_mean(const double[:] values, const cnp.int64_t[:] g, Py_ssize_t k):
    cdef Py_ssize_t n = values.shape[0], i
    sums_arr = np.zeros(k, dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.float64)
    cdef double[::1] sums = sums_arr
    cdef double[::1] counts = counts_arr
    for i in range(n):
        sums[g[i]] += values[i]
        counts[g[i]] += 1.0
    for i in range(k):
        if counts[i] > 0.0:
            sums[i] = sums[i] / counts[i]
    return sums_arr, counts_arr


def confusion_matrix(const cnp.int64_t[:] y_true, const cnp.int64_t[:] y_pred, Py_ssize_t c):
    cdef Py_ssize_t n = y_true.shape[0], i
    out_arr = np.zeros((c, c), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    for i in range(n):
        out[y_true[i], y_pred[i]] += 1
    return out_arr


def roc_sweep(const double[:] sorted_scores, const cnp.int64_t[:] sorted_labels):
    cdef Py_ssize_t n = sorted_scores.shape[0], i, k = 1
    fp_arr = np.zeros(n + 1, dtype=np.int64)
    tp_arr = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] fp = fp_arr
    cdef cnp.int64_t[::1] tp = tp_arr
    cdef cnp.int64_t cf = 0, ct = 0
    for i in range(n):
        if sorted_labels[i]:
            ct += 1
        else:
            cf += 1
        if i == n - 1 or sorted_scores[i + 1] != sorted_scores[i]:
            fp[k] = cf
            tp[k] = ct
            k += 1
    return fp_arr[:k], tp_arr[:k]
