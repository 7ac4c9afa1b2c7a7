"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``ARGUE_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are always
importable as ``<name>_numpy`` / ``<name>_numba`` so tests and the benchmark
can compare them directly.
"""

import os

import numpy as np

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None
    HAVE_NUMBA = False

_flag = os.environ.get("ARGUE_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")


def njit(*args, **kwargs):
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    return lambda func: func


# --------------------------------------------------------------------------
# nearest centroid assignment (k-means)
# --------------------------------------------------------------------------


def nearest_center_numpy(X, C):
    """Index of the nearest row of ``C`` for each row of ``X`` and the squared distance.

    Ties go to the lowest centroid index.
    """
    n, k = X.shape[0], C.shape[0]
    best = np.full(n, np.inf)
    labels = np.zeros(n, dtype=np.int64)
    # loop over centroids keeps memory at O(n) and the summation order fixed
    for j in range(k):
        diff = X - C[j]
        d = np.einsum("ij,ij->i", diff, diff)
        closer = d < best
        best[closer] = d[closer]
        labels[closer] = j
    return labels, best


@njit(cache=True)
def _nearest_center_jit(X, C):
    n, dim = X.shape
    k = C.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        bd = np.inf
        bj = 0
        for j in range(k):
            d = 0.0
            for f in range(dim):
                t = X[i, f] - C[j, f]
                d += t * t
            if d < bd:
                bd = d
                bj = j
        labels[i] = bj
        best[i] = bd
    return labels, best


def nearest_center_numba(X, C):
    X = np.ascontiguousarray(X, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    return _nearest_center_jit(X, C)


# --------------------------------------------------------------------------
# exact null distribution of the signed-rank statistic
# --------------------------------------------------------------------------


def signed_rank_counts_numpy(doubled_ranks):
    """Number of sign assignments producing each value of 2*W+.

    ``doubled_ranks`` holds twice the (possibly averaged) ranks, so every entry
    is an integer.  Entry ``s`` of the result counts the subsets whose doubled
    rank sum equals ``s``.
    """
    d = np.asarray(doubled_ranks, dtype=np.int64)
    counts = np.zeros(int(d.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    top = 0
    for r in d:
        r = int(r)
        counts[r : top + r + 1] += counts[: top + 1].copy()
        top += r
    return counts


@njit(cache=True)
def _signed_rank_counts_jit(d):
    total = 0
    for r in d:
        total += r
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    top = 0
    for r in d:
        # descending so each subset is counted once
        for s in range(top, -1, -1):
            counts[s + r] += counts[s]
        top += r
    return counts


def signed_rank_counts_numba(doubled_ranks):
    return _signed_rank_counts_jit(np.asarray(doubled_ranks, dtype=np.int64))


# --------------------------------------------------------------------------
# tie-grouped ranking sweep (ROC / PR)
# --------------------------------------------------------------------------


def ranked_sweep_numpy(scores, labels):
    """Cumulative (tp, fp) counts after each distinct score, highest score first."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order].astype(np.int64)
    ends = np.flatnonzero(np.diff(s) != 0)
    ends = np.append(ends, s.size - 1)
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    return tp, fp


@njit(cache=True)
def _ranked_sweep_jit(s, y):
    n = s.size
    tp_out = np.empty(n, dtype=np.int64)
    fp_out = np.empty(n, dtype=np.int64)
    tp = 0
    fp = 0
    m = 0
    for i in range(n):
        if y[i]:
            tp += 1
        else:
            fp += 1
        if i == n - 1 or s[i + 1] != s[i]:
            tp_out[m] = tp
            fp_out[m] = fp
            m += 1
    return tp_out[:m], fp_out[:m]


def ranked_sweep_numba(scores, labels):
    order = np.argsort(-scores, kind="mergesort")
    s = np.ascontiguousarray(scores[order], dtype=np.float64)
    y = np.ascontiguousarray(labels[order], dtype=np.int64)
    return _ranked_sweep_jit(s, y)


# --------------------------------------------------------------------------
# leaky ReLU
# --------------------------------------------------------------------------


def leaky_relu_numpy(z, slope):
    return np.where(z > 0, z, slope * z)


def leaky_relu_grad_numpy(z, g, slope):
    return np.where(z > 0, g, slope * g)


@njit(cache=True)
def _leaky_relu_jit(z, slope):
    out = np.empty_like(z)
    zf = z.ravel()
    of = out.ravel()
    for i in range(zf.size):
        v = zf[i]
        of[i] = v if v > 0 else slope * v
    return out


@njit(cache=True)
def _leaky_relu_grad_jit(z, g, slope):
    out = np.empty_like(g)
    zf = z.ravel()
    gf = g.ravel()
    of = out.ravel()
    for i in range(zf.size):
        of[i] = gf[i] if zf[i] > 0 else slope * gf[i]
    return out


def leaky_relu_numba(z, slope):
    return _leaky_relu_jit(np.ascontiguousarray(z), slope)


def leaky_relu_grad_numba(z, g, slope):
    return _leaky_relu_grad_jit(np.ascontiguousarray(z), np.ascontiguousarray(g), slope)


if USE_NUMBA:
    nearest_center = nearest_center_numba
    signed_rank_counts = signed_rank_counts_numba
    ranked_sweep = ranked_sweep_numba
    leaky_relu = leaky_relu_numba
    leaky_relu_grad = leaky_relu_grad_numba
else:
    nearest_center = nearest_center_numpy
    signed_rank_counts = signed_rank_counts_numpy
    ranked_sweep = ranked_sweep_numpy
    leaky_relu = leaky_relu_numpy
    leaky_relu_grad = leaky_relu_grad_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
