"""Shared oracles for the test suite."""

import itertools

import numpy as np

from argue.model import ArgueConfig, build, detector_gradients


def central_diff(loss, params, h=1e-5):
    """Central finite differences of ``loss()`` w.r.t. every entry of ``params`` (mutated in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss()
            flat[i] = old - h
            down = loss()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n) / np.maximum(1.0, np.abs(n))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


def random_argue(seed, input_dim=None, J=None):
    """Small random ARGUE model plus a batch with targets."""
    rng = np.random.default_rng(seed)
    d = input_dim or int(rng.integers(4, 8))
    J = J or int(rng.integers(1, 4))
    depth = int(rng.integers(1, 3))
    enc = sorted(rng.integers(2, d, size=depth).tolist(), reverse=True)
    cfg = ArgueConfig(d, enc, J, [int(rng.integers(2, 5))], [int(rng.integers(2, 5))])
    model = build(cfg, seed)
    n = int(rng.integers(2, 6))
    X = rng.uniform(-0.5, 1.5, size=(n, d))
    y = rng.integers(0, 2, size=n).astype(float)
    p = rng.dirichlet(np.ones(J + 1), size=n)
    return model, X, y, p


def argue_gradient_error(seed):
    """Worst relative error between analytic and finite-difference gradients of BCE + CCE."""
    model, X, y, p = random_argue(seed)
    res = detector_gradients(model, X, y, p, full=True)
    analytic = list(res.encoder)
    for g in res.experts:
        analytic.extend(g)
    analytic += res.alarm + res.gate
    params = model.ae_params() + model.detector_params()

    def loss():
        r = detector_gradients(model, X, y, p)
        return r.alarm_loss + r.gate_loss

    return max_rel_error(analytic, central_diff(loss, params))


# brute-force metric oracles


def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (pos.size * neg.size)


def brute_ap(s, y):
    n_pos = y.sum()
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        hit = s >= t
        tp = np.sum(y[hit])
        recall = tp / n_pos
        ap += (recall - prev_recall) * tp / hit.sum()
        prev_recall = recall
    return ap


def brute_wilcoxon(a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    mag = np.abs(d)
    ranks = np.array([np.sum(mag < m) + (np.sum(mag == m) + 1) / 2 for m in mag])
    w = ranks[d > 0].sum()
    stats = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product([0, 1], repeat=n)]
    stats = np.array(stats)
    lower = np.mean(stats <= w + 1e-9)
    upper = np.mean(stats >= w - 1e-9)
    return min(1.0, 2 * min(lower, upper))
