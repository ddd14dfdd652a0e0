"""Independent reference computations used by the test-suite."""
from fractions import Fraction
from itertools import product

import numpy as np

from ssvep_align.align import dan_forward, dan_loss
from ssvep_align.align.network import PARAM_NAMES


def straight_line_forward(model, x, training):
    """Per-trial, per-time-point evaluation of the network algebra with plain loops over the batch."""
    cfg = model.config
    y1 = np.stack([model.W_s @ xi + model.b_s[:, None] for xi in x])
    if training:
        mean = y1.mean(axis=(0, 2))
        var = ((y1 - mean[None, :, None]) ** 2).mean(axis=(0, 2))
    else:
        mean, var = model.bn_run_mean, model.bn_run_var
    out = []
    for yi in y1:
        h = (yi - mean[:, None]) / np.sqrt(var[:, None] + cfg.bn_eps)
        h = model.bn_gamma[:, None] * h + model.bn_beta[:, None]
        cols = []
        for t in range(h.shape[1]):
            a = model.W_1 @ h[:, t] + model.b_1
            a = np.tanh(a) if cfg.activation == "tanh" else a
            cols.append(model.W_2 @ a + model.b_2)
        out.append(np.stack(cols, axis=1))
    return np.stack(out)


def finite_difference_grads(model, x, y, h=1e-5):
    """Central differences of the training-mode loss for every parameter element."""
    def loss(m):
        return dan_loss(dan_forward(m, x, training=True)[0], y)

    grads = {}
    for name in PARAM_NAMES:
        base = getattr(model, name)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx] += h
            minus[idx] -= h
            g[idx] = (loss(model.with_arrays(**{name: plus})) - loss(model.with_arrays(**{name: minus}))) / (2 * h)
        grads[name] = g
    return grads


def relative_error(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def enumeration_pvalue(diffs):
    """Two-sided exact signed-rank p by listing all 2^n sign patterns (ranks computed by hand)."""
    d = [x for x in diffs if x != 0]
    mags = sorted(abs(x) for x in d)
    ranks = []
    for x in d:
        below = sum(1 for m in mags if m < abs(x))
        ties = sum(1 for m in mags if m == abs(x))
        ranks.append(Fraction(2 * below + ties + 1, 2))
    w_plus = sum(r for r, x in zip(ranks, d) if x > 0)
    total = sum(ranks)
    mirrored = total - w_plus
    lo, hi = min(w_plus, mirrored), max(w_plus, mirrored)
    n = len(d)
    extreme = 0
    for signs in product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w <= lo or w >= hi:
            extreme += 1
    return min(Fraction(1), Fraction(extreme, 2**n)), w_plus
