"""Shared test oracles: brute-force layer references, SVM optimality checks,
and a concave-dual grid-search optimizer. Everything here is deliberately
independent of the implementation paths it cross-checks."""
from __future__ import annotations

import numpy as np

from spamvision import svm
from spamvision.dataset import LabeledSet


def conv2d_oracle(x, weights, biases):
    """Direct six-loop valid cross-correlation."""
    n, h, w, c_in = x.shape
    k = weights.shape[0]
    c_out = weights.shape[3]
    out = np.zeros((n, h - k + 1, w - k + 1, c_out))
    for b in range(n):
        for i in range(h - k + 1):
            for j in range(w - k + 1):
                for o in range(c_out):
                    acc = 0.0
                    for u in range(k):
                        for v in range(k):
                            for c in range(c_in):
                                acc += x[b, i + u, j + v, c] * weights[u, v, c, o]
                    out[b, i, j, o] = acc + biases[o]
    return out


def maxpool_oracle(x):
    """Window-max reference for 2x2 stride-2 pooling (even dims assumed)."""
    n, h, w, c = x.shape
    out = np.zeros((n, h // 2, w // 2, c))
    for b in range(n):
        for i in range(h // 2):
            for j in range(w // 2):
                for ch in range(c):
                    out[b, i, j, ch] = x[b, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2, ch].max()
    return out


def dense_oracle(x, weights, biases):
    """Naive triple-loop matrix multiply."""
    n, d_in = x.shape
    d_out = weights.shape[1]
    out = np.zeros((n, d_out))
    for b in range(n):
        for o in range(d_out):
            acc = 0.0
            for i in range(d_in):
                acc += x[b, i] * weights[i, o]
            out[b, o] = acc + biases[o]
    return out


def kkt_violation(model: svm.SvmModel, x, labels, tol: float) -> float:
    """Worst violation of the optimality conditions over the training set.

    alpha = 0     requires y f(x) >= 1 - tol
    0 < alpha < C requires |y f(x) - 1| <= tol
    alpha = C     requires y f(x) <= 1 + tol
    Returns the largest amount by which a condition is exceeded (0 = clean).
    """
    y = np.where(np.asarray(labels) == 1, 1.0, -1.0)
    x = np.asarray(x, dtype=np.float64)
    c = model.c
    # recover alpha per training point from the stored duals where possible
    alphas = np.zeros(x.shape[0])
    for sv, dual in zip(model.support_vectors, model.duals):
        matches = np.where(np.all(np.isclose(x, sv, atol=1e-12), axis=1))[0]
        if matches.size:
            alphas[matches[0]] += abs(dual)
    worst = 0.0
    for i in range(x.shape[0]):
        margin = y[i] * svm.decision(model, x[i])
        a = alphas[i]
        if a <= tol:
            worst = max(worst, (1.0 - tol) - margin)
        elif a >= c - tol:
            worst = max(worst, margin - (1.0 + tol))
        else:
            worst = max(worst, abs(margin - 1.0) - tol)
    return max(worst, 0.0)


def box_and_balance(model: svm.SvmModel) -> tuple:
    """(worst box-constraint violation of |dual| in [0, C], |sum duals|)."""
    mags = np.abs(model.duals)
    box = max(0.0, float((-mags).max(initial=0.0)), float((mags - model.c).max(initial=0.0)))
    return box, abs(float(model.duals.sum()))


def separable_four_points(seed: int):
    """Two points per class in 2-d with a unit gap along x."""
    rng = np.random.default_rng(seed)
    neg = np.column_stack([rng.uniform(-3.0, -1.0, 2), rng.uniform(-2.0, 2.0, 2)])
    pos = np.column_stack([rng.uniform(1.0, 3.0, 2), rng.uniform(-2.0, 2.0, 2)])
    x = np.vstack([neg, pos])
    y = np.array([0, 0, 1, 1])
    return LabeledSet(x=x, y=y)


def grid_search_svm(x, labels, c: float, step: float = 1e-3):
    """Maximize the SVM dual over the [0, C]^4 lattice projected onto the
    equality constraint. The dual is concave, so coarse-to-fine refinement
    onto the final ``step`` lattice reaches the same optimum as a full sweep.
    Returns (alphas, bias). Linear kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.where(np.asarray(labels) == 1, 1.0, -1.0)
    k = x @ x.T

    def best_on(grids):
        a1, a2, a3 = np.meshgrid(*grids, indexing="ij")
        a4 = -(a1 * y[0] + a2 * y[1] + a3 * y[2]) * y[3]
        feasible = (a4 >= -1e-9) & (a4 <= c + 1e-9)
        stacked = np.stack([a1, a2, a3, np.clip(a4, 0.0, c)], axis=-1)
        ay = stacked * y
        vals = stacked.sum(-1) - 0.5 * np.einsum("...i,...j,ij->...", ay, ay, k)
        vals = np.where(feasible, vals, -np.inf)
        idx = np.unravel_index(np.argmax(vals), vals.shape)
        return stacked[idx]

    coarse = np.linspace(0.0, c, 101)  # resolution c/100
    best = best_on([coarse] * 3)
    for res in (c / 1000.0, step):
        grids = []
        for i in range(3):
            lo = max(0.0, best[i] - 12 * res)
            hi = min(c, best[i] + 12 * res)
            start = np.ceil(lo / res)
            stop = np.floor(hi / res)
            grids.append(np.arange(start, stop + 1) * res)
        best = best_on(grids)

    alphas = best
    f_wo_bias = (alphas * y) @ k
    free = (alphas > 10 * step) & (alphas < c - 10 * step)
    if free.any():
        bias = float(np.mean(y[free] - f_wo_bias[free]))
    else:
        bias = float(np.mean(y - f_wo_bias))
    return alphas, bias


def grid_decision(alphas, bias, x, labels, probe):
    y = np.where(np.asarray(labels) == 1, 1.0, -1.0)
    return float((alphas * y) @ (x @ probe) + bias)
