"""Independent reference implementations used as test oracles.

Everything here is written straight from the definitions with plain loops
and no reuse of library internals, so agreement with the library is
meaningful.
"""

import math
from fractions import Fraction

import numpy as np


# -- filtering ---------------------------------------------------------------


def naf_bruteforce(images, concepts, cross_triples):
    """Score every image and run the greedy cover by full scans of the triple list.

    ``cross_triples`` is a list of (image, relation, concept). Returns
    (scores dict, ordered selection, covered set).

    Images are ordered by the exact value of ``prod(M / n)`` so that
    mathematically equal scores tie; floats are reported as the plain sum of
    the per-pair logarithms.
    """
    M = len(images)
    scores, exact = {}, {}
    for m in images:
        pairs = sorted({(r, c) for (mm, r, c) in cross_triples if mm == m})
        terms, value = [], Fraction(1)
        for r, c in pairs:
            n = len({mm for (mm, rr, cc) in cross_triples if rr == r and cc == c})
            terms.append(math.log(M / n))
            value *= Fraction(M, n)
        scores[m] = sum(terms)
        exact[m] = value
    order = sorted(images, key=lambda m: (-exact[m], m))
    target = {c for (_, _, c) in cross_triples}
    selected, covered = [], set()
    for m in order:
        if covered == target:
            break
        selected.append(m)
        covered |= {c for (mm, _, c) in cross_triples if mm == m}
    return scores, selected, covered


# -- ranking -------------------------------------------------------------------


def rank_by_sort(scores, true_idx):
    """Mid rank of ``true_idx``: sort descending, find the block of equal scores."""
    scores = list(scores)
    s = scores[true_idx]
    ordered = sorted(scores, reverse=True)
    first = ordered.index(s)  # 0-based position of the first equal score
    last = len(ordered) - 1 - ordered[::-1].index(s)
    tied_others = last - first
    return first + 1 + tied_others // 2


# -- model scores ----------------------------------------------------------------


def naive_score(kind, P, h, r, t):
    """Straight-line score of one triple from the parameter dict ``P``."""
    if kind == "transe":
        x = P["entity"][h] + P["relation"][r] - P["entity"][t]
        return -math.sqrt(sum(v * v for v in x))
    if kind == "transh":
        w = P["normal"][r]
        def perp(x):
            return x - np.dot(w, x) * w
        x = perp(P["entity"][h]) + P["relation"][r] - perp(P["entity"][t])
        return -float(np.sum(x ** 2))
    if kind == "transr":
        Mr = P["projection"][r]
        x = Mr @ P["entity"][h] + P["relation"][r] - Mr @ P["entity"][t]
        return -float(np.sum(x ** 2))
    if kind == "transd":
        rp = P["relation_proj"][r]
        def perp(e):
            return P["entity"][e] + np.dot(P["entity_proj"][e], P["entity"][e]) * rp
        x = perp(h) + P["relation"][r] - perp(t)
        return -float(np.sum(x ** 2))
    if kind == "rotate":
        hc = P["entity_re"][h] + 1j * P["entity_im"][h]
        tc = P["entity_re"][t] + 1j * P["entity_im"][t]
        rc = np.exp(1j * P["phase"][r])
        return -math.sqrt(float(np.sum(np.abs(hc * rc - tc) ** 2)))
    if kind == "rescal":
        W = P["relation_matrix"][r]
        eh, et = P["entity"][h], P["entity"][t]
        return float(sum(eh[i] * W[i, j] * et[j] for i in range(len(eh)) for j in range(len(et))))
    if kind == "distmult":
        return float(np.sum(P["entity"][h] * P["relation"][r] * P["entity"][t]))
    if kind == "complex":
        hc = P["entity_re"][h] + 1j * P["entity_im"][h]
        rc = P["relation_re"][r] + 1j * P["relation_im"][r]
        tc = P["entity_re"][t] + 1j * P["entity_im"][t]
        return float(np.real(np.sum(hc * rc * np.conj(tc))))
    if kind == "simple":
        H, T = P["entity_head"], P["entity_tail"]
        a = np.sum(H[h] * P["relation"][r] * T[t])
        b = np.sum(H[t] * P["relation_inv"][r] * T[h])
        return float(0.5 * (a + b))
    if kind == "tucker":
        W = P["core"]
        eh, rr, et = P["entity"][h], P["relation"][r], P["entity"][t]
        d = len(eh)
        return float(sum(W[i, j, k] * eh[i] * rr[j] * et[k] for i in range(d) for j in range(d) for k in range(d)))
    if kind == "mure":
        x = P["relation_scale"][r] * P["entity"][h] - (P["entity"][t] + P["relation"][r])
        return -float(np.sum(x ** 2)) + P["bias"][h] + P["bias"][t]
    raise KeyError(kind)


# -- gradients -------------------------------------------------------------------


def finite_difference_check(state, h, r, t, step=1e-5, floor=1e-3):
    """Worst relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    coordinates whose true derivative is ~0 from dividing by round-off.
    """
    grad = state.grad([h], [r], [t], 1.0)
    worst = 0.0
    for name, (idx, vals) in grad.items():
        P = state.params[name]
        rows = [(None, vals)] if idx is None else list(zip(idx.tolist(), vals))
        for row, v in rows:
            v = np.asarray(v)
            for c in np.ndindex(v.shape):
                full = c if row is None else (row,) + c
                old = P[full]
                P[full] = old + step
                up = state.score_triple(h, r, t)
                P[full] = old - step
                down = state.score_triple(h, r, t)
                P[full] = old
                fd = (up - down) / (2 * step)
                an = float(v[c])
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), floor))
    return worst


# -- optimizer -----------------------------------------------------------------


def adamw_scalar(theta, grads, lr, wd, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar decoupled-weight-decay Adam trace."""
    m = v = 0.0
    trace = []
    for step, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** step)
        vhat = v / (1 - beta2 ** step)
        theta = theta - lr * (mhat / (math.sqrt(vhat) + eps) + wd * theta)
        trace.append(theta)
    return trace
