"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

INF = math.inf


def brute_force_tau(rho: np.ndarray) -> np.ndarray:
    """Minimum over every loop-free path, enumerated explicitly."""
    n = rho.shape[0]
    out = np.full((n, n), INF)
    for i in range(n):
        out[i, i] = 0.0
        for j in range(n):
            if i == j:
                continue
            others = [v for v in range(n) if v not in (i, j)]
            best = INF
            for r in range(len(others) + 1):
                for mid in itertools.permutations(others, r):
                    path = (i, *mid, j)
                    cost = sum(rho[a, b] for a, b in zip(path, path[1:]))
                    best = min(best, cost)
            out[i, j] = best
    return out


def exhaustive_equilibrium(s, h, tau_bar):
    """min over thresholds c of max(c, s / sum_{i: max(tau_i, h_i) <= c} 1/h_i).

    Evaluated with Fractions; a threshold admits every worker whose key is at
    most c, which is the same minimum as the sorted-prefix form.
    """
    key = [max(t, hh) for t, hh in zip(tau_bar, h)]
    best = INF
    for c in set(key):
        members = [i for i in range(len(h)) if key[i] <= c]
        if any(h[i] == 0 for i in members) or s == 0:
            noise = Fraction(0)
        else:
            rate = sum((1 / Fraction(h[i]) for i in members if math.isfinite(h[i])), Fraction(0))
            noise = INF if rate == 0 else Fraction(s) / rate
        top = Fraction(c) if math.isfinite(c) else INF
        v = max(top, noise)
        if v < best:
            best = v
    return float(best)


def gd(grad, x0, gamma, K):
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for _ in range(K):
        x = x - gamma * grad(x)
        out.append(x.copy())
    return out
