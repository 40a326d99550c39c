"""Monte-Carlo level game for the time lower bound.

y^0_i = 0 and y^t_j = min_i (y^{t-1}_i + h_i eta^t_i + tau_{i->j}) with
eta ~ Geometric(p) on {1, 2, ...}; the game value is y^T = min_j y^T_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .equilibrium import equilibrium_time
from .rng import generator_for

TRIANGLE_RTOL = 1e-12


class LevelGameError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LevelGameParams:
    h: np.ndarray
    tau: np.ndarray
    p: float
    T: int

    def __init__(self, h: Sequence[float], tau, p: float, T: int):
        h = np.array(h, dtype=float)
        tau = np.array(tau, dtype=float)
        n = h.size
        if h.ndim != 1 or n == 0:
            raise LevelGameError("h must be a nonempty vector")
        if tau.shape != (n, n):
            raise LevelGameError(f"tau must be {n}x{n}")
        if np.isnan(h).any() or np.isnan(tau).any() or (h < 0).any() or (tau < 0).any():
            raise LevelGameError("h and tau must be nonnegative")
        if not 0 < p <= 1:
            raise LevelGameError("p must lie in (0, 1]")
        if int(T) != T or T < 1:
            raise LevelGameError("T must be a positive integer")
        if np.any(np.diag(tau) != 0):
            raise LevelGameError("tau must have a zero diagonal")
        # tau[i, j] <= tau[i, k] + tau[k, j]
        via = (tau[:, :, None] + tau[None, :, :]).min(axis=1)
        with np.errstate(invalid="ignore"):
            bad = tau > via * (1 + TRIANGLE_RTOL)
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise LevelGameError(f"tau violates the triangle inequality at ({i + 1}, {j + 1})")
        h.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "p", float(p))
        object.__setattr__(self, "T", int(T))

    @property
    def n(self) -> int:
        return self.h.size


def geometric_from_uniform(u: np.ndarray, p: float) -> np.ndarray:
    """Inverse CDF of Geometric(p) on {1, 2, ...}; ``u`` must lie in (0, 1]."""
    if p >= 1.0:
        return np.ones_like(u)
    eta = np.ceil(np.log(u) / math.log1p(-p))
    return np.maximum(eta, 1.0)


def _uniforms(seed: int, index: int, shape) -> np.ndarray:
    g = generator_for(seed, index, "level")
    return 1.0 - g.random(shape)


def level_times_from_eta(params: LevelGameParams, eta: np.ndarray) -> np.ndarray:
    """Exact recursion for a batch of coin sequences ``eta`` of shape (m, T, n)."""
    m = eta.shape[0]
    h, tau = params.h, params.tau
    y = np.zeros((m, params.n))
    with np.errstate(invalid="ignore"):
        for t in range(params.T):
            z = y + h * eta[:, t, :]
            z = np.where(np.isnan(z), math.inf, z)
            y = (z[:, :, None] + tau[None, :, :]).min(axis=1)
    return y.min(axis=1)


def sample_level_times(params: LevelGameParams, num_samples: int, seed: int = 0,
                       first: int = 0, batch: int = 2048) -> np.ndarray:
    """Samples ``first .. first+num_samples-1``; sample i uses its own keyed stream."""
    out = np.empty(num_samples)
    shape = (params.T, params.n)
    for lo in range(0, num_samples, batch):
        hi = min(num_samples, lo + batch)
        u = np.stack([_uniforms(seed, first + i, shape) for i in range(lo, hi)])
        out[lo:hi] = level_times_from_eta(params, geometric_from_uniform(u, params.p))
    return out


def sample_level_time(params: LevelGameParams, seed: int = 0, index: int = 0) -> float:
    return float(sample_level_times(params, 1, seed, first=index)[0])


@dataclass(frozen=True)
class Threshold:
    t_bar: tuple
    s: float
    t: float


def lemma_threshold(params: LevelGameParams) -> Threshold:
    n = params.n
    t_bar = tuple(equilibrium_time(1.0 / params.p, params.h, params.tau[:, j]).value / 8.0
                  for j in range(n))
    m = min(t_bar)
    s = math.log(8 * n) / m if m > 0 else math.inf
    t = (params.T - math.log(n) - math.log(2)) / s
    return Threshold(t_bar, s, max(0.0, t) if math.isfinite(t) else 0.0)


def lemma_f1_sums(params: LevelGameParams, t_bar: Optional[Sequence[float]] = None) -> np.ndarray:
    """Left-hand side p * sum_i floor(t_bar_j / h_i) 1[tau_{i->j} <= t_bar_j] for every j."""
    if t_bar is None:
        t_bar = lemma_threshold(params).t_bar
    h, tau, p = params.h, params.tau, params.p
    out = np.empty(params.n)
    for j, tb in enumerate(t_bar):
        if tb == 0:
            out[j] = 0.0
            continue
        with np.errstate(divide="ignore"):
            q = np.floor(np.where(h == 0, math.inf, tb / np.where(h == 0, 1.0, h)))
        mask = tau[:, j] <= tb
        out[j] = p * float(q[mask].sum())
    return out


def check_lemma_f1(params: LevelGameParams, t_bar: Optional[Sequence[float]] = None,
                   rtol: float = 1e-12) -> bool:
    return bool(np.all(lemma_f1_sums(params, t_bar) <= 0.125 * (1 + rtol)))


def empirical_quantile(params: LevelGameParams, num_samples: int, threshold: float,
                       seed: int = 0) -> float:
    ys = sample_level_times(params, num_samples, seed)
    return float(np.mean(ys <= threshold))
