"""Equilibrium time, pivot selection and wall-clock predictions.

All Theta-type predictions are returned as plain products of the explicit
constants (iteration count times per-iteration time) and carry
``up_to_constant=True``; the universal constants hidden by Theta are not
recoverable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .topology import INF, NetworkSpec, SpanningTree

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class EquilibriumResult:
    value: float
    k_star: int  # number of participating workers (1-based prefix length)
    perm: tuple[int, ...]
    participating: frozenset

    @property
    def participating_sorted(self) -> list[int]:
        return sorted(self.participating)


@dataclass(frozen=True)
class ProblemConstants:
    L: float
    Delta: float
    eps: float
    sigma2: float
    M: Optional[float] = None
    R: Optional[float] = None

    def __post_init__(self):
        for name in ("L", "Delta", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


def _inv(h: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(h == 0, INF, 1.0 / h)


def prefix_values(s: float, h: Sequence[float], tau_bar: Sequence[float]):
    """Sorting permutation and the objective for every prefix length k = 1..n."""
    h = np.asarray(h, dtype=float)
    tb = np.asarray(tau_bar, dtype=float)
    if h.shape != tb.shape or h.ndim != 1:
        raise ValueError("h and tau_bar must be 1-d with equal lengths")
    if h.size == 0:
        raise ValueError("equilibrium time needs n >= 1")
    key = np.maximum(tb, h)
    perm = np.argsort(key, kind="stable")
    rate = np.cumsum(_inv(h[perm]))
    if s == 0:
        noise = np.zeros_like(rate)
    else:
        with np.errstate(divide="ignore"):
            noise = np.where(rate == 0, INF, s / np.where(rate == 0, 1.0, rate))
    return perm, np.maximum(key[perm], noise)


def equilibrium_time(s: float, h: Sequence[float], tau_bar: Sequence[float]) -> EquilibriumResult:
    """Minimize the compute/communication vs noise balance over sorted prefixes.

    Ties among prefix lengths within a 1e-12 relative band resolve to the
    largest k whose slowest member is finite.
    """
    if s < 0:
        raise ValueError("noise budget s must be nonnegative")
    perm, vals = prefix_values(s, h, tau_bar)
    key = np.maximum(np.asarray(tau_bar, float), np.asarray(h, float))[perm]
    best = float(vals.min())
    if math.isinf(best):
        finite = np.flatnonzero(np.isfinite(key))
        k = int(finite[-1]) + 1 if finite.size else 1
    else:
        tied = np.flatnonzero(vals <= best + TIE_RTOL * max(abs(best), 1e-300))
        k = int(tied[-1]) + 1
    value = float(vals[k - 1])
    perm_t = tuple(int(p) for p in perm)
    return EquilibriumResult(value, k, perm_t, frozenset(perm_t[:k]))


def pivot_distances(tau: np.ndarray, j: int, roundtrip: bool) -> np.ndarray:
    tau = np.asarray(tau)
    return tau[:, j] + tau[j, :] if roundtrip else np.array(tau[:, j])


def select_pivot(net: NetworkSpec, tau: np.ndarray, s: float,
                 roundtrip: bool = True) -> tuple[int, EquilibriumResult]:
    best_j, best = 0, None
    for j in range(net.n):
        r = equilibrium_time(s, net.h, pivot_distances(tau, j, roundtrip))
        if best is None or r.value < best.value * (1 - TIE_RTOL):
            best_j, best = j, r
    return best_j, best


# ---------------------------------------------------------------- predictions

@dataclass
class Prediction:
    method: str
    iterations: float
    per_iteration: float
    batch: Optional[int] = None
    noise_budget: Optional[float] = None
    pivot: Optional[int] = None
    participating: list = field(default_factory=list)
    k_star: Optional[int] = None
    roundtrip: Optional[bool] = None
    regime: Optional[str] = None
    up_to_constant: bool = True

    @property
    def seconds(self) -> float:
        if self.per_iteration == 0:
            return 0.0
        return self.iterations * self.per_iteration

    def to_dict(self, one_based: bool = True) -> dict:
        off = 1 if one_based else 0
        d = {
            "method": self.method,
            "seconds": _json_real(self.seconds),
            "iterations": self.iterations,
            "per_iteration": _json_real(self.per_iteration),
            "up_to_constant": self.up_to_constant,
        }
        if self.batch is not None:
            d["batch"] = self.batch
        if self.noise_budget is not None:
            d["noise_budget"] = self.noise_budget
        if self.pivot is not None:
            d["pivot"] = self.pivot + off
            d["participating"] = [p + off for p in self.participating]
            d["k_star"] = self.k_star
        if self.roundtrip is not None:
            d["distances"] = "roundtrip" if self.roundtrip else "one-way"
        if self.regime is not None:
            d["regime"] = self.regime
        return d


def _json_real(x: float):
    return "inf" if math.isinf(x) else x


def nonconvex_iterations(c: ProblemConstants) -> float:
    return 16.0 * c.L * c.Delta / c.eps


def fragile_batch(c: ProblemConstants) -> int:
    return max(math.ceil(c.sigma2 / c.eps), 1)


def amelie_batch(c: ProblemConstants, n: int) -> int:
    return max(math.ceil(c.sigma2 / c.eps), n)


def _pivot_prediction(method, net, tau, s, iterations, roundtrip, batch=None):
    j, r = select_pivot(net, tau, s, roundtrip)
    return Prediction(method, iterations, r.value, batch=batch, noise_budget=s, pivot=j,
                      participating=r.participating_sorted, k_star=r.k_star,
                      roundtrip=roundtrip)


def predict_fragile(net: NetworkSpec, tau: np.ndarray, consts: ProblemConstants,
                    roundtrip: bool = True) -> Prediction:
    S = fragile_batch(consts)
    return _pivot_prediction("fragile", net, tau, float(S), nonconvex_iterations(consts),
                             roundtrip, batch=S)


def predict_fragile_dynamic(per_iteration_bounds: Sequence[tuple[Sequence[float], Sequence[float]]],
                            S: float) -> float:
    """Sum of per-iteration equilibrium times for time-varying bounds.

    Each entry is ``(h_k, mu_k)`` with ``mu_k`` the (round-trip) tree latencies
    to the fixed pivot during iteration k.
    """
    total = 0.0
    for h_k, mu_k in per_iteration_bounds:
        if len(h_k) != len(mu_k):
            raise ValueError("per-iteration h and mu lists must have equal lengths")
        total += equilibrium_time(S, h_k, mu_k).value
    return total


def predict_minibatch(net: NetworkSpec, tau: np.ndarray, consts: ProblemConstants,
                      heterogeneous: bool = False) -> Prediction:
    # the heterogeneous bound has the same shape; the flag only labels the report
    slow = max(float(np.max(tau)), float(np.max(net.h)))
    iters = consts.L * consts.Delta / consts.eps * (1.0 + consts.sigma2 / (net.n * consts.eps))
    name = "minibatch_heterogeneous" if heterogeneous else "minibatch"
    return Prediction(name, iters, slow)


def _heterogeneous_time(net, tau, noise_ratio):
    mean_h = float(np.mean(net.h))
    noise = 0.0 if noise_ratio == 0 else noise_ratio / net.n * mean_h
    return max(float(np.max(tau)), float(np.max(net.h)), noise)


def predict_amelie(net: NetworkSpec, tau: np.ndarray, consts: ProblemConstants) -> Prediction:
    return Prediction("amelie", nonconvex_iterations(consts),
                      _heterogeneous_time(net, tau, consts.sigma2 / consts.eps),
                      batch=amelie_batch(consts, net.n))


def predict_convex(consts: ProblemConstants, net: NetworkSpec, tau: np.ndarray,
                   variant: str = "nonsmooth", setting: str = "homogeneous") -> Prediction:
    """Convex-case predictions (nonsmooth SGD or accelerated smooth SGD)."""
    if variant == "nonsmooth":
        if consts.M is None or consts.R is None:
            raise ValueError("nonsmooth predictions need M and R")
        iters = 2.0 * consts.M ** 2 * consts.R ** 2 / consts.eps ** 2
        budget = consts.sigma2 / consts.M ** 2
    elif variant == "smooth-accelerated":
        if consts.R is None:
            raise ValueError("accelerated predictions need R")
        iters = 8.0 * math.sqrt(consts.L) * consts.R / math.sqrt(consts.eps)
        budget = consts.sigma2 * consts.R / (consts.eps ** 1.5 * math.sqrt(consts.L))
    else:
        raise ValueError(f"unknown convex variant {variant!r}")
    name = f"convex_{variant}_{setting}"
    if setting == "homogeneous":
        return _pivot_prediction(name, net, tau, budget, iters, roundtrip=True)
    if setting == "heterogeneous":
        return Prediction(name, iters, _heterogeneous_time(net, tau, budget), noise_budget=budget)
    raise ValueError(f"unknown setting {setting!r}")


def lower_bound_prediction(net: NetworkSpec, tau: np.ndarray, consts: ProblemConstants) -> Prediction:
    """Homogeneous lower bound shape, including its 1/(log n + 1) factor."""
    s = consts.sigma2 / consts.eps
    j, r = select_pivot(net, tau, s, roundtrip=False)
    iters = consts.L * consts.Delta / consts.eps / (math.log(net.n) + 1.0)
    return Prediction("lower_bound", iters, r.value, noise_budget=s, pivot=j,
                      participating=r.participating_sorted, k_star=r.k_star, roundtrip=False)


def lower_bound_heterogeneous(net: NetworkSpec, tau: np.ndarray, consts: ProblemConstants) -> Prediction:
    return Prediction("lower_bound_heterogeneous", consts.L * consts.Delta / consts.eps,
                      _heterogeneous_time(net, tau, consts.sigma2 / consts.eps))


# ---------------------------------------------------------------- per-iteration bounds

def fragile_iteration_bound(S: float, h: Sequence[float], up: SpanningTree,
                            down: SpanningTree) -> float:
    """3 * t_bar with t_bar = 2 t*(S, h, mu_up + mu_down) on the trees in use."""
    mu = np.asarray(up.mu) + np.asarray(down.mu)
    return 3.0 * 2.0 * equilibrium_time(S, h, mu).value


def amelie_iteration_bound(S: float, h: Sequence[float], up: SpanningTree,
                           down: SpanningTree) -> float:
    """Broadcast, collection and all-reduce, each allowed to queue behind one counter.

    Counters share the FIFO channels with points and partial sums, so every
    tree traversal is charged twice its latency.
    """
    h = np.asarray(h, dtype=float)
    n = h.size
    mu_up, mu_down = max(up.mu), max(down.mu)
    t_bar = 2.0 * (float(h.max()) + S / n * float(h.mean()))
    return 2.0 * mu_down + (t_bar + 2.0 * mu_up) + 2.0 * (mu_up + mu_down)


# ---------------------------------------------------------------- closed forms

def _regime(q: float, n: int) -> str:
    if q <= 1:
        return "slow"
    if q < n:
        return "medium"
    return "fast"


def mesh_closed_form(N: int, side: int, h: float, rho: float, s: float) -> tuple[str, float]:
    """Per-iteration time on an N-dimensional mesh with ``side**N`` workers."""
    if N < 1 or side < 1:
        raise ValueError("mesh needs positive dimension and side")
    n = side ** N
    e = N / (N + 1.0)
    if s == 0:
        q = 0.0
    elif rho == 0:
        q = INF
    else:
        q = (s * h / rho) ** e
    tag = _regime(q, n)
    if tag == "slow":
        return tag, h + s * h
    if tag == "medium":
        return tag, h + rho ** e * (s * h) ** (1.0 / (N + 1))
    return tag, h + s * h / n


def line_closed_form(n: int, h: float, rho: float, s: float) -> tuple[str, float]:
    return mesh_closed_form(1, n, h, rho, s)


def star_closed_form(rho_to: Sequence[float], rho_from: Sequence[float], h: Sequence[float],
                     s: float) -> tuple[str, float]:
    """Best of "a leaf works alone" and "the center pivots with round trips".

    ``h`` lists the leaves first and the center last.
    """
    rho_to = np.asarray(rho_to, float)
    rho_from = np.asarray(rho_from, float)
    h = np.asarray(h, float)
    n = rho_to.size
    if h.size != n + 1:
        raise ValueError("star h needs n leaf entries plus the center")
    local = min(max(hj, s * hj) if s else hj for hj in h[:n])
    tau_bar = np.append(rho_to + rho_from, 0.0)
    center = equilibrium_time(s, h, tau_bar).value
    if local <= center:
        return "local", float(local)
    return "center", float(center)
