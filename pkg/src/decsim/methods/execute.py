"""Replay a schedule against an objective: rebuild g^k and apply the updates."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..problems import Objective, Oracle
from ..rng import Stream
from .config import MethodConfig, Schedule


@dataclass
class AccelState:
    x: np.ndarray
    u: np.ndarray
    y: Optional[np.ndarray] = None


def accel_coefficients(k: int, gamma: float) -> tuple[float, float]:
    """(gamma_{k+1}, alpha_{k+1}) for the 0-based step k."""
    return gamma * (k + 1), 2.0 / (k + 2)


def accel_query_point(state: AccelState, k: int) -> np.ndarray:
    _, alpha = accel_coefficients(k, 0.0)
    return (1 - alpha) * state.x + alpha * state.u


def accelerated_update(state: AccelState, g: np.ndarray, s_k: float, k: int,
                       gamma: float) -> AccelState:
    gk, alpha = accel_coefficients(k, gamma)
    y = (1 - alpha) * state.x + alpha * state.u
    u = state.u - (gk / s_k) * g
    x = (1 - alpha) * state.x + alpha * u
    return AccelState(x, u, y)


@dataclass
class IterationRecord:
    k: int
    t_start: float
    t_end: float
    s_k: int
    grad_norm_sq: float
    f_value: float
    n_contributors: int
    messages: int
    counts: Optional[dict] = None   # per-worker s_i^k (heterogeneous methods)


@dataclass
class RunTrace:
    method: str
    pivot: int
    gamma: float
    records: list[IterationRecord] = field(default_factory=list)
    x_final: Optional[np.ndarray] = None
    schedule: Optional[Schedule] = None
    diverged: bool = False

    @property
    def K(self) -> int:
        return len(self.records)

    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm_sq for r in self.records])

    def times(self) -> np.ndarray:
        return np.array([r.t_start for r in self.records])

    def mean_grad_norm_sq(self) -> float:
        return float(np.mean(self.grad_norms()))

    def contributors(self) -> list[frozenset]:
        return [it.contributors for it in self.schedule.iterations]

    def time_to_reach(self, level: float) -> float:
        """Simulated time at which some x^k first has ||grad f||^2 <= level."""
        for r in self.records:
            if r.grad_norm_sq <= level:
                return r.t_start
        return float("inf")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_trace_rows(fh, self.records)


TRACE_COLUMNS = ["k", "t_start", "t_end", "s_k", "grad_norm_sq", "f_value",
                 "n_contributors", "messages"]


def write_trace_rows(fh, records: Sequence[IterationRecord]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in records:
        w.writerow([r.k, repr(r.t_start), repr(r.t_end), r.s_k, repr(r.grad_norm_sq),
                    repr(r.f_value), r.n_contributors, r.messages])


class SampleSource:
    """Oracle streams keyed by worker; one stream per (seed, worker)."""

    def __init__(self, oracles: Sequence[Oracle], seed: int):
        self.oracles = list(oracles)
        self.streams = [Stream(seed, w, "oracle", o.width, o.kind)
                        for w, o in enumerate(self.oracles)]
        self.shared = all(o is self.oracles[0] for o in self.oracles)

    def batch_sum(self, x: np.ndarray, contributions, weights=None) -> np.ndarray:
        """Sum of samples at x; with ``weights`` each worker's sum is scaled by its weight."""
        if self.shared and weights is None:
            raws = [self.streams[w].rows(a, c) for w, a, c in contributions]
            return self.oracles[0].sum_samples(x, np.concatenate(raws))
        out = np.zeros_like(x)
        grads: dict = {}
        for w, a, c in contributions:
            o = self.oracles[w]
            g = grads.get(id(o))
            if g is None:
                g = grads[id(o)] = o.obj.grad(x)
            part = o.sum_samples(x, self.streams[w].rows(a, c), g)
            out += part if weights is None else weights[w] * part
        return out


DIVERGE = 1e150


def execute(schedule: Schedule, cfg: MethodConfig, obj: Objective,
            oracles: Sequence[Oracle], gamma: Optional[float] = None,
            x0: Optional[np.ndarray] = None, stop_level: Optional[float] = None) -> RunTrace:
    """Apply the updates of ``schedule``; stops early once ||grad f(x^k)||^2 <= stop_level."""
    gamma = cfg.gamma if gamma is None else gamma
    n = schedule.n
    src = SampleSource(oracles if len(oracles) == n else list(oracles) * n, cfg.seed)
    x = np.array(obj.x0 if x0 is None else x0, dtype=float)
    state = AccelState(x.copy(), x.copy()) if cfg.accelerated else None
    trace = RunTrace(cfg.method, schedule.pivot, gamma, schedule=schedule)
    hetero = cfg.base == "amelie"
    with np.errstate(over="ignore", invalid="ignore"):
        for it in schedule.iterations:
            if state is not None:
                x = state.x
            gx = obj.grad(x)
            gn = float(gx @ gx)
            counts = {w: c for w, _, c in it.contributions} if hetero else None
            trace.records.append(IterationRecord(
                it.k, it.t_start, it.t_end, it.s_k, gn, obj.value(x),
                len(it.contributors), it.messages, counts))
            if not np.isfinite(gn) or gn > DIVERGE:
                trace.diverged = True
                break
            if stop_level is not None and gn <= stop_level:
                break
            if state is None:
                q = x
            else:
                q = accel_query_point(state, it.k) if cfg.grad_point == "y" else state.x
            if hetero:
                weights = {w: 1.0 / (n * c) for w, _, c in it.contributions}
                g, s = src.batch_sum(q, it.contributions, weights), 1.0
            else:
                g, s = src.batch_sum(q, it.contributions), float(it.s_k)
            if state is None:
                x = x - (gamma / s) * g
            else:
                state = accelerated_update(state, g, s, it.k, gamma)
    trace.x_final = state.x if state is not None else x
    return trace
