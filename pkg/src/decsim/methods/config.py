from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

from ..equilibrium import ProblemConstants

METHODS = ("fragile", "amelie", "minibatch", "accel_fragile", "accel_amelie")


class ConfigError(ValueError):
    """Invalid method configuration or an infeasible network for the method."""


class StepsizeRule(str, Enum):
    NONCONVEX = "nonconvex"            # gamma = 1/(2L), homogeneous and heterogeneous
    NONSMOOTH = "convex-nonsmooth"     # gamma = eps / (M^2 + sigma^2/S)
    ACCELERATED = "convex-accelerated"  # gamma = min{1/(4L), sqrt(3 R^2 S / (4 sigma^2 (K+1)(K+2)^2))}


def stepsize_for(rule: Union[StepsizeRule, str], consts: ProblemConstants, S: int,
                 K: Optional[int] = None) -> float:
    rule = StepsizeRule(rule)
    if rule is StepsizeRule.NONCONVEX:
        return 1.0 / (2.0 * consts.L)
    if rule is StepsizeRule.NONSMOOTH:
        if consts.M is None:
            raise ConfigError("nonsmooth stepsize needs M")
        denom = consts.M ** 2 + consts.sigma2 / S
        if denom == 0:
            raise ConfigError("M and sigma2 are both zero")
        return consts.eps / denom
    if consts.R is None or K is None:
        raise ConfigError("accelerated stepsize needs R and K")
    first = 1.0 / (4.0 * consts.L)
    if consts.sigma2 == 0:
        return first
    second = math.sqrt(3.0 * consts.R ** 2 * S / (4.0 * consts.sigma2 * (K + 1) * (K + 2) ** 2))
    return min(first, second)


@dataclass
class MethodConfig:
    method: str = "fragile"
    gamma: float = 0.5
    S: int = 1
    K: int = 100
    pivot: Union[int, str] = "auto"
    trees: Union[str, dict] = "shortest-path"
    seed: int = 0
    jitter: float = 1.0                 # compute time = U * h with U ~ Uniform[jitter, 1]
    announce_kmax: bool = False         # also send empty messages that only carry a newer k_max
    grad_point: str = "y"               # accelerated variants: "y" or "x"
    until: float = math.inf             # simulated-time horizon
    max_events: int = 50_000_000
    log_events: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def base(self) -> str:
        return {"accel_fragile": "fragile", "accel_amelie": "amelie"}.get(self.method, self.method)

    @property
    def accelerated(self) -> bool:
        return self.method.startswith("accel_")

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ConfigError("gamma must be a finite nonnegative real")
        if int(self.S) != self.S or self.S < 1:
            raise ConfigError("S must be a positive integer")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError("K must be a positive integer")
        if not (0.0 <= self.jitter <= 1.0):
            raise ConfigError("jitter lower bound must lie in [0, 1]")
        if self.grad_point not in ("x", "y"):
            raise ConfigError("grad_point must be 'x' or 'y'")
        if not (isinstance(self.pivot, int) or self.pivot == "auto"):
            raise ConfigError("pivot must be an index or 'auto'")
        if not (self.until > 0):
            raise ConfigError("until must be positive")
        if self.trees != "shortest-path" and not isinstance(self.trees, dict):
            raise ConfigError("trees must be 'shortest-path' or explicit next lists")

    def with_(self, **kw) -> "MethodConfig":
        return replace(self, **kw)


@dataclass
class IterationSchedule:
    """Timing and sample provenance of one update.

    ``contributions`` lists ``(worker, first_sample, count)``; the samples of
    a worker are consecutive counters of its oracle stream.
    """

    k: int
    t_start: float
    t_end: float
    contributions: list[tuple[int, int, int]]
    messages: int

    @property
    def s_k(self) -> int:
        return sum(c for _, _, c in self.contributions)

    @property
    def contributors(self) -> frozenset:
        return frozenset(w for w, _, c in self.contributions if c > 0)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class Schedule:
    method: str
    n: int
    pivot: int
    S: int
    iterations: list[IterationSchedule] = field(default_factory=list)
    task_points: list[list[int]] = field(default_factory=list)  # per worker: point index per task
    events: int = 0
    messages: int = 0
    end_time: float = 0.0
    event_log: Optional[list] = None
    up: object = None
    down: object = None

    def check_fresh(self) -> None:
        """Every sample entering g^k was computed at x^k."""
        for it in self.iterations:
            for w, start, count in it.contributions:
                pts = self.task_points[w][start:start + count]
                if len(pts) != count or any(p != it.k for p in pts):
                    raise AssertionError(f"stale or missing sample in iteration {it.k} "
                                         f"from worker {w}")


def contributors_sequence(sched: Schedule) -> list[int]:
    return [len(it.contributors) for it in sched.iterations]

