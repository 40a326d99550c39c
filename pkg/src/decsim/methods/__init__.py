"""Simulated optimization methods on a network of workers."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from ..problems import Objective, Oracle
from ..topology import NetworkSpec
from .config import (METHODS, ConfigError, IterationSchedule, MethodConfig, Schedule,
                     StepsizeRule, stepsize_for)
from .execute import (AccelState, IterationRecord, RunTrace, TRACE_COLUMNS,
                      accel_coefficients, accelerated_update, execute, write_trace_rows)
from .protocols import resolve_trees, simulate_schedule

__all__ = [
    "METHODS", "ConfigError", "MethodConfig", "Schedule", "IterationSchedule", "StepsizeRule",
    "stepsize_for", "AccelState", "IterationRecord", "RunTrace", "TRACE_COLUMNS",
    "accel_coefficients", "accelerated_update", "execute", "write_trace_rows",
    "resolve_trees", "simulate_schedule", "run_method", "run_fragile", "run_amelie",
    "run_minibatch",
]


def _oracle_list(oracle: Union[Oracle, Sequence[Oracle]], n: int) -> list[Oracle]:
    if isinstance(oracle, Oracle):
        return [oracle] * n
    lst = list(oracle)
    if len(lst) != n:
        raise ConfigError(f"need one oracle per worker ({n}), got {len(lst)}")
    return lst


def run_method(net: NetworkSpec, problem: Objective, oracle, cfg: MethodConfig,
               tau: Optional[np.ndarray] = None) -> RunTrace:
    sched = simulate_schedule(net, cfg, tau)
    sched.check_fresh()
    return execute(sched, cfg, problem, _oracle_list(oracle, net.n))


def run_fragile(net: NetworkSpec, problem: Objective, oracle, cfg: MethodConfig,
                tau=None) -> RunTrace:
    if cfg.base != "fragile":
        cfg = cfg.with_(method="fragile")
    return run_method(net, problem, oracle, cfg, tau)


def run_amelie(net: NetworkSpec, problem: Objective, cfg: MethodConfig, oracles=None,
               tau=None) -> RunTrace:
    """Heterogeneous run; ``oracles`` default to exact gradients of each component."""
    if cfg.base != "amelie":
        cfg = cfg.with_(method="amelie")
    if oracles is None:
        from ..problems import component_oracles
        oracles = component_oracles(problem, "gaussian", 0.0)
    return run_method(net, problem, oracles, cfg, tau)


def run_minibatch(net: NetworkSpec, problem: Objective, oracle, cfg: MethodConfig,
                  tau=None) -> RunTrace:
    if cfg.method != "minibatch":
        cfg = cfg.with_(method="minibatch")
    return run_method(net, problem, oracle, cfg, tau)
