"""Experiment configuration: JSON schema checks, overrides and object construction.

Indices in configuration files are 1-based; everything internal is 0-based.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .equilibrium import ProblemConstants, amelie_batch, fragile_batch, nonconvex_iterations
from .methods import ConfigError, MethodConfig, StepsizeRule, stepsize_for
from .problems import Objective, Oracle, ProblemError, ProblemSpec, problem_from_dict
from .topology import NetworkSpec, TopologyError, network_from_dict, parse_real

TOP_KEYS = {"network", "problem", "methods", "method", "constants", "seeds", "sweep",
            "lowerbound", "output", "name", "gamma", "stepsize_rule", "S", "K", "pivot",
            "seed", "jitter", "grad_point", "until", "trees", "announce_kmax", "max_events",
            "label"}
METHOD_KEYS = {"method", "gamma", "stepsize_rule", "S", "K", "pivot", "seed", "jitter",
               "grad_point", "until", "trees", "announce_kmax", "max_events", "label"}
CONSTANT_KEYS = {"L", "Delta", "eps", "sigma2", "M", "R"}
SWEEP_KEYS = {"axes", "select", "target", "top", "aggregate"}
LOWERBOUND_KEYS = {"p", "T", "num_samples", "seed"}

CONFIG_ERRORS = (ConfigError, ProblemError, TopologyError, ValueError, KeyError, TypeError)


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """``a.b.0.c=value``: nested keys, list indices, JSON-or-string values."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    path, raw = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for k in keys[:-1]:
        if isinstance(node, list):
            node = node[int(k)]
        else:
            node = node.setdefault(k, {})
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = parse_value(raw)
    else:
        node[last] = parse_value(raw)


def load_config(path: str, overrides: Optional[list[str]] = None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    for o in overrides or []:
        apply_override(cfg, o)
    return cfg


@dataclass
class Experiment:
    raw: dict
    net: NetworkSpec
    problem: Optional[ProblemSpec]
    methods: list[dict]
    consts: Optional[dict]
    seeds: list[int]
    sweep: Optional[dict]
    lowerbound: Optional[dict]
    output: str = "out"
    name: str = "experiment"
    _built: dict = field(default_factory=dict, repr=False)

    def build_problem(self, net: Optional[NetworkSpec] = None) -> tuple[Objective, list[Oracle]]:
        net = net or self.net
        if self.problem is None:
            raise ConfigError("this command needs a 'problem' section")
        key = (net.n, id(self.problem))
        if key not in self._built:
            self._built[key] = self.problem.build(net.n)
        return self._built[key]

    def constants(self, obj: Optional[Objective] = None) -> ProblemConstants:
        c = dict(self.consts or {})
        if obj is not None:
            c.setdefault("L", obj.L)
            c.setdefault("Delta", obj.delta)
            if self.problem is not None and self.problem.oracle == "gaussian":
                c.setdefault("sigma2", self.problem.sigma2)
        for k in ("L", "Delta", "eps", "sigma2"):
            if k not in c:
                raise ConfigError(f"constants.{k} is required")
        return ProblemConstants(**{k: (None if v is None else parse_real(v)) for k, v in c.items()})

    def method_config(self, m: dict, seed: int, obj: Optional[Objective] = None,
                      n: Optional[int] = None) -> MethodConfig:
        return method_config_from_dict(m, seed, self, obj, n or self.net.n)


def method_config_from_dict(m: dict, seed: int, exp: Experiment, obj, n: int) -> MethodConfig:
    method = m.get("method", "fragile")
    kw: dict[str, Any] = {"method": method, "seed": int(m.get("seed", seed))}
    needs_consts = (m.get("S") == "auto" or m.get("K") == "auto" or "stepsize_rule" in m)
    consts = exp.constants(obj) if needs_consts else None
    S = m.get("S", 1)
    if S == "auto":
        S = amelie_batch(consts, n) if method in ("amelie", "accel_amelie") else fragile_batch(consts)
    kw["S"] = int(S)
    K = m.get("K", 100)
    if K == "auto":
        K = math.ceil(nonconvex_iterations(consts))
    kw["K"] = int(K)
    if "gamma" in m and "stepsize_rule" in m:
        raise ConfigError("give either gamma or stepsize_rule, not both")
    if "stepsize_rule" in m:
        kw["gamma"] = stepsize_for(StepsizeRule(m["stepsize_rule"]), consts, kw["S"], kw["K"])
    else:
        kw["gamma"] = float(m.get("gamma", 0.5))
    pivot = m.get("pivot", "auto")
    if pivot != "auto":
        if not isinstance(pivot, int) or isinstance(pivot, bool):
            raise ConfigError("pivot must be a 1-based integer or 'auto'")
        if not 1 <= pivot <= n:
            raise ConfigError(f"pivot {pivot} out of range 1..{n}")
        pivot -= 1
    kw["pivot"] = pivot
    trees = m.get("trees", "shortest-path")
    if isinstance(trees, dict):
        _reject_unknown(trees, {"st", "st_bc"}, "trees")
        trees = {k: [-1 if v is None or v == 0 else int(v) - 1 for v in trees[k]] for k in trees}
    kw["trees"] = trees
    for key in ("jitter", "until"):
        if key in m:
            kw[key] = parse_real(m[key])
    for key in ("grad_point",):
        if key in m:
            kw[key] = str(m[key])
    if "announce_kmax" in m:
        kw["announce_kmax"] = bool(m["announce_kmax"])
    if "max_events" in m:
        kw["max_events"] = int(m["max_events"])
    return MethodConfig(**kw)


def method_label(m: dict, index: int) -> str:
    return str(m.get("label") or m.get("method", "fragile"))


def parse_experiment(cfg: dict) -> Experiment:
    cfg = copy.deepcopy(cfg)
    _reject_unknown(cfg, TOP_KEYS, "config")
    if "network" not in cfg:
        raise ConfigError("config needs a 'network' section")
    net = network_from_dict(cfg["network"])
    problem = None
    if "problem" in cfg:
        problem = problem_from_dict(cfg["problem"])
    if "methods" in cfg and "method" in cfg:
        raise ConfigError("use either 'methods' (list) or a single top-level 'method'")
    if "methods" in cfg:
        methods = cfg["methods"]
        if not isinstance(methods, list) or not methods:
            raise ConfigError("'methods' must be a nonempty list")
        for extra in METHOD_KEYS - {"method", "seed"}:
            if extra in cfg:
                raise ConfigError(f"top-level {extra!r} is only allowed with a single 'method'")
    elif "method" in cfg:
        methods = [{k: cfg[k] for k in METHOD_KEYS if k in cfg}]
    else:
        methods = []
    for i, m in enumerate(methods):
        _reject_unknown(m, METHOD_KEYS, f"methods[{i}]")
    labels = [method_label(m, i) for i, m in enumerate(methods)]
    if len(set(labels)) != len(labels):
        raise ConfigError("method labels must be unique; add a 'label' to repeated methods")
    consts = cfg.get("constants")
    if consts is not None:
        _reject_unknown(consts, CONSTANT_KEYS, "constants")
    seeds = cfg.get("seeds", [cfg.get("seed", 0)])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a nonempty list of integers")
    sweep = cfg.get("sweep")
    if sweep is not None:
        _reject_unknown(sweep, SWEEP_KEYS, "sweep")
        axes = sweep.get("axes", {})
        if not isinstance(axes, dict) or not axes:
            raise ConfigError("sweep.axes must be a nonempty object")
        for k, v in axes.items():
            if not isinstance(v, list) or not v:
                raise ConfigError(f"sweep axis {k!r} must be a nonempty list")
            root = k.split(".")[0]
            if root not in ("network", "problem", "method"):
                raise ConfigError(f"sweep axis {k!r} must start with network., problem. or method.")
            if root == "method" and k.split(".", 1)[1].split("@", 1)[0] not in METHOD_KEYS:
                raise ConfigError(f"unknown method key in sweep axis {k!r}")
        if sweep.get("select", "final") not in ("final", "time_to_target"):
            raise ConfigError("sweep.select must be 'final' or 'time_to_target'")
        if sweep.get("aggregate", "mean") not in ("mean", "median"):
            raise ConfigError("sweep.aggregate must be 'mean' or 'median'")
        if sweep.get("select") == "time_to_target" and "target" not in sweep:
            raise ConfigError("sweep.select=time_to_target needs sweep.target")
    lb = cfg.get("lowerbound")
    if lb is not None:
        _reject_unknown(lb, LOWERBOUND_KEYS, "lowerbound")
    exp = Experiment(cfg, net, problem, methods, consts, seeds, sweep, lb,
                     str(cfg.get("output", "out")), str(cfg.get("name", "experiment")))
    # surface method errors early
    for i, m in enumerate(methods):
        needs = m.get("S") == "auto" or m.get("K") == "auto" or "stepsize_rule" in m
        obj = exp.build_problem()[0] if needs and problem is not None else None
        exp.method_config(m, seeds[0], obj)
    return exp
