"""Grid sweeps with stepsize replay and a process pool."""

from __future__ import annotations

import copy
import csv
import itertools
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Optional

from .config import apply_override, method_label, parse_experiment
from .methods import execute, simulate_schedule


def pool_size() -> int:
    env = os.environ.get("DECSIM_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            pass
    return cpus


def map_tasks(fn, tasks: list, workers: Optional[int] = None) -> list:
    """Ordered results of fn over tasks; runs in-process when one worker is enough."""
    workers = pool_size() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


@dataclass
class Candidate:
    point: tuple          # values of the point axes
    method_index: int
    label: str
    values: tuple         # values of the method axes
    gamma: float
    seeds: list
    finals: list
    times: list
    aggregate: str = "mean"

    def _agg(self, vals: list) -> float:
        vals = [v if not math.isnan(v) else math.inf for v in vals]
        if self.aggregate == "median":
            return float(statistics.median(vals))
        return sum(vals) / len(vals)

    @property
    def score_final(self) -> float:
        return self._agg(self.finals)

    @property
    def score_time(self) -> float:
        return self._agg(self.times)


def _point_config(raw: dict, point_axes: list, values: tuple) -> dict:
    cfg = copy.deepcopy(raw)
    cfg.pop("sweep", None)
    for k, v in zip(point_axes, values):
        apply_override(cfg, f"{k}={json.dumps(v)}")
    return cfg


def _axis_applies(axis: str, label: str) -> bool:
    """``method.S`` applies to every method, ``method.S@name`` only to the labelled one."""
    return "@" not in axis or axis.split("@", 1)[1] == label


def _method_dict(base: dict, method_axes: list, values: tuple) -> dict:
    m = dict(base)
    for k, v in zip(method_axes, values):
        if v is not None:
            m[k.split(".", 1)[1].split("@", 1)[0]] = v
    return m


def evaluate_group(task: tuple) -> list[tuple]:
    """One schedule (fixed point, method, non-gamma values, seed), replayed for each gamma."""
    cfg, m, gammas, seed, target, stop = task
    exp = parse_experiment(cfg)
    obj, oracles = exp.build_problem()
    mcfg = exp.method_config(m, seed, obj)
    sched = simulate_schedule(exp.net, mcfg)
    out = []
    for g in gammas:
        tr = execute(sched, mcfg, obj, oracles, gamma=g, stop_level=stop)
        final = tr.records[-1].grad_norm_sq if tr.records and not tr.diverged else math.inf
        ttt = tr.time_to_reach(target) if target is not None else math.nan
        out.append((g, final, ttt))
    return out


def run_sweep(raw: dict, workers: Optional[int] = None) -> dict:
    """Evaluate the declared grid. Returns candidates and the top ones per (point, method)."""
    exp = parse_experiment(raw)
    sweep = exp.sweep or {"axes": {}}
    axes = sweep["axes"]
    point_axes = [k for k in axes if not k.startswith("method.")]
    method_axes = [k for k in axes if k.startswith("method.") and k != "method.gamma"]
    gamma_axis = axes.get("method.gamma")
    select = sweep.get("select", "final")
    target = sweep.get("target")
    stop = target if select == "time_to_target" else None
    top = int(sweep.get("top", 3))
    aggregate = sweep.get("aggregate", "mean")
    tasks, keys = [], []
    points = list(itertools.product(*[axes[k] for k in point_axes]))
    for pv in points:
        pcfg = _point_config(exp.raw, point_axes, pv)
        pexp = parse_experiment(pcfg)
        for mi, base in enumerate(pexp.methods):
            label = method_label(base, mi)
            lists = [axes[k] if _axis_applies(k, label) else [None] for k in method_axes]
            for mv in itertools.product(*lists):
                m = _method_dict(base, method_axes, mv)
                gammas = list(gamma_axis) if gamma_axis else [m.get("gamma")]
                if gamma_axis:
                    m.pop("stepsize_rule", None)
                    m["gamma"] = gammas[0]
                for seed in pexp.seeds:
                    tasks.append((pcfg, m, [float(g) if g is not None else None for g in gammas],
                                  seed, target, stop))
                    keys.append((pv, mi, label, mv, seed))
    results = map_tasks(evaluate_group, tasks, workers)
    cand: dict = {}
    for (pv, mi, label, mv, seed), res in zip(keys, results):
        for g, final, ttt in res:
            c = cand.get((pv, mi, mv, g))
            if c is None:
                c = cand[(pv, mi, mv, g)] = Candidate(pv, mi, label, mv, g, [], [], [], aggregate)
            c.seeds.append(seed)
            c.finals.append(final)
            c.times.append(ttt)
    ranked: dict = {}
    for c in cand.values():
        ranked.setdefault((c.point, c.method_index), []).append(c)
    best = {}
    for key, lst in ranked.items():
        score = (lambda c: (c.score_time, c.score_final)) if select == "time_to_target" \
            else (lambda c: (c.score_final,))
        lst.sort(key=lambda c: (score(c), c.values, c.gamma))
        best[key] = lst[:top]
    return {"experiment": exp, "point_axes": point_axes, "method_axes": method_axes,
            "candidates": [c for key in sorted(ranked, key=_sort_key) for c in ranked[key]],
            "best": best, "select": select, "target": target, "points": points}


def _sort_key(key):
    return tuple(_fmt(v) for v in key[0]), key[1]


def write_sweep_csv(result: dict, path: str) -> None:
    point_axes, method_axes = result["point_axes"], result["method_axes"]
    best = result["best"]
    header = point_axes + ["method_label"] + method_axes + [
        "gamma", "seed", "final_grad_norm_sq", "time_to_target", "score", "rank"]
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for c in result["candidates"]:
            tops = best[(c.point, c.method_index)]
            rank = next((i + 1 for i, b in enumerate(tops) if b is c), "")
            score = c.score_time if result["select"] == "time_to_target" else c.score_final
            for seed, f, t in zip(c.seeds, c.finals, c.times):
                w.writerow([_fmt(v) for v in c.point] + [c.label] + [_fmt(v) for v in c.values]
                           + [_fmt(c.gamma), seed, _fmt(f), _fmt(t), _fmt(score), rank])
    os.replace(tmp, path)


def tuned_time(result: dict, point: tuple, method_index: int) -> float:
    return result["best"][(point, method_index)][0].score_time
