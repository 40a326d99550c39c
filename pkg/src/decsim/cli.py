"""Command-line front end.

    decsim predict CONFIG [--set key=value ...] [--out DIR]
    decsim simulate CONFIG [--trace] [--plot]
    decsim lowerbound CONFIG [--plot]
    decsim sweep CONFIG [--plot]
    decsim validate-config CONFIG

Exit codes: 0 success, 2 configuration error, 3 simulation diagnostic.
Worker indices are 1-based in every file this module reads or writes.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from typing import Callable, Optional

import numpy as np

from .config import CONFIG_ERRORS, Experiment, apply_override, load_config, method_label, \
    parse_experiment
from .engine import SimulationError
from .equilibrium import (line_closed_form, lower_bound_heterogeneous, lower_bound_prediction,
                          mesh_closed_form, predict_amelie, predict_convex, predict_fragile,
                          predict_minibatch, star_closed_form)
from .lowerbound import LevelGameParams, check_lemma_f1, lemma_threshold, sample_level_times
from .methods import execute, simulate_schedule, write_trace_rows
from .sweep import pool_size, run_sweep, write_sweep_csv
from .topology import all_pairs_shortest

EXIT_OK, EXIT_CONFIG, EXIT_SIM = 0, 2, 3


def _atomic(path: str, write: Callable) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        write(fh)
    os.replace(tmp, path)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def _write_json(path: str, obj) -> None:
    _atomic(path, lambda fh: fh.write(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"))


def _outdir(exp: Experiment, args) -> str:
    out = args.out or exp.output
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------- predict

def _closed_forms(exp: Experiment, s: float) -> list[dict]:
    net_raw = exp.raw["network"]
    kind = net_raw.get("kind")
    h = float(exp.net.h[0])
    out = []
    if kind in ("line", "mesh") and np.all(exp.net.h == h):
        rho = float(net_raw["rho"])
        if kind == "line":
            tag, t = line_closed_form(exp.net.n, h, rho, s)
            out.append({"shape": "line", "regime": tag, "per_iteration": t})
        else:
            dims = [int(x) for x in net_raw["dims"]]
            if len(set(dims)) == 1:
                tag, t = mesh_closed_form(len(dims), dims[0], h, rho, s)
                out.append({"shape": f"mesh{len(dims)}d", "regime": tag, "per_iteration": t})
    elif kind == "star":
        n = int(net_raw["n"])
        rho_to = exp.net.rho[:n, n]
        rho_from = exp.net.rho[n, :n]
        tag, t = star_closed_form(rho_to, rho_from, exp.net.h, s)
        out.append({"shape": "star", "strategy": tag, "per_iteration": t})
    return out


def predict_report(exp: Experiment) -> dict:
    obj = None
    c = exp.consts or {}
    if exp.problem is not None and not {"L", "Delta"} <= set(c):
        obj = exp.build_problem()[0]
    consts = exp.constants(obj)
    tau = all_pairs_shortest(exp.net)
    preds = [
        predict_fragile(exp.net, tau, consts, roundtrip=True),
        predict_fragile(exp.net, tau, consts, roundtrip=False),
        predict_minibatch(exp.net, tau, consts),
        predict_amelie(exp.net, tau, consts),
        predict_minibatch(exp.net, tau, consts, heterogeneous=True),
        lower_bound_prediction(exp.net, tau, consts),
        lower_bound_heterogeneous(exp.net, tau, consts),
    ]
    preds[1].method = "fragile_one_way"
    if consts.M is not None and consts.R is not None:
        for setting in ("homogeneous", "heterogeneous"):
            preds.append(predict_convex(consts, exp.net, tau, "nonsmooth", setting))
    if consts.R is not None:
        for setting in ("homogeneous", "heterogeneous"):
            preds.append(predict_convex(consts, exp.net, tau, "smooth-accelerated", setting))
    s = consts.sigma2 / consts.eps
    return {
        "n": exp.net.n,
        "constants": {k: v for k, v in vars(consts).items() if v is not None},
        "noise_ratio": s,
        "methods": {p.method: p.to_dict() for p in preds},
        "closed_form": _closed_forms(exp, s),
    }


def cmd_predict(exp: Experiment, args) -> int:
    report = predict_report(exp)
    text = json.dumps(_json_safe(report), indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "predict.json"), report)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _point_axes(exp: Experiment) -> list[str]:
    if not exp.sweep:
        return []
    return [k for k in exp.sweep["axes"] if not k.startswith("method.")]


def _expand_points(exp: Experiment):
    """(suffix, experiment) per sweep point over network./problem. axes."""
    axes = _point_axes(exp)
    if not axes:
        yield "", exp
        return
    grid = list(itertools.product(*[exp.sweep["axes"][k] for k in axes]))
    for idx, values in enumerate(grid, start=1):
        raw = json.loads(json.dumps(exp.raw))
        raw.pop("sweep", None)
        for k, v in zip(axes, values):
            apply_override(raw, f"{k}={json.dumps(v)}")
        yield f"_point{idx}", parse_experiment(raw)


def simulate_runs(exp: Experiment, out: str, trace: bool = False) -> list[dict]:
    rows = []
    for suffix, pexp in _expand_points(exp):
        obj, oracles = pexp.build_problem()
        for mi, m in enumerate(pexp.methods):
            label = method_label(m, mi)
            for seed in pexp.seeds:
                cfg = pexp.method_config(m, seed, obj)
                if trace:
                    cfg = cfg.with_(log_events=True)
                sched = simulate_schedule(pexp.net, cfg)
                sched.check_fresh()
                tr = execute(sched, cfg, obj, oracles)
                stem = f"{label}_seed{seed}{suffix}"
                _atomic(os.path.join(out, stem + ".csv"),
                        lambda fh: write_trace_rows(fh, tr.records))
                if trace:
                    _atomic(os.path.join(out, stem + "_events.csv"),
                            lambda fh: _write_events(fh, sched.event_log or []))
                last = tr.records[-1] if tr.records else None
                rows.append({
                    "label": label, "method": cfg.method, "seed": seed, "point": suffix[6:] or None,
                    "pivot": sched.pivot + 1, "S": cfg.S, "gamma": cfg.gamma,
                    "iterations": tr.K, "diverged": tr.diverged,
                    "end_time": last.t_start if last else 0.0,
                    "final_grad_norm_sq": last.grad_norm_sq if last else None,
                    "mean_contributors": float(np.mean([r.n_contributors for r in tr.records]))
                    if tr.records else 0.0,
                    "messages": sched.messages, "events": sched.events,
                    "csv": stem + ".csv",
                    "_trace": tr,
                })
    return rows


def _write_events(fh, log) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["time", "seq", "kind", "src", "dst", "iteration"])
    for t, seq, kind, src, dst, it in log:
        w.writerow([repr(t), seq, kind, src + 1 if src >= 0 else "",
                    dst + 1 if dst >= 0 else "", it])


def cmd_simulate(exp: Experiment, args) -> int:
    out = _outdir(exp, args)
    rows = simulate_runs(exp, out, trace=args.trace)
    summary = [{k: v for k, v in r.items() if not k.startswith("_")} for r in rows]
    _write_json(os.path.join(out, "summary.json"), {"name": exp.name, "runs": summary})
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["label", "seed", "point", "pivot", "iterations", "end_time", "final_grad_norm_sq"])
    for r in summary:
        w.writerow([r["label"], r["seed"], r["point"] or "", r["pivot"], r["iterations"],
                    repr(r["end_time"]), repr(r["final_grad_norm_sq"])])
    if args.plot:
        from .plotting import plot_convergence
        groups: dict = {}
        for r in rows:
            groups.setdefault(r["point"], []).append(r)
        for point, rs in groups.items():
            curves = [(f"{r['label']} seed {r['seed']}", r["_trace"].times(),
                       r["_trace"].grad_norms()) for r in rs]
            name = "convergence.png" if point is None else f"convergence_point{point}.png"
            plot_convergence(curves, os.path.join(out, name), title=exp.name)
    return EXIT_OK


# ---------------------------------------------------------------- lowerbound

def cmd_lowerbound(exp: Experiment, args) -> int:
    lb = exp.lowerbound
    if lb is None:
        raise CONFIG_ERRORS[0]("this command needs a 'lowerbound' section")
    out = _outdir(exp, args)
    tau = all_pairs_shortest(exp.net)
    params = LevelGameParams(exp.net.h, tau, float(lb.get("p", 1.0)), int(lb.get("T", 10)))
    num = int(lb.get("num_samples", 1000))
    ys = sample_level_times(params, num, int(lb.get("seed", 0)))
    thr = lemma_threshold(params)
    ok = check_lemma_f1(params, thr.t_bar)
    frac = float(np.mean(ys <= thr.t))

    def rows(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "y_T"])
        for i, y in enumerate(ys, start=1):
            w.writerow([i, repr(float(y))])

    _atomic(os.path.join(out, "lowerbound.csv"), rows)
    summary = {"threshold": thr.t, "empirical_fraction": frac, "lemma_f1_ok": ok,
               "t_bar": list(thr.t_bar), "s": thr.s, "num_samples": num,
               "T": params.T, "p": params.p}
    _write_json(os.path.join(out, "lowerbound.json"), summary)
    print(json.dumps(_json_safe(summary), sort_keys=True))
    if args.plot:
        from .plotting import plot_level_times
        plot_level_times(ys, thr.t, os.path.join(out, "lowerbound.png"))
    return EXIT_OK


# ---------------------------------------------------------------- sweep

def cmd_sweep(exp: Experiment, args) -> int:
    if not exp.sweep:
        raise CONFIG_ERRORS[0]("this command needs a 'sweep' section")
    out = _outdir(exp, args)
    result = run_sweep(exp.raw, pool_size())
    write_sweep_csv(result, os.path.join(out, "sweep.csv"))
    best = []
    for (point, mi), lst in sorted(result["best"].items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        for rank, c in enumerate(lst, start=1):
            best.append({"point": dict(zip(result["point_axes"], point)), "label": c.label,
                         "values": dict(zip(result["method_axes"], c.values)),
                         "gamma": c.gamma, "rank": rank, "score_final": c.score_final,
                         "score_time": c.score_time if result["target"] is not None else None})
    _write_json(os.path.join(out, "sweep_best.json"), {"select": result["select"],
                                                       "target": result["target"], "best": best})
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["point", "label", "rank", "gamma", "score"])
    for b in best:
        score = b["score_time"] if result["select"] == "time_to_target" else b["score_final"]
        w.writerow([json.dumps(b["point"], sort_keys=True), b["label"], b["rank"],
                    repr(b["gamma"]), repr(score)])
    if args.plot:
        _plot_sweep_best(result, out)
    return EXIT_OK


def _plot_sweep_best(result: dict, out: str) -> None:
    from .plotting import plot_convergence
    from .sweep import _method_dict, _point_config
    exp = result["experiment"]
    by_point: dict = {}
    for (point, mi), lst in result["best"].items():
        by_point.setdefault(point, []).append((mi, lst[0]))
    for idx, point in enumerate(result["points"], start=1):
        pexp = parse_experiment(_point_config(exp.raw, result["point_axes"], point))
        obj, oracles = pexp.build_problem()
        curves = []
        for mi, c in sorted(by_point.get(point, []), key=lambda t: t[0]):
            m = _method_dict(pexp.methods[mi], result["method_axes"], c.values)
            m.pop("stepsize_rule", None)
            m["gamma"] = c.gamma
            cfg = pexp.method_config(m, pexp.seeds[0], obj)
            tr = execute(simulate_schedule(pexp.net, cfg), cfg, obj, oracles)
            curves.append((f"{c.label} (gamma={c.gamma:g})", tr.times(), tr.grad_norms()))
        label = ", ".join(f"{k}={v}" for k, v in zip(result["point_axes"], point))
        plot_convergence(curves, os.path.join(out, f"sweep_point{idx}.png"), title=label,
                         target=result["target"])


# ---------------------------------------------------------------- validate

def cmd_validate(exp: Experiment, args) -> int:
    print(f"ok: n={exp.net.n} methods={len(exp.methods)} seeds={len(exp.seeds)}"
          f" sweep={'yes' if exp.sweep else 'no'}")
    return EXIT_OK


COMMANDS = {
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "lowerbound": cmd_lowerbound,
    "sweep": cmd_sweep,
    "validate-config": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decsim",
                                 description="Asynchronous decentralized SGD simulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="experiment JSON file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted path, JSON value)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        if name == "simulate":
            p.add_argument("--trace", action="store_true", help="also write the event log CSV")
        if name in ("simulate", "lowerbound", "sweep"):
            p.add_argument("--plot", action="store_true", help="render PNG figures next to the CSVs")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        exp = parse_experiment(load_config(args.config, args.set))
        return COMMANDS[args.command](exp, args)
    except SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM
    except CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
