import csv
import json

import pytest

from decsim.cli import main, predict_report
from decsim.config import ConfigError, apply_override, parse_experiment
from decsim.sweep import run_sweep, write_sweep_csv

TWO = {
    "name": "two",
    "network": {"n": 2, "h": [1, 2], "rho": [[0, 1], [1, 0]]},
    "problem": {"problem": "quadratic_chain", "d": 10, "oracle": "gaussian", "sigma2": 1.0},
    "methods": [{"method": "fragile", "gamma": 0.1, "S": 3, "K": 20, "pivot": 1},
                {"method": "minibatch", "gamma": 0.1, "K": 20, "pivot": 1}],
    "seeds": [0, 1],
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_validate_and_errors(tmp_path, capsys):
    path = write(tmp_path, TWO)
    assert main(["validate-config", path]) == 0
    assert main(["validate-config", path, "--set", "methods.0.colour=1"]) == 2
    assert main(["validate-config", path, "--set", "methods.0.pivot=3"]) == 2
    bad = dict(TWO, extra=1)
    assert main(["validate-config", write(tmp_path, bad, "bad.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["validate-config", str(tmp_path / "broken.json")]) == 2
    assert main(["validate-config", str(tmp_path / "missing.json")]) == 2


def test_duplicate_labels_rejected():
    cfg = dict(TWO, methods=[{"method": "fragile"}, {"method": "fragile"}])
    with pytest.raises(ConfigError):
        parse_experiment(cfg)
    cfg["methods"][1]["label"] = "other"
    assert len(parse_experiment(cfg).methods) == 2


def test_override_paths():
    cfg = json.loads(json.dumps(TWO))
    apply_override(cfg, "network.rho.0.1=5")
    apply_override(cfg, "name=renamed")
    apply_override(cfg, "methods.0.S=7")
    assert cfg["network"]["rho"][0][1] == 5 and cfg["name"] == "renamed"
    assert cfg["methods"][0]["S"] == 7
    with pytest.raises(ConfigError):
        apply_override(cfg, "no_equals_sign")


def test_simulate_outputs_are_deterministic(tmp_path):
    path = write(tmp_path, TWO)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", path, "--out", str(out1), "--trace"]) == 0
    assert main(["simulate", path, "--out", str(out2), "--trace"]) == 0
    files = sorted(p.name for p in out1.iterdir())
    assert "fragile_seed0.csv" in files and "minibatch_seed1_events.csv" in files
    for name in files:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    rows = list(csv.DictReader(open(out1 / "fragile_seed0.csv")))
    assert len(rows) == 20 and rows[0]["k"] == "0"
    summary = json.loads((out1 / "summary.json").read_text())
    assert summary["runs"][0]["pivot"] == 1


def test_simulate_single_worker(tmp_path):
    cfg = {"network": {"n": 1, "h": [1], "rho": [[0]]},
           "problem": {"problem": "quadratic_chain", "d": 5, "oracle": "gaussian"},
           "method": "fragile", "gamma": 0.5, "S": 1, "K": 10}
    assert main(["simulate", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "fragile_seed0.csv")))
    assert [float(r["t_start"]) for r in rows] == list(range(10))


def test_simulate_livelock_exit_code(tmp_path):
    cfg = json.loads(json.dumps(TWO))
    cfg["methods"][0]["max_events"] = 10
    assert main(["simulate", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


def test_simulate_sweep_points_and_plot(tmp_path):
    cfg = json.loads(json.dumps(TWO))
    cfg["sweep"] = {"axes": {"network.rho.0.1": [1, 2]}}
    cfg["seeds"] = [0]
    out = tmp_path / "o"
    assert main(["simulate", write(tmp_path, cfg), "--out", str(out), "--plot"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"fragile_seed0_point1.csv", "fragile_seed0_point2.csv",
            "convergence_point1.png"} <= names


def test_predict_report_line():
    cfg = {"network": {"kind": "line", "n": 101, "rho": 1, "h": 1},
           "constants": {"L": 1, "Delta": 1, "eps": 0.01, "sigma2": 100}}
    rep = predict_report(parse_experiment(cfg))
    frag = rep["methods"]["fragile"]
    assert 40 <= frag["pivot"] <= 62 and frag["distances"] == "roundtrip"
    assert rep["closed_form"][0]["regime"] == "medium"
    assert rep["closed_form"][0]["per_iteration"] / 4 <= frag["per_iteration"] <= \
        4 * rep["closed_form"][0]["per_iteration"]


def test_predict_zero_noise_and_star(tmp_path, capsys):
    cfg = {"network": {"kind": "star", "n": 3, "rho_to_center": [100, 1, 1],
                       "rho_from_center": [1, 1, 1], "h": [1, 10, 10, 10]},
           "constants": {"L": 1, "Delta": 1, "eps": 1, "sigma2": 0}}
    assert main(["predict", write(tmp_path, cfg), "--out", str(tmp_path / "p")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["methods"]["fragile"]["per_iteration"] == 1.0
    assert rep["closed_form"][0]["strategy"] in ("local", "center")
    assert (tmp_path / "p" / "predict.json").exists()


def test_lowerbound_command(tmp_path, capsys):
    cfg = {"network": {"kind": "line", "n": 3, "rho": 0.5, "h": 1},
           "lowerbound": {"p": 0.5, "T": 20, "num_samples": 200, "seed": 1}}
    out = tmp_path / "lb"
    assert main(["lowerbound", write(tmp_path, cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "lowerbound.json").read_text())
    assert summary["lemma_f1_ok"] is True
    rows = list(csv.reader(open(out / "lowerbound.csv")))
    assert rows[0] == ["sample_index", "y_T"] and rows[1][0] == "1" and len(rows) == 201
    assert main(["lowerbound", write(tmp_path, dict(cfg, lowerbound={"p": 2}), "b.json")]) == 2


def test_sweep_ranks_and_keys(tmp_path):
    cfg = json.loads(json.dumps(TWO))
    cfg["sweep"] = {"axes": {"network.rho.0.1": [1, 3], "method.gamma": [0.05, 0.2, 0.4],
                             "method.S@fragile": [2, 4]}, "top": 3}
    res = run_sweep(cfg, workers=1)
    path = tmp_path / "s.csv"
    write_sweep_csv(res, str(path))
    rows = list(csv.DictReader(open(path)))
    # 2 points x (fragile 2 S x 3 gamma + minibatch 3 gamma) x 2 seeds
    assert len(rows) == 2 * (6 + 3) * 2
    assert all(r["network.rho.0.1"] in ("1", "3") for r in rows)
    for point in ("1", "3"):
        for label in ("fragile", "minibatch"):
            ranks = {r["rank"] for r in rows if r["network.rho.0.1"] == point
                     and r["method_label"] == label and r["rank"]}
            assert ranks == {"1", "2", "3"}
    assert all(r["method.S@fragile"] == "" for r in rows if r["method_label"] == "minibatch")
    best = res["best"][((1,), 0)][0]
    assert best.score_final == min(c.score_final for c in res["candidates"]
                                   if c.point == (1,) and c.method_index == 0)
    assert main(["sweep", write(tmp_path, cfg), "--out", str(tmp_path / "sw")]) == 0
    assert (tmp_path / "sw" / "sweep.csv").read_bytes() == path.read_bytes()


def test_sweep_median_aggregate_ignores_one_bad_seed():
    from decsim.sweep import Candidate
    c = Candidate((), 0, "m", (), 1.0, [0, 1, 2], [1.0, 2.0, float("inf")],
                  [10.0, 20.0, float("inf")], "median")
    assert c.score_time == 20.0 and c.score_final == 2.0
    c.aggregate = "mean"
    assert c.score_time == float("inf")
    with pytest.raises(ConfigError):
        parse_experiment({"network": {"kind": "line", "n": 2, "rho": 1},
                          "method": "fragile",
                          "sweep": {"axes": {"method.gamma": [1]}, "aggregate": "mode"}})
