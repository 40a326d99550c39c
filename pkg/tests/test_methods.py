import math

import numpy as np
import pytest

from decsim.engine import SimulationError
from decsim.equilibrium import amelie_iteration_bound, fragile_iteration_bound
from decsim.methods import (ConfigError, MethodConfig, StepsizeRule, execute, run_amelie,
                            run_fragile, run_method, run_minibatch, simulate_schedule,
                            stepsize_for)
from decsim.equilibrium import ProblemConstants
from decsim.problems import (component_oracles, gaussian_oracle, hetero_quadratic,
                             prog_bernoulli_oracle, quadratic_chain)
from decsim.topology import NetworkSpec, build_line, build_mesh, build_star
from helpers import gd

INF = math.inf


def single(h=1.0):
    return NetworkSpec(np.array([h]), np.zeros((1, 1)))


def test_single_worker_fragile_is_gradient_descent():
    obj = quadratic_chain(20)
    cfg = MethodConfig("fragile", gamma=0.5, S=1, K=50, pivot=0)
    tr = run_fragile(single(2.0), obj, gaussian_oracle(obj, 0.0), cfg)
    ref = gd(obj.grad, obj.x0, 0.5, 50)
    for r, x in zip(tr.records, ref):
        g = obj.grad(x)
        assert r.grad_norm_sq == pytest.approx(float(g @ g), rel=1e-14, abs=1e-300)
    assert np.allclose(tr.x_final, ref[-1], rtol=0, atol=1e-14)
    assert all(r.t_end - r.t_start == 2.0 for r in tr.records)


def test_two_workers_hand_trace():
    net = build_line(2, 1.0, 1.0)
    # S=2: the pivot holds two of its own samples at t=2, before worker 2's first
    # sample can arrive (1 broadcast + 1 compute + 1 upload = 3)
    sch = simulate_schedule(net, MethodConfig("fragile", S=2, K=4, pivot=0))
    assert [(it.t_start, it.t_end) for it in sch.iterations] == [(0, 2), (2, 4), (4, 6), (6, 8)]
    assert all(it.contributors == frozenset({0}) for it in sch.iterations)
    assert all(it.duration <= 3 * max(2.0, 1.0) for it in sch.iterations)
    # S=3: worker 2's sample lands at t=3 together with the pivot's third one
    sch = simulate_schedule(net, MethodConfig("fragile", S=3, K=4, pivot=0))
    assert all(it.duration == 3.0 for it in sch.iterations)
    assert all(it.contributors == frozenset({0, 1}) for it in sch.iterations)
    assert all(it.s_k == 4 for it in sch.iterations)
    sch.check_fresh()


def test_minibatch_line_round():
    net = build_line(7, 1.0, 1.0)
    sch = simulate_schedule(net, MethodConfig("minibatch", K=5, pivot=3))
    assert all(it.duration == 7.0 for it in sch.iterations)
    assert all(it.s_k == 7 for it in sch.iterations)


def test_minibatch_waits_for_straggler():
    net = build_line(3, 0.1, [1, 1, 5])
    for pivot in range(3):
        sch = simulate_schedule(net, MethodConfig("minibatch", K=3, pivot=pivot))
        assert all(it.duration >= 5.0 for it in sch.iterations)


def test_minibatch_single_worker_matches_fragile():
    obj = quadratic_chain(10)
    orc = gaussian_oracle(obj, 2.0)
    cfg = MethodConfig("fragile", gamma=0.3, S=1, K=30, pivot=0, seed=4)
    a = run_fragile(single(), obj, orc, cfg)
    b = run_minibatch(single(), obj, orc, cfg.with_(method="minibatch"))
    assert np.array_equal(a.x_final, b.x_final)
    assert np.array_equal(a.grad_norms(), b.grad_norms())


def test_fragile_update_rule_replays_samples():
    obj = quadratic_chain(12)
    orc = gaussian_oracle(obj, 1.5)
    net = build_mesh([3, 3], 0.7, [1, 1.3, 2, 0.8, 1, 1, 3, 1, 0.9])
    cfg = MethodConfig("fragile", gamma=0.2, S=6, K=25, seed=9)
    sched = simulate_schedule(net, cfg)
    sched.check_fresh()
    tr = execute(sched, cfg, obj, [orc] * net.n)
    from decsim.rng import Stream
    x = obj.x0.copy()
    for it in sched.iterations:
        total = np.zeros_like(x)
        for w, first, c in it.contributions:
            raw = Stream(cfg.seed, w, "oracle", obj.dim, "normal").rows(first, c)
            for row in raw:
                total += obj.grad(x) + math.sqrt(1.5 / obj.dim) * row
        x = x - 0.2 / it.s_k * total
    assert np.allclose(x, tr.x_final, rtol=1e-12, atol=1e-12)


def test_fragile_ignores_stragglers():
    obj = quadratic_chain(8)
    orc = gaussian_oracle(obj, 0.5)
    base = build_line(4, 1.0, [1, 1, 1, 1])
    slow = base.with_h([1, 1, 1, 1e9])
    cfg = MethodConfig("fragile", gamma=0.3, S=4, K=40, pivot=1, seed=2)
    a = simulate_schedule(base, cfg)
    b = simulate_schedule(slow, cfg)
    inf = simulate_schedule(base.with_h([1, 1, 1, INF]), cfg)
    assert all(3 not in it.contributors for it in b.iterations)
    assert b.iterations[-1].t_end == inf.iterations[-1].t_end
    assert b.iterations[-1].t_end <= 2 * a.iterations[-1].t_end


def test_unreachable_worker_is_ignored_by_fragile_but_not_amelie():
    rho = np.array([[0, 1, INF], [1, 0, INF], [INF, INF, 0]], dtype=float)
    net = NetworkSpec(np.ones(3), rho)
    sch = simulate_schedule(net, MethodConfig("fragile", S=2, K=3, pivot=0))
    assert len(sch.iterations) == 3
    with pytest.raises(ConfigError):
        simulate_schedule(net, MethodConfig("amelie", S=2, K=3, pivot=0))


def test_fragile_iteration_bound_holds():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = int(rng.integers(2, 10))
        rho = rng.uniform(0.1, 3, (n, n))
        net = NetworkSpec(rng.uniform(0.2, 3, n), rho)
        S = int(rng.integers(1, 30))
        sch = simulate_schedule(net, MethodConfig("fragile", S=S, K=15))
        bound = fragile_iteration_bound(S, net.h, sch.up, sch.down)
        assert max(it.duration for it in sch.iterations) <= bound


def test_amelie_counter_invariant_and_bound():
    obj = hetero_quadratic(4, 5, seed=3)
    net = build_line(4, 0.5, [1, 2, 0.5, 3])
    cfg = MethodConfig("amelie", gamma=0.2, S=8, K=30, seed=1)
    tr = run_amelie(net, obj, cfg, component_oracles(obj, "gaussian", 1.0))
    for r in tr.records:
        assert set(r.counts) == set(range(4))
        assert sum(1 / c for c in r.counts.values()) <= 16 / 8 * (1 + 1e-12)
    bound = amelie_iteration_bound(8, net.h, tr.schedule.up, tr.schedule.down)
    assert max(it.duration for it in tr.schedule.iterations) <= bound
    tr.schedule.check_fresh()


def test_amelie_two_identical_workers_match_fragile_updates():
    obj = quadratic_chain(6)
    orc = gaussian_oracle(obj, 0.0)
    net = build_line(2, 1.0, 1.0)
    cfg = MethodConfig("fragile", gamma=0.4, S=2, K=20, pivot=0)
    f = run_fragile(net, obj, orc, cfg)
    a = run_method(net, obj, [orc, orc], cfg.with_(method="amelie"))
    assert np.allclose(f.grad_norms(), a.grad_norms(), rtol=1e-13)


def test_amelie_single_worker_uses_full_batch():
    obj = hetero_quadratic(1, 4, seed=0)
    cfg = MethodConfig("amelie", gamma=0.1, S=5, K=5, pivot=0)
    tr = run_amelie(single(), obj, cfg)
    assert all(r.s_k >= 5 for r in tr.records)


def test_accelerated_variants_run():
    obj = quadratic_chain(10)
    orc = gaussian_oracle(obj, 0.0)
    net = build_line(3, 0.5, 1.0)
    for m in ("accel_fragile", "accel_amelie"):
        cfg = MethodConfig(m, gamma=0.05, S=3, K=40, seed=0)
        oracles = [orc] * 3
        tr = run_method(net, obj, oracles, cfg)
        assert tr.records[-1].grad_norm_sq < tr.records[0].grad_norm_sq


def test_gamma_zero_freezes_point():
    obj = quadratic_chain(5)
    cfg = MethodConfig("accel_fragile", gamma=0.0, S=1, K=10, pivot=0)
    tr = run_method(single(), obj, gaussian_oracle(obj, 1.0), cfg)
    assert np.array_equal(tr.x_final, obj.x0)


def test_jitter_is_deterministic_and_fresh():
    obj = quadratic_chain(6)
    orc = prog_bernoulli_oracle(obj, 0.3)
    net = build_star(4, [1, 2, 1, 3], [1, 1, 2, 1], [1, 2, 1, 1, 0.5])
    cfg = MethodConfig("fragile", gamma=0.3, S=5, K=30, seed=3, jitter=0.2)
    a = simulate_schedule(net, cfg)
    b = simulate_schedule(net, cfg)
    a.check_fresh()
    assert [it.contributions for it in a.iterations] == [it.contributions for it in b.iterations]
    c = simulate_schedule(net, cfg.with_(seed=4))
    assert [it.t_end for it in a.iterations] != [it.t_end for it in c.iterations]


def test_announce_option_runs():
    net = build_line(5, 1.0, 1.0)
    sch = simulate_schedule(net, MethodConfig("fragile", S=12, K=5, pivot=2, announce_kmax=True))
    sch.check_fresh()
    assert len(sch.iterations) == 5


def test_until_horizon_stops_early():
    net = build_line(3, 1.0, 1.0)
    sch = simulate_schedule(net, MethodConfig("fragile", S=3, K=10_000, pivot=1, until=50.0))
    assert sch.iterations[-1].t_end <= 50.0 + 10 and len(sch.iterations) < 10_000


def test_config_validation():
    with pytest.raises(ConfigError):
        MethodConfig("adam")
    with pytest.raises(ConfigError):
        MethodConfig("fragile", S=0)
    with pytest.raises(ConfigError):
        MethodConfig("fragile", gamma=-1.0)
    with pytest.raises(ConfigError):
        simulate_schedule(build_line(2, 1.0), MethodConfig("fragile", pivot=5))


def test_stepsize_rules():
    c = ProblemConstants(L=2.0, Delta=1.0, eps=0.1, sigma2=0.0, M=2.0, R=1.0)
    assert stepsize_for(StepsizeRule.NONCONVEX, c, 1, 10) == 0.25
    assert stepsize_for("convex-nonsmooth", c, 1, 10) == pytest.approx(0.1 / 4)
    big = ProblemConstants(L=2.0, Delta=1.0, eps=0.1, sigma2=1e9, M=2.0, R=1.0)
    K, S = 10, 3
    want = math.sqrt(3 * 1.0 * S / (4 * 1e9 * (K + 1) * (K + 2) ** 2))
    assert stepsize_for("convex-accelerated", big, S, K) == pytest.approx(want)
    assert stepsize_for("convex-accelerated", c, S, K) == 1 / 8
