import math

import numpy as np
import pytest

from decsim.problems import (ProblemError, component_oracles, gaussian_oracle, hetero_quadratic,
                             problem_from_dict, prog, prog_bernoulli_oracle, quadratic_chain)


def test_chain_gradient_examples():
    obj = quadratic_chain(5)
    assert np.allclose(obj.grad(np.zeros(5)), [0.25, 0, 0, 0, 0])
    assert obj.value(np.zeros(5)) == 0.0
    obj3 = quadratic_chain(3)
    assert np.allclose(obj3.grad(np.ones(3)), 0.25 * np.array([2, 0, 1]))


def test_chain_matches_dense_and_is_one_smooth():
    obj = quadratic_chain(50)
    A = obj.dense()
    rng = np.random.default_rng(0)
    x = rng.standard_normal(50)
    assert np.allclose(obj.matvec(x.copy()), A @ x)
    assert obj.L <= 1.0 and obj.L == pytest.approx(np.linalg.eigvalsh(A)[-1])
    v = rng.standard_normal(50)
    for _ in range(500):
        v = A @ v
        v /= np.linalg.norm(v)
    assert v @ A @ v <= 1.0
    assert np.allclose(obj.grad(obj.minimizer), 0, atol=1e-12)
    assert obj.f_star == pytest.approx(obj.value(obj.minimizer))


def test_finite_difference_gradient():
    obj = quadratic_chain(8)
    x = np.linspace(-1, 1, 8)
    eps = 1e-6
    fd = [(obj.value(x + eps * e) - obj.value(x - eps * e)) / (2 * eps) for e in np.eye(8)]
    assert np.allclose(fd, obj.grad(x), atol=1e-8)


def test_default_start():
    obj = quadratic_chain(100)
    assert obj.x0[0] == 10.0 and prog(obj.x0) == 1
    assert obj.delta == pytest.approx(obj.value(obj.x0) - obj.f_star)


def test_prog():
    assert prog(np.zeros(4)) == 0
    assert prog(np.array([0.0, 3.0, 0.0])) == 2


def test_bernoulli_p_one_is_exact():
    obj = quadratic_chain(6)
    orc = prog_bernoulli_oracle(obj, 1.0)
    x = np.arange(6.0)
    assert np.array_equal(orc.sample(x, np.array([0.3])), obj.grad(x))


def test_bernoulli_miss_zeroes_tail():
    obj = quadratic_chain(6)
    orc = prog_bernoulli_oracle(obj, 0.01)
    x = np.array([1.0, 2.0, 0, 0, 0, 0])
    g = orc.sample(x, np.array([0.5]))
    assert np.array_equal(g[:2], obj.grad(x)[:2]) and np.all(g[2:] == 0)
    hit = orc.sample(x, np.array([0.001]))
    assert np.allclose(hit[2:], obj.grad(x)[2:] / 0.01)


def test_bernoulli_keeps_zero_coordinates():
    obj = quadratic_chain(10)
    orc = prog_bernoulli_oracle(obj, 0.2)
    x = np.zeros(10); x[0] = 1.0
    g = obj.grad(x)
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = orc.draw(x, rng)
        assert np.all(s[g == 0] == 0)


def test_bernoulli_unbiased():
    obj = quadratic_chain(6)
    p = 0.05
    orc = prog_bernoulli_oracle(obj, p)
    x = np.array([1.0, 0.5, 0, 0, 0, 0])
    u = np.random.default_rng(3).random((100_000, 1))
    mean = orc.sum_samples(x, u) / u.shape[0]
    g = obj.grad(x)
    se = abs(g) * math.sqrt((1 - p) / p / u.shape[0])
    assert np.all(np.abs(mean - g) <= 3 * se + 1e-15)


def test_gaussian_mean_and_variance():
    obj = quadratic_chain(20)
    orc = gaussian_oracle(obj, 4.0)
    x = np.ones(20)
    rng = np.random.default_rng(5)
    samples = np.array([orc.draw(x, rng) for _ in range(20000)])
    g = obj.grad(x)
    assert np.all(np.abs(samples.mean(0) - g) < 3 * math.sqrt(4.0 / 20 / 20000) * 1.5)
    total_var = ((samples - g) ** 2).sum(1).mean()
    assert total_var == pytest.approx(4.0, rel=0.03)
    assert np.array_equal(gaussian_oracle(obj, 0.0).draw(x, rng), g)


def test_hetero_quadratic_linearity_and_solve():
    obj = hetero_quadratic(4, 6, seed=2)
    x = np.random.default_rng(0).standard_normal(6)
    mean = sum(c.grad(x) for c in obj.components) / 4
    assert np.allclose(mean, obj.grad(x))
    assert np.allclose(obj.minimizer, np.linalg.solve(obj.A, obj.b))
    assert np.allclose(obj.grad(obj.minimizer), 0, atol=1e-10)
    single = hetero_quadratic(1, 3, seed=1)
    assert np.allclose(single.A, single.components[0].A)
    again = hetero_quadratic(4, 6, seed=2)
    assert np.array_equal(again.A, obj.A)
    assert len(component_oracles(obj, "gaussian", 1.0)) == 4


def test_problem_spec_validation():
    spec = problem_from_dict({"problem": "quadratic_chain", "d": 10, "oracle": "gaussian",
                              "sigma2": 2.0})
    obj, oracles = spec.build(3)
    assert obj.dim == 10 and len(oracles) == 3 and oracles[0] is oracles[2]
    with pytest.raises(ProblemError):
        problem_from_dict({"problem": "quadratic_chain", "colour": 1})
    with pytest.raises(ProblemError):
        problem_from_dict({"problem": "rosenbrock"})
    with pytest.raises(ProblemError):
        prog_bernoulli_oracle(obj, 0.0)
