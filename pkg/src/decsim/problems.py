"""Objectives and stochastic gradient oracles.

Oracles are written against raw random rows so that a batch of samples can be
recomputed from the stream addresses alone. ``sum_samples(x, raw)`` returns the
sum of the gradients encoded by the rows of ``raw``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded


class ProblemError(ValueError):
    pass


class Objective:
    """f(x) = 1/2 x^T A x - b^T x with positive semidefinite A."""

    def __init__(self, dim: int, L: float, f_star: float, x0: np.ndarray,
                 components: Optional[Sequence["Objective"]] = None, name: str = "quadratic"):
        self.dim = int(dim)
        self.L = float(L)
        self.f_star = float(f_star)
        self.x0 = np.array(x0, dtype=float)
        self.x0.setflags(write=False)
        self.components = list(components) if components is not None else None
        self.name = name

    def matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def b(self) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x) - self.b

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.matvec(x) - self.b @ x)

    @property
    def delta(self) -> float:
        return self.value(self.x0) - self.f_star

    def with_start(self, x0) -> "Objective":
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.dim,):
            raise ProblemError(f"x0 must have length {self.dim}")
        o = copy.copy(self)
        o.x0 = x0.copy()
        o.x0.setflags(write=False)
        return o


class ChainQuadratic(Objective):
    """A = 1/4 tridiag(-1, 2, -1), b = 1/4 (-1, 0, ..., 0)."""

    def __init__(self, d: int, x0: Optional[np.ndarray] = None):
        if d < 2:
            raise ProblemError("quadratic_chain needs d >= 2")
        self._b = np.zeros(d)
        self._b[0] = -0.25
        self._b.setflags(write=False)
        diag = np.full(d, 0.5)
        off = np.full(d - 1, -0.25)
        L = float(eigh_tridiagonal(diag, off, eigvals_only=True,
                                   select="i", select_range=(d - 1, d - 1))[0])
        ab = np.zeros((3, d))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        self.minimizer = solve_banded((1, 1), ab, self._b)
        f_star = float(-0.5 * self._b @ self.minimizer)
        if x0 is None:
            x0 = np.zeros(d)
            x0[0] = math.sqrt(d)
        super().__init__(d, L, f_star, x0, name="quadratic_chain")

    @property
    def b(self) -> np.ndarray:
        return self._b

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = 0.5 * x
        y[1:] -= 0.25 * x[:-1]
        y[:-1] -= 0.25 * x[1:]
        return y

    def dense(self) -> np.ndarray:
        d = self.dim
        return 0.25 * (2 * np.eye(d) - np.eye(d, k=1) - np.eye(d, k=-1))


class DenseQuadratic(Objective):
    def __init__(self, A: np.ndarray, b: np.ndarray, x0: Optional[np.ndarray] = None,
                 components: Optional[Sequence[Objective]] = None, name: str = "quadratic"):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        d = b.shape[0]
        if A.shape != (d, d) or not np.allclose(A, A.T):
            raise ProblemError("A must be a symmetric d x d matrix")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self._b = b
        w = np.linalg.eigvalsh(A)
        if w[0] < -1e-10 * max(1.0, abs(w[-1])):
            raise ProblemError("A must be positive semidefinite")
        if w[0] > 1e-12 * max(1.0, w[-1]):
            self.minimizer = np.linalg.solve(A, b)
            f_star = float(-0.5 * b @ self.minimizer)
        else:
            self.minimizer = None
            f_star = -math.inf
        super().__init__(d, float(w[-1]), f_star, np.zeros(d) if x0 is None else x0,
                         components, name)

    @property
    def b(self) -> np.ndarray:
        return self._b

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x


def quadratic_chain(d: int = 1000, x0: Optional[np.ndarray] = None) -> ChainQuadratic:
    return ChainQuadratic(d, x0)


def hetero_quadratic(n: int, d: int, seed: int = 0, x0: Optional[np.ndarray] = None
                     ) -> DenseQuadratic:
    """Random per-worker quadratics f_i whose mean is strongly convex."""
    if n < 1 or d < 1:
        raise ProblemError("hetero_quadratic needs n >= 1 and d >= 1")
    rng = np.random.default_rng([seed, n, d])
    comps = []
    for _ in range(n):
        Q = rng.standard_normal((d, d)) / math.sqrt(d)
        A = Q @ Q.T
        A = 0.5 * (A + A.T) + 0.1 * np.eye(d)
        b = rng.standard_normal(d)
        comps.append(DenseQuadratic(A, b, name="component"))
    A = sum(c.A for c in comps) / n
    b = sum(c.b for c in comps) / n
    if x0 is None:
        x0 = np.ones(d)
    for c in comps:
        c.x0 = np.array(x0, dtype=float)
    return DenseQuadratic(0.5 * (A + A.T), b, x0=x0, components=comps, name="hetero_quadratic")


def prog(x: np.ndarray) -> int:
    """1-based index of the last nonzero coordinate, 0 for the zero vector."""
    nz = np.flatnonzero(x)
    return int(nz[-1]) + 1 if nz.size else 0


@dataclass
class Oracle:
    """Base stochastic gradient oracle; ``width``/``kind`` describe one sample's raw draws."""

    obj: Objective
    width: int = 1
    kind: str = "uniform"
    sigma2: float = 0.0

    def sum_samples(self, x: np.ndarray, raw: np.ndarray,
                    grad: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError

    def sample(self, x: np.ndarray, raw_row: np.ndarray) -> np.ndarray:
        return self.sum_samples(x, np.asarray(raw_row).reshape(1, -1))

    def draw(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        shape = (1, self.width)
        raw = rng.random(shape) if self.kind == "uniform" else rng.standard_normal(shape)
        return self.sum_samples(x, raw)


@dataclass
class ProgBernoulliOracle(Oracle):
    """Coordinates beyond prog(x) are scaled by xi/p, xi ~ Bernoulli(p), one xi per sample."""

    p: float = 0.001

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ProblemError("p must lie in (0, 1]")
        self.width = 1
        self.kind = "uniform"

    def sum_samples(self, x, raw, grad=None):
        g = self.obj.grad(x) if grad is None else grad
        m = raw.shape[0]
        if self.p >= 1.0:
            return m * g
        hits = int(np.count_nonzero(raw[:, 0] < self.p))
        j = prog(x)
        out = m * g
        out[j:] = (hits / self.p) * g[j:]
        return out


@dataclass
class GaussianOracle(Oracle):
    """grad(x) + N(0, sigma2/d I)."""

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ProblemError("sigma2 must be nonnegative")
        self.width = self.obj.dim
        self.kind = "normal"

    def sum_samples(self, x, raw, grad=None):
        g = self.obj.grad(x) if grad is None else grad
        m = raw.shape[0]
        out = m * g
        if self.sigma2 > 0 and m:
            out = out + math.sqrt(self.sigma2 / self.obj.dim) * raw.sum(axis=0)
        return out


def prog_bernoulli_oracle(obj: Objective, p: float = 0.001) -> ProgBernoulliOracle:
    return ProgBernoulliOracle(obj, p=p)


def gaussian_oracle(obj: Objective, sigma2: float) -> GaussianOracle:
    return GaussianOracle(obj, sigma2=float(sigma2))


def component_oracles(obj: Objective, kind: str = "gaussian", sigma2: float = 0.0,
                      p: float = 0.001) -> list[Oracle]:
    """One oracle per worker component (heterogeneous setting)."""
    if obj.components is None:
        raise ProblemError("objective has no per-worker components")
    return [make_oracle(c, kind, sigma2, p) for c in obj.components]


def make_oracle(obj: Objective, kind: str, sigma2: float = 0.0, p: float = 0.001) -> Oracle:
    if kind == "gaussian":
        return gaussian_oracle(obj, sigma2)
    if kind == "prog_bernoulli":
        return prog_bernoulli_oracle(obj, p)
    raise ProblemError(f"unknown oracle {kind!r}")


PROBLEM_KEYS = {"problem", "d", "oracle", "p", "sigma2", "n", "seed", "x0"}


@dataclass
class ProblemSpec:
    problem: str = "quadratic_chain"
    d: int = 1000
    oracle: str = "prog_bernoulli"
    p: float = 0.001
    sigma2: float = 0.0
    seed: int = 0
    x0: Optional[list] = field(default=None)

    def build(self, n: int = 1) -> tuple[Objective, list[Oracle]]:
        """Objective plus one oracle per worker."""
        x0 = None if self.x0 is None else np.asarray(self.x0, dtype=float)
        if x0 is not None and x0.shape != (self.d,):
            raise ProblemError(f"x0 must have length {self.d}")
        if self.problem == "quadratic_chain":
            obj = quadratic_chain(self.d, x0)
            orc = make_oracle(obj, self.oracle, self.sigma2, self.p)
            return obj, [orc] * n
        if self.problem == "hetero_quadratic":
            obj = hetero_quadratic(n, self.d, self.seed, x0)
            return obj, component_oracles(obj, self.oracle, self.sigma2, self.p)
        raise ProblemError(f"unknown problem {self.problem!r}")


def problem_from_dict(d: dict) -> ProblemSpec:
    unknown = set(d) - PROBLEM_KEYS
    if unknown:
        raise ProblemError(f"unknown problem keys: {sorted(unknown)}")
    spec = ProblemSpec(
        problem=str(d.get("problem", "quadratic_chain")),
        d=int(d.get("d", 1000)),
        oracle=str(d.get("oracle", "prog_bernoulli")),
        p=float(d.get("p", 0.001)),
        sigma2=float(d.get("sigma2", 0.0)),
        seed=int(d.get("seed", 0)),
        x0=d.get("x0"),
    )
    if spec.problem not in ("quadratic_chain", "hetero_quadratic"):
        raise ProblemError(f"unknown problem {spec.problem!r}")
    if spec.oracle not in ("gaussian", "prog_bernoulli"):
        raise ProblemError(f"unknown oracle {spec.oracle!r}")
    if spec.d < 1 or (spec.problem == "quadratic_chain" and spec.d < 2):
        raise ProblemError("d too small")
    if not 0 < spec.p <= 1:
        raise ProblemError("p must lie in (0, 1]")
    if spec.sigma2 < 0:
        raise ProblemError("sigma2 must be nonnegative")
    return spec
