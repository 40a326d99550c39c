"""Worker networks: weighted directed multigraphs, shortest distances, routing trees.

Indices are 0-based everywhere in the library. The JSON loaders and the CLI
convert to and from the 1-based numbering used in experiment files.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

INF = math.inf
TERMINAL = -1


class TopologyError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkSpec:
    """``h[i]`` bounds the seconds worker i needs per stochastic gradient;
    ``rho[i, j]`` bounds the seconds to push one vector directly from i to j."""

    h: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        h = _frozen(self.h).reshape(-1)
        rho = _frozen(self.rho)
        n = h.shape[0]
        if n == 0:
            raise TopologyError("network needs at least one worker")
        if rho.shape != (n, n):
            raise TopologyError(f"rho must be {n}x{n}, got {rho.shape}")
        if np.isnan(h).any() or np.isnan(rho).any():
            raise TopologyError("NaN in network times")
        if (h < 0).any() or (rho < 0).any():
            raise TopologyError("times must be nonnegative")
        if np.any(np.diag(rho) != 0):
            rho = np.array(rho)
            np.fill_diagonal(rho, 0.0)
            rho = _frozen(rho)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "rho", rho)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def with_h(self, h: Sequence[float]) -> "NetworkSpec":
        return NetworkSpec(np.asarray(h, dtype=float), self.rho)

    def edges(self) -> list[tuple[int, int, float]]:
        """Finite off-diagonal links as (src, dst, rho)."""
        out = []
        for i, j in zip(*np.nonzero(np.isfinite(self.rho))):
            if i != j:
                out.append((int(i), int(j), float(self.rho[i, j])))
        return out


def all_pairs_shortest(net: NetworkSpec) -> np.ndarray:
    """Floyd-Warshall over ``rho``; unreachable pairs stay ``inf``."""
    tau = np.array(net.rho, dtype=float)
    for k in range(net.n):
        np.minimum(tau, tau[:, k, None] + tau[None, k, :], out=tau)
    np.fill_diagonal(tau, 0.0)
    tau.setflags(write=False)
    return tau


class Direction(str, Enum):
    TOWARD = "toward-pivot"
    FROM = "from-pivot"


@dataclass(frozen=True)
class SpanningTree:
    """Routing tree rooted at ``pivot``.

    For ``TOWARD`` trees ``next[i]`` is the worker i forwards to on its way to
    the pivot. For ``FROM`` trees ``next[i]`` is the worker that relays the
    pivot's broadcasts to i (the ``next_{st_bc}`` relation). ``mu[i]`` is the
    summed ``rho`` along the tree path in the tree's direction.
    """

    pivot: int
    direction: Direction
    next: tuple[int, ...]
    mu: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.next)

    def reachable(self, i: int) -> bool:
        return math.isfinite(self.mu[i])

    def children(self, i: int) -> list[int]:
        return [p for p, q in enumerate(self.next) if q == i]

    def path(self, i: int) -> list[int]:
        """Tree path from i up to the pivot (inclusive)."""
        out = [i]
        while out[-1] != self.pivot:
            nxt = self.next[out[-1]]
            if nxt == TERMINAL:
                raise TopologyError(f"worker {i} is not attached to pivot {self.pivot}")
            out.append(nxt)
            if len(out) > self.n:
                raise TopologyError("routing tree contains a cycle")
        return out


def next_worker(tree: SpanningTree, i: int) -> int:
    if not 0 <= i < tree.n:
        raise IndexError(i)
    return tree.next[i]


def shortest_path_tree(net: NetworkSpec, tau: np.ndarray | None, pivot: int,
                       direction: Direction | str = Direction.TOWARD) -> SpanningTree:
    """Dijkstra from the pivot; equal-length candidates keep the smaller predecessor.

    ``tau`` is only used as a consistency reference and may be ``None``.
    """
    direction = Direction(direction)
    n = net.n
    if not 0 <= pivot < n:
        raise IndexError(pivot)
    # toward: relax i <- q over edge i->q, so walk the reversed graph
    w = net.rho.T if direction is Direction.TOWARD else net.rho
    dist = [INF] * n
    parent = [TERMINAL] * n
    done = [False] * n
    dist[pivot] = 0.0
    heap = [(0.0, pivot)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        row = w[u]
        for v in range(n):
            if v == u or done[v]:
                continue
            c = row[v]
            if c == INF:
                continue
            nd = d + c
            tol = 1e-12 * max(abs(nd), 1.0)
            if nd < dist[v] - tol:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
            elif nd <= dist[v] + tol and u < parent[v]:
                parent[v] = u
    parent[pivot] = TERMINAL
    if tau is not None:
        ref = tau[:, pivot] if direction is Direction.TOWARD else tau[pivot, :]
        for i in range(n):
            if math.isfinite(ref[i]) != math.isfinite(dist[i]):
                raise TopologyError("tau is inconsistent with rho")
    return SpanningTree(pivot, direction, tuple(parent), tuple(float(x) for x in dist))


def tree_from_next(net: NetworkSpec, pivot: int, nxt: Sequence[int],
                   direction: Direction | str = Direction.TOWARD) -> SpanningTree:
    """Build an explicit tree from a next-hop list and compute its latencies."""
    direction = Direction(direction)
    n = net.n
    if len(nxt) != n:
        raise TopologyError("next list must have one entry per worker")
    nxt = tuple(TERMINAL if (q is None or q == TERMINAL) else int(q) for q in nxt)
    if nxt[pivot] != TERMINAL:
        raise TopologyError("pivot must map to the terminal sentinel")
    mu = [INF] * n
    for i in range(n):
        total, cur, hops = 0.0, i, 0
        while cur != pivot:
            q = nxt[cur]
            if q == TERMINAL:
                total = INF
                break
            hops += 1
            if hops > n:
                raise TopologyError("routing tree contains a cycle")
            total += net.rho[cur, q] if direction is Direction.TOWARD else net.rho[q, cur]
            cur = q
        mu[i] = total
    return SpanningTree(pivot, direction, nxt, tuple(mu))


# ---------------------------------------------------------------- generators

def _h_vector(h, n: int) -> np.ndarray:
    arr = np.asarray(h, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise TopologyError(f"h must be a scalar or have {n} entries")
    return arr


def _empty_rho(n: int) -> np.ndarray:
    rho = np.full((n, n), INF)
    np.fill_diagonal(rho, 0.0)
    return rho


def build_line(n: int, rho: float, h=1.0) -> NetworkSpec:
    if n < 1:
        raise TopologyError("line needs n >= 1")
    r = _empty_rho(n)
    for i in range(n - 1):
        r[i, i + 1] = r[i + 1, i] = rho
    return NetworkSpec(_h_vector(h, n), r)


def mesh_index(coords: Sequence[int], dims: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(coords), tuple(dims)))


def _grid(dims: Sequence[int], rho: float, h, wrap: bool) -> NetworkSpec:
    dims = [int(d) for d in dims]
    if not dims or any(d < 1 for d in dims):
        raise TopologyError(f"grid dimensions must be positive, got {dims}")
    n = int(np.prod(dims))
    r = _empty_rho(n)
    for coords in itertools.product(*(range(d) for d in dims)):
        i = mesh_index(coords, dims)
        for axis, size in enumerate(dims):
            c = list(coords)
            if coords[axis] + 1 < size:
                c[axis] += 1
            elif wrap and size > 2:
                c[axis] = 0
            else:
                continue
            j = mesh_index(c, dims)
            r[i, j] = min(r[i, j], rho)
            r[j, i] = min(r[j, i], rho)
    return NetworkSpec(_h_vector(h, n), r)


def build_mesh(dims: Sequence[int], rho: float, h=1.0) -> NetworkSpec:
    """Row-major N-dimensional grid; the last coordinate varies fastest."""
    return _grid(dims, rho, h, wrap=False)


def build_torus(dims: Sequence[int], rho: float, h=1.0) -> NetworkSpec:
    return _grid(dims, rho, h, wrap=True)


def build_star(n: int, rho_to_center: Sequence[float], rho_from_center: Sequence[float],
               h) -> NetworkSpec:
    """``n`` leaves (indices 0..n-1) around a center with index ``n``."""
    if n < 1:
        raise TopologyError("star needs at least one leaf")
    to_c = np.asarray(rho_to_center, dtype=float)
    from_c = np.asarray(rho_from_center, dtype=float)
    if to_c.shape != (n,) or from_c.shape != (n,):
        raise TopologyError("star edge lists must have one entry per leaf")
    r = _empty_rho(n + 1)
    r[:n, n] = to_c
    r[n, :n] = from_c
    return NetworkSpec(_h_vector(h, n + 1), r)


def build_from_edges(n: int, h, edges: Iterable[tuple[int, int, float]]) -> NetworkSpec:
    """Multigraph edge list (0-based); parallel edges collapse to their minimum."""
    r = _empty_rho(n)
    for i, j, w in edges:
        if i != j:
            r[i, j] = min(r[i, j], float(w))
    return NetworkSpec(_h_vector(h, n), r)


# ---------------------------------------------------------------- JSON I/O

def parse_real(v: Any) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity", "+inf"):
            return INF
        raise TopologyError(f"bad real value {v!r}")
    if v is None:
        return INF
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TopologyError(f"bad real value {v!r}")
    return float(v)


def format_real(x: float):
    return "inf" if x == INF else x


def _reals(v) -> Any:
    if isinstance(v, list):
        return [_reals(x) for x in v]
    return parse_real(v)


_NETWORK_KEYS = {
    None: {"n", "h", "rho", "edges"},
    "line": {"kind", "n", "rho", "h"},
    "mesh": {"kind", "dims", "rho", "h"},
    "torus": {"kind", "dims", "rho", "h"},
    "star": {"kind", "n", "rho_to_center", "rho_from_center", "h"},
}


def network_from_dict(d: dict) -> NetworkSpec:
    kind = d.get("kind")
    if kind not in _NETWORK_KEYS:
        raise TopologyError(f"unknown network kind {kind!r}")
    extra = set(d) - _NETWORK_KEYS[kind]
    if extra:
        raise TopologyError(f"unknown network keys {sorted(extra)}")
    try:
        if kind is None:
            n = int(d["n"])
            h = _reals(d["h"])
            if "rho" in d:
                if "edges" in d:
                    raise TopologyError("give either rho or edges, not both")
                return NetworkSpec(_h_vector(h, n), np.array(_reals(d["rho"]), dtype=float))
            edges = [(int(i) - 1, int(j) - 1, parse_real(w)) for i, j, w in d["edges"]]
            return build_from_edges(n, h, edges)
        h = _reals(d.get("h", 1.0))
        if kind == "line":
            return build_line(int(d["n"]), parse_real(d["rho"]), h)
        if kind in ("mesh", "torus"):
            build = build_mesh if kind == "mesh" else build_torus
            return build([int(x) for x in d["dims"]], parse_real(d["rho"]), h)
        return build_star(int(d["n"]), _reals(d["rho_to_center"]),
                          _reals(d["rho_from_center"]), h)
    except KeyError as e:
        raise TopologyError(f"network spec is missing key {e.args[0]!r}") from None


def network_to_dict(net: NetworkSpec) -> dict:
    return {
        "n": net.n,
        "h": [format_real(float(x)) for x in net.h],
        "rho": [[format_real(float(x)) for x in row] for row in net.rho],
    }
