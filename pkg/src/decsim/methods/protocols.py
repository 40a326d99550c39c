"""Event-driven protocol simulations.

A protocol run produces a :class:`Schedule`: iteration times plus the
provenance of every sample that entered each update. Messages carry sample
counts and stream addresses instead of vectors; the vectors are rebuilt
afterwards by the executor. Nothing in the timing depends on vector values,
so this is exact and lets one schedule be replayed for many stepsizes.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..engine import WAKE, Channel, ComputeUnit, Engine, Jitter, SimulationError
from ..equilibrium import select_pivot
from ..rng import Stream
from ..topology import (INF, TERMINAL, Direction, NetworkSpec, SpanningTree,
                        all_pairs_shortest, shortest_path_tree, tree_from_next)
from .config import ConfigError, IterationSchedule, MethodConfig, Schedule


def resolve_trees(net: NetworkSpec, cfg: MethodConfig,
                  tau: Optional[np.ndarray] = None) -> tuple[int, SpanningTree, SpanningTree]:
    tau = all_pairs_shortest(net) if tau is None else tau
    n = net.n
    if cfg.pivot == "auto":
        if cfg.base == "fragile":
            pivot, _ = select_pivot(net, tau, cfg.S, roundtrip=True)
        else:
            ecc = (tau + tau.T).max(axis=1)
            pivot = int(np.argmin(ecc))
    else:
        pivot = int(cfg.pivot)
        if not 0 <= pivot < n:
            raise ConfigError(f"pivot {pivot} out of range")
    if cfg.trees == "shortest-path":
        up = shortest_path_tree(net, tau, pivot, Direction.TOWARD)
        down = shortest_path_tree(net, tau, pivot, Direction.FROM)
    else:
        try:
            up = tree_from_next(net, pivot, cfg.trees["st"], Direction.TOWARD)
            down = tree_from_next(net, pivot, cfg.trees["st_bc"], Direction.FROM)
        except KeyError as e:
            raise ConfigError("explicit trees need 'st' and 'st_bc'") from e
    return pivot, up, down


class _Base:
    def __init__(self, net: NetworkSpec, cfg: MethodConfig, up: SpanningTree,
                 down: SpanningTree):
        self.net = net
        self.cfg = cfg
        self.n = net.n
        self.up = up
        self.down = down
        self.pivot = up.pivot
        self.K = int(cfg.K)
        self.S = int(cfg.S)
        self.engine = Engine(cfg.max_events, cfg.log_events)
        self.channels: dict[tuple[int, int], Channel] = {}
        self.up_children = [[] for _ in range(self.n)]
        self.down_children = [[] for _ in range(self.n)]
        for i in range(self.n):
            if up.next[i] != TERMINAL:
                self.up_children[up.next[i]].append(i)
            if down.next[i] != TERMINAL:
                self.down_children[down.next[i]].append(i)
        self.task_points: list[list[int]] = [[] for _ in range(self.n)]
        self.units = []
        for i in range(self.n):
            jit = None
            if cfg.jitter < 1.0:
                jit = Jitter(Stream(cfg.seed, i, "compute"), cfg.jitter)
            self.units.append(ComputeUnit(i, net.h[i], self._compute_done, jit))
        self.sched = Schedule(cfg.method, self.n, self.pivot, self.S, up=up, down=down,
                              task_points=self.task_points)
        self.k = 0
        self.t_start = 0.0
        self.msg_mark = 0
        self.messages = 0
        self.done = False
        self.decide_pending = [False] * self.n

    def channel(self, i: int, j: int) -> Channel:
        ch = self.channels.get((i, j))
        if ch is None:
            ch = Channel(i, j, self.net.rho[i, j], self._deliver)
            self.channels[(i, j)] = ch
        return ch

    def send(self, i: int, j: int, payload, kind: str, iteration: int) -> None:
        self.messages += 1
        self.channel(i, j).send(self.engine, payload, kind, iteration)

    def decide_later(self, i: int) -> None:
        """Run ``decide(i)`` once, after all other events of the current instant."""
        if not self.decide_pending[i]:
            self.decide_pending[i] = True
            self.engine.schedule(self.engine.now, WAKE, self._wake, None, i, i, self.k, priority=1)

    def _wake(self, ev) -> None:
        self.decide_pending[ev.src] = False
        self.decide(ev.src)

    def decide(self, i: int) -> None:
        pass

    def start_task(self, i: int, k: int) -> None:
        unit = self.units[i]
        if unit.busy and unit.started_at == self.engine.now:
            # replaced before any time elapsed: reuse its sample index
            unit.interrupt()
            unit.tasks -= 1
            self.task_points[i].pop()
        self.task_points[i].append(k)
        unit.start(self.engine, k, k)

    def close(self, contributions: list[tuple[int, int, int]]) -> None:
        now = self.engine.now
        self.sched.iterations.append(IterationSchedule(
            self.k, self.t_start, now, contributions, self.messages - self.msg_mark))
        self.msg_mark = self.messages
        self.t_start = now
        self.k += 1
        if self.k >= self.K or now > self.cfg.until:
            self.done = True

    def run(self) -> Schedule:
        self.begin()
        eng = self.engine
        eng.run(lambda: self.done, self.cfg.until)
        if not self.done and not eng.pending() and self.k < self.K:
            raise SimulationError(f"{self.cfg.method} stalled at iteration {self.k}, "
                                  f"t={eng.now}: no pending events")
        self.sched.events = eng.processed
        self.sched.messages = self.messages
        self.sched.end_time = eng.now
        if self.cfg.log_events:
            self.sched.event_log = eng.log
        return self.sched

    # hooks
    def begin(self) -> None:
        raise NotImplementedError

    def _compute_done(self, unit: ComputeUnit, task: int, k: int) -> None:
        raise NotImplementedError

    def _deliver(self, ch: Channel, payload) -> None:
        raise NotImplementedError


def _merge(dst: dict, src: dict) -> None:
    for w, (a, b) in src.items():
        cur = dst.get(w)
        if cur is None:
            dst[w] = [a, b]
        else:
            if cur[1] != a:
                raise SimulationError(f"non-contiguous samples from worker {w}")
            cur[1] = b


class FragileProtocol(_Base):
    """Asynchronous batch collection toward the pivot with k_max filtering."""

    def __init__(self, net, cfg, up, down):
        super().__init__(net, cfg, up, down)
        n = self.n
        self.k_max = [-1] * n
        self.acc_count = [0] * n
        self.acc = [dict() for _ in range(n)]
        self.last_sent = [-1] * n
        self.announce = cfg.announce_kmax
        useful = [i for i in range(n) if math.isfinite(up.mu[i]) and math.isfinite(down.mu[i])
                  and math.isfinite(net.h[i])]
        if not useful:
            raise ConfigError("no worker can both receive points from and send gradients "
                              "to the pivot")
        self.s = 0
        self.ranges: dict = {}

    def begin(self):
        self.on_point(self.pivot, 0)

    def on_point(self, i: int, kb: int) -> None:
        if kb > self.k_max[i]:
            self.k_max[i] = kb
            self.acc_count[i] = 0
            self.acc[i] = {}
        for c in self.down_children[i]:
            self.send(i, c, ("x", kb), "point", kb)
        self.start_task(i, kb)
        self.decide_later(i)

    def _compute_done(self, unit, task, kb):
        i = unit.worker
        if kb == self.k_max[i]:
            self.acc_count[i] += 1
            _merge(self.acc[i], {i: (task, task + 1)})
        self.start_task(i, kb)
        self.decide_later(i)

    def decide(self, i: int) -> None:
        if i == self.pivot:
            if self.acc_count[i]:
                cnt, rng_ = self.acc_count[i], self.acc[i]
                self.acc_count[i] = 0
                self.acc[i] = {}
                self.process0(self.k_max[i], cnt, rng_)
            return
        q = self.up.next[i]
        if q == TERMINAL:
            return
        ch = self.channel(i, q)
        if not ch.idle(self.engine.now):
            return
        if self.acc_count[i] == 0 and (not self.announce or self.k_max[i] <= self.last_sent[i]):
            return
        payload = ("g", self.k_max[i], self.acc_count[i], self.acc[i])
        self.acc_count[i] = 0
        self.acc[i] = {}
        self.last_sent[i] = self.k_max[i]
        self.send(i, q, payload, "gradients", payload[1])

    def _deliver(self, ch, payload):
        q = ch.dst
        if payload[0] == "x":
            self.on_point(q, payload[1])
        else:
            _, kh, cnt, rng_ = payload
            if kh > self.k_max[q]:
                self.k_max[q] = kh
                self.acc_count[q] = 0
                self.acc[q] = {}
            if kh == self.k_max[q] and cnt:
                self.acc_count[q] += cnt
                _merge(self.acc[q], rng_)
            self.decide_later(q)
        self.decide_later(ch.src)

    def process0(self, kh: int, cnt: int, rng_: dict) -> None:
        if self.done:
            return
        if kh > self.k:
            raise SimulationError("gradient tagged with a future iteration")
        if kh < self.k:
            return
        self.s += cnt
        _merge(self.ranges, rng_)
        if self.s >= self.S:
            contribs = sorted((w, a, b - a) for w, (a, b) in self.ranges.items())
            self.s = 0
            self.ranges = {}
            self.close(contribs)
            if not self.done:
                self.on_point(self.pivot, self.k)


class AmelieProtocol(_Base):
    """Counter aggregation until sum 1/s_i <= n^2/S, then a tree all-reduce.

    The all-reduce is modelled causally: a request travels down the broadcast
    tree, per-worker averages are combined up the aggregation tree, and the
    resulting point is the next broadcast.
    """

    def __init__(self, net, cfg, up, down):
        super().__init__(net, cfg, up, down)
        n = self.n
        bad = [i for i in range(n) if not (math.isfinite(up.mu[i]) and math.isfinite(down.mu[i])
                                           and math.isfinite(net.h[i]))]
        if bad:
            raise ConfigError(f"{cfg.method} needs every worker reachable with finite h; "
                              f"offending workers (1-based): {[i + 1 for i in bad]}")
        self.point = [-1] * n
        self.s_i = [0] * n
        self.first_task = [0] * n
        self.b_child = [dict() for _ in range(n)]
        self.stored = [dict() for _ in range(n)]
        self.b = [INF] * n
        self.last_b = [(-1, INF)] * n
        self.req = [-1] * n
        self.partials = [dict() for _ in range(n)]
        self.sent_partial = [-1] * n
        self.reducing = False
        self.limit = n * n / self.S
        self.snapshot_b: list[float] = []

    def begin(self):
        self.on_point(self.pivot, 0)

    def on_point(self, i: int, k: int) -> None:
        self.point[i] = k
        self.s_i[i] = 0
        bc = {}
        for p in self.up_children[i]:
            st = self.stored[i].get(p)
            bc[p] = st[1] if st is not None and st[0] == k else INF
        self.b_child[i] = bc
        self.last_b[i] = (k, INF)
        for c in self.down_children[i]:
            self.send(i, c, ("x", k), "point", k)
        self.start_task(i, k)
        self.first_task[i] = len(self.task_points[i]) - 1
        self.update_b(i)

    def _compute_done(self, unit, task, k):
        i = unit.worker
        if k == self.point[i]:
            self.s_i[i] += 1
            self.update_b(i)
        if not unit.busy:  # update_b may already have moved i to a new point
            self.start_task(i, self.point[i])

    def update_b(self, i: int) -> None:
        own = 1.0 / self.s_i[i] if self.s_i[i] else INF
        self.b[i] = sum(self.b_child[i].values()) + own
        if i == self.pivot:
            self.check()
        else:
            self.decide_later(i)

    def decide(self, i: int) -> None:
        q = self.up.next[i]
        ch = self.channel(i, q)
        if not ch.idle(self.engine.now):
            return
        cur = (self.point[i], self.b[i])
        if cur == self.last_b[i]:
            return
        self.last_b[i] = cur
        self.send(i, q, ("b", cur[0], cur[1]), "counter", cur[0])

    def check(self) -> None:
        if self.reducing or self.done:
            return
        if self.point[self.pivot] == self.k and self.b[self.pivot] <= self.limit:
            self.reducing = True
            self.snapshot_b.append(self.b[self.pivot])
            self.on_request(self.pivot, self.k)

    def on_request(self, i: int, k: int) -> None:
        self.req[i] = k
        for c in self.down_children[i]:
            self.send(i, c, ("r", k), "reduce_request", k)
        self.maybe_partial(i, k)

    def maybe_partial(self, i: int, k: int) -> None:
        if self.req[i] != k or self.sent_partial[i] >= k:
            return
        got = self.partials[i].get(k)
        have = got[0] if got else 0
        if have < len(self.up_children[i]):
            return
        if self.point[i] != k or self.s_i[i] < 1:
            raise SimulationError(f"worker {i} joined reduce {k} without gradients")
        contribs = list(got[1]) if got else []
        contribs.append((i, self.first_task[i], self.s_i[i]))
        self.partials[i].pop(k, None)
        self.sent_partial[i] = k
        if i == self.pivot:
            self.reducing = False
            self.close(sorted(contribs))
            if not self.done:
                self.on_point(self.pivot, self.k)
        else:
            self.send(i, self.up.next[i], ("p", k, contribs), "reduce_partial", k)

    def _deliver(self, ch, payload):
        q, kind = ch.dst, payload[0]
        if kind == "x":
            self.on_point(q, payload[1])
        elif kind == "r":
            self.on_request(q, payload[1])
        elif kind == "b":
            _, kp, val = payload
            if kp == self.point[q]:
                self.b_child[q][ch.src] = val
                self.update_b(q)
            elif kp > self.point[q]:
                self.stored[q][ch.src] = (kp, val)
        else:
            _, k, contribs = payload
            cnt, lst = self.partials[q].get(k, (0, []))
            self.partials[q][k] = (cnt + 1, lst + contribs)
            self.maybe_partial(q, k)
        if ch.src != self.pivot:
            self.decide_later(ch.src)


class MinibatchProtocol(_Base):
    """Synchronous rounds: broadcast, one gradient per worker, tree aggregation."""

    def __init__(self, net, cfg, up, down):
        super().__init__(net, cfg, up, down)
        n = self.n
        bad = [i for i in range(n) if not (math.isfinite(up.mu[i]) and math.isfinite(down.mu[i])
                                           and math.isfinite(net.h[i]))]
        if bad:
            raise ConfigError(f"minibatch needs every worker reachable with finite h; "
                              f"offending workers (1-based): {[i + 1 for i in bad]}")
        self.own = [None] * n
        self.point = [-1] * n
        self.partials = [dict() for _ in range(n)]

    def begin(self):
        self.on_point(self.pivot, 0)

    def on_point(self, i, k):
        self.point[i] = k
        self.own[i] = None
        for c in self.down_children[i]:
            self.send(i, c, ("x", k), "point", k)
        self.start_task(i, k)

    def _compute_done(self, unit, task, k):
        i = unit.worker
        self.own[i] = (i, task, 1)
        self.maybe_send(i, k)

    def maybe_send(self, i, k):
        if self.point[i] != k or self.own[i] is None:
            return
        cnt, lst = self.partials[i].get(k, (0, []))
        if cnt < len(self.up_children[i]):
            return
        self.partials[i].pop(k, None)
        contribs = lst + [self.own[i]]
        self.own[i] = None
        if i == self.pivot:
            self.close(sorted(contribs))
            if not self.done:
                self.on_point(self.pivot, self.k)
        else:
            self.send(i, self.up.next[i], ("p", k, contribs), "gradients", k)

    def _deliver(self, ch, payload):
        q = ch.dst
        if payload[0] == "x":
            self.on_point(q, payload[1])
        else:
            _, k, contribs = payload
            cnt, lst = self.partials[q].get(k, (0, []))
            self.partials[q][k] = (cnt + 1, lst + contribs)
            self.maybe_send(q, k)


PROTOCOLS = {"fragile": FragileProtocol, "amelie": AmelieProtocol,
             "minibatch": MinibatchProtocol}


def simulate_schedule(net: NetworkSpec, cfg: MethodConfig,
                      tau: Optional[np.ndarray] = None) -> Schedule:
    """Run the timing protocol of ``cfg.method`` and return its schedule."""
    pivot, up, down = resolve_trees(net, cfg, tau)
    proto = PROTOCOLS[cfg.base](net, cfg, up, down)
    return proto.run()
