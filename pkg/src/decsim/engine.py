"""Discrete-event core: event queue, FIFO channels and compute units."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional

MIN_COMPUTE = 1e-12

COMPUTE_DONE = "compute_done"
DELIVERED = "delivered"
WAKE = "wake"


class SimulationError(RuntimeError):
    """Raised on invariant violations inside a simulation."""


class LivelockError(SimulationError):
    pass


class Event:
    __slots__ = ("time", "seq", "kind", "handler", "payload", "src", "dst", "iteration",
                 "cancelled")

    def __init__(self, time: float, seq: int, kind: str, handler: Callable, payload,
                 src: int, dst: int, iteration: int):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.handler = handler
        self.payload = payload
        self.src = src
        self.dst = dst
        self.iteration = iteration
        self.cancelled = False

    def __repr__(self) -> str:
        return f"Event({self.time!r}, {self.seq}, {self.kind!r}, {self.src}->{self.dst})"


class Engine:
    """Min-heap of events ordered by ``(time, priority, seq)``.

    Priority 0 is used for deliveries and compute completions. Priority 1
    events (decisions) at time t run only after every priority-0 event at t,
    so a decision sees everything that happened in that instant.
    """

    def __init__(self, max_events: int = 50_000_000, log_events: bool = False):
        self.now = 0.0
        self._seq = 0
        self._heap: list = []
        self.max_events = int(max_events)
        self.processed = 0
        self.log_events = log_events
        self.log: list[tuple] = []

    def schedule(self, time: float, kind: str, handler: Callable, payload=None,
                 src: int = -1, dst: int = -1, iteration: int = -1,
                 priority: int = 0) -> Event:
        if not time >= self.now:
            raise SimulationError(f"cannot schedule at {time} < now={self.now}")
        if math.isinf(time):
            raise SimulationError("cannot schedule an event at infinite time")
        ev = Event(time, self._seq, kind, handler, payload, src, dst, iteration)
        heapq.heappush(self._heap, (time, priority, self._seq, ev))
        self._seq += 1
        return ev

    @staticmethod
    def cancel(ev: Optional[Event]) -> None:
        if ev is not None:
            ev.cancelled = True

    def pending(self) -> int:
        return len(self._heap)

    def step(self) -> Optional[Event]:
        heap = self._heap
        while heap:
            ev = heapq.heappop(heap)[3]
            if ev.cancelled:
                continue
            self.now = ev.time
            self.processed += 1
            if self.processed > self.max_events:
                raise LivelockError(f"event cap {self.max_events} exceeded at t={self.now}")
            if self.log_events:
                self.log.append((ev.time, ev.seq, ev.kind, ev.src, ev.dst, ev.iteration))
            ev.handler(ev)
            return ev
        return None

    def run(self, stop: Callable[[], bool] = lambda: False,
            until: float = math.inf) -> float:
        """Process events until ``stop()`` holds, the queue drains or time passes ``until``."""
        heap = self._heap
        while heap and not stop():
            if heap[0][0] > until:
                break
            self.step()
        return self.now

    def write_log(self, path, one_based: bool = True) -> None:
        off = 1 if one_based else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "seq", "kind", "src", "dst", "iteration"])
            for t, seq, kind, src, dst, it in self.log:
                w.writerow([repr(t), seq, kind,
                            src + off if src >= 0 else "",
                            dst + off if dst >= 0 else "", it])


class Channel:
    """Directed FIFO link: a send at time t is delivered at max(t, busy_until) + delay."""

    __slots__ = ("src", "dst", "delay", "busy_until", "in_flight", "sent", "on_deliver")

    def __init__(self, src: int, dst: int, delay: float,
                 on_deliver: Optional[Callable] = None):
        if delay < 0 or math.isnan(delay):
            raise SimulationError(f"invalid channel delay {delay}")
        self.src = src
        self.dst = dst
        self.delay = float(delay)
        self.busy_until = 0.0
        self.in_flight = 0
        self.sent = 0
        self.on_deliver = on_deliver

    def idle(self, now: float) -> bool:
        return self.busy_until <= now

    def send(self, engine: Engine, payload, kind: str = DELIVERED,
             iteration: int = -1) -> float:
        """Enqueue ``payload``; returns the delivery time (inf if never delivered)."""
        self.sent += 1
        start = max(engine.now, self.busy_until)
        t = start + self.delay
        self.busy_until = t
        if math.isinf(t):
            return t
        self.in_flight += 1
        engine.schedule(t, kind, self._deliver, payload, self.src, self.dst, iteration)
        return t

    def _deliver(self, ev: Event) -> None:
        self.in_flight -= 1
        if self.on_deliver is not None:
            self.on_deliver(self, ev.payload)


class ComputeUnit:
    """One gradient computation at a time; a new start interrupts the running one."""

    __slots__ = ("worker", "h", "jitter", "tasks", "current", "on_done", "started_at")

    def __init__(self, worker: int, h: float, on_done: Callable,
                 jitter: Optional[Callable[[int], float]] = None):
        self.worker = worker
        self.h = float(h)
        self.jitter = jitter
        self.tasks = 0
        self.current: Optional[Event] = None
        self.on_done = on_done
        self.started_at = 0.0

    @property
    def busy(self) -> bool:
        return self.current is not None

    def duration(self, task: int) -> float:
        d = self.h if self.jitter is None else self.jitter(task) * self.h
        return d if d > 0 else MIN_COMPUTE

    def start(self, engine: Engine, payload, iteration: int = -1) -> Optional[Event]:
        """Start a task (interrupting any running one). Returns None when h is infinite."""
        self.interrupt()
        task = self.tasks
        self.tasks += 1
        d = self.duration(task)
        self.started_at = engine.now
        if math.isinf(d):
            return None
        self.current = engine.schedule(engine.now + d, COMPUTE_DONE, self._done,
                                       (task, payload), self.worker, self.worker, iteration)
        return self.current

    def interrupt(self) -> None:
        if self.current is not None:
            self.current.cancelled = True
            self.current = None

    def _done(self, ev: Event) -> None:
        self.current = None
        task, payload = ev.payload
        self.on_done(self, task, payload)


@dataclass
class Jitter:
    """Compute-time multiplier U ~ Uniform[lo, 1] read from a keyed stream."""

    stream: object
    lo: float

    def __call__(self, task: int) -> float:
        u = float(self.stream.row(task)[0])
        return self.lo + (1.0 - self.lo) * u
