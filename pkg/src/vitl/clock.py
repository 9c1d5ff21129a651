"""Time sources: wall clock for the service, virtual clock for tests and
the simulation harness, and a deterministic event scheduler on top."""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable, Protocol


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class RealClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Clock that only moves when told to; sleep() jumps it forward.

    Safe to share between threads, but deterministic runs should drive it
    from a single thread (the event scheduler does).
    """

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        with self._lock:
            self._now += seconds

    def advance_to(self, when: float) -> None:
        with self._lock:
            if when < self._now:
                raise ValueError(f"clock cannot move backwards: {when} < {self._now}")
            self._now = when


class ScheduledEvent:
    __slots__ = ("at", "seq", "fn", "cancelled")

    def __init__(self, at: float, seq: int, fn: Callable[[], None]):
        self.at = at
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "ScheduledEvent") -> bool:
        return (self.at, self.seq) < (other.at, other.seq)


class EventScheduler:
    """Single-threaded discrete-event loop over a VirtualClock.

    Events fire in (time, insertion order), so a run is reproducible for a
    fixed sequence of schedule() calls.
    """

    def __init__(self, clock: VirtualClock):
        self.clock = clock
        self._heap: list[ScheduledEvent] = []
        self._seq = itertools.count()

    def at(self, when: float, fn: Callable[[], None]) -> ScheduledEvent:
        if when < self.clock.now():
            raise ValueError("cannot schedule in the past")
        ev = ScheduledEvent(when, next(self._seq), fn)
        heapq.heappush(self._heap, ev)
        return ev

    def after(self, delay: float, fn: Callable[[], None]) -> ScheduledEvent:
        return self.at(self.clock.now() + delay, fn)

    def pending(self) -> int:
        return sum(1 for ev in self._heap if not ev.cancelled)

    def run(self, until: float | None = None) -> float:
        """Process events in order; returns the time of the last one fired.

        Callbacks may schedule further events. Stops when the queue drains
        or the next event lies beyond `until`.
        """
        last = self.clock.now()
        while self._heap:
            ev = self._heap[0]
            if ev.cancelled:
                heapq.heappop(self._heap)
                continue
            if until is not None and ev.at > until:
                break
            heapq.heappop(self._heap)
            self.clock.advance_to(ev.at)
            last = ev.at
            ev.fn()
        return last
