"""Deterministic discrete-event engine.

Single-threaded simulator with an integer-nanosecond virtual clock, a binary
heap of events with FIFO tie-breaking, and per-component derived random
streams. One Simulator instance owns all mutable state of a run; separate
instances share nothing, so parameter sweeps can run in parallel processes.
"""

from __future__ import annotations

import heapq
import random

# Packet fates for the conservation identity: every injected packet ends up
# in exactly one bucket (or is still in flight when the run stops).
FATE_DELIVERED = "delivered"
FATE_DROP_CONGESTION = "dropped_congestion"
FATE_DROP_CORRUPTION = "dropped_corruption"
FATE_DROP_CONFIG = "dropped_configuration"
FATE_TRIMMED_DELIVERED = "trimmed_delivered"

ALL_FATES = (
    FATE_DELIVERED,
    FATE_DROP_CONGESTION,
    FATE_DROP_CORRUPTION,
    FATE_DROP_CONFIG,
    FATE_TRIMMED_DELIVERED,
)


class SchedulingError(Exception):
    """Raised when an event is scheduled before the current virtual time."""


class EventHandle:
    """Cancellation token for a scheduled event."""

    __slots__ = ("fn", "args", "active")

    def __init__(self, fn, args):
        self.fn = fn
        self.args = args
        self.active = True

    def cancel(self):
        self.active = False


class Simulator:
    """Virtual clock + event queue + seeded randomness + global counters."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now = 0  # integer nanoseconds
        self._heap: list = []
        self._seq = 0
        self._rngs: dict[str, random.Random] = {}
        self.counters: dict[str, int] = {}
        self.injected = 0
        self._fates = {fate: 0 for fate in ALL_FATES}
        self.fate_hook = None  # optional callable(pkt, fate, now)

    # -- randomness ---------------------------------------------------------

    def rng(self, component: str) -> random.Random:
        """Random stream derived from (seed, component id).

        Each component draws from its own stream so adding a component does
        not perturb the draws seen by the others.
        """
        r = self._rngs.get(component)
        if r is None:
            r = random.Random(f"{self.seed}/{component}".encode())
            self._rngs[component] = r
        return r

    # -- event queue --------------------------------------------------------

    def schedule(self, at: int, fn, *args) -> EventHandle:
        """Enqueue fn(*args) to run at virtual time `at` (absolute ns)."""
        if at < self.now:
            raise SchedulingError(
                f"event scheduled at t={at}ns before current clock {self.now}ns"
            )
        handle = EventHandle(fn, args)
        heapq.heappush(self._heap, (at, self._seq, handle))
        self._seq += 1
        return handle

    def after(self, delay: int, fn, *args) -> EventHandle:
        return self.schedule(self.now + delay, fn, *args)

    def cancel(self, handle: EventHandle):
        handle.cancel()

    def run_until(self, t_end: int) -> int:
        """Dispatch all events with fire time <= t_end; return dispatch count.

        Queue exhaustion before t_end is normal termination. The clock never
        moves backwards; it lands on t_end when the run stops early.
        """
        dispatched = 0
        heap = self._heap
        while heap:
            at, _, handle = heap[0]
            if at > t_end:
                break
            heapq.heappop(heap)
            if not handle.active:
                continue
            self.now = at
            handle.fn(*handle.args)
            dispatched += 1
        if self.now < t_end:
            self.now = t_end
        return dispatched

    def pending(self) -> int:
        return sum(1 for _, _, h in self._heap if h.active)

    # -- accounting ---------------------------------------------------------

    def count(self, name: str, inc: int = 1):
        self.counters[name] = self.counters.get(name, 0) + inc

    def account_injection(self) -> int:
        """Register one wire injection; returns the injection id."""
        self.injected += 1
        return self.injected

    def account_fate(self, pkt, fate: str):
        """Record the terminal fate of an injected packet, exactly once."""
        if pkt.fate is not None:
            raise RuntimeError(f"packet {pkt.injection} got two fates: {pkt.fate}, {fate}")
        pkt.fate = fate
        self._fates[fate] += 1
        if self.fate_hook is not None:
            self.fate_hook(pkt, fate, self.now)

    def fate_totals(self) -> dict[str, int]:
        totals = dict(self._fates)
        totals["in_flight"] = self.injected - sum(self._fates.values())
        totals["injected"] = self.injected
        return totals

    def conservation_holds(self) -> bool:
        t = self.fate_totals()
        return t["in_flight"] >= 0 and (
            sum(t[f] for f in ALL_FATES) + t["in_flight"] == t["injected"]
        )
