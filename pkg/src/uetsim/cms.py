"""Congestion management: window control, receiver credits, load balancing.

A congestion control context (CCC) serves all packet delivery contexts of one
traffic type toward one peer. Two complementary algorithms gate sending:

* NSCC reacts at the sender to the pair (ECN mark, RTT sample) with four
  cases - hold, aggressive decrease, fast increase, gentle increase - plus
  Quick Adapt, which resets the window to the bytes actually delivered in the
  last base-RTT epoch whenever that epoch saw loss.
* RCCC is receiver-driven: the receiver tracks its active senders and paces
  credit grants at its line rate, splitting fairly subject to declared
  demand; senders spend credit per transmitted byte.

Either can be disabled; with both enabled a packet needs window room AND
credit. Load balancing picks the entropy value per packet and is kept fully
separate from the window math.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass


@dataclass
class CmsConfig:
    nscc: bool = False
    rccc: bool = False
    fixed_window: int | None = None  # bytes; used when nscc is off
    w_min: int = 4198
    w_max: int = 0  # 0 -> derived (4x bdp)
    bdp_bytes: int = 32 * 1024
    base_rtt_ns: int = 10_000
    mtu_wire: int = 4198
    # NSCC gains
    high_rtt_factor: float = 1.15
    md_gain: float = 0.8  # multiplicative-decrease scale on (rtt-base)/rtt
    md_cap: float = 0.5
    f_fast: float = 0.8
    f_gentle: float = 0.1
    # per-epoch upward creep of the base estimate; epochs are one base RTT,
    # so anything noticeably above 1.0 forgets the unloaded RTT within a
    # millisecond at desk scale and wrecks the low/high classification
    base_decay: float = 1.0
    # RCCC
    credit_quantum: int = 4198  # bytes granted per scheduler tick
    credit_cap: int = 0  # 0 -> 1 bdp
    idle_epochs: int = 2
    # retransmission
    min_rto_ns: int = 50_000
    rto_scale: int = 4
    # load balancing
    lb: str = "oblivious"  # oblivious | reps | bitmap
    bitmap_evs: int = 16
    ev_slots: int = 0  # >0 enables slot-pinned round-robin spraying


# --------------------------------------------------------------------------
# Load balancing policies
# --------------------------------------------------------------------------

class ObliviousLb:
    """Fresh random EV for every injected packet."""

    def __init__(self, rng):
        self.rng = rng

    def next_ev(self) -> int:
        return self.rng.randrange(1 << 16)

    def feedback(self, ev: int, congested: bool, last_hop: bool):
        pass


class RepsLb:
    """Recycled entropies spraying: reuse EVs echoed by clean acks."""

    def __init__(self, rng):
        self.rng = rng
        self.recycled: deque[int] = deque()

    def next_ev(self) -> int:
        if self.recycled:
            return self.recycled.popleft()
        return self.rng.randrange(1 << 16)

    def feedback(self, ev: int, congested: bool, last_hop: bool):
        # congested paths keep their EV out of circulation; last-hop trims
        # say nothing about the path, so the EV stays usable
        if congested and not last_hop:
            return
        self.recycled.append(ev)


class BitmapLb:
    """Fixed EV set with a congested bitmap; skipped bits clear for retry."""

    def __init__(self, rng, n_evs: int = 16):
        self.evs = [rng.randrange(1 << 16) for _ in range(n_evs)]
        self.congested = [False] * n_evs
        self.cursor = 0

    def next_ev(self) -> int:
        n = len(self.evs)
        for _ in range(n):
            i = self.cursor
            self.cursor = (self.cursor + 1) % n
            if self.congested[i]:
                self.congested[i] = False  # skipped once, eligible next round
                continue
            return self.evs[i]
        # everything was marked: all bits are now clear, just rotate
        i = self.cursor
        self.cursor = (self.cursor + 1) % len(self.evs)
        return self.evs[i]

    def feedback(self, ev: int, congested: bool, last_hop: bool):
        if congested and not last_hop and ev in self.evs:
            self.congested[self.evs.index(ev)] = True


def make_lb(policy: str, rng, cfg: CmsConfig):
    if policy == "oblivious":
        return ObliviousLb(rng)
    if policy == "reps":
        return RepsLb(rng)
    if policy == "bitmap":
        return BitmapLb(rng, cfg.bitmap_evs)
    raise ValueError(f"unknown load balancing policy {policy!r}")


# --------------------------------------------------------------------------
# Congestion control context
# --------------------------------------------------------------------------

@dataclass
class Signal:
    """What one acknowledgment tells the congestion controller."""

    acked_bytes: int = 0  # delivered bytes (window math, Quick Adapt)
    release_bytes: int = -1  # in-flight bytes freed; -1 means same as acked
    ecn: bool = False
    rtt_ns: int | None = None
    dfc_penalty: float | None = None


class Ccc:
    def __init__(self, sim, owner_id: int, peer: int, cfg: CmsConfig):
        self.sim = sim
        self.peer = peer
        self.cfg = cfg
        self.rng = sim.rng(f"ccc/{owner_id}->{peer}")
        bdp = cfg.bdp_bytes
        self.window = cfg.fixed_window if (cfg.fixed_window and not cfg.nscc) else bdp
        self.w_min = cfg.w_min
        self.w_max = cfg.w_max or 4 * bdp
        self.in_flight = 0
        self.base_rtt = float(cfg.base_rtt_ns)
        self.srtt = float(cfg.base_rtt_ns)
        # Quick Adapt epoch
        self.epoch_start = sim.now
        self.epoch_delivered = 0
        self.epoch_loss = False
        self.qa_resets = 0
        # RCCC sender side: start optimistic with a full BDP of credit
        self.credit_cap = cfg.credit_cap or bdp
        self.credits = self.credit_cap if cfg.rccc else 0
        self.lb = make_lb(cfg.lb, self.rng, cfg)

    # -- gates -----------------------------------------------------------------

    def can_send(self, nbytes: int) -> bool:
        if self.cfg.nscc or self.cfg.fixed_window:
            if self.in_flight + nbytes > self.window:
                return False
        if self.cfg.rccc and self.credits < nbytes:
            return False
        return True

    def on_send(self, nbytes: int):
        self.in_flight += nbytes
        if self.cfg.rccc:
            self.credits -= nbytes

    def on_credit(self, nbytes: int):
        self.credits = min(self.credits + nbytes, self.credit_cap)

    # -- signal processing -------------------------------------------------------

    def on_ack(self, sig: Signal):
        release = sig.acked_bytes if sig.release_bytes < 0 else sig.release_bytes
        self.in_flight = max(0, self.in_flight - release)
        self.epoch_delivered += sig.acked_bytes
        if sig.rtt_ns is not None:
            self.srtt += 0.125 * (sig.rtt_ns - self.srtt)
            if sig.rtt_ns < self.base_rtt:
                self.base_rtt = float(sig.rtt_ns)
            if self.cfg.nscc:
                self._nscc_update(sig)
        if sig.dfc_penalty is not None and self.cfg.nscc:
            self.window = max(self.w_min, int(self.window * sig.dfc_penalty))
        self._epoch_check()

    def _nscc_update(self, sig: Signal):
        rtt = sig.rtt_ns
        high = rtt > self.base_rtt * self.cfg.high_rtt_factor
        w = self.window
        # increases scale by acked/W so the growth per unit time is the same
        # for every flow (acks arrive in proportion to W); decreases scale by
        # acked bytes, giving the multiplicative part that restores fairness
        if sig.ecn and not high:
            pass  # congestion just building: hold
        elif sig.ecn and high:
            md = min(self.cfg.md_cap, self.cfg.md_gain * (rtt - self.base_rtt) / rtt)
            w -= md * sig.acked_bytes
        elif not sig.ecn and not high:
            gap = self.base_rtt / rtt
            w += self.cfg.mtu_wire * gap * self.cfg.f_fast * (
                sig.acked_bytes / max(1, self.window))
        else:
            w += self.cfg.mtu_wire * (sig.acked_bytes / max(1, self.window)) * self.cfg.f_gentle
        self.window = int(min(self.w_max, max(self.w_min, w)))

    def on_loss(self, nbytes: int, detector: str):
        self.in_flight = max(0, self.in_flight - nbytes)
        self.epoch_loss = True
        self.sim.count(f"loss_{detector}")
        self._epoch_check()

    def _epoch_check(self):
        """Quick Adapt: evaluated once per base-RTT epoch, only after loss."""
        if self.sim.now - self.epoch_start < self.base_rtt:
            return
        if self.cfg.nscc and self.epoch_loss:
            self.window = max(self.w_min, min(self.window, self.epoch_delivered))
            self.qa_resets += 1
        self.epoch_start = self.sim.now
        self.epoch_delivered = 0
        self.epoch_loss = False
        self.base_rtt *= self.cfg.base_decay

    def rto_ns(self) -> int:
        return max(self.cfg.min_rto_ns, int(self.cfg.rto_scale * self.srtt))

    # -- load balancing ----------------------------------------------------------

    def next_ev(self) -> int:
        return self.lb.next_ev()

    def lb_feedback(self, ev: int, congested: bool, last_hop: bool = False):
        self.lb.feedback(ev, congested, last_hop)


# --------------------------------------------------------------------------
# RCCC receiver: credit scheduler
# --------------------------------------------------------------------------

class CreditScheduler:
    """Receiver-side credit pacing across the active sender set.

    One grant quantum leaves per tick, round-robin over senders with
    remaining declared demand; the tick period is the quantum's wire time at
    the receiver's (possibly DFC-throttled) drain rate, so aggregate grants
    match what the receiver can absorb.
    """

    def __init__(self, sim, fep, line_rate_bps: int, cfg: CmsConfig):
        self.sim = sim
        self.fep = fep
        self.line_rate = line_rate_bps
        self.drain_rate = line_rate_bps  # DFC lowers this below line rate
        self.cfg = cfg
        self.senders: dict[int, dict] = {}  # peer -> {last_seen, demand}
        self.order: list[int] = []
        self.cursor = 0
        self._armed = False

    def note_request(self, peer: int, demand: int):
        rec = self.senders.get(peer)
        if rec is None:
            self.senders[peer] = {"last_seen": self.sim.now, "demand": demand}
            self.order.append(peer)
        else:
            rec["last_seen"] = self.sim.now
            rec["demand"] = demand
        if not self._armed:
            self._armed = True
            self.sim.after(self._period(), self._tick)

    def _period(self) -> int:
        rate = max(1, min(self.drain_rate, self.line_rate))
        return max(1, (self.cfg.credit_quantum * 8 * 1_000_000_000 + rate - 1) // rate)

    def _expire_idle(self):
        horizon = self.cfg.idle_epochs * self.cfg.base_rtt_ns
        live = [p for p in self.order if self.sim.now - self.senders[p]["last_seen"] <= horizon]
        for p in self.order:
            if p not in live:
                del self.senders[p]
        if len(live) != len(self.order):
            self.order = live
            self.cursor = 0

    def set_drain(self, rate_bps: int):
        """Destination flow control: grant no faster than memory can drain."""
        self.drain_rate = rate_bps

    def _tick(self):
        self._expire_idle()
        if not self.order:
            self._armed = False
            return
        for _ in range(len(self.order)):
            peer = self.order[self.cursor % len(self.order)]
            self.cursor = (self.cursor + 1) % len(self.order)
            rec = self.senders[peer]
            if rec["demand"] > 0:
                grant = min(self.cfg.credit_quantum, rec["demand"])
                rec["demand"] -= grant
                self.fep.send_credit(peer, grant)
                break
        self.sim.after(self._period(), self._tick)
