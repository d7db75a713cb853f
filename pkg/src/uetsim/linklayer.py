"""Per-link machinery: transmission, corruption, LLR and CBFC.

LLR (link level retry) keeps a replay buffer of unacked frames with 8-bit
preamble sequence numbers and recovers corruption losses with go-back-N plus
a short retransmit timer, so upper layers never see loss on an LLR link.
CBFC (credit-based flow control) gates transmission on receiver buffer
credits tracked by two 20-bit cyclic counters per virtual channel.

The LlrTx/LlrRx/CbfcVc state machines are pure; `LinkDir` drives them inside
the event engine, and the audit helpers at the bottom drive the same machines
through a self-contained single-link simulation for long soak runs.
"""

from __future__ import annotations

from collections import deque

from .engine import FATE_DROP_CORRUPTION
from .wire import serialization_ns

LLR_SEQ_MASK = 0xFF
LLR_WINDOW = 128  # replay window <= half the 8-bit space keeps go-back-N unambiguous
CBFC_MASK = (1 << 20) - 1
ORDERED_SET_BYTES = 8  # link control (N)ACKs and credit updates
CBFC_SYNC_BYTES = 64  # low-frequency sender->receiver counter update


def corruption_probability(ber: float, wire_bytes: int) -> float:
    if ber <= 0.0:
        return 0.0
    if ber >= 1.0:
        return 1.0
    return 1.0 - (1.0 - ber) ** (8 * wire_bytes)


# --------------------------------------------------------------------------
# LLR state machines
# --------------------------------------------------------------------------

def _seq_dist(a: int, b: int) -> int:
    """Forward distance from b to a in 8-bit sequence space."""
    return (a - b) & LLR_SEQ_MASK


class LlrTx:
    def __init__(self):
        self.next_seq = 0
        self.unacked: deque = deque()  # (seq, frame) in send order
        self.replay: deque = deque()  # frames waiting to re-enter the wire
        self.retransmissions = 0

    def can_accept(self) -> bool:
        return len(self.unacked) < LLR_WINDOW

    def tag(self, frame) -> int:
        seq = self.next_seq
        self.next_seq = (self.next_seq + 1) & LLR_SEQ_MASK
        self.unacked.append((seq, frame))
        return seq

    def on_ack(self, seq: int):
        """Cumulative ack: frees everything up to and including seq."""
        while self.unacked and _seq_dist(seq, self.unacked[0][0]) < LLR_WINDOW:
            self.unacked.popleft()

    def rewind(self):
        """Go-back-N: replay every unacked frame in order."""
        self.replay = deque(self.unacked)
        self.retransmissions += len(self.replay)

    def next_replay(self):
        if self.replay:
            return self.replay.popleft()
        return None


class LlrRx:
    def __init__(self):
        self.expected = 0
        self.corrupt_discards = 0
        self.duplicate_discards = 0

    def on_frame(self, seq: int, corrupt: bool) -> str:
        """Returns deliver | nack | duplicate. Corrupt frames vanish at PHY."""
        if corrupt:
            self.corrupt_discards += 1
            return "discard"
        dist = _seq_dist(seq, self.expected)
        if dist == 0:
            self.expected = (self.expected + 1) & LLR_SEQ_MASK
            return "deliver"
        if dist < LLR_WINDOW:
            return "nack"  # gap: ask for go-back to `expected`
        self.duplicate_discards += 1
        return "duplicate"

    def last_good(self) -> int:
        return (self.expected - 1) & LLR_SEQ_MASK


# --------------------------------------------------------------------------
# CBFC state machines (per virtual channel, 20-bit cyclic byte counters)
# --------------------------------------------------------------------------

class CbfcVc:
    """Sender-local credit view for one VC of one link direction."""

    def __init__(self, buffer_bytes: int):
        if buffer_bytes > CBFC_MASK // 2:
            raise ValueError("VC buffer must stay below half the counter space")
        self.buffer = buffer_bytes
        self.consumed = 0  # bytes sent, mod 2^20
        self.freed_view = 0  # receiver's freed counter as last heard

    def outstanding(self) -> int:
        return (self.consumed - self.freed_view) & CBFC_MASK

    def can_send(self, nbytes: int) -> bool:
        return self.outstanding() + nbytes <= self.buffer

    def on_send(self, nbytes: int):
        self.consumed = (self.consumed + nbytes) & CBFC_MASK

    def on_update(self, freed_counter: int):
        self.freed_view = freed_counter & CBFC_MASK


class CbfcReceiver:
    """Receiver-side buffer accounting for one VC."""

    def __init__(self, buffer_bytes: int):
        self.buffer = buffer_bytes
        self.occupancy = 0
        self.freed = 0  # mod 2^20, advertised back to the sender
        self.received = 0  # mod 2^20, for reconciling frames lost on the wire
        self.drops = 0

    def on_frame(self, nbytes: int) -> bool:
        """Store an arriving frame; False means no room (a protocol violation
        when the sender respects its gate)."""
        self.received = (self.received + nbytes) & CBFC_MASK
        if self.occupancy + nbytes > self.buffer:
            self.drops += 1
            # the bytes never occupy the buffer; credit them back immediately
            self.freed = (self.freed + nbytes) & CBFC_MASK
            return False
        self.occupancy += nbytes
        return True

    def on_drain(self, nbytes: int):
        self.occupancy -= nbytes
        self.freed = (self.freed + nbytes) & CBFC_MASK

    def reconcile_consumed(self, consumed: int):
        """Sender's consumed counter: anything we never received was lost on
        the wire and its credits must be returned."""
        lost = (consumed - self.received) & CBFC_MASK
        if 0 < lost <= CBFC_MASK // 2:
            self.freed = (self.freed + lost) & CBFC_MASK
            self.received = consumed & CBFC_MASK


# --------------------------------------------------------------------------
# Runtime link inside the event engine
# --------------------------------------------------------------------------

class LinkDir:
    """One direction of a link: a wire server plus optional LLR/CBFC."""

    def __init__(self, sim, name, rate_bps, delay_ns, ber=0.0, jitter_ns=0,
                 llr=False, cbfc=False, vc_buffers=None, llr_timer_ns=None):
        self.sim = sim
        self.name = name
        self.rate = rate_bps
        self.delay = delay_ns
        self.ber = ber
        self.jitter = jitter_ns
        self.rx_device = None
        self.tx_device = None
        self.busy = False
        self.busy_ns = 0
        self.tx_bytes = 0
        self.rng = sim.rng(f"link/{name}")
        self.llr_enabled = llr
        self.llr_tx = LlrTx() if llr else None
        self.llr_rx = LlrRx() if llr else None
        self.llr_timer_ns = llr_timer_ns or 2 * (delay_ns * 2 + 1000)
        self._llr_timer = None
        self.cbfc_enabled = cbfc
        if cbfc:
            bufs = vc_buffers or [64 * 1024, 64 * 1024]
            self.cbfc_tx = [CbfcVc(b) for b in bufs]
            self.cbfc_rx = [CbfcReceiver(b) for b in bufs]
        else:
            self.cbfc_tx = self.cbfc_rx = None

    # -- transmit side -------------------------------------------------------

    def ready(self, wire_bytes: int, vc: int = 0) -> bool:
        if self.busy:
            return False
        if self.llr_enabled and not self.llr_tx.can_accept():
            return False
        if self.cbfc_enabled and not self.cbfc_tx[vc].can_send(wire_bytes):
            return False
        return True

    def submit(self, pkt):
        """Start serializing a frame; caller must have checked ready()."""
        vc = pkt.tc if self.cbfc_enabled else 0
        if self.cbfc_enabled:
            self.cbfc_tx[vc].on_send(pkt.wire_bytes)
        seq = self.llr_tx.tag(pkt) if self.llr_enabled else None
        self._start_wire(pkt, seq)

    def _start_wire(self, pkt, seq):
        self.busy = True
        ser = serialization_ns(pkt.wire_bytes, self.rate)
        self.busy_ns += ser
        self.tx_bytes += pkt.wire_bytes
        self.sim.after(ser, self._wire_done, pkt, seq)

    def _wire_done(self, pkt, seq):
        lag = self.delay
        if self.jitter:
            lag += self.rng.randrange(self.jitter + 1)
        self.sim.schedule(self.sim.now + lag, self._arrive, pkt, seq)
        self.busy = False
        # replay frames take the wire ahead of fresh traffic
        if self.llr_enabled:
            frame = self.llr_tx.next_replay()
            if frame is not None:
                rseq, rpkt = frame
                self._start_wire(rpkt, rseq)
                return
            self._arm_llr_timer()
        if self.tx_device is not None:
            self.tx_device.wake(self)

    # -- receive side ----------------------------------------------------------

    def _arrive(self, pkt, seq):
        corrupt = False
        if self.ber > 0.0:
            corrupt = self.rng.random() < corruption_probability(self.ber, pkt.wire_bytes)
        if self.llr_enabled:
            verdict = self.llr_rx.on_frame(seq, corrupt)
            if verdict == "deliver":
                self._send_ctl("llr_ack", seq)
                self._accept(pkt)
            elif verdict == "nack":
                self._send_ctl("llr_nack", self.llr_rx.expected)
            elif verdict == "duplicate":
                self._send_ctl("llr_ack", self.llr_rx.last_good())
            return
        if corrupt:
            self.sim.account_fate(pkt, FATE_DROP_CORRUPTION)
            self.sim.count("drop_corruption")
            return
        self._accept(pkt)

    def _accept(self, pkt):
        if self.cbfc_enabled:
            vc = pkt.tc
            self.cbfc_rx[vc].on_frame(pkt.wire_bytes)
            pkt_credit = (self, vc, pkt.wire_bytes)
        else:
            pkt_credit = None
        self.rx_device.receive(pkt, self, pkt_credit)

    def credit_release(self, vc: int, nbytes: int):
        """Called by the receiving device when a frame leaves its buffer."""
        rx = self.cbfc_rx[vc]
        rx.on_drain(nbytes)
        self._send_ctl("cbfc_update", (vc, rx.freed))

    # -- sideband control (ordered sets; zero queueing, tiny serialization) ----

    def _send_ctl(self, kind: str, arg, nbytes: int = ORDERED_SET_BYTES):
        # sideband messages see the same bit errors; timers and absolute
        # counters recover lost ones
        if self.ber > 0.0 and self.rng.random() < corruption_probability(self.ber, nbytes):
            return
        lag = serialization_ns(nbytes, self.rate) + self.delay
        self.sim.after(lag, self._ctl_arrive, kind, arg)

    def start_cbfc_sync(self, interval_ns: int = 10_000):
        """Low-frequency sender->receiver consumed-counter updates."""
        if not self.cbfc_enabled:
            return
        for vc, tx in enumerate(self.cbfc_tx):
            self._send_ctl("cbfc_consumed", (vc, tx.consumed), CBFC_SYNC_BYTES)
        self.sim.after(interval_ns, self.start_cbfc_sync, interval_ns)

    def _ctl_arrive(self, kind, arg):
        if kind == "llr_ack":
            self.llr_tx.on_ack(arg)
            # progress restarts the retransmit timer
            if self._llr_timer is not None:
                self._llr_timer.cancel()
                self._llr_timer = None
            self._arm_llr_timer()
            self._kick()
        elif kind == "llr_nack":
            self._go_back(arg)
        elif kind == "cbfc_update":
            vc, freed = arg
            self.cbfc_tx[vc].on_update(freed)
            self._kick()
        elif kind == "cbfc_consumed":
            vc, consumed = arg
            self.cbfc_rx[vc].reconcile_consumed(consumed)

    def _go_back(self, _from_seq):
        self.llr_tx.rewind()
        self._kick()

    def _kick(self):
        if not self.busy:
            if self.llr_enabled:
                frame = self.llr_tx.next_replay()
                if frame is not None:
                    rseq, rpkt = frame
                    self._start_wire(rpkt, rseq)
                    return
            if self.tx_device is not None:
                self.tx_device.wake(self)

    def _arm_llr_timer(self):
        if self.llr_tx.unacked and self._llr_timer is None:
            self._llr_timer = self.sim.after(self.llr_timer_ns, self._llr_timeout)

    def _llr_timeout(self):
        self._llr_timer = None
        if self.llr_tx.unacked:
            self.llr_tx.rewind()
            self._kick()
            self._arm_llr_timer()

    def utilization_since(self, last_busy_ns: int, interval_ns: int) -> float:
        return (self.busy_ns - last_busy_ns) / interval_ns if interval_ns else 0.0
