"""Packet delivery sublayer: ephemeral PDCs and reliable transmission.

A PDC is created by the first packet of a burst - the initiator sends SYN-
flagged data at full rate starting from a random PSN, and the target builds
its side when the first packet lands, so establishment costs zero round
trips. The target tracks receipt in a bitmap bounded by the advertised
maximum PSN range and acknowledges with a cumulative PSN plus a 64-bit
selective bitmap. Four transport modes share the machinery:

  RUD   reliable unordered (default; sprayed, delivered as packets arrive)
  ROD   reliable ordered (single path, go-back-N)
  UUD   unreliable datagrams (no tracking at all)
  RUDI  reliable idempotent (no receive dedup state; duplicates re-execute)

Loss is detected by trim NACKs, out-of-order distance, per-EV-slot ack
inference, and as a last resort the retransmission timeout.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .cms import Signal
from .wire import AckInfo, Packet

# Initiator states
CLOSED = "CLOSED"
SYN = "SYN"
SECURE_QUERY = "SECURE_QUERY"  # one-RTT secure open: waiting for the PSN reply
ESTABLISHED = "ESTABLISHED"
QUIESCE = "QUIESCE"
ACK_WAIT = "ACK_WAIT"
# Target state before the first non-SYN packet arrives
PENDING = "PENDING"

SACK_BITS = 64
PSN_MASK = (1 << 32) - 1


@dataclass
class PdsConfig:
    mtu_payload: int = 4096
    coalesce_n: int = 1
    coalesce_timeout_ns: int = 5_000
    rx_window_pkts: int = 128
    tx_buf_pkts: int = 128
    ooo_enabled: bool = False
    ooo_k: int = 64
    ev_slots: int = 0
    probe_timeout_ns: int = 0  # 0 -> derived from srtt
    secure_mode: str = "off"  # off | one_rtt | zero_rtt


@dataclass
class TxRecord:
    psn: int
    plan: object  # (msg, offset, length) triple or control marker
    wire: int
    ev: int
    sent_at: int
    counted: bool = True  # still contributing to the CCC's in-flight bytes
    lost_pending: bool = False  # queued for retransmission
    retries: int = 0
    flow_id: int | None = None


class MsgSend:
    """One message being packetized onto a PDC.

    Zero-payload protocol messages still occupy exactly one packet.
    """

    __slots__ = ("msg_id", "flow_id", "total", "mtu", "ses_template", "offset",
                 "sent_pkts", "total_pkts", "halted", "header", "sent_notified",
                 "tc")

    def __init__(self, msg_id, flow_id, total, mtu, ses_template, header,
                 offset: int = 0, tc: int = 0):
        self.msg_id = msg_id
        self.flow_id = flow_id
        self.total = total
        self.mtu = mtu
        self.ses_template = ses_template
        self.header = header
        self.offset = offset
        remaining = total - offset
        self.total_pkts = max(1, -(-remaining // mtu))
        self.sent_pkts = 0
        self.halted = False
        self.sent_notified = False
        self.tc = tc

    def remaining(self) -> int:
        return self.total - self.offset

    def next_len(self) -> int:
        return min(self.mtu, self.total - self.offset)

    def done_sending(self) -> bool:
        return self.sent_pkts >= self.total_pkts


class Pdc:
    def __init__(self, fep, peer: int, mode: str, role: str, local_id: int,
                 cfg: PdsConfig, base_psn: int):
        self.fep = fep
        self.sim = fep.sim
        self.peer = peer
        self.mode = mode
        self.role = role  # initiator | target
        self.local_id = local_id
        self.peer_id: int | None = None
        self.cfg = cfg
        self.state = SYN if role == "initiator" else PENDING
        self.base_psn = base_psn
        self.next_psn = base_psn
        # --- initiator side ---
        self.tx_msgs: deque[MsgSend] = deque()
        self.unacked: dict[int, TxRecord] = {}
        self.rtx: deque[int] = deque()
        self.cack_seen = base_psn - 1
        self.peer_mp_range = cfg.rx_window_pkts
        self.rto_handle = None
        self.pinned_ev: int | None = None  # ROD uses one EV for the PDC's life
        self.slots: list[int] = []
        self.slot_probe_handles: dict[int, object] = {}
        self.probes: dict[int, tuple] = {}
        self.next_probe_seq = 0
        self.close_requested = False
        self.close_sent = False
        self.close_handle = None
        self.highest_known_rx = base_psn - 1  # max PSN the target reported seeing
        # --- target side ---
        self.rx_base = base_psn  # next expected PSN (cack = rx_base-1)
        self.rx_bits = 0
        self.rx_window = cfg.rx_window_pkts
        # what the acks advertise; shrinking it gates new sends while packets
        # already in flight inside rx_window are still accepted and acked
        self.advertised_range = cfg.rx_window_pkts
        self.pending_acks = 0
        self.last_arrival: Packet | None = None
        self.any_ecn = False
        self.ever_acked = False
        self.flush_handle = None
        self.last_gap_nack_base = -1
        self.duplicates = 0
        self.opened_at = self.sim.now
        self.idle_since = self.sim.now

    # ------------------------------------------------------------------
    # initiator: packetization and transmission
    # ------------------------------------------------------------------

    def submit(self, msg: MsgSend) -> bool:
        if self.state in (QUIESCE, ACK_WAIT, CLOSED):
            return False  # a closing PDC refuses new messages
        self.tx_msgs.append(msg)
        return True

    def ccc(self):
        return self.fep.ccc_for(self.peer)

    def _front_msg(self) -> MsgSend | None:
        """First message still needing bytes; finished/halted ones pop off."""
        while self.tx_msgs:
            msg = self.tx_msgs[0]
            if msg.halted:
                self.tx_msgs.popleft()
                continue
            if msg.done_sending():
                self.tx_msgs.popleft()
                if not msg.sent_notified:
                    msg.sent_notified = True
                    self.fep.ses.on_msg_sent(msg)
                continue
            return msg
        return None

    def next_wire_packet(self) -> Packet | None:
        """Build the next frame this PDC wants on the wire, or None."""
        if self.state == SECURE_QUERY:
            return None
        while self.rtx:
            psn = self.rtx[0]
            rec = self.unacked.get(psn)
            if rec is None:  # acked while waiting, drop the entry
                self.rtx.popleft()
                continue
            if psn > self.cack_seen + self.peer_mp_range:
                return None
            self.rtx.popleft()
            return self._emit(rec, retransmit=True)
        msg = self._front_msg()
        if msg is None:
            self._close_progress()
            return None
        if len(self.unacked) >= self.cfg.tx_buf_pkts:
            return None
        if self.mode != "UUD" and self.next_psn > self.cack_seen + self.peer_mp_range:
            return None
        length = msg.next_len()
        nbytes = msg.header + length
        if not self.ccc().can_send(nbytes):
            return None
        psn = self.next_psn
        self.next_psn = (self.next_psn + 1) & PSN_MASK
        plan = (msg, msg.offset, length)
        msg.offset += length
        msg.sent_pkts += 1
        rec = TxRecord(psn, plan, nbytes, 0, self.sim.now, flow_id=msg.flow_id)
        if self.mode != "UUD":
            self.unacked[psn] = rec
        pkt = self._emit(rec, retransmit=False)
        if msg.done_sending():
            self._front_msg()  # fire the sent notification promptly
            self._close_progress()
        return pkt

    def _choose_ev(self, psn: int) -> int:
        if self.mode == "ROD":
            if self.pinned_ev is None:
                self.pinned_ev = self.ccc().next_ev()
            return self.pinned_ev
        if self.slots:
            return self.slots[psn % len(self.slots)]
        return self.ccc().next_ev()

    def _emit(self, rec: TxRecord, retransmit: bool) -> Packet:
        msg, offset, length = rec.plan
        ev = self._choose_ev(rec.psn)
        rec.ev = ev
        rec.sent_at = self.sim.now
        rec.counted = True
        rec.lost_pending = False
        if retransmit:
            rec.retries += 1
            self.fep.count_retransmit()
        ses = self.fep.ses.packet_info(msg, offset, length)
        pkt = Packet(
            kind="req", src=self.fep.id, dst=self.peer, header=msg.header,
            payload=length, tc=msg.tc, mode=self.mode, ev=ev, psn=rec.psn,
            syn=self.state == SYN, base_psn=self.base_psn if self.state == SYN else None,
            pdc_src=self.local_id, pdc_dst=self.peer_id, ses=ses,
            ttl=self.fep.ttl, demand=self.pending_bytes(),
        )
        if self.mode != "UUD":
            self.ccc().on_send(pkt.wire_bytes)
            self._arm_rto()
        if self.slots:
            self._arm_probe(rec.psn % len(self.slots))
        self.idle_since = self.sim.now
        return pkt

    def pending_bytes(self) -> int:
        """Declared demand: bytes this PDC still wants to move (wire bytes)."""
        total = 0
        for msg in self.tx_msgs:
            if not msg.halted:
                n = msg.remaining()
                pkts = -(-n // msg.mtu) if n else 0
                total += n + pkts * msg.header
        total += sum(rec.wire for rec in self.unacked.values() if rec.lost_pending)
        return total

    # ------------------------------------------------------------------
    # initiator: acknowledgment processing
    # ------------------------------------------------------------------

    def on_ack(self, pkt: Packet):
        ack: AckInfo = pkt.ack
        if self.state == CLOSED:
            return
        if self.peer_id is None and pkt.pdc_src is not None:
            self.peer_id = pkt.pdc_src
        # a nack from a target that refused to create state must not establish
        if self.state == SYN and ack.nack not in ("secure_psn", "no_context"):
            self.state = ESTABLISHED
        if ack.nack is not None:
            self._on_nack(ack)
        acked_recs = self._collect_acked(ack)
        delivered = 0
        release = 0
        for rec in acked_recs:
            delivered += rec.wire
            if rec.counted:
                release += rec.wire
            self.fep.ses.on_packet_acked(rec)
        rtt = None
        if acked_recs:
            rtt = self.sim.now - ack.echo_ts - ack.service_time
        ccc = self.ccc()
        if delivered or rtt is not None or ack.dfc_penalty is not None:
            ccc.on_ack(Signal(acked_bytes=delivered, release_bytes=release,
                              ecn=ack.echo_ecn, rtt_ns=rtt,
                              dfc_penalty=ack.dfc_penalty))
        if ack.credit:
            ccc.on_credit(ack.credit)
        if ack.mp_range is not None:
            self.peer_mp_range = ack.mp_range
        # load balancer feedback: one echoed EV per ack, clean or congested
        if ack.nack is None:
            ccc.lb_feedback(ack.echo_ev, congested=ack.echo_ecn, last_hop=False)
        if ack.probe_echo is not None:
            self._on_probe_echo(ack)
        self._detect_ooo(ack)
        self._detect_ev_slot(ack)
        if ack.request_close:
            self.request_close()
        self._rearm_rto()
        self._close_progress()
        self.fep.kick()

    def _collect_acked(self, ack: AckInfo) -> list[TxRecord]:
        got = []
        if ack.psn_exact:  # RUDI acks exactly one PSN
            rec = self.unacked.pop(ack.cack, None)
            if rec:
                got.append(rec)
            else:
                self.fep.count_duplicate_ack()
            if ack.cack > self.highest_known_rx:
                self.highest_known_rx = ack.cack
            return got
        if ack.cack > self.cack_seen:
            self.cack_seen = ack.cack
        for psn in [p for p in self.unacked if p <= ack.cack]:
            got.append(self.unacked.pop(psn))
        highest = ack.cack
        bits = ack.sack
        i = 0
        while bits:
            if bits & 1:
                psn = ack.cack + 1 + i
                highest = psn
                rec = self.unacked.pop(psn, None)
                if rec:
                    got.append(rec)
            bits >>= 1
            i += 1
        if highest > self.highest_known_rx:
            self.highest_known_rx = highest
        return got

    def _on_nack(self, ack: AckInfo):
        kind = ack.nack
        if kind == "trim":
            self._declare_lost(ack.nack_psn, "trim")
            self.ccc().lb_feedback(ack.echo_ev, congested=True,
                                   last_hop=ack.last_hop_trim)
        elif kind == "out_of_window":
            self._declare_lost(ack.nack_psn, "oow")
        elif kind == "rod_gap":
            self._go_back_n(ack.nack_psn, "gap")
        elif kind == "secure_psn":
            self._rebase(ack.psn_hint)
        elif kind == "no_context":
            self._declare_lost(ack.nack_psn, "trim")

    def _declare_lost(self, psn: int, detector: str):
        rec = self.unacked.get(psn)
        if rec is None or rec.lost_pending:
            return
        rec.lost_pending = True
        released = rec.wire if rec.counted else 0
        rec.counted = False
        self.ccc().on_loss(released, detector)
        self.rtx.append(psn)
        self.fep.kick()

    def _go_back_n(self, from_psn: int, detector: str):
        for psn in sorted(p for p in self.unacked if p >= from_psn):
            self._declare_lost(psn, detector)

    def _rebase(self, new_base: int):
        """Secure open was rejected; renumber the outstanding SYN burst."""
        shift = new_base - self.base_psn
        if shift <= 0:
            return
        self.base_psn = new_base
        self.next_psn += shift
        self.cack_seen += shift
        self.highest_known_rx += shift
        remapped = {}
        for psn, rec in self.unacked.items():
            rec.psn = psn + shift
            remapped[rec.psn] = rec
        self.unacked = remapped
        self.rtx.clear()
        for psn in sorted(remapped):
            self._declare_lost(psn, "secure_rebase")
        self.fep.secure_note_start(self.peer, new_base)

    # -- fast loss detection -------------------------------------------------

    def _detect_ooo(self, ack: AckInfo):
        if not self.cfg.ooo_enabled:
            return
        high = self.highest_known_rx
        k = self.cfg.ooo_k
        for psn in sorted(self.unacked):
            if psn >= high:
                break
            if high - psn > k:
                self._declare_lost(psn, "ooo")

    def _detect_ev_slot(self, ack: AckInfo):
        if not self.slots or ack.psn_exact:
            return
        # the newest PSN this ack proves arrived pins down its slot's history
        newest = ack.cack if ack.sack == 0 else ack.cack + 1 + ack.sack.bit_length() - 1
        if newest < self.base_psn:
            return
        k = len(self.slots)
        slot = newest % k
        for psn in sorted(self.unacked):
            if psn >= newest:
                break
            if psn % k == slot:
                self._declare_lost(psn, "ev")

    def _arm_probe(self, slot: int):
        if slot in self.slot_probe_handles:
            return
        timeout = self.cfg.probe_timeout_ns or int(1.5 * self.ccc().srtt)
        self.slot_probe_handles[slot] = self.sim.after(timeout, self._probe_fire, slot)

    def _probe_fire(self, slot: int):
        self.slot_probe_handles.pop(slot, None)
        k = len(self.slots)
        if not any(psn % k == slot and not rec.lost_pending
                   for psn, rec in self.unacked.items()):
            return
        seq = self.next_probe_seq
        self.next_probe_seq += 1
        self.probes[seq] = (slot, self.sim.now)
        self.fep.emit_probe(self, self.slots[slot], seq)
        self._arm_probe(slot)

    def _on_probe_echo(self, ack: AckInfo):
        info = self.probes.pop(ack.probe_echo, None)
        if info is None:
            return
        slot, sent_at = info
        k = len(self.slots)
        for psn, rec in sorted(self.unacked.items()):
            if psn % k == slot and rec.sent_at < sent_at and not rec.lost_pending:
                self._declare_lost(psn, "ev")

    # -- retransmission timeout ------------------------------------------------

    def _arm_rto(self):
        if self.rto_handle is None and self.unacked:
            self.rto_handle = self.sim.after(self.ccc().rto_ns(), self._rto_fire)

    def _rearm_rto(self):
        if self.rto_handle is not None:
            self.rto_handle.cancel()
            self.rto_handle = None
        self._arm_rto()

    def _rto_fire(self):
        self.rto_handle = None
        if not self.unacked:
            return
        rto = self.ccc().rto_ns()
        oldest = min(rec.sent_at for rec in self.unacked.values())
        if self.sim.now - oldest >= rto:
            for psn in sorted(self.unacked):
                self._declare_lost(psn, "rto")
        self._arm_rto()

    # ------------------------------------------------------------------
    # close sequence
    # ------------------------------------------------------------------

    def request_close(self):
        if self.state in (QUIESCE, ACK_WAIT, CLOSED):
            return
        self.close_requested = True
        if self.state in (ESTABLISHED, SYN):
            self.state = QUIESCE
        self._close_progress()

    def _close_progress(self):
        if not self.close_requested or self.state == CLOSED:
            return
        if self.state == QUIESCE and all(
                m.halted or m.done_sending() for m in self.tx_msgs):
            self.state = ACK_WAIT
        if self.state == ACK_WAIT and not self.unacked and not self.close_sent:
            self.close_sent = True
            self._send_close()

    def _send_close(self):
        last_psn = self.next_psn - 1
        self.fep.emit_close(self, last_psn)
        self.close_handle = self.sim.after(self.ccc().rto_ns(), self._close_retry)

    def _close_retry(self):
        if self.state != CLOSED:
            self._send_close()

    def on_close_ack(self, expected_psn: int):
        if self.close_handle is not None:
            self.close_handle.cancel()
            self.close_handle = None
        self.state = CLOSED
        self.fep.secure_note_start(self.peer, expected_psn)
        self.fep.pdc_closed(self)

    # ------------------------------------------------------------------
    # target side
    # ------------------------------------------------------------------

    def target_on_request(self, pkt: Packet):
        """Track, deduplicate and deliver one arriving request packet."""
        self.idle_since = self.sim.now
        if pkt.trimmed:
            self._nack(pkt, "trim")
            return
        if self.state == PENDING and not pkt.syn:
            self.state = ESTABLISHED
        psn = pkt.psn
        if self.mode == "RUDI":
            # no dedup state: every arrival executes again
            self.fep.ses.on_data(pkt)
            self._ack_now(pkt, psn_exact=True)
            return
        if self.mode == "ROD":
            self._target_rod(pkt)
            return
        off = psn - self.rx_base
        if off < 0 or (self.rx_bits >> off) & 1:
            self.duplicates += 1
            self.fep.count("duplicate_rx")
            self._ack_now(pkt)  # re-ack so a lost ack cannot stall the sender
            return
        if off >= self.rx_window:
            self._nack(pkt, "out_of_window")
            return
        self.rx_bits |= 1 << off
        while self.rx_bits & 1:
            self.rx_bits >>= 1
            self.rx_base += 1
        self.fep.ses.on_data(pkt)
        self._queue_ack(pkt)

    def _target_rod(self, pkt: Packet):
        psn = pkt.psn
        if psn < self.rx_base:
            self.duplicates += 1
            self.fep.count("duplicate_rx")
            self._ack_now(pkt)
            return
        if psn > self.rx_base:
            # go-back-N: drop out-of-order arrivals, point at the gap once
            self.fep.count("rod_ooo_drop")
            if self.last_gap_nack_base != self.rx_base:
                self.last_gap_nack_base = self.rx_base
                self._nack(pkt, "rod_gap", nack_psn=self.rx_base)
            return
        self.rx_base += 1
        self.last_gap_nack_base = -1
        self.fep.ses.on_data(pkt)
        self._queue_ack(pkt)

    def _queue_ack(self, pkt: Packet):
        self.pending_acks += 1
        self.last_arrival = pkt
        if pkt.ecn_ce:
            self.any_ecn = True
        # the very first ack must not wait: it carries the target PDC id
        if self.pending_acks >= self.cfg.coalesce_n or not self.ever_acked:
            self._flush_ack()
        elif self.flush_handle is None:
            self.flush_handle = self.sim.after(self.cfg.coalesce_timeout_ns,
                                               self._flush_timer)

    def _flush_timer(self):
        self.flush_handle = None
        if self.pending_acks:
            self._flush_ack()

    def _flush_ack(self):
        pkt = self.last_arrival
        self.pending_acks = 0
        self.ever_acked = True
        if self.flush_handle is not None:
            self.flush_handle.cancel()
            self.flush_handle = None
        ack = self._mk_ack(pkt)
        ack.echo_ecn = self.any_ecn
        self.any_ecn = False
        self.fep.emit_ack(self, ack, pkt)

    def _ack_now(self, pkt: Packet, psn_exact: bool = False):
        ack = self._mk_ack(pkt)
        if psn_exact:
            ack.cack = pkt.psn
            ack.psn_exact = True
        self.fep.emit_ack(self, ack, pkt)

    def _mk_ack(self, pkt: Packet) -> AckInfo:
        ooo = self.rx_bits.bit_length() - 1 if self.rx_bits else 0
        # sack bit i covers PSN cack+1+i; bit 0 is the hole that caps cack
        return AckInfo(
            cack=self.rx_base - 1,
            sack=self.rx_bits & ((1 << SACK_BITS) - 1),
            ooo_count=ooo,
            mp_range=self.advertised_range,
            echo_ev=pkt.ev,
            echo_ts=pkt.send_ts,
            service_time=self.fep.service_time,
            echo_ecn=pkt.ecn_ce,
        )

    def _nack(self, pkt: Packet, kind: str, nack_psn: int | None = None):
        ack = self._mk_ack(pkt)
        ack.nack = kind
        ack.nack_psn = pkt.psn if nack_psn is None else nack_psn
        ack.last_hop_trim = pkt.last_hop_trim
        self.fep.emit_ack(self, ack, pkt)
