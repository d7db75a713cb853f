"""Fabric endpoint: NIC scheduler, PDC/CCC registries, SES engine, tables.

The FEP owns all per-endpoint protocol state and the single transmit side of
its access link. Control frames (acks, credits, probes) go out on the
control class ahead of data; data transmission round-robins over PDCs whose
gates (window, credits, PSN range, replay buffer) are open, which is what
shares an oversubscribed uplink fairly between flows.
"""

from __future__ import annotations

from collections import deque

from .addressing import AddressTables, ResolutionError, ResourceContext, UetAddress
from .cms import Ccc, CmsConfig, CreditScheduler
from .engine import FATE_DELIVERED, FATE_TRIMMED_DELIVERED
from .pds import (ACK_WAIT, CLOSED, PENDING, QUIESCE, SECURE_QUERY, SYN,
                  MsgSend, Pdc, PdsConfig)
from .ses import SesConfig, SesEngine
from .wire import HeaderStack, Packet, ack_header_bytes, header_bytes


class FepConfig:
    def __init__(self, service_time_ns=0, ttl=16, ip="ipv4", encap="udp",
                 tss=None, crc=False, rx_drain_bps=None, dfc_penalty=0.5,
                 dfc_threshold=64 * 1024):
        self.service_time_ns = service_time_ns
        self.ttl = ttl
        self.ip = ip
        self.encap = encap
        self.tss = tss
        self.crc = crc
        self.rx_drain_bps = rx_drain_bps
        self.dfc_penalty = dfc_penalty
        self.dfc_threshold = dfc_threshold


class Fep:
    def __init__(self, sim, fep_id: int, fa: str, metrics, cfg: FepConfig,
                 pds_cfg: PdsConfig, ses_cfg: SesConfig, cms_cfg: CmsConfig,
                 line_rate_bps: int = 100_000_000_000):
        self.sim = sim
        self.id = fep_id
        self.fa = fa
        self.metrics = metrics
        self.cfg = cfg
        self.pds_cfg = pds_cfg
        self.cms_cfg = cms_cfg
        self.line_rate = line_rate_bps
        self.link = None  # outgoing LinkDir, set at attach
        self.rng = sim.rng(f"fep/{fep_id}")
        self.ses = SesEngine(self, ses_cfg)
        self.addr = AddressTables(fa=fa)
        self._register_default_contexts()
        # PDC registries
        self._next_pdc = 1
        self._free_pdc_ids: list[int] = []
        self.pdcs_by_local: dict[int, Pdc] = {}
        self.pdc_out: dict[tuple, Pdc] = {}
        self.pdc_in: dict[tuple, Pdc] = {}
        self.rr: list[Pdc] = []
        self._rr_cursor = 0
        self.cccs: dict[int, Ccc] = {}
        # replay-prevention PSN state, both initially zero per peer
        self.secure_start: dict[int, int] = {}
        self.secure_expected: dict[int, int] = {}
        self._nop_pending: dict[int, object] = {}
        self.egress_ctl: deque[Packet] = deque()
        self._staged: Packet | None = None
        self.credit_sched = (CreditScheduler(sim, self, line_rate_bps, cms_cfg)
                             if cms_cfg.rccc else None)
        if cfg.rx_drain_bps and self.credit_sched:
            self.credit_sched.set_drain(cfg.rx_drain_bps)
        self.rx_backlog = 0
        self._last_penalty_at = -1
        self._drain_armed = False
        self._hdr_cache: dict[tuple, int] = {}

    def _register_default_contexts(self):
        for ri in range(4):
            self.addr.register(0, 0, ri, ResourceContext("matcher", 0, ri))

    # ------------------------------------------------------------------
    # configuration helpers
    # ------------------------------------------------------------------

    @property
    def service_time(self) -> int:
        return self.cfg.service_time_ns

    @property
    def ttl(self) -> int:
        return self.cfg.ttl

    def data_header(self, mode: str, variant: str) -> int:
        key = (mode, variant)
        cached = self._hdr_cache.get(key)
        if cached is None:
            pds = mode + "+RCCC" if (self.cms_cfg.rccc and mode in ("RUD", "ROD")) else mode
            stack = HeaderStack(ip=self.cfg.ip, encap=self.cfg.encap, pds=pds,
                                ses=variant, tss=self.cfg.tss, crc=self.cfg.crc)
            cached = header_bytes(stack)
            self._hdr_cache[key] = cached
        return cached

    def ctl_header(self) -> int:
        return ack_header_bytes(self.cfg.ip, self.cfg.encap, self.cms_cfg.rccc)

    def eager_limit(self, peer: int | None = None) -> int:
        """Send-window-sized eager threshold in payload bytes, queried once
        per rendezvous at send time."""
        if peer is not None and self.cms_cfg.nscc:
            window = self.ccc_for(peer).window
        else:
            window = self.cms_cfg.fixed_window or self.cms_cfg.bdp_bytes
        pkts = max(1, window // self.cms_cfg.mtu_wire)
        return pkts * self.pds_cfg.mtu_payload

    def ccc_for(self, peer: int) -> Ccc:
        ccc = self.cccs.get(peer)
        if ccc is None:
            ccc = Ccc(self.sim, self.id, peer, self.cms_cfg)
            self.cccs[peer] = ccc
        return ccc

    def count(self, name: str, inc: int = 1):
        self.sim.count(name, inc)

    def count_retransmit(self):
        self.sim.count("retransmits")

    def count_duplicate_ack(self):
        self.sim.count("duplicate_acks")

    # ------------------------------------------------------------------
    # PDC management
    # ------------------------------------------------------------------

    def _alloc_pdc_id(self) -> int:
        if self._free_pdc_ids:
            return self._free_pdc_ids.pop()
        pid = self._next_pdc
        self._next_pdc += 1
        return pid

    def send_on_pdc(self, peer: int, mode: str, msg: MsgSend, tc: int = 0):
        msg.tc = tc
        key = (peer, mode)
        pdc = self.pdc_out.get(key)
        if pdc is None or pdc.state in (QUIESCE, ACK_WAIT, CLOSED):
            pdc = self.open_pdc(peer, mode)
        pdc.submit(msg)
        self.kick()
        return pdc

    def open_pdc(self, peer: int, mode: str) -> Pdc:
        """First send opens a PDC; data flows immediately with SYN set."""
        secure = self.pds_cfg.secure_mode
        if secure == "zero_rtt":
            base = self.secure_start.get(peer, 0)
        elif secure == "one_rtt":
            base = 0  # replaced by the target's reply
        else:
            base = self.rng.randrange(1, 1 << 31)
        pdc = Pdc(self, peer, mode, "initiator", self._alloc_pdc_id(),
                  self.pds_cfg, base)
        if secure == "one_rtt":
            pdc.state = SECURE_QUERY
            self._send_nop(pdc)
        if self.pds_cfg.ev_slots and mode == "RUD":
            ccc = self.ccc_for(peer)
            pdc.slots = [ccc.next_ev() for _ in range(self.pds_cfg.ev_slots)]
        self.pdcs_by_local[pdc.local_id] = pdc
        self.pdc_out[(peer, mode)] = pdc
        self.rr.append(pdc)
        self.sim.count("pdc_opened")
        return pdc

    def pdc_closed(self, pdc: Pdc):
        self.sim.count("pdc_closed")
        self.pdcs_by_local.pop(pdc.local_id, None)
        if self.pdc_out.get((pdc.peer, pdc.mode)) is pdc:
            del self.pdc_out[(pdc.peer, pdc.mode)]
        if pdc in self.rr:
            self.rr.remove(pdc)
            self._rr_cursor = 0
        self._free_pdc_ids.append(pdc.local_id)

    def secure_note_start(self, peer: int, psn: int):
        if self.pds_cfg.secure_mode != "off":
            if psn > self.secure_start.get(peer, 0):
                self.secure_start[peer] = psn

    # ------------------------------------------------------------------
    # transmit path
    # ------------------------------------------------------------------

    def kick(self):
        self.try_send()

    def wake(self, _link):
        self.try_send()

    def try_send(self):
        link = self.link
        if link is None:
            return
        while not link.busy:
            pkt = self._staged
            self._staged = None
            if pkt is None and self.egress_ctl:
                pkt = self.egress_ctl.popleft()
            if pkt is None:
                pkt = self._next_data()
            if pkt is None:
                return
            if not link.ready(pkt.wire_bytes, pkt.tc):
                self._staged = pkt  # resumes on the link's wake callback
                return
            pkt.send_ts = self.sim.now
            pkt.injection = self.sim.account_injection()
            link.submit(pkt)

    def _next_data(self) -> Packet | None:
        n = len(self.rr)
        for i in range(n):
            pdc = self.rr[(self._rr_cursor + i) % n]
            pkt = pdc.next_wire_packet()
            if pkt is not None:
                self._rr_cursor = (self._rr_cursor + i + 1) % n
                return pkt
        return None

    def emit_ctl_packet(self, pkt: Packet):
        pkt.tc = 1
        self.egress_ctl.append(pkt)
        self.try_send()

    # -- protocol control emitters ------------------------------------------------

    def emit_ack(self, pdc: Pdc, ack, orig_pkt: Packet):
        if self.cfg.rx_drain_bps and orig_pkt.payload:
            self._dfc_note_arrival(orig_pkt.payload, ack)
        pkt = Packet(kind="ack", src=self.id, dst=pdc.peer, header=self.ctl_header(),
                     tc=1, ev=ack.echo_ev, pdc_src=pdc.local_id, pdc_dst=pdc.peer_id,
                     ack=ack, ttl=self.ttl)
        if self.service_time:
            self.sim.after(self.service_time, self.emit_ctl_packet, pkt)
        else:
            self.emit_ctl_packet(pkt)

    def emit_probe(self, pdc: Pdc, ev: int, seq: int):
        pkt = Packet(kind="ctl", src=self.id, dst=pdc.peer, header=self.ctl_header(),
                     tc=1, ev=ev, pdc_src=pdc.local_id, pdc_dst=pdc.peer_id,
                     ctl="probe", probe_seq=seq, ttl=self.ttl)
        self.emit_ctl_packet(pkt)

    def emit_close(self, pdc: Pdc, last_psn: int):
        pkt = Packet(kind="ctl", src=self.id, dst=pdc.peer, header=self.ctl_header(),
                     tc=1, ev=self.rng.randrange(1 << 16), pdc_src=pdc.local_id,
                     pdc_dst=pdc.peer_id, ctl="close", ctl_arg=last_psn, ttl=self.ttl)
        self.emit_ctl_packet(pkt)

    def _send_nop(self, pdc: Pdc):
        pkt = Packet(kind="ctl", src=self.id, dst=pdc.peer, header=self.ctl_header(),
                     tc=1, ev=self.rng.randrange(1 << 16), pdc_src=pdc.local_id,
                     ctl="nop", ttl=self.ttl)
        self.emit_ctl_packet(pkt)
        self._nop_pending[pdc.local_id] = self.sim.after(
            self.ccc_for(pdc.peer).rto_ns(), self._nop_retry, pdc)

    def _nop_retry(self, pdc: Pdc):
        self._nop_pending.pop(pdc.local_id, None)
        if pdc.state == SECURE_QUERY:
            self._send_nop(pdc)

    def send_credit(self, peer: int, nbytes: int):
        pkt = Packet(kind="ctl", src=self.id, dst=peer, header=self.ctl_header(),
                     tc=1, ev=self.rng.randrange(1 << 16), ctl="credit",
                     credit=nbytes, ttl=self.ttl)
        self.emit_ctl_packet(pkt)

    # ------------------------------------------------------------------
    # receive path
    # ------------------------------------------------------------------

    def receive(self, pkt: Packet, _link, credit):
        if credit is not None:
            link_dir, vc, nbytes = credit
            link_dir.credit_release(vc, nbytes)
        if pkt.trimmed:
            self.sim.account_fate(pkt, FATE_TRIMMED_DELIVERED)
        else:
            self.sim.account_fate(pkt, FATE_DELIVERED)
        if pkt.kind == "ack":
            self._on_ack(pkt)
        elif pkt.kind == "ctl":
            self._on_ctl(pkt)
        else:
            self._on_request(pkt)

    def _on_ack(self, pkt: Packet):
        pdc = self.pdcs_by_local.get(pkt.pdc_dst)
        if pdc is None:
            self.count("stale_ack")
            return
        pdc.on_ack(pkt)

    def _on_request(self, pkt: Packet):
        if self.credit_sched is not None and pkt.kind == "req":
            self.credit_sched.note_request(pkt.src, pkt.demand)
        if pkt.mode == "UUD":
            if not pkt.trimmed:
                self.ses.on_data(pkt)
            return
        pdc = self.pdc_in.get((pkt.src, pkt.pdc_src))
        if pdc is None:
            pdc = self._maybe_create_target_pdc(pkt)
            if pdc is None:
                return
        pdc.target_on_request(pkt)

    def _maybe_create_target_pdc(self, pkt: Packet) -> Pdc | None:
        if pkt.trimmed:
            # a trimmed packet must never create a PDC; still ask for the
            # payload again so the source recovers fast
            self._no_context_nack(pkt)
            return None
        if not pkt.syn:
            self.count("orphan_data")
            return None
        base = pkt.base_psn if pkt.base_psn is not None else pkt.psn
        if self.pds_cfg.secure_mode != "off":
            expected = self.secure_expected.get(pkt.src, 0)
            if base < expected:
                self._secure_nack(pkt, expected)
                return None
        pdc = Pdc(self, pkt.src, pkt.mode, "target", self._alloc_pdc_id(),
                  self.pds_cfg, base)
        pdc.peer_id = pkt.pdc_src
        pdc.state = PENDING
        self.pdcs_by_local[pdc.local_id] = pdc
        self.pdc_in[(pkt.src, pkt.pdc_src)] = pdc
        self.sim.count("pdc_opened_target")
        return pdc

    def _no_context_nack(self, pkt: Packet):
        from .wire import AckInfo

        ack = AckInfo(nack="no_context", nack_psn=pkt.psn, echo_ev=pkt.ev,
                      echo_ts=pkt.send_ts, last_hop_trim=pkt.last_hop_trim)
        out = Packet(kind="ack", src=self.id, dst=pkt.src, header=self.ctl_header(),
                     tc=1, ev=pkt.ev, pdc_dst=pkt.pdc_src, ack=ack, ttl=self.ttl)
        self.emit_ctl_packet(out)

    def _secure_nack(self, pkt: Packet, expected: int):
        from .wire import AckInfo

        ack = AckInfo(nack="secure_psn", nack_psn=pkt.psn, psn_hint=expected,
                      echo_ev=pkt.ev, echo_ts=pkt.send_ts)
        out = Packet(kind="ack", src=self.id, dst=pkt.src, header=self.ctl_header(),
                     tc=1, ev=pkt.ev, pdc_dst=pkt.pdc_src, ack=ack, ttl=self.ttl)
        self.emit_ctl_packet(out)
        self.count("secure_psn_nack")

    def _on_ctl(self, pkt: Packet):
        kind = pkt.ctl
        if kind == "credit":
            self.ccc_for(pkt.src).on_credit(pkt.credit)
            self.kick()
        elif kind == "probe":
            self._answer_probe(pkt)
        elif kind == "nop":
            self._answer_nop(pkt)
        elif kind == "nop_reply":
            self._finish_secure_open(pkt)
        elif kind == "close":
            self._answer_close(pkt)
        elif kind == "close_ack":
            pdc = self.pdcs_by_local.get(pkt.pdc_dst)
            if pdc is not None:
                pdc.on_close_ack(pkt.ctl_arg)
        else:
            self.count("unknown_ctl")

    def _answer_probe(self, pkt: Packet):
        from .wire import AckInfo

        pdc = self.pdc_in.get((pkt.src, pkt.pdc_src))
        if pdc is not None:
            ack = pdc._mk_ack(pkt)
        else:
            ack = AckInfo(echo_ev=pkt.ev, echo_ts=pkt.send_ts)
        ack.probe_echo = pkt.probe_seq
        out = Packet(kind="ack", src=self.id, dst=pkt.src, header=self.ctl_header(),
                     tc=1, ev=pkt.ev, pdc_src=pdc.local_id if pdc else None,
                     pdc_dst=pkt.pdc_src, ack=ack, ttl=self.ttl)
        self.emit_ctl_packet(out)

    def _answer_nop(self, pkt: Packet):
        base = self.rng.randrange(1, 1 << 31)
        expected = self.secure_expected.get(pkt.src, 0)
        if base < expected:
            base = expected
        pdc = Pdc(self, pkt.src, pkt.mode or "RUD", "target", self._alloc_pdc_id(),
                  self.pds_cfg, base)
        pdc.peer_id = pkt.pdc_src
        pdc.state = PENDING
        self.pdcs_by_local[pdc.local_id] = pdc
        self.pdc_in[(pkt.src, pkt.pdc_src)] = pdc
        out = Packet(kind="ctl", src=self.id, dst=pkt.src, header=self.ctl_header(),
                     tc=1, ev=pkt.ev, pdc_src=pdc.local_id, pdc_dst=pkt.pdc_src,
                     ctl="nop_reply", ctl_arg=base, ttl=self.ttl)
        self.emit_ctl_packet(out)

    def _finish_secure_open(self, pkt: Packet):
        pdc = self.pdcs_by_local.get(pkt.pdc_dst)
        if pdc is None or pdc.state != SECURE_QUERY:
            return
        handle = self._nop_pending.pop(pdc.local_id, None)
        if handle is not None:
            handle.cancel()
        base = pkt.ctl_arg
        pdc.base_psn = base
        pdc.next_psn = base
        pdc.cack_seen = base - 1
        pdc.highest_known_rx = base - 1
        pdc.peer_id = pkt.pdc_src
        pdc.state = SYN
        self.kick()

    def _answer_close(self, pkt: Packet):
        pdc = self.pdc_in.get((pkt.src, pkt.pdc_src))
        expected = pkt.ctl_arg + 1
        if self.pds_cfg.secure_mode != "off":
            prev = self.secure_expected.get(pkt.src, 0)
            self.secure_expected[pkt.src] = max(prev, expected)
        if pdc is not None:
            del self.pdc_in[(pkt.src, pkt.pdc_src)]
            self.pdcs_by_local.pop(pdc.local_id, None)
            self._free_pdc_ids.append(pdc.local_id)
        out = Packet(kind="ctl", src=self.id, dst=pkt.src, header=self.ctl_header(),
                     tc=1, ev=pkt.ev, pdc_dst=pkt.pdc_src, ctl="close_ack",
                     ctl_arg=expected, ttl=self.ttl)
        self.emit_ctl_packet(out)

    # ------------------------------------------------------------------
    # destination flow control (slow memory drain at the receiver)
    # ------------------------------------------------------------------

    def _dfc_note_arrival(self, nbytes: int, ack):
        self.rx_backlog += nbytes
        if not self._drain_armed:
            self._drain_armed = True
            self.sim.after(10_000, self._drain_tick)
        if (self.rx_backlog > self.cfg.dfc_threshold
                and self.sim.now - self._last_penalty_at >= self.cms_cfg.base_rtt_ns):
            self._last_penalty_at = self.sim.now
            ack.dfc_penalty = self.cfg.dfc_penalty

    def _drain_tick(self):
        drained = self.cfg.rx_drain_bps * 10_000 // 8_000_000_000
        self.rx_backlog = max(0, self.rx_backlog - drained)
        if self.rx_backlog > 0:
            self.sim.after(10_000, self._drain_tick)
        else:
            self._drain_armed = False

    # ------------------------------------------------------------------
    # addressing hook used by SES on first packets
    # ------------------------------------------------------------------

    def resolve(self, info) -> bool:
        addr = UetAddress(fa=self.fa, job_id=info.job_id, pid_on_fep=info.pid_on_fep,
                          ri=info.ri, relative=info.relative,
                          initiator_id=info.initiator_id, match_bits=info.match_bits)
        try:
            self.addr.resolve(addr)
            return True
        except ResolutionError as err:
            self.count(f"resolve_{err.kind}")
            return False
