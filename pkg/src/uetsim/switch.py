"""Output-queued switch with two traffic classes, egress ECN and trimming.

Each output port owns one FIFO per traffic class; the control class (TC 1)
has strict priority over bulk (TC 0). ECN is evaluated at dequeue time from
the departing queue's occupancy, so the signal reflects the buffer state the
moment the packet leaves. A full bulk queue can trim an eligible data packet
to its header stub and forward it on the control class instead of dropping.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .engine import FATE_DROP_CONGESTION, FATE_DROP_CONFIG
from .topology import Unreachable


@dataclass
class EcnConfig:
    k_min: int  # bytes
    k_max: int
    p_max: float = 1.0

    def validate(self, capacity: int):
        if not (0 <= self.k_min <= self.k_max <= capacity):
            raise ValueError("need 0 <= k_min <= k_max <= queue capacity")
        if not (0.0 <= self.p_max <= 1.0):
            raise ValueError("p_max must be a probability")


@dataclass
class TrimConfig:
    enabled: bool = False
    trimmed_size: int = 64  # retained network+transport headers
    elevated_tc: int = 1


def mark_probability(occupancy: int, ecn: EcnConfig) -> float:
    """RED-style linear ramp: 0 below k_min, p_max at k_max, 1 above."""
    if occupancy < ecn.k_min:
        return 0.0
    if occupancy > ecn.k_max:
        return 1.0
    if ecn.k_max == ecn.k_min:
        return ecn.p_max
    return ecn.p_max * (occupancy - ecn.k_min) / (ecn.k_max - ecn.k_min)


class Switch:
    def __init__(self, sim, spec, topo, capacity_bytes=256 * 1024,
                 ecn: EcnConfig | None = None, trim: TrimConfig | None = None,
                 deny: set | None = None, transit_ns: int = 0):
        self.sim = sim
        self.spec = spec
        self.topo = topo
        self.id = spec.switch_id
        self.capacity = capacity_bytes
        self.ecn = ecn or EcnConfig(int(capacity_bytes * 0.2), int(capacity_bytes * 0.8), 1.0)
        self.ecn.validate(capacity_bytes)
        self.trim = trim or TrimConfig()
        self.deny = deny or set()  # (src, dst) endpoint pairs to drop
        self.transit_ns = transit_ns
        self.rng = sim.rng(f"switch/{self.id}")
        # port -> (outgoing LinkDir, peer kind)
        self.out: dict[int, tuple] = {}
        self.queues: dict[tuple, deque] = {}  # (port, tc) -> deque[(pkt, credit)]
        self.occupancy: dict[tuple, int] = {}

    def attach(self, port: int, link_dir, peer_kind: str):
        self.out[port] = (link_dir, peer_kind)
        for tc in (0, 1):
            self.queues[(port, tc)] = deque()
            self.occupancy[(port, tc)] = 0

    # -- ingress ---------------------------------------------------------------

    def receive(self, pkt, _in_dir, credit):
        if self.transit_ns:
            self.sim.after(self.transit_ns, self._ingest, pkt, credit)
        else:
            self._ingest(pkt, credit)

    def _ingest(self, pkt, credit):
        if (pkt.src, pkt.dst) in self.deny:
            self._config_drop(pkt, credit, "deny_rule")
            return
        try:
            port = self.topo.next_port(self.id, pkt.src, pkt.dst, pkt.ev)
        except Unreachable:
            self._config_drop(pkt, credit, "unreachable")
            return
        _link, peer_kind = self.out[port]
        pkt.ttl -= 1
        if pkt.ttl <= 0 and peer_kind != "fep":
            self._config_drop(pkt, credit, "ttl")
            return
        self.enqueue(port, pkt, credit)

    def _config_drop(self, pkt, credit, reason):
        self.sim.account_fate(pkt, FATE_DROP_CONFIG)
        self.sim.count(f"drop_config_{reason}")
        self._release(credit)

    # -- queueing ----------------------------------------------------------------

    def enqueue(self, port: int, pkt, credit=None) -> str:
        tc = pkt.tc
        key = (port, tc)
        size = pkt.wire_bytes
        if self.occupancy[key] + size <= self.capacity:
            self.queues[key].append((pkt, credit))
            self.occupancy[key] += size
            self._try_tx(port)
            return "queued"
        # bulk overflow: trim eligible data packets to headers on the control class
        if (self.trim.enabled and tc != self.trim.elevated_tc
                and pkt.kind == "req" and pkt.payload > 0 and not pkt.trimmed):
            pkt.payload = 0
            pkt.header = self.trim.trimmed_size
            pkt.trimmed = True
            pkt.trimmed_at = self.sim.now
            pkt.tc = self.trim.elevated_tc
            _link, peer_kind = self.out[port]
            pkt.last_hop_trim = peer_kind == "fep"
            ekey = (port, self.trim.elevated_tc)
            if self.occupancy[ekey] + pkt.wire_bytes <= self.capacity:
                self.queues[ekey].append((pkt, credit))
                self.occupancy[ekey] += pkt.wire_bytes
                self.sim.count("trimmed")
                self._try_tx(port)
                return "trimmed"
            # trims are best effort: a full elevated queue still drops
        self.sim.account_fate(pkt, FATE_DROP_CONGESTION)
        self.sim.count("drop_congestion")
        self._release(credit)
        return "dropped"

    # -- egress ------------------------------------------------------------------

    def _try_tx(self, port: int):
        link, _peer = self.out[port]
        while not link.busy:
            picked = None
            # control class first; a class gated by its own VC credits does
            # not block the other class (per-VC isolation)
            for tc in (1, 0):
                q = self.queues[(port, tc)]
                if q and link.ready(q[0][0].wire_bytes, tc):
                    picked = tc
                    break
            if picked is None:
                return
            pkt, credit = self.queues[(port, picked)].popleft()
            occ = self.occupancy[(port, picked)]
            self.occupancy[(port, picked)] = occ - pkt.wire_bytes
            self._release(credit)
            self.mark_ecn_at_egress(pkt, occ)
            link.submit(pkt)

    def mark_ecn_at_egress(self, pkt, occupancy: int):
        """Set ECN-CE with the RED ramp probability; a set mark stays set."""
        if pkt.ecn_ce:
            return pkt
        p = mark_probability(occupancy, self.ecn)
        if p >= 1.0 or (p > 0.0 and self.rng.random() < p):
            pkt.ecn_ce = True
        return pkt

    def wake(self, link_dir):
        for port, (link, _peer) in self.out.items():
            if link is link_dir:
                self._try_tx(port)
                return

    @staticmethod
    def _release(credit):
        if credit is not None:
            link_dir, vc, nbytes = credit
            link_dir.credit_release(vc, nbytes)

    def queue_bytes(self, port: int, tc: int) -> int:
        return self.occupancy[(port, tc)]
