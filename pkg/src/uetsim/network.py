"""Assembles a runnable fabric from a topology plus scenario parameters.

Owns the runtime objects (switches, link directions, endpoints), drives the
scenario's host actions (posting sends and receives at their configured
times), samples time series, and collects per-flow statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cms import CmsConfig
from .endpoint import Fep, FepConfig
from .linklayer import LinkDir
from .pds import PdsConfig
from .ses import ReceiveEntry, SesConfig
from .switch import EcnConfig, Switch, TrimConfig
from .wire import serialization_ns


@dataclass
class FlowStat:
    flow_id: int
    src: int
    dst: int
    size: int
    protocol: str
    mode: str
    t_s: int
    t_r: int
    delivered: int = 0
    first_byte_ns: int | None = None
    rx_complete_ns: int | None = None
    tx_complete_ns: int | None = None
    series: list = field(default_factory=list)  # (t_ns, delivered)


class Metrics:
    def __init__(self, sim):
        self.sim = sim
        self.flows: dict[int, FlowStat] = {}
        self.unexpected: dict[int, int] = {}
        self.defers = 0
        self.resumes = 0
        self.loss_events: list = []  # (t_ns, psn-less marker) optional

    def add_flow(self, stat: FlowStat):
        self.flows[stat.flow_id] = stat

    def flow_delivered(self, flow_id: int, nbytes: int, now: int):
        f = self.flows.get(flow_id)
        if f is None:
            return
        if f.first_byte_ns is None:
            f.first_byte_ns = now
        f.delivered += nbytes

    def flow_rx_complete(self, flow_id: int, now: int):
        f = self.flows.get(flow_id)
        if f is not None and f.rx_complete_ns is None:
            f.rx_complete_ns = now

    def flow_tx_complete(self, flow_id: int, now: int):
        f = self.flows.get(flow_id)
        if f is not None and f.tx_complete_ns is None:
            f.tx_complete_ns = now

    def count_unexpected(self, fep_id: int):
        self.unexpected[fep_id] = self.unexpected.get(fep_id, 0) + 1

    def count_defer(self, _fep_id: int):
        self.defers += 1

    def count_resume(self, _fep_id: int):
        self.resumes += 1


class Network:
    def __init__(self, sim, topo, *, link_defaults=None, switch_cfg=None,
                 fep_cfg: FepConfig | None = None, pds_cfg: PdsConfig | None = None,
                 ses_cfg: SesConfig | None = None, cms_cfg: CmsConfig | None = None,
                 link_overrides=None):
        self.sim = sim
        self.topo = topo
        self.metrics = Metrics(sim)
        self.switches: dict[int, Switch] = {}
        self.feps: dict[int, Fep] = {}
        self.dirs: dict[tuple, LinkDir] = {}  # (link_name, "ab"|"ba")
        self.pds_cfg = pds_cfg or PdsConfig()
        self.ses_cfg = ses_cfg or SesConfig()
        self.cms_cfg = cms_cfg or CmsConfig()
        self.fep_cfg = fep_cfg or FepConfig()
        switch_cfg = switch_cfg or {}
        link_defaults = link_defaults or {}
        link_overrides = link_overrides or {}

        for name, tl in topo.links.items():
            ov = link_overrides.get(name, {})
            for attr in ("rate_bps", "delay_ns", "ber", "jitter_ns", "llr", "cbfc"):
                if attr in ov:
                    setattr(tl, attr, ov[attr])
                elif attr in link_defaults:
                    setattr(tl, attr, link_defaults[attr])

        for sid, spec in topo.switches.items():
            cap = switch_cfg.get("queue_bytes", 256 * 1024)
            ecn = switch_cfg.get("ecn")
            if ecn is None:
                ecn = EcnConfig(int(cap * 0.2), int(cap * 0.8), 1.0)
            trim = switch_cfg.get("trim", TrimConfig())
            deny = switch_cfg.get("deny", set())
            self.switches[sid] = Switch(sim, spec, topo, capacity_bytes=cap,
                                        ecn=ecn, trim=trim, deny=deny,
                                        transit_ns=switch_cfg.get("transit_ns", 0))

        for ep in topo.all_endpoints():
            access = topo.links[topo.endpoint_access[ep]]
            self.feps[ep] = Fep(sim, ep, fa=f"10.0.{ep // 256}.{ep % 256}",
                                metrics=self.metrics, cfg=self.fep_cfg,
                                pds_cfg=self.pds_cfg, ses_cfg=self.ses_cfg,
                                cms_cfg=self.cms_cfg, line_rate_bps=access.rate_bps)

        for name, tl in topo.links.items():
            d_ab = LinkDir(sim, f"{name}/f", tl.rate_bps, tl.delay_ns, tl.ber,
                           tl.jitter_ns, llr=tl.llr, cbfc=tl.cbfc)
            d_ba = LinkDir(sim, f"{name}/r", tl.rate_bps, tl.delay_ns, tl.ber,
                           tl.jitter_ns, llr=tl.llr, cbfc=tl.cbfc)
            self.dirs[(name, "ab")] = d_ab
            self.dirs[(name, "ba")] = d_ba
            dev_a = self._device(tl.a)
            dev_b = self._device(tl.b)
            d_ab.tx_device, d_ab.rx_device = dev_a, dev_b
            d_ba.tx_device, d_ba.rx_device = dev_b, dev_a
            self._attach(tl.a, name, d_ab)
            self._attach(tl.b, name, d_ba)
            if tl.cbfc:
                d_ab.start_cbfc_sync()
                d_ba.start_cbfc_sync()

    def _device(self, end):
        kind, node = end
        return self.feps[node] if kind == "fep" else self.switches[node]

    def _attach(self, end, link_name, out_dir):
        kind, node = end
        if kind == "fep":
            self.feps[node].link = out_dir
        else:
            spec = self.topo.switches[node]
            for port, (_k, _n, lname) in spec.ports.items():
                if lname == link_name:
                    self.switches[node].attach(port, out_dir,
                                               "fep" if _k == "fep" else "switch")
                    break

    # ------------------------------------------------------------------
    # analytic path helpers (unloaded latencies for oracles and configs)
    # ------------------------------------------------------------------

    def one_way_ns(self, src: int, dst: int, wire_bytes: int) -> int:
        """Unloaded store-and-forward latency of one frame src -> dst."""
        path = self.topo.path_for(src, dst, ev=0)
        if path is None:
            raise ValueError(f"no path {src}->{dst}")
        total = 0
        for name in path:
            tl = self.topo.links[name]
            total += serialization_ns(wire_bytes, tl.rate_bps) + tl.delay_ns
        return total

    def data_rtt_ns(self, src: int, dst: int, data_wire: int, ack_wire: int = 58) -> int:
        return self.one_way_ns(src, dst, data_wire) + self.one_way_ns(dst, src, ack_wire)

    def bottleneck_rate(self, src: int, dst: int) -> int:
        path = self.topo.path_for(src, dst, ev=0)
        return min(self.topo.links[name].rate_bps for name in path)

    # ------------------------------------------------------------------
    # scenario flows
    # ------------------------------------------------------------------

    def start_flow(self, flow_id: int, src: int, dst: int, size: int,
                   protocol: str = "send", mode: str = "RUD", t_s: int = 0,
                   t_r: int = 0, tag: int = 0, content: bool = False):
        """Schedule one flow's host actions; returns its FlowStat."""
        t_s = max(t_s, self.sim.now)  # host actions cannot happen in the past
        t_r = max(t_r, self.sim.now)
        stat = FlowStat(flow_id, src, dst, size, protocol, mode, t_s, t_r)
        self.metrics.add_flow(stat)
        data = None
        if content:
            rng = self.sim.rng(f"flowdata/{flow_id}")
            data = rng.randbytes(size)

        if protocol in ("send", "deferrable", "eager", "rendezvous",
                        "receiver_initiated"):
            def post_receive():
                buf = self.feps[dst].ses.register_rma(
                    size, bytearray(size) if content else None)
                entry = ReceiveEntry(initiator_id=src, match_bits=tag, buffer=buf,
                                     flow_id=flow_id)
                self.feps[dst].ses.post_receive(0, entry)
                stat.rx_buffer = buf

            self.sim.schedule(t_r, post_receive)

            def post_send():
                self.feps[src].ses.submit_send(dst, size, protocol, flow_id=flow_id,
                                               mode=mode, tag=tag, data=data)

            self.sim.schedule(t_s, post_send)
        elif protocol == "write":
            buf = self.feps[dst].ses.register_rma(size, bytearray(size) if content else None)
            buf.flow_id = flow_id
            stat.rx_buffer = buf

            def post_write():
                self.feps[src].ses.submit_send(dst, size, "write", flow_id=flow_id,
                                               mode=mode, data=data, memkey=buf.memkey)

            self.sim.schedule(t_s, post_write)
        elif protocol == "read":
            holder_data = None
            if content:
                holder_data = bytearray(data)
            buf = self.feps[dst].ses.register_rma(size, holder_data)
            stat.rx_buffer = buf

            def post_read():
                state = self.feps[src].ses.submit_send(dst, size, "read",
                                                       flow_id=flow_id, mode=mode,
                                                       memkey=buf.memkey)
                stat.read_state = state

            self.sim.schedule(t_s, post_read)
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
        return stat

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------

    def start_sampler(self, interval_ns: int):
        self._interval = interval_ns
        self._link_rows: list = []
        self._ccc_rows: list = []
        self._last_busy: dict = {}
        self.sim.after(interval_ns, self._sample)

    def _sample(self):
        now = self.sim.now
        for key, d in self.dirs.items():
            last = self._last_busy.get(key, 0)
            util = (d.busy_ns - last) / self._interval
            self._last_busy[key] = d.busy_ns
            if util > 0:
                self._link_rows.append((now, f"{key[0]}:{key[1]}", round(util, 6)))
        for fep in self.feps.values():
            for peer, ccc in fep.cccs.items():
                self._ccc_rows.append((now, fep.id, peer, ccc.window,
                                       ccc.in_flight, ccc.credits))
        for f in self.metrics.flows.values():
            f.series.append((now, f.delivered))
        self.sim.after(self._interval, self._sample)

    def link_rows(self):
        return getattr(self, "_link_rows", [])

    def ccc_rows(self):
        return getattr(self, "_ccc_rows", [])
