"""Scenario runner and the canned experiment library.

run_scenario executes a validated configuration; run_canned builds one of
the named experiments, runs it (plus comparison variants where the check
calls for them), evaluates its thresholds and returns a report whose
verdicts decide the process exit code.

Canned topologies are desk-scale reconstructions: incast and outcast use a
single leaf (all bottlenecks at access links), the oversubscription case
puts 12 senders behind 4 equal-rate uplinks so each 1:1 flow can get a third
of its line rate, and the asymmetric-path case gives one spine half the
capacity of the other.
"""

from __future__ import annotations

import math

from .cms import CmsConfig
from .endpoint import FepConfig
from .engine import Simulator
from .linklayer import LinkDir
from .network import Network
from .pds import PdsConfig
from .report import Report, collect_report, emit_metrics
from .ses import SesConfig, completion_time_oracle
from .switch import EcnConfig, TrimConfig
from .topology import build_clos, build_single_leaf, build_two_leaf
from .wire import HeaderStack, ack_header_bytes, header_bytes, serialization_ns

US = 1_000
GBPS = 1_000_000_000

CANNED_NAMES = ("incast4", "outcast", "permutation12", "ecmp-stats",
                "latency-oracle", "trim-vs-rto", "reps-asym", "cbfc-lossless")


def _build_topology(tcfg):
    kind = tcfg["type"]
    if kind == "clos":
        return build_clos(tcfg["radix"], tcfg["levels"], tcfg["oversubscription"],
                          groups=tcfg["groups"], hash_seed=tcfg["hash_seed"])
    if kind == "single_leaf":
        return build_single_leaf(tcfg["endpoints"], hash_seed=tcfg["hash_seed"])
    if kind == "two_leaf":
        return build_two_leaf(tcfg["left"], tcfg["right"], tcfg["spines"],
                              hash_seed=tcfg["hash_seed"])
    raise ValueError(kind)


def _apply_link_params(topo, link_cfg, overrides):
    defaults = {
        "rate_bps": int(link_cfg["rate_gbps"] * GBPS),
        "delay_ns": link_cfg["delay_ns"],
        "ber": float(link_cfg["ber"]),
        "jitter_ns": link_cfg["jitter_ns"],
    }
    for name, tl in topo.links.items():
        for attr, value in defaults.items():
            setattr(tl, attr, value)
        ov = overrides.get(name, {})
        if "rate_gbps" in ov:
            tl.rate_bps = int(ov["rate_gbps"] * GBPS)
        for attr in ("delay_ns", "jitter_ns"):
            if attr in ov:
                setattr(tl, attr, ov[attr])
        if "ber" in ov:
            tl.ber = float(ov["ber"])


def data_wire_bytes(cfg) -> int:
    pds = "RUD+RCCC" if cfg["features"]["rccc"] else "RUD"
    stack = HeaderStack(ip=cfg["fep"]["ip"], encap=cfg["fep"]["encap"], pds=pds,
                        ses="standard", tss="base" if cfg["fep"]["tss"] else None,
                        crc=cfg["fep"]["crc"])
    return header_bytes(stack) + cfg["pds"]["mtu_payload"]


def _derive(cfg, topo, net_probe) -> tuple:
    """base RTT (ns) and BDP (wire bytes) from the flows' longest pair."""
    mtu_wire = data_wire_bytes(cfg)
    ack_wire = ack_header_bytes(cfg["fep"]["ip"], cfg["fep"]["encap"],
                                cfg["features"]["rccc"])
    pairs = [(f["src"], f["dst"]) for f in cfg["flows"]] or [(0, 1)]
    rtt = 0
    rate = 0
    for src, dst in pairs:
        fwd = net_probe.one_way_ns(src, dst, mtu_wire)
        back = net_probe.one_way_ns(dst, src, ack_wire)
        rtt = max(rtt, fwd + back)
        rate = max(rate, topo.links[topo.endpoint_access[dst]].rate_bps)
    if cfg["cms"]["base_rtt_us"] is not None:
        rtt = int(cfg["cms"]["base_rtt_us"] * US)
    bdp = max(mtu_wire, rtt * rate // 8_000_000_000)
    if cfg["cms"]["bdp_kib"] is not None:
        bdp = int(cfg["cms"]["bdp_kib"] * 1024)
    return rtt, bdp, mtu_wire


def build_simulation(cfg: dict):
    """Scenario config -> (sim, net, derived info dict)."""
    sim = Simulator(seed=cfg["seed"])
    topo = _build_topology(cfg["topology"])
    _apply_link_params(topo, cfg["link"], cfg["link_overrides"])
    feats = cfg["features"]
    if feats["llr"] or feats["cbfc"]:
        for tl in topo.links.values():
            tl.llr = feats["llr"]
            tl.cbfc = feats["cbfc"]

    probe = _ProbeNet(topo)
    rtt, bdp, mtu_wire = _derive(cfg, topo, probe)

    c = cfg["cms"]
    fixed = None
    if c["fixed_window_kib"] is not None:
        fixed = int(c["fixed_window_kib"] * 1024)
    elif not feats["nscc"] and not feats["rccc"]:
        fixed = bdp  # constant-window default when congestion control is off
    cms_cfg = CmsConfig(
        nscc=feats["nscc"], rccc=feats["rccc"], fixed_window=fixed,
        w_min=mtu_wire, bdp_bytes=bdp, base_rtt_ns=rtt, mtu_wire=mtu_wire,
        high_rtt_factor=float(c["high_rtt_factor"]), md_gain=float(c["md_gain"]),
        md_cap=float(c["md_cap"]), f_fast=float(c["f_fast"]),
        f_gentle=float(c["f_gentle"]), min_rto_ns=int(c["min_rto_us"] * US),
        lb=c["lb"], bitmap_evs=c["bitmap_evs"], ev_slots=c["ev_slots"],
        credit_quantum=c["credit_quantum"] or mtu_wire,
    )
    p = cfg["pds"]
    win_pkts = p["rx_window_pkts"] or max(64, -(-2 * bdp // mtu_wire))
    pds_cfg = PdsConfig(
        mtu_payload=p["mtu_payload"], coalesce_n=p["coalesce_n"],
        rx_window_pkts=win_pkts, tx_buf_pkts=p["tx_buf_pkts"] or win_pkts,
        ooo_enabled=c["ooo_enabled"], ooo_k=c["ooo_k"], ev_slots=c["ev_slots"],
        secure_mode=feats["secure_psn"],
    )
    s = cfg["ses"]
    ses_cfg = SesConfig(
        mtu_payload=p["mtu_payload"], profile=s["profile"],
        unexpected_policy=s["unexpected_policy"],
        unexpected_budget=int(s["unexpected_budget_kib"] * 1024),
        sw_init_delay_ns=int(s["sw_init_delay_us"] * US),
    )
    f = cfg["fep"]
    fep_cfg = FepConfig(
        service_time_ns=f["service_time_ns"], ttl=f["ttl"], ip=f["ip"],
        encap=f["encap"], tss="base" if f["tss"] else None, crc=f["crc"],
        rx_drain_bps=int(f["rx_drain_gbps"] * GBPS) if f["rx_drain_gbps"] else None,
    )
    sw = cfg["switch"]
    cap = int(sw["queue_kib"] * 1024)
    switch_cfg = {
        "queue_bytes": cap,
        "ecn": EcnConfig(int(cap * sw["ecn_kmin_frac"]),
                         int(cap * sw["ecn_kmax_frac"]), float(sw["ecn_pmax"])),
        "trim": TrimConfig(enabled=feats["trimming"], trimmed_size=sw["trim_size"]),
        "transit_ns": sw["transit_ns"],
    }
    net = Network(sim, topo, fep_cfg=fep_cfg, pds_cfg=pds_cfg, ses_cfg=ses_cfg,
                  cms_cfg=cms_cfg, switch_cfg=switch_cfg)
    derived = {"base_rtt_ns": rtt, "bdp_bytes": bdp, "mtu_wire": mtu_wire,
               "rx_window_pkts": win_pkts, "fixed_window": fixed}
    return sim, net, derived


class _ProbeNet:
    """Path math over a topology before the runtime network exists."""

    def __init__(self, topo):
        self.topo = topo

    def one_way_ns(self, src, dst, wire_bytes):
        path = self.topo.path_for(src, dst, ev=0)
        if path is None:
            raise ValueError(f"no path {src}->{dst}")
        return sum(serialization_ns(wire_bytes, self.topo.links[n].rate_bps)
                   + self.topo.links[n].delay_ns for n in path)


def run_scenario(cfg: dict, out_dir: str | None = None) -> Report:
    sim, net, derived = build_simulation(cfg)
    for i, fl in enumerate(cfg["flows"]):
        net.start_flow(i + 1, fl["src"], fl["dst"], fl["size"], fl["protocol"],
                       fl["mode"], int(fl["t_s_us"] * US), int(fl["t_r_us"] * US),
                       fl["tag"], fl["content"])
    net.start_sampler(int(cfg["sample_interval_us"] * US))
    sim.run_until(int(cfg["t_end_us"] * US))
    header = {"scenario": cfg, "derived": derived, "seed": cfg["seed"]}
    rep = collect_report(sim, net, header)
    rep.verdicts.append(("conservation", sim.conservation_holds(),
                         str(sim.fate_totals())))
    if out_dir:
        emit_metrics(rep, out_dir)
    return rep


# ---------------------------------------------------------------------------
# measurement helpers
# ---------------------------------------------------------------------------

def delivered_between(flow_stat, t0: int, t1: int) -> int:
    """Bytes credited to the flow inside [t0, t1), from its sampled series."""
    at_t0 = at_t1 = 0
    for t, v in flow_stat.series:
        if t <= t0:
            at_t0 = v
        if t <= t1:
            at_t1 = v
    return at_t1 - at_t0


def goodput_share(flow_stat, t0: int, t1: int, line_rate_bps: int) -> float:
    nbytes = delivered_between(flow_stat, t0, t1)
    capacity = line_rate_bps * (t1 - t0) / 8 / 1e9  # bytes the line could move
    return nbytes / capacity if capacity else 0.0


def convergence_time(flows, fair_share: float, line_rate_bps: int,
                     window_ns: int, tol_abs: float, t_end: int) -> int | None:
    """Earliest time after which every flow's share over a sliding window
    stays within fair_share +/- tol_abs. None when that never happens."""
    if not flows:
        return None
    points = sorted({t for f in flows for t, _ in f.series})
    good_since = None
    for t in points:
        if t + window_ns > t_end:
            break
        ok = all(abs(goodput_share(f, t, t + window_ns, line_rate_bps) - fair_share)
                 <= tol_abs for f in flows)
        if ok:
            if good_since is None:
                good_since = t
        else:
            good_since = None
    return good_since


# ---------------------------------------------------------------------------
# canned experiments
# ---------------------------------------------------------------------------

def run_canned(name: str, seed: int = 1, out_dir: str | None = None) -> Report:
    if name not in CANNED_NAMES:
        raise ValueError(f"unknown canned experiment {name!r}; "
                         f"choose from {', '.join(CANNED_NAMES)}")
    fn = {
        "incast4": canned_incast4,
        "outcast": canned_outcast,
        "permutation12": canned_permutation12,
        "ecmp-stats": canned_ecmp_stats,
        "latency-oracle": canned_latency_oracle,
        "trim-vs-rto": canned_trim_vs_rto,
        "reps-asym": canned_reps_asym,
        "cbfc-lossless": canned_cbfc_lossless,
    }[name]
    rep = fn(seed)
    rep.header["canned"] = name
    rep.header["seed"] = seed
    if out_dir:
        emit_metrics(rep, out_dir)
    return rep


def _verdict(rep, name, passed, detail):
    rep.verdicts.append((name, bool(passed), detail))


# -- ecmp-stats --------------------------------------------------------------

def canned_ecmp_stats(seed: int = 1, trials: int = 100_000) -> Report:
    """Exhaustive equal-cost path counts plus EV conflict probabilities on the
    64-endpoint, radix-8, 3-level fabric."""
    topo = build_clos(8, 3, hash_seed=seed)
    rep = Report(header={"experiment": "ecmp-stats", "trials": trials})
    intra_bad = cross_bad = same_leaf_bad = 0
    for src in topo.all_endpoints():
        for dst in topo.all_endpoints():
            if src == dst:
                continue
            n = topo.count_distinct_paths(src, dst)
            same_leaf = topo.endpoint_leaf[src] == topo.endpoint_leaf[dst]
            same_group = topo.endpoint_group(src) == topo.endpoint_group(dst)
            if same_leaf:
                same_leaf_bad += n != 1
            elif same_group:
                intra_bad += n != 4
            else:
                cross_bad += n != 16
    _verdict(rep, "intra_group_paths=4", intra_bad == 0, f"violations={intra_bad}")
    _verdict(rep, "cross_group_paths=16", cross_bad == 0, f"violations={cross_bad}")
    _verdict(rep, "same_leaf_paths=1", same_leaf_bad == 0, f"violations={same_leaf_bad}")

    import random
    rng = random.Random(f"{seed}/ecmp-conflict".encode())
    # same group, different leaves: the four-path case
    intra_pair = (0, 5)
    cross_pair = (0, 20)
    for label, pair, expect, tol in (("intra", intra_pair, 0.25, 0.01),
                                     ("cross", cross_pair, 0.0625, 0.005)):
        src, dst = pair
        # an EV fully determines the path, so enumerate each EV's path once
        by_ev = [tuple(topo.path_for(src, dst, ev)) for ev in range(1 << 16)]
        hits = 0
        for _ in range(trials):
            if by_ev[rng.randrange(1 << 16)] == by_ev[rng.randrange(1 << 16)]:
                hits += 1
        p = hits / trials
        _verdict(rep, f"conflict_{label}", abs(p - expect) <= tol,
                 f"measured={p:.4f} expected={expect} tol={tol}")
    return rep


# -- latency-oracle ------------------------------------------------------------

def _oracle_beta(rate_bps: int, payload: int, header: int) -> float:
    """Effective ns per payload byte including per-packet header overhead."""
    return serialization_ns(payload + header, rate_bps) / payload


def canned_latency_oracle(seed: int = 1) -> Report:
    """Simulated receiver completion versus the analytic table, all 6 cells,
    three message sizes each."""
    rep = Report(header={"experiment": "latency-oracle"})
    mtu = 4096
    rate = 100 * GBPS
    delay = 1000
    sizes = [mtu, 10 * mtu, 1000 * mtu]
    protos = ("rendezvous", "deferrable", "receiver_initiated")
    for proto in protos:
        for case in ("expected", "unexpected"):
            for size in sizes:
                detail, ok = _latency_cell(seed, proto, case, size, rate, delay, mtu)
                _verdict(rep, f"{proto}/{case}/{size}", ok, detail)
    return rep


def _latency_cell(seed, proto, case, size, rate, delay, mtu):
    sim = Simulator(seed=seed)
    topo = build_single_leaf(2, hash_seed=seed)
    _apply_link_params(topo, {"rate_gbps": rate / GBPS, "delay_ns": delay,
                              "ber": 0.0, "jitter_ns": 0}, {})
    data_hdr = header_bytes(HeaderStack())  # 102B full stack
    resp_hdr = header_bytes(HeaderStack(ses="minimal"))  # read responses
    ack_hdr = ack_header_bytes()
    probe = _ProbeNet(topo)
    alpha = probe.one_way_ns(0, 1, data_hdr + mtu)
    rtt = alpha + probe.one_way_ns(1, 0, ack_hdr)
    bdp = max(data_hdr + mtu, rtt * rate // 8_000_000_000)
    # headroom above one BDP keeps the constant window off the critical path
    cms = CmsConfig(fixed_window=2 * bdp, bdp_bytes=bdp, base_rtt_ns=rtt,
                    mtu_wire=data_hdr + mtu)
    ses = SesConfig(mtu_payload=mtu, profile="ai_full", sw_init_delay_ns=2000)
    win_pkts = max(64, 4 * bdp // (data_hdr + mtu))
    net = Network(sim, topo, cms_cfg=cms, ses_cfg=ses,
                  pds_cfg=PdsConfig(mtu_payload=mtu, rx_window_pkts=win_pkts,
                                    tx_buf_pkts=win_pkts),
                  switch_cfg={"queue_bytes": 8 * 1024 * 1024})
    if case == "expected":
        t_r, t_s = 0, 10 * US
    else:
        t_r, t_s = 300 * US, 0
    protocol = "send" if proto == "deferrable" else proto
    stat = net.start_flow(1, 0, 1, size, protocol, t_s=t_s, t_r=t_r)
    sim.run_until(int(50e6))
    # per-cell effective inverse bandwidth: the bulk stream's wire overhead;
    # a read-serving NIC also clocks out one ack per inbound request
    if proto == "rendezvous" and size > net.feps[0].eager_limit():
        beta = (serialization_ns(resp_hdr + mtu, rate)
                + serialization_ns(ack_hdr, rate)) / mtu
    else:
        beta = _oracle_beta(rate, mtu, data_hdr)
    want = completion_time_oracle(proto, case, t_s, t_r, alpha, beta, size)
    slack = rtt + 2 * serialization_ns(data_hdr + mtu, rate)
    got = stat.rx_complete_ns
    if got is None:
        return "did not complete", False
    diff = got - want
    detail = (f"sim={got}ns oracle={want}ns diff={diff}ns "
              f"slack={slack}ns alpha={alpha}ns")
    return detail, abs(diff) <= slack


# -- trim-vs-rto ----------------------------------------------------------------

def _loss_recovery_run(seed, *, trimming, ooo, ev_slots, min_rto_us=50):
    """A 40-packet line-rate stream hit mid-flight by a 4-packet cross burst
    that overflows the bottleneck queue by exactly one data packet."""
    sim = Simulator(seed=seed)
    topo = build_single_leaf(3, hash_seed=seed)
    _apply_link_params(topo, {"rate_gbps": 100, "delay_ns": 2000, "ber": 0.0,
                              "jitter_ns": 0}, {})
    topo.links[topo.endpoint_access[2]].rate_bps = 400 * GBPS  # bursty source
    mtu = 4096
    hdr = header_bytes(HeaderStack())
    wire = hdr + mtu
    probe = _ProbeNet(topo)
    rtt = probe.one_way_ns(0, 1, wire) + probe.one_way_ns(1, 0, ack_header_bytes())
    main_pkts = 40
    cms = CmsConfig(fixed_window=main_pkts * wire, bdp_bytes=main_pkts * wire,
                    base_rtt_ns=rtt, mtu_wire=wire,
                    min_rto_ns=min_rto_us * US, ev_slots=ev_slots)
    pds = PdsConfig(mtu_payload=mtu, rx_window_pkts=256, tx_buf_pkts=256,
                    ooo_enabled=ooo, ooo_k=16, ev_slots=ev_slots)
    losses = []
    deliveries = {}

    def hook(pkt, fate, now):
        # the payload is lost the moment the switch drops or trims it
        if fate == "dropped_congestion" and pkt.psn is not None:
            losses.append((now, pkt.psn))
        elif fate == "trimmed_delivered" and pkt.psn is not None:
            losses.append((pkt.trimmed_at, pkt.psn))
        elif (fate == "delivered" and pkt.kind == "req" and pkt.payload > 0
              and pkt.psn is not None and pkt.psn not in deliveries):
            deliveries[pkt.psn] = now

    sim.fate_hook = hook
    net = Network(sim, topo, cms_cfg=cms, pds_cfg=pds,
                  switch_cfg={"queue_bytes": 18_000,
                              "trim": TrimConfig(enabled=trimming)})
    stat = net.start_flow(1, 0, 1, main_pkts * mtu, "send")
    net.start_flow(2, 2, 1, 4 * mtu, "send", t_s=6 * US)
    sim.run_until(int(5e6))
    recoveries = []
    for t_loss, psn in losses:
        t_done = deliveries.get(psn)
        if t_done is not None and t_done > t_loss:
            recoveries.append(t_done - t_loss)
    return {
        "rtt": rtt, "losses": len(losses), "recoveries": recoveries,
        "complete": stat.rx_complete_ns is not None,
        "delivered": stat.delivered, "stat": stat, "sim": sim,
    }


def canned_trim_vs_rto(seed: int = 1) -> Report:
    rep = Report(header={"experiment": "trim-vs-rto"})
    trim = _loss_recovery_run(seed, trimming=True, ooo=False, ev_slots=0)
    none = _loss_recovery_run(seed, trimming=False, ooo=False, ev_slots=0)
    ooo = _loss_recovery_run(seed, trimming=False, ooo=True, ev_slots=0)
    ev = _loss_recovery_run(seed, trimming=False, ooo=False, ev_slots=4)
    rtt = trim["rtt"]
    for label, run in (("trim", trim), ("rto", none), ("ooo", ooo), ("ev", ev)):
        _verdict(rep, f"{label}_completed",
                 run["complete"] and run["losses"] >= 1,
                 f"losses={run['losses']} delivered={run['delivered']}")
    if trim["recoveries"]:
        worst = max(trim["recoveries"])
        _verdict(rep, "trim_recovery<=1.5rtt", worst <= 1.5 * rtt,
                 f"worst={worst}ns rtt={rtt}ns")
    if none["recoveries"]:
        best = min(none["recoveries"])
        _verdict(rep, "rto_recovery>=min_rto", best >= 50 * US,
                 f"best={best}ns min_rto={50 * US}ns")
    for label, run in (("ooo", ooo), ("ev", ev)):
        if run["recoveries"]:
            worst = max(run["recoveries"])
            _verdict(rep, f"{label}_recovery<=3rtt", worst <= 3 * rtt,
                     f"worst={worst}ns rtt={rtt}ns")
    rep.header["rtt_ns"] = rtt
    return rep


# -- congestion scenarios (incast / outcast / oversubscription) -------------------

def _fig6_config(topology, flows, *, nscc, rccc, t_end_us, seed,
                 queue_kib=128) -> dict:
    from .scenario import validate

    return validate({
        "seed": seed,
        "t_end_us": t_end_us,
        "sample_interval_us": 20,
        "topology": topology,
        "link": {"rate_gbps": 100, "delay_ns": 500},
        "features": {"trimming": True, "nscc": nscc, "rccc": rccc},
        "switch": {"queue_kib": queue_kib},
        "flows": flows,
    })


def _big_flow(src, dst, size=512 * 1024 * 1024):
    return {"src": src, "dst": dst, "size": size, "protocol": "send"}


def canned_incast4(seed: int = 1) -> Report:
    """Four senders to one receiver: receiver credits split 25% each; the
    sender-side controller reaches the same shares more slowly.

    Senders join 80us apart so convergence is a real redistribution, not an
    artifact of synchronized equal starting windows.
    """
    flows = [_big_flow(i, 4) for i in range(4)]
    topo = {"type": "single_leaf", "endpoints": 5}
    line = 100 * GBPS
    stagger = 80 * US

    rep = Report(header={"experiment": "incast4"})
    results = {}
    for label, nscc, rccc, t_end in (("rccc", False, True, 2500),
                                     ("nscc", True, False, 3500)):
        cfg = _fig6_config(topo, flows, nscc=nscc, rccc=rccc,
                           t_end_us=t_end, seed=seed, queue_kib=192)
        sim, net, derived = build_simulation(cfg)
        stats = [net.start_flow(i + 1, f["src"], f["dst"], f["size"], "send",
                                t_s=i * stagger)
                 for i, f in enumerate(flows)]
        net.start_sampler(20 * US)
        sim.run_until(t_end * US)
        t0, t1 = (t_end * 6 // 10) * US, t_end * US
        shares = [goodput_share(s, t0, t1, line) for s in stats]
        agg = sum(shares)
        conv = convergence_time(stats, 0.25, line, 400 * US, 0.10, t_end * US)
        results[label] = {"shares": shares, "agg": agg, "conv": conv,
                          "rtt": derived["base_rtt_ns"]}
        tol = 0.05 if label == "rccc" else 0.10
        _verdict(rep, f"{label}_shares_25pct",
                 all(abs(sh - 0.25) <= tol for sh in shares),
                 f"shares={[f'{sh:.3f}' for sh in shares]} tol={tol}")
        _verdict(rep, f"{label}_conservation", sim.conservation_holds(), "")
    _verdict(rep, "rccc_aggregate>=95pct", results["rccc"]["agg"] >= 0.95,
             f"aggregate={results['rccc']['agg']:.3f}")
    c_r, c_n = results["rccc"]["conv"], results["nscc"]["conv"]
    _verdict(rep, "nscc_converges_slower",
             c_r is not None and c_n is not None and c_n > c_r,
             f"rccc_conv={c_r}ns nscc_conv={c_n}ns (joins end at {3 * stagger}ns)")
    rep.header["results"] = {
        k: {"shares": [round(s, 4) for s in v["shares"]],
            "aggregate": round(v["agg"], 4), "convergence_ns": v["conv"]}
        for k, v in results.items()}
    return rep


def canned_outcast(seed: int = 1) -> Report:
    """One sender fanning out to four receivers while a second sender shares
    one of them: receiver credits stop at 50%, the network-signal controller
    finds the free 75%."""
    flows = [_big_flow(0, d) for d in (1, 2, 3, 4)] + [_big_flow(5, 4)]
    topo = {"type": "single_leaf", "endpoints": 6}
    line = 100 * GBPS
    rep = Report(header={"experiment": "outcast"})
    results = {}
    for label, nscc, rccc, t_end in (("rccc", False, True, 2000),
                                     ("nscc", True, False, 4000)):
        cfg = _fig6_config(topo, flows, nscc=nscc, rccc=rccc,
                           t_end_us=t_end, seed=seed)
        sim, net, _ = build_simulation(cfg)
        stats = [net.start_flow(i + 1, f["src"], f["dst"], f["size"], "send")
                 for i, f in enumerate(flows)]
        net.start_sampler(20 * US)
        sim.run_until(t_end * US)
        t0, t1 = (t_end // 2) * US, t_end * US
        w_share = goodput_share(stats[4], t0, t1, line)
        o_shares = [goodput_share(s, t0, t1, line) for s in stats[:4]]
        results[label] = {"w_share": w_share, "o_shares": o_shares}
        _verdict(rep, f"{label}_conservation", sim.conservation_holds(), "")
    _verdict(rep, "rccc_w_share~50pct",
             abs(results["rccc"]["w_share"] - 0.50) <= 0.05,
             f"w->v share={results['rccc']['w_share']:.3f}")
    _verdict(rep, "nscc_w_share>=65pct", results["nscc"]["w_share"] >= 0.65,
             f"w->v share={results['nscc']['w_share']:.3f} (target 0.75)")
    rep.header["results"] = {
        k: {"w_share": round(v["w_share"], 4),
            "o_shares": [round(s, 4) for s in v["o_shares"]]}
        for k, v in results.items()}
    return rep


def canned_permutation12(seed: int = 1) -> Report:
    """Twelve 1:1 flows squeezed through four uplinks (a third each); a
    second pair of runs adds an intra-group flow into one of the receivers
    and compares receiver-credit against network-signal control."""
    perm_flows = [_big_flow(i, 12 + i) for i in range(12)]
    v_flow = _big_flow(24, 12)
    topo = {"type": "two_leaf", "left": 12, "right": 13, "spines": 4}
    line = 100 * GBPS
    rep = Report(header={"experiment": "permutation12"})
    results = {}
    runs = (("perm_rccc", perm_flows, False, True, 3000),
            ("v_rccc", perm_flows + [v_flow], False, True, 2000),
            ("v_nscc", perm_flows + [v_flow], True, False, 3000))
    for label, flows, nscc, rccc, t_end in runs:
        cfg = _fig6_config(topo, flows, nscc=nscc, rccc=rccc,
                           t_end_us=t_end, seed=seed)
        sim, net, _ = build_simulation(cfg)
        stats = [net.start_flow(i + 1, f["src"], f["dst"], f["size"], "send")
                 for i, f in enumerate(flows)]
        net.start_sampler(20 * US)
        sim.run_until(t_end * US)
        t0, t1 = (t_end // 3) * US, t_end * US
        perm = [goodput_share(s, t0, t1, line) for s in stats[:12]]
        v_share = (goodput_share(stats[12], t0, t1, line)
                   if len(stats) > 12 else None)
        results[label] = {"perm": perm, "v_share": v_share}
        _verdict(rep, f"{label}_conservation", sim.conservation_holds(), "")
    perm = results["perm_rccc"]["perm"]
    _verdict(rep, "perm_shares_33pct",
             all(abs(sh - 1 / 3) <= 0.05 for sh in perm),
             f"min={min(perm):.3f} max={max(perm):.3f} tol=0.05")
    _verdict(rep, "rccc_v_share~50pct",
             abs(results["v_rccc"]["v_share"] - 0.50) <= 0.05,
             f"v->C share={results['v_rccc']['v_share']:.3f}")
    _verdict(rep, "nscc_v_share>=60pct", results["v_nscc"]["v_share"] >= 0.60,
             f"v->C share={results['v_nscc']['v_share']:.3f} (target 0.67)")
    rep.header["results"] = {
        k: {"perm_min": round(min(v["perm"]), 4),
            "perm_max": round(max(v["perm"]), 4),
            "v_share": round(v["v_share"], 4) if v["v_share"] is not None else None}
        for k, v in results.items()}
    return rep


# -- reps-asym -----------------------------------------------------------------

def canned_reps_asym(seed: int = 1) -> Report:
    """Two paths at capacities 1 : 0.5; recycled-entropy spraying self-clocks
    into a 2:1 send split."""
    sim = Simulator(seed=seed)
    topo = build_two_leaf(1, 1, 2, hash_seed=seed)
    _apply_link_params(topo, {"rate_gbps": 200, "delay_ns": 500, "ber": 0.0,
                              "jitter_ns": 0}, {})
    fast, slow = 100 * GBPS, 50 * GBPS
    for name in ("sw0-sw2", "sw1-sw2"):
        topo.links[name].rate_bps = fast
    for name in ("sw0-sw3", "sw1-sw3"):
        topo.links[name].rate_bps = slow
    mtu = 4096
    wire = header_bytes(HeaderStack()) + mtu
    probe = _ProbeNet(topo)
    rtt = probe.one_way_ns(0, 1, wire) + probe.one_way_ns(1, 0, ack_header_bytes())
    window = int(1.5 * rtt * (fast + slow) // 8_000_000_000)
    cms = CmsConfig(fixed_window=window, bdp_bytes=window, base_rtt_ns=rtt,
                    mtu_wire=wire, lb="reps")
    win_pkts = max(64, 4 * window // wire)
    net = Network(sim, topo, cms_cfg=cms,
                  pds_cfg=PdsConfig(mtu_payload=mtu, rx_window_pkts=win_pkts,
                                    tx_buf_pkts=win_pkts),
                  switch_cfg={"queue_bytes": 4 * 1024 * 1024})
    net.start_flow(1, 0, 1, 512 * 1024 * 1024, "send")
    t_meas0, t_meas1 = 10 * rtt, 50 * rtt
    marks = {}

    def mark(label):
        marks[label] = {n: net.dirs[(n, "ab")].tx_bytes
                        for n in ("sw0-sw2", "sw0-sw3")}

    sim.schedule(t_meas0, mark, "t0")
    sim.schedule(t_meas1, mark, "t1")
    sim.run_until(t_meas1 + 1)
    fast_bytes = marks["t1"]["sw0-sw2"] - marks["t0"]["sw0-sw2"]
    slow_bytes = marks["t1"]["sw0-sw3"] - marks["t0"]["sw0-sw3"]
    rep = Report(header={"experiment": "reps-asym", "rtt_ns": rtt,
                         "window_bytes": window})
    ratio = fast_bytes / slow_bytes if slow_bytes else math.inf
    _verdict(rep, "split_2to1_within_10pct", abs(ratio - 2.0) <= 0.2,
             f"fast={fast_bytes}B slow={slow_bytes}B ratio={ratio:.3f} "
             f"window=[{t_meas0},{t_meas1}]ns (within 50 RTT)")
    _verdict(rep, "conservation", sim.conservation_holds(), "")
    return rep


# -- cbfc-lossless ----------------------------------------------------------------

class _BurstSource:
    """Adversarial on/off frame generator feeding one link direction."""

    def __init__(self, sim, link, n_frames, frame_bytes, on_frames, off_ns):
        self.sim = sim
        self.link = link
        self.remaining = n_frames
        self.frame_bytes = frame_bytes
        self.on_frames = on_frames
        self.off_ns = off_ns
        self.in_burst = 0
        self.sent = 0
        link.tx_device = self

    def start(self):
        self._pump()

    def wake(self, _link):
        self._pump()

    def _pump(self):
        from .wire import Packet

        while self.remaining and not self.link.busy:
            if self.in_burst >= self.on_frames:
                self.in_burst = 0
                self.sim.after(self.off_ns, self._pump)
                return
            if not self.link.ready(self.frame_bytes, 0):
                return  # resumes on credit update
            pkt = Packet(kind="req", src=0, dst=1, header=64,
                         payload=self.frame_bytes - 64)
            pkt.injection = self.sim.account_injection()
            self.link.submit(pkt)
            self.remaining -= 1
            self.in_burst += 1
            self.sent += 1


class _PausingSink:
    """Receiver that drains its buffer at line rate but pauses periodically."""

    def __init__(self, sim, rate_bps, pause_every_ns, pause_ns):
        self.sim = sim
        self.rate = rate_bps
        self.pause_every = pause_every_ns
        self.pause = pause_ns
        self.queue = []
        self.draining = False
        self.received = 0
        self.next_pause = pause_every_ns

    def receive(self, pkt, link, credit):
        self.sim.account_fate(pkt, "delivered")
        self.received += 1
        self.queue.append((pkt, credit))
        if not self.draining:
            self.draining = True
            self.sim.after(0, self._drain)

    def _drain(self):
        if not self.queue:
            self.draining = False
            return
        pkt, credit = self.queue.pop(0)
        hold = serialization_ns(pkt.wire_bytes, self.rate)
        if self.sim.now >= self.next_pause:
            hold += self.pause
            self.next_pause = self.sim.now + self.pause_every
        self.sim.after(hold, self._drained, pkt, credit)

    def _drained(self, pkt, credit):
        if credit is not None:
            link_dir, vc, nbytes = credit
            link_dir.credit_release(vc, nbytes)
        self._drain()

    def wake(self, _link):
        pass


def _cbfc_run(seed, n_frames, buffer_bytes, frame_bytes=4198):
    sim = Simulator(seed=seed)
    link = LinkDir(sim, "audit", 100 * GBPS, 1000, cbfc=True,
                   vc_buffers=[buffer_bytes, buffer_bytes])
    sink = _PausingSink(sim, 100 * GBPS, pause_every_ns=50_000, pause_ns=20_000)
    link.rx_device = sink
    src = _BurstSource(sim, link, n_frames, frame_bytes, on_frames=64,
                       off_ns=10_000)
    src.start()
    sim.run_until(1 << 62)
    drops = sum(rx.drops for rx in link.cbfc_rx)
    return {"sent": src.sent, "received": sink.received, "drops": drops,
            "done": src.remaining == 0}


def canned_cbfc_lossless(seed: int = 1) -> Report:
    rep = Report(header={"experiment": "cbfc-lossless"})
    frame = 4198
    rate = 100 * GBPS
    link_rtt = 2 * (1000 + serialization_ns(frame, rate))
    pfc_headroom = link_rtt * rate // 8_000_000_000 + frame
    main = _cbfc_run(seed, 1_000_000, buffer_bytes=4 * frame)
    _verdict(rep, "zero_drops_1e6",
             main["done"] and main["drops"] == 0
             and main["received"] == main["sent"] == 1_000_000,
             f"sent={main['sent']} received={main['received']} drops={main['drops']}")
    min_zero_loss = None
    sweep = []
    for mult in (1, 2, 3, 6):
        buf = mult * frame
        r = _cbfc_run(seed + mult, 30_000, buffer_bytes=buf)
        sweep.append((buf, r["drops"], r["done"]))
        if r["drops"] == 0 and r["done"] and min_zero_loss is None:
            min_zero_loss = buf
    _verdict(rep, "min_buffer<pfc_headroom",
             min_zero_loss is not None and min_zero_loss < pfc_headroom,
             f"min_zero_loss={min_zero_loss}B pfc_headroom={pfc_headroom}B "
             f"sweep={sweep}")
    rep.header["pfc_headroom_bytes"] = pfc_headroom
    return rep
