"""Simulation report assembly and CSV emission with a stable schema.

Reports are pure data derived from the run: same scenario + same seed gives
byte-identical files. The header echoes every effective parameter.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field


@dataclass
class Report:
    header: dict
    flows: list = field(default_factory=list)  # row dicts
    flow_series: list = field(default_factory=list)  # (t_ns, flow, delivered)
    links: list = field(default_factory=list)  # (t_ns, link, util)
    ccc: list = field(default_factory=list)  # (t_ns, fep, peer, window, in_flight, credits)
    counters: dict = field(default_factory=dict)
    fates: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)  # (check, passed, detail)

    def passed(self) -> bool:
        return all(ok for _name, ok, _detail in self.verdicts)


FLOW_COLUMNS = ["flow", "src", "dst", "size", "protocol", "mode", "t_s_ns",
                "t_r_ns", "delivered", "first_byte_ns", "rx_complete_ns",
                "tx_complete_ns", "goodput_gbps"]


def collect_report(sim, net, header: dict) -> Report:
    rep = Report(header=dict(header))
    for f in net.metrics.flows.values():
        span = (f.rx_complete_ns or sim.now) - f.t_s
        goodput = (f.delivered * 8 / span) if span > 0 else 0.0
        rep.flows.append({
            "flow": f.flow_id, "src": f.src, "dst": f.dst, "size": f.size,
            "protocol": f.protocol, "mode": f.mode, "t_s_ns": f.t_s,
            "t_r_ns": f.t_r, "delivered": f.delivered,
            "first_byte_ns": f.first_byte_ns if f.first_byte_ns is not None else -1,
            "rx_complete_ns": f.rx_complete_ns if f.rx_complete_ns is not None else -1,
            "tx_complete_ns": f.tx_complete_ns if f.tx_complete_ns is not None else -1,
            "goodput_gbps": f"{goodput:.6f}",
        })
        for t, delivered in f.series:
            rep.flow_series.append((t, f.flow_id, delivered))
    rep.links = list(net.link_rows())
    rep.ccc = list(net.ccc_rows())
    rep.counters = dict(sorted(sim.counters.items()))
    rep.fates = sim.fate_totals()
    rep.fates["conservation_holds"] = sim.conservation_holds()
    return rep


def emit_metrics(report: Report, out_dir: str):
    """Write the CSV family plus a JSON summary; returns the file list."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def w(name, columns, rows):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            writer.writerows(rows)
        written.append(path)

    w("flows.csv", FLOW_COLUMNS,
      [[row[c] for c in FLOW_COLUMNS] for row in report.flows])
    w("flow_series.csv", ["t_ns", "flow", "delivered_bytes"], report.flow_series)
    w("links.csv", ["t_ns", "link", "utilization"], report.links)
    w("ccc.csv", ["t_ns", "fep", "peer", "window", "in_flight", "credits"],
      report.ccc)
    w("counters.csv", ["counter", "value"],
      sorted(report.counters.items()) + sorted(report.fates.items()))
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump({"header": report.header,
                   "verdicts": [{"check": n, "passed": ok, "detail": d}
                                for n, ok, d in report.verdicts]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written
