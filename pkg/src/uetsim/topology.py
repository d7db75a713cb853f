"""Clos/fat-tree fabric construction, ECMP port selection, path enumeration.

A topology is a leveled tree of switches plus endpoint attach points. Routing
is up/down: a packet ascends through ECMP-selected up-ports until its
destination is in the subtree below, then descends along the unique down
path. The ECMP hash is a per-switch-salted 64-bit mixer over the flow key
including the entropy value, so packets with equal EVs repeat their path and
uniformly random EVs spread uniformly over the up-ports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    x &= _M64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _M64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _M64
    x ^= x >> 31
    return x


def flow_hash(salt: int, src: int, dst: int, ev: int, dst_port: int = 4793, proto: int = 17) -> int:
    """Deterministic well-mixing hash over the five-tuple-with-EV."""
    h = _mix64(salt ^ _GOLDEN)
    for v in (src, dst, ev, dst_port, proto):
        h = _mix64(h ^ ((v * _GOLDEN) & _M64))
    return h


def ecmp_select(group: list, salt: int, src: int, dst: int, ev: int) -> int:
    """Pick one member of an equal-cost group; identical inputs, identical pick."""
    if not group:
        raise ValueError("ecmp group must be non-empty")
    if len(group) == 1:
        return group[0]
    return group[flow_hash(salt, src, dst, ev) % len(group)]


@dataclass
class TopoLink:
    """Structural link; transmission parameters get filled from the scenario."""

    name: str
    a: tuple  # ("fep"|"switch", node_id)
    b: tuple
    klass: str  # access | fabric
    level: int  # fabric tier of the upper end (access links are level 0)
    rate_bps: int = 100_000_000_000
    delay_ns: int = 500
    ber: float = 0.0
    jitter_ns: int = 0
    llr: bool = False
    cbfc: bool = False


@dataclass
class SwitchSpec:
    switch_id: int
    level: int
    # port -> ("fep"|"switch", node_id, link_name)
    ports: dict = field(default_factory=dict)
    up_ports: list = field(default_factory=list)
    # endpoint id -> down port
    below: dict = field(default_factory=dict)


class Unreachable(Exception):
    """Destination is not reachable from this point (configuration error)."""


class Topology:
    def __init__(self, hash_seed: int = 0):
        self.hash_seed = hash_seed
        self.switches: dict[int, SwitchSpec] = {}
        self.links: dict[str, TopoLink] = {}
        self.endpoint_leaf: dict[int, int] = {}  # endpoint -> leaf switch id
        self.endpoint_access: dict[int, str] = {}  # endpoint -> access link name
        self.groups: list[list[int]] = []
        self.meta: dict = {}

    # -- construction helpers ------------------------------------------------

    def add_switch(self, level: int) -> int:
        sid = len(self.switches)
        self.switches[sid] = SwitchSpec(sid, level)
        return sid

    def attach_endpoint(self, endpoint: int, leaf: int):
        name = f"ep{endpoint}-sw{leaf}"
        link = TopoLink(name, ("fep", endpoint), ("switch", leaf), "access", 0)
        self.links[name] = link
        sw = self.switches[leaf]
        port = len(sw.ports)
        sw.ports[port] = ("fep", endpoint, name)
        sw.below[endpoint] = port
        self.endpoint_leaf[endpoint] = leaf
        self.endpoint_access[endpoint] = name

    def connect(self, lower: int, upper: int, level: int) -> str:
        """Wire an up-port of `lower` to a down-port of `upper`."""
        name = f"sw{lower}-sw{upper}"
        if name in self.links:  # parallel links get a suffix
            k = 2
            while f"{name}.{k}" in self.links:
                k += 1
            name = f"{name}.{k}"
        self.links[name] = TopoLink(name, ("switch", lower), ("switch", upper), "fabric", level)
        lo, up = self.switches[lower], self.switches[upper]
        lport, uport = len(lo.ports), len(up.ports)
        lo.ports[lport] = ("switch", upper, name)
        lo.up_ports.append(lport)
        up.ports[uport] = ("switch", lower, name)
        return name

    def finalize(self):
        """Propagate endpoint reachability down-tables up the tree."""
        by_level = sorted(self.switches.values(), key=lambda s: s.level)
        for sw in by_level:
            for port, (kind, node, _name) in sw.ports.items():
                if kind != "switch":
                    continue
                other = self.switches[node]
                if other.level < sw.level:
                    for ep in other.below:
                        sw.below.setdefault(ep, port)

    # -- routing --------------------------------------------------------------

    def switch_salt(self, switch_id: int) -> int:
        return _mix64(self.hash_seed ^ ((switch_id + 1) * _GOLDEN))

    def next_port(self, switch_id: int, src: int, dst: int, ev: int) -> int:
        """Forwarding decision at one switch: unique down port or hashed up port."""
        sw = self.switches[switch_id]
        port = sw.below.get(dst)
        if port is not None:
            return port
        if not sw.up_ports:
            raise Unreachable(f"switch {switch_id} has no route to endpoint {dst}")
        return ecmp_select(sw.up_ports, self.switch_salt(switch_id), src, dst, ev)

    def path_for(self, src: int, dst: int, ev: int) -> list[str] | None:
        """Ordered link names src->dst induced by per-hop ECMP, or None."""
        if src == dst:
            raise ValueError("src and dst must differ")
        if src not in self.endpoint_leaf or dst not in self.endpoint_leaf:
            return None
        path = [self.endpoint_access[src]]
        here = self.endpoint_leaf[src]
        for _hop in range(64):  # generous bound; real paths are short
            sw = self.switches[here]
            try:
                port = self.next_port(here, src, dst, ev)
            except Unreachable:
                return None
            kind, node, link_name = sw.ports[port]
            path.append(link_name)
            if kind == "fep":
                return path
            here = node
        return None

    def switch_hops(self, path: list[str]) -> int:
        return len(path) - 1

    def count_distinct_paths(self, src: int, dst: int) -> int:
        """Exact count of equal-cost paths by enumerating all up-port choices."""
        if src == dst:
            return 0
        if src not in self.endpoint_leaf or dst not in self.endpoint_leaf:
            return 0

        def walk(switch_id: int) -> int:
            sw = self.switches[switch_id]
            if dst in sw.below:
                return 1  # the down path from here is unique
            total = 0
            for port in sw.up_ports:
                _kind, node, _name = sw.ports[port]
                total += walk(node)
            return total

        return walk(self.endpoint_leaf[src])

    def endpoint_group(self, endpoint: int) -> int:
        for gi, members in enumerate(self.groups):
            if endpoint in members:
                return gi
        return -1

    def all_endpoints(self) -> list[int]:
        return sorted(self.endpoint_leaf)


def build_clos(radix: int, levels: int, oversubscription=(1, 1), groups: int | None = None,
               hash_seed: int = 0) -> Topology:
    """Multi-level folded Clos from fixed-radix switches.

    Every non-top switch splits its ports down:up per the leaf oversubscription
    (1:1 everywhere above the leaf). Core switches carry one down-link per
    group. A 2-level fabric populates the full core radix (groups = radix);
    deeper fabrics default to radix/2 groups, which is the 64-endpoint
    radix-8 arrangement of 4 groups of 16.
    """
    if radix < 4 or radix % 2:
        raise ValueError("radix must be an even integer >= 4")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    os_up, os_down = _parse_ratio(oversubscription)
    # leaf split approximating down:up = os ratio
    d1 = round(radix * os_up / (os_up + os_down))
    d1 = min(max(d1, 1), radix - 1)
    u1 = radix - d1
    exact = (d1 * os_down == u1 * os_up)

    if groups is None:
        groups = radix if levels == 2 else radix // 2
    if not 1 <= groups <= radix:
        raise ValueError(f"core layer of radix {radix} cannot join {groups} groups")

    topo = Topology(hash_seed)
    next_ep = 0

    def build_unit(level: int):
        """Returns (list of uplink-owning switch ids at unit top, endpoints)."""
        nonlocal next_ep
        if level == 1:
            leaf = topo.add_switch(1)
            members = []
            for _ in range(d1):
                topo.attach_endpoint(next_ep, leaf)
                members.append(next_ep)
                next_ep += 1
            return [leaf] * u1, members  # one entry per uplink
        sub_tops = []
        members = []
        down = radix // 2
        for _ in range(down):
            tops, eps = build_unit(level - 1)
            sub_tops.append(tops)
            members.extend(eps)
        n_spines = len(sub_tops[0])
        spines = [topo.add_switch(level) for _ in range(n_spines)]
        for tops in sub_tops:
            for j, lower in enumerate(tops):
                topo.connect(lower, spines[j], level)
        uplinks = []
        for sp in spines:
            uplinks.extend([sp] * (radix // 2))
        return uplinks, members

    group_tops = []
    for _ in range(groups):
        tops, members = build_unit(levels - 1)
        group_tops.append(tops)
        topo.groups.append(members)

    n_cores = len(group_tops[0])
    cores = [topo.add_switch(levels) for _ in range(n_cores)]
    for tops in group_tops:
        for j, lower in enumerate(tops):
            topo.connect(lower, cores[j], levels)

    topo.finalize()
    topo.meta = {
        "kind": "clos",
        "radix": radix,
        "levels": levels,
        "groups": groups,
        "leaf_down_ports": d1,
        "leaf_up_ports": u1,
        "oversubscription": f"{os_up}:{os_down}",
        "oversubscription_exact": exact,
        "achieved_split": f"{d1}:{u1}",
        "endpoints": next_ep,
    }
    return topo


def build_single_leaf(n_endpoints: int, hash_seed: int = 0) -> Topology:
    """All endpoints on one switch; every path is one hop through it."""
    topo = Topology(hash_seed)
    leaf = topo.add_switch(1)
    for ep in range(n_endpoints):
        topo.attach_endpoint(ep, leaf)
    topo.finalize()
    topo.groups = [list(range(n_endpoints))]
    topo.meta = {"kind": "single_leaf", "endpoints": n_endpoints}
    return topo


def build_two_leaf(left: int, right: int, spines: int, hash_seed: int = 0) -> Topology:
    """Two leaves joined by `spines` single-link spine switches."""
    topo = Topology(hash_seed)
    l0 = topo.add_switch(1)
    l1 = topo.add_switch(1)
    for ep in range(left):
        topo.attach_endpoint(ep, l0)
    for ep in range(left, left + right):
        topo.attach_endpoint(ep, l1)
    for _ in range(spines):
        sp = topo.add_switch(2)
        topo.connect(l0, sp, 2)
        topo.connect(l1, sp, 2)
    topo.finalize()
    topo.groups = [list(range(left)), list(range(left, left + right))]
    topo.meta = {"kind": "two_leaf", "endpoints": left + right, "spines": spines}
    return topo


def _parse_ratio(value) -> tuple[int, int]:
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 2:
            raise ValueError(f"oversubscription ratio {value!r} is not 'a:b'")
        a, b = int(parts[0]), int(parts[1])
    else:
        a, b = value
    if a <= 0 or b <= 0:
        raise ValueError("oversubscription ratio terms must be positive")
    return int(a), int(b)
