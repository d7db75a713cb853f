"""Structural packet model with byte-exact header size accounting.

Headers are records with a size function, not serialized bit layouts. The
component sizes below drive serialization delay and goodput math everywhere
else in the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass

# Layer components, bytes.
ETH_HEADER = 14
ETH_FCS = 4
IPV4 = 20
IPV6 = 40
UDP = 8  # UET runs over UDP destination port 4793
ENTROPY_HEADER = 4  # native-IP mode: 4B entropy header replacing UDP
UET_UDP_PORT = 4793

# Packet delivery sublayer header by transport mode.
PDS_BYTES = {
    "RUD": 12,
    "ROD": 12,
    "RUD+RCCC": 16,
    "ROD+RCCC": 16,
    "RUDI": 8,
    "UUD": 4,
}

# Semantics sublayer header variants.
SES_BYTES = {
    "standard": 44,
    "matching_small": 32,  # matching messages up to 8 KiB
    "minimal": 20,  # non-matching messages
}

TSS_BYTES = {None: 0, "base": 12, "explicit_src": 16}
ICV_BYTES = 16
E2E_CRC = 4

MTU_PAYLOAD_DEFAULT = 4096


@dataclass(frozen=True)
class HeaderStack:
    """One wire header configuration for a request packet."""

    ip: str = "ipv4"  # ipv4 | ipv6
    encap: str = "udp"  # udp | native
    pds: str = "RUD"  # key into PDS_BYTES
    ses: str = "standard"  # key into SES_BYTES
    tss: str | None = None  # None | base | explicit_src (ICV present iff set)
    crc: bool = False  # optional trailing end-to-end CRC

    def validate(self):
        if self.ip not in ("ipv4", "ipv6"):
            raise ValueError(f"unknown ip variant {self.ip!r}")
        if self.encap not in ("udp", "native"):
            raise ValueError(f"unknown encapsulation {self.encap!r}")
        if self.pds not in PDS_BYTES:
            raise ValueError(f"unknown pds variant {self.pds!r}")
        if self.ses not in SES_BYTES:
            raise ValueError(f"unknown ses variant {self.ses!r}")
        if self.tss not in TSS_BYTES:
            raise ValueError(f"unknown tss variant {self.tss!r}")


def header_bytes(stack: HeaderStack) -> int:
    """Exact on-wire header size for a valid component combination."""
    stack.validate()
    total = ETH_HEADER + ETH_FCS
    total += IPV4 if stack.ip == "ipv4" else IPV6
    total += UDP if stack.encap == "udp" else ENTROPY_HEADER
    total += PDS_BYTES[stack.pds]
    total += SES_BYTES[stack.ses]
    total += TSS_BYTES[stack.tss]
    if stack.tss is not None:
        total += ICV_BYTES  # authentication tag rides with the security header
    if stack.crc:
        total += E2E_CRC
    return total


def ack_header_bytes(ip: str = "ipv4", encap: str = "udp", rccc: bool = False) -> int:
    """Wire size of an acknowledgment frame (no SES header, no payload)."""
    total = ETH_HEADER + ETH_FCS
    total += IPV4 if ip == "ipv4" else IPV6
    total += UDP if encap == "udp" else ENTROPY_HEADER
    total += PDS_BYTES["RUD+RCCC" if rccc else "RUD"]
    return total


def enumerate_header_sizes():
    """All valid (stack, size) combinations, for the documentation CSV."""
    rows = []
    for ip in ("ipv4", "ipv6"):
        for encap in ("udp", "native"):
            for pds in PDS_BYTES:
                for ses in SES_BYTES:
                    for tss in (None, "base", "explicit_src"):
                        for crc in (False, True):
                            stack = HeaderStack(ip, encap, pds, ses, tss, crc)
                            rows.append((stack, header_bytes(stack)))
    return rows


def serialization_ns(wire_bytes: int, rate_bps: int) -> int:
    """Time to clock wire_bytes onto a link, rounded up to 1 ns."""
    if rate_bps <= 0:
        raise ValueError("link rate must be positive")
    bits = wire_bytes * 8
    return max(1, (bits * 1_000_000_000 + rate_bps - 1) // rate_bps)


def packets_for_message(size: int, mtu_payload: int = MTU_PAYLOAD_DEFAULT):
    """Per-packet payload sizes for a message: full MTU except the last.

    No fragmentation ever happens in the network, so this split is final.
    """
    if size < 0:
        raise ValueError("message size must be >= 0")
    if size == 0:
        return [0]
    n_full, rest = divmod(size, mtu_payload)
    sizes = [mtu_payload] * n_full
    if rest:
        sizes.append(rest)
    return sizes


@dataclass
class AckInfo:
    """Acknowledgment contents: CACK + 64-bit SACK bitmap and options."""

    cack: int = 0
    sack: int = 0  # 64-bit bitmap above cack; bit i => cack+1+i received
    ooo_count: int | None = None
    mp_range: int | None = None
    echo_ev: int = 0
    echo_ts: int = 0
    service_time: int = 0
    echo_ecn: bool = False
    credit: int | None = None
    request_close: bool = False
    # negative acknowledgment details (None for plain acks)
    nack: str | None = None  # trim | out_of_window | secure_psn | addressing | no_context
    nack_psn: int | None = None
    psn_hint: int | None = None
    last_hop_trim: bool = False
    probe_echo: int | None = None
    psn_exact: bool = False  # RUDI: cack acknowledges exactly one PSN
    dfc_penalty: float | None = None


@dataclass
class SesInfo:
    """Message-level descriptor carried by request packets (self-describing)."""

    op: str  # send | rndzv_eager | read_req | read_resp | write | notify |
    #          defer_resp | resume_req | not_matched | rndzv_done | buffer_info
    msg_id: int = 0
    offset: int = 0
    length: int = 0
    total_size: int = 0
    stage_size: int = 0  # rendezvous: size of the eager stage
    start_offset: int = 0  # first byte offset this message stream covers
    job_id: int = 0
    pid_on_fep: int = 0
    ri: int = 0
    initiator_id: int = 0
    match_bits: int = 0
    memkey: int | None = None
    irt: int | None = None
    trt: int | None = None
    buffered: int = 0
    place_offset: int = 0  # initiator-side placement for read responses
    data: bytes | None = None  # payload content when byte fidelity matters
    relative: bool = True


_next_packet_debug_id = 0


@dataclass
class Packet:
    """A simulated frame: layered header descriptor + payload byte count."""

    kind: str  # req | ack | ctl
    src: int
    dst: int
    header: int
    payload: int = 0
    tc: int = 0
    mode: str | None = None
    ev: int = 0
    psn: int | None = None
    base_psn: int | None = None  # carried while SYN is set
    syn: bool = False
    pdc_src: int | None = None
    pdc_dst: int | None = None
    ecn_ce: bool = False
    trimmed: bool = False
    trimmed_at: int = 0
    last_hop_trim: bool = False
    ttl: int = 16
    send_ts: int = 0
    service_time: int = 0
    demand: int = 0
    ses: SesInfo | None = None
    ack: AckInfo | None = None
    ctl: str | None = None  # probe | nop | nop_reply | credit | close | close_ack | dfc
    ctl_arg: int = 0
    credit: int = 0
    probe_seq: int | None = None
    injection: int = 0
    fate: str | None = None

    @property
    def wire_bytes(self) -> int:
        return self.header + self.payload
