"""Scalable endpoint addressing: JobID -> PIDonFEP -> Resource Index.

Relative mode walks the three tables to a per-process resource; absolute
mode treats PIDonFEP like a UDP port and keeps the JobID only as an
authorization token. Failures are per transaction: a bad field NACKs that
packet and bumps a counter without poisoning any state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

JOB_ID_BITS = 24
PID_ON_FEP_BITS = 12
RI_BITS = 12
INITIATOR_ID_BITS = 32
MATCH_BITS = 64


@dataclass(frozen=True)
class UetAddress:
    fa: str  # fabric address of the destination FEP
    job_id: int
    pid_on_fep: int
    ri: int
    relative: bool = True
    initiator_id: int = 0
    match_bits: int = 0

    def validate(self):
        for value, bits, name in (
            (self.job_id, JOB_ID_BITS, "job_id"),
            (self.pid_on_fep, PID_ON_FEP_BITS, "pid_on_fep"),
            (self.ri, RI_BITS, "ri"),
            (self.initiator_id, INITIATOR_ID_BITS, "initiator_id"),
        ):
            if not 0 <= value < (1 << bits):
                raise ValueError(f"{name}={value} exceeds {bits} bits")


class ResolutionError(Exception):
    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind  # authorization | addressing


@dataclass
class ResourceContext:
    kind: str  # matcher | rma | queue
    process: int
    ri: int
    payload: object = None  # the owning engine's context object


@dataclass
class AddressTables:
    """Per-FEP resolution state, mutated only at scenario setup."""

    fa: str = ""
    # relative mode: job -> pid table; pid -> ri table; ri -> context
    jobs: dict = field(default_factory=dict)  # job_id -> {pid_on_fep -> {ri -> ResourceContext}}
    # absolute mode: pid_on_fep acts like a port; single merged table
    services: dict = field(default_factory=dict)  # pid_on_fep -> {ri -> ResourceContext}
    authorized_jobs: set = field(default_factory=set)
    merged_pid_ri: bool = False
    auth_failures: int = 0
    addr_failures: int = 0

    def register(self, job_id: int, pid: int, ri: int, ctx: ResourceContext):
        self.jobs.setdefault(job_id, {}).setdefault(pid, {})[ri] = ctx
        self.authorized_jobs.add(job_id)

    def register_service(self, pid: int, ri: int, ctx: ResourceContext):
        self.services.setdefault(pid, {})[ri] = ctx

    def resolve(self, addr: UetAddress) -> ResourceContext:
        addr.validate()
        if addr.relative:
            pids = self.jobs.get(addr.job_id)
            if pids is None:
                self.auth_failures += 1
                raise ResolutionError("authorization", f"unknown JobID {addr.job_id}")
            ris = pids.get(addr.pid_on_fep)
            if ris is None:
                self.addr_failures += 1
                raise ResolutionError("addressing", f"unknown PIDonFEP {addr.pid_on_fep}")
            ctx = ris.get(addr.ri)
            if ctx is None:
                self.addr_failures += 1
                raise ResolutionError("addressing", f"unknown RI {addr.ri}")
            return ctx
        # absolute: JobID is an authorization token only
        if addr.job_id not in self.authorized_jobs:
            self.auth_failures += 1
            raise ResolutionError("authorization", f"JobID {addr.job_id} not authorized")
        ris = self.services.get(addr.pid_on_fep)
        if ris is None:
            self.addr_failures += 1
            raise ResolutionError("addressing", f"no service at PIDonFEP {addr.pid_on_fep}")
        ctx = ris.get(0 if self.merged_pid_ri else addr.ri)
        if ctx is None:
            self.addr_failures += 1
            raise ResolutionError("addressing", f"unknown RI {addr.ri}")
        return ctx


def table_footprint(n_nodes: int, procs_per_node: int, mode: str) -> int:
    """Entries each source must store to address every process.

    Relative addressing resolves the process as a table offset at the target,
    so a source stores one entry per node; direct enumeration stores one per
    process.
    """
    if n_nodes < 0 or procs_per_node < 0:
        raise ValueError("counts must be non-negative")
    if mode == "relative":
        return n_nodes
    if mode == "direct":
        return n_nodes * procs_per_node
    raise ValueError(f"unknown addressing mode {mode!r}")
