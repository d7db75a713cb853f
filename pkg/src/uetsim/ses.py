"""Semantics sublayer: message transactions over packet delivery contexts.

Every request packet is self-describing (full target address, match fields,
message id, offset), so packets commit into buffers in any arrival order and
the receiver never reorders. Matching consumes posted receive entries per
profile: untagged FIFO, exact hash matching, or in-order wildcard walk.
Three protocols move large messages: rendezvous (eager part + RMA read of
the remainder), deferrable send (full-rate send, target defers and later
resumes via restart tokens), and receiver-initiated (notification, buffer
info reply, then an RMA write from the sender).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .pds import MsgSend
from .wire import SesInfo

KIB8 = 8 * 1024

# operations whose single packet carries semantic offset/length fields that
# must pass through packetization untouched
_VERBATIM_OPS = ("read_req", "defer_resp", "resume_req", "not_matched",
                 "rndzv_done", "buffer_info", "rma_err", "notify")


def ses_variant(op: str, total: int) -> str:
    """Header variant per operation: matching ops get the compact header for
    small messages; non-matching responses use the minimal one."""
    if op in ("send", "rndzv_eager", "notify"):
        return "matching_small" if total <= KIB8 else "standard"
    if op in ("write", "read_req"):
        return "standard"
    return "minimal"


def completion_time_oracle(protocol: str, case: str, t_s: int, t_r: int,
                           alpha: int, beta: float, size: int) -> int:
    """Analytic worst-case receiver completion time for the three protocols.

    alpha is the one-way latency in ns, beta the ns-per-byte of the data
    stream, t_s/t_r the send and receive posting times. Acknowledgment
    effects are not modeled here.
    """
    if case not in ("expected", "unexpected"):
        raise ValueError(f"unknown case {case!r}")
    stream = int(beta * size)
    if protocol in ("rendezvous", "deferrable"):
        start = t_s if case == "expected" else t_r
        return start + alpha + stream
    if protocol == "receiver_initiated":
        if case == "expected":
            return t_s + 3 * alpha + stream
        return t_r + 2 * alpha + stream
    raise ValueError(f"unknown protocol {protocol!r}")


@dataclass
class SesConfig:
    mtu_payload: int = 4096
    profile: str = "ai_full"  # untagged | ai_full | hpc
    unexpected_policy: str = "headers"  # headers | partial
    unexpected_budget: int = 64 * 1024
    sw_init_delay_ns: int = 2_000


@dataclass
class ReceiveEntry:
    initiator_id: int
    match_bits: int
    buffer: "RmaBuffer"
    posted_at: int = 0
    wild_initiator: bool = False
    ignore_mask: int = 0  # match-key bits to ignore (wildcard matching)
    flow_id: int | None = None

    def matches(self, initiator: int, bits: int, profile: str) -> bool:
        if profile == "untagged":
            return True
        if profile == "ai_full":
            return self.initiator_id == initiator and self.match_bits == bits
        if not self.wild_initiator and self.initiator_id != initiator:
            return False
        keep = ~self.ignore_mask
        return (self.match_bits & keep) == (bits & keep)


@dataclass
class UnexpectedRecord:
    src: int
    msg_id: int
    op: str
    ri: int
    initiator_id: int
    match_bits: int
    total: int
    stage: int
    irt: int | None
    memkey: int | None = None
    buffered: int = 0
    chunks: list = field(default_factory=list)  # (offset, length, bytes|None)
    deferred_sent: bool = False
    arrived_at: int = 0


@dataclass
class RmaBuffer:
    memkey: int
    size: int
    data: bytearray | None = None  # None skips byte fidelity for bulk runs
    flow_id: int | None = None  # metric attribution for direct RMA traffic

    def place(self, offset: int, length: int, content: bytes | None) -> bool:
        if offset < 0 or offset + length > self.size:
            return False
        if self.data is not None and content is not None:
            self.data[offset:offset + length] = content
        return True

    def read(self, offset: int, length: int) -> bytes | None:
        if offset < 0 or offset + length > self.size:
            return None
        if self.data is None:
            return None
        return bytes(self.data[offset:offset + length])


@dataclass
class Matcher:
    profile: str = "ai_full"
    entries: list = field(default_factory=list)
    unexpected: list = field(default_factory=list)

    def post(self, entry: ReceiveEntry):
        self.entries.append(entry)

    def take(self, initiator: int, bits: int) -> ReceiveEntry | None:
        """Entries are walked in posted order, so HPC wildcard entries posted
        first win over later exact ones."""
        for i, entry in enumerate(self.entries):
            if entry.matches(initiator, bits, self.profile):
                return self.entries.pop(i)
        return None


@dataclass
class RecvState:
    """Assembly of one inbound message at its destination buffer."""

    total: int
    buffer: RmaBuffer | None
    flow_id: int | None = None
    placed: int = 0  # bytes landed via the message stream itself
    seen_offsets: set = field(default_factory=set)
    executions: int = 0
    completed: bool = False
    reading: bool = False
    read_done: bool = False
    stage: int = 0  # rendezvous: bytes the eager stream carries; 0 otherwise
    memkey: int | None = None
    src: int = -1
    msg_id: int = 0
    is_rndzv: bool = False


@dataclass
class SendState:
    flow_id: int | None
    msg_id: int
    protocol: str
    size: int
    peer: int
    mode: str
    data: bytes | None = None
    acked_payload: int = 0
    tx_done: bool = False
    deferred: bool = False
    trt: int | None = None
    msg: MsgSend | None = None
    src_buffer: RmaBuffer | None = None
    local_buf: RmaBuffer | None = None
    eager_len: int = 0


@dataclass
class ReadRun:
    """Initiator-side state of a single-packet-read sequence; the data holder
    keeps nothing per message."""

    read_id: int
    flow_id: int | None
    holder: int
    memkey: int
    total: int
    mtu: int
    place_buffer: RmaBuffer | None
    place_base: int = 0
    src_base: int = 0
    next_offset: int = 0
    outstanding: int = 0
    placed: int = 0
    on_complete: object = None
    errors: int = 0


class SesEngine:
    def __init__(self, fep, cfg: SesConfig):
        self.fep = fep
        self.sim = fep.sim
        self.cfg = cfg
        self.matchers: dict[int, Matcher] = {}
        self.rma: dict[int, RmaBuffer] = {}
        self.sends: dict[int, SendState] = {}
        self.recvs: dict[tuple, RecvState] = {}
        self.reads: dict[int, ReadRun] = {}
        self.deferred_by_irt: dict[int, SendState] = {}
        self.unexpected_budget_used = 0
        self._next_msg = fep.id * 1_000_000 + 1
        self._next_memkey = fep.id * 1_000_000 + 1

    # ------------------------------------------------------------------
    # local resources
    # ------------------------------------------------------------------

    def matcher(self, ri: int = 0) -> Matcher:
        m = self.matchers.get(ri)
        if m is None:
            m = Matcher(profile=self.cfg.profile)
            self.matchers[ri] = m
        return m

    def register_rma(self, size: int, data: bytearray | None = None,
                     memkey: int | None = None) -> RmaBuffer:
        if memkey is None:
            memkey = self._next_memkey
            self._next_memkey += 1
        buf = RmaBuffer(memkey, size, data)
        self.rma[memkey] = buf
        return buf

    def new_msg_id(self) -> int:
        mid = self._next_msg
        self._next_msg += 1
        return mid

    def post_receive(self, ri: int, entry: ReceiveEntry):
        """Post a receive; a matching buffered unexpected message resumes."""
        entry.posted_at = self.sim.now
        m = self.matcher(ri)
        for i, rec in enumerate(m.unexpected):
            if entry.matches(rec.initiator_id, rec.match_bits, m.profile):
                m.unexpected.pop(i)
                self._resume_unexpected(rec, entry)
                return
        m.post(entry)

    # ------------------------------------------------------------------
    # sender-side protocol entry points
    # ------------------------------------------------------------------

    def packet_info(self, msg: MsgSend, offset: int, length: int) -> SesInfo:
        """Per-packet self-describing header, derived from the template."""
        t: SesInfo = msg.ses_template
        if t.op in _VERBATIM_OPS:
            return t
        data = None
        if t.data is not None:
            data = bytes(t.data[offset:offset + length])
        rel = offset - t.start_offset
        return SesInfo(
            op=t.op, msg_id=t.msg_id, offset=offset, length=length,
            total_size=t.total_size, stage_size=t.stage_size,
            start_offset=t.start_offset, job_id=t.job_id,
            pid_on_fep=t.pid_on_fep, ri=t.ri, initiator_id=t.initiator_id,
            match_bits=t.match_bits, memkey=t.memkey, irt=t.irt, trt=t.trt,
            buffered=t.buffered, place_offset=t.place_offset + rel, data=data,
            relative=t.relative,
        )

    def submit_send(self, peer: int, size: int, protocol: str, flow_id=None,
                    mode: str = "RUD", tag: int = 0, initiator_id: int | None = None,
                    ri: int = 0, data: bytes | None = None,
                    memkey: int | None = None) -> SendState:
        mid = self.new_msg_id()
        init = self.fep.id if initiator_id is None else initiator_id
        state = SendState(flow_id, mid, protocol, size, peer, mode, data=data)
        self.sends[mid] = state
        if protocol in ("send", "deferrable", "eager"):
            t = self._template(state, "send", tag, init, ri, total=size)
            self._submit_msg(state, t, size)
        elif protocol == "rendezvous":
            self._start_rendezvous(state, tag, init, ri)
        elif protocol == "receiver_initiated":
            t = self._template(state, "notify", tag, init, ri, total=size)
            self._submit_msg(state, t, 0)
        elif protocol == "write":
            if memkey is None:
                raise ValueError("write needs a registered target memkey")
            t = self._template(state, "write", 0, init, ri, total=size, memkey=memkey)
            self._submit_msg(state, t, size)
        elif protocol == "read":
            self._start_read(state, memkey)
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
        return state

    def _template(self, state: SendState, op: str, tag: int, init: int, ri: int,
                  total: int, **kw) -> SesInfo:
        return SesInfo(op=op, msg_id=state.msg_id, total_size=total, ri=ri,
                       initiator_id=init, match_bits=tag, irt=state.msg_id,
                       data=state.data, **kw)

    def _submit_msg(self, state: SendState, template: SesInfo, total: int,
                    offset: int = 0, mode: str | None = None, tc: int = 0) -> MsgSend:
        mode = mode or state.mode
        template.start_offset = offset
        header = self.fep.data_header(mode, ses_variant(template.op, template.total_size))
        msg = MsgSend(state.msg_id, state.flow_id, total, self.cfg.mtu_payload,
                      template, header, offset=offset)
        state.msg = msg
        self.fep.send_on_pdc(state.peer, mode, msg, tc=tc)
        return msg

    def _start_rendezvous(self, state: SendState, tag: int, init: int, ri: int):
        # expose the source buffer so the target can read the remainder
        buf = self.register_rma(state.size,
                                bytearray(state.data) if state.data is not None else None)
        state.src_buffer = buf
        eager = min(state.size, self.fep.eager_limit(state.peer))
        state.eager_len = eager
        t = self._template(state, "rndzv_eager", tag, init, ri, total=state.size,
                           memkey=buf.memkey, stage_size=eager)
        # ordered delivery of eager parts keeps in-order wildcard matching sound
        mode = "ROD" if self.cfg.profile == "hpc" else state.mode
        self._submit_msg(state, t, eager, mode=mode)

    def _start_read(self, state: SendState, memkey: int):
        if memkey is None:
            raise ValueError("read needs the remote memkey")
        buf = self.register_rma(state.size, bytearray(state.size))
        state.local_buf = buf

        def done():
            state.tx_done = True
            if state.flow_id is not None:
                self.fep.metrics.flow_tx_complete(state.flow_id, self.sim.now)
                self.fep.metrics.flow_rx_complete(state.flow_id, self.sim.now)

        self._issue_read(state.flow_id, state.peer, memkey, state.size,
                         buf, place_base=0, src_base=0, on_complete=done)

    # ------------------------------------------------------------------
    # single-packet read engine
    # ------------------------------------------------------------------

    def _issue_read(self, flow_id, holder, memkey, total, place_buffer,
                    place_base, src_base, on_complete=None) -> ReadRun:
        rid = self.new_msg_id()
        run = ReadRun(rid, flow_id, holder, memkey, total, self.cfg.mtu_payload,
                      place_buffer, place_base, src_base, on_complete=on_complete)
        self.reads[rid] = run
        self._read_issue_more(run)
        return run

    def _read_issue_more(self, run: ReadRun):
        """Keep at most a window's worth of single-packet reads outstanding."""
        ccc = self.fep.ccc_for(run.holder)
        window = ccc.window if (ccc.cfg.nscc or ccc.cfg.fixed_window) else ccc.cfg.bdp_bytes
        cap = max(1, window // ccc.cfg.mtu_wire)
        while run.outstanding < cap and run.next_offset < run.total:
            length = min(run.mtu, run.total - run.next_offset)
            info = SesInfo(op="read_req", msg_id=run.read_id,
                           offset=run.src_base + run.next_offset, length=length,
                           total_size=run.total, memkey=run.memkey,
                           initiator_id=self.fep.id,
                           place_offset=run.place_base + run.next_offset)
            hdr = self.fep.data_header("RUD", ses_variant("read_req", run.total))
            msg = MsgSend(run.read_id, run.flow_id, 0, run.mtu, info, hdr)
            self.fep.send_on_pdc(run.holder, "RUD", msg, tc=1)
            run.next_offset += length
            run.outstanding += 1

    # ------------------------------------------------------------------
    # receive-side dispatch
    # ------------------------------------------------------------------

    def on_data(self, pkt):
        info: SesInfo = pkt.ses
        op = info.op
        if op in ("send", "rndzv_eager", "notify"):
            self._on_matchable(pkt, info)
        elif op == "write":
            self._on_write(pkt, info)
        elif op == "read_req":
            self._on_read_req(pkt, info)
        elif op == "read_resp":
            self._on_read_resp(pkt, info)
        elif op == "defer_resp":
            self._on_defer_resp(info)
        elif op == "resume_req":
            self._on_resume_req(info)
        elif op == "not_matched":
            self.fep.count("rndzv_not_matched")
        elif op == "rndzv_done":
            self._on_rndzv_done(info)
        elif op == "buffer_info":
            self._on_buffer_info(pkt, info)
        elif op == "rma_err":
            self.fep.count("rma_remote_error")
        elif op == "addr_err":
            self.fep.count("addr_remote_error")
        else:
            self.fep.count("ses_unknown_op")

    # -- matchable message streams ------------------------------------------------

    def _on_matchable(self, pkt, info: SesInfo):
        key = (pkt.src, info.msg_id)
        state = self.recvs.get(key)
        if state is None:
            rec = self._find_unexpected(info.ri, pkt.src, info.msg_id)
            if rec is not None:
                self._absorb_unexpected(rec, info)
                return
            state = self._match_first_packet(pkt, info)
            if state is None:
                return  # filed as unexpected
        if info.op == "notify":
            state.executions += 1
            return
        self._place(state, pkt.src, info)
        if info.op == "rndzv_eager":
            self._maybe_read_remainder(state)

    def _match_first_packet(self, pkt, info: SesInfo) -> RecvState | None:
        if not self.fep.resolve(info):
            # per-transaction failure: nack this message, poison nothing
            self._reply(pkt.src, "addr_err", msg_id=info.msg_id)
            return None
        m = self.matcher(info.ri)
        entry = m.take(info.initiator_id, info.match_bits)
        if entry is None:
            self._file_unexpected(pkt, info, m)
            return None
        state = RecvState(total=info.total_size, buffer=entry.buffer,
                          flow_id=entry.flow_id, stage=info.stage_size,
                          memkey=info.memkey, src=pkt.src, msg_id=info.msg_id,
                          is_rndzv=info.op == "rndzv_eager")
        self.recvs[(pkt.src, info.msg_id)] = state
        if info.op == "notify":
            self._reply_buffer_info(pkt.src, info, entry)
        elif info.op == "rndzv_eager":
            # the source address arrives with the first packet, so the read
            # of the remainder overlaps the incoming eager data
            self._maybe_read_remainder(state)
        return state

    def _find_unexpected(self, ri: int, src: int, msg_id: int) -> UnexpectedRecord | None:
        for rec in self.matcher(ri).unexpected:
            if rec.src == src and rec.msg_id == msg_id:
                return rec
        return None

    def _file_unexpected(self, pkt, info: SesInfo, m: Matcher):
        self.fep.count("unexpected")
        self.fep.metrics.count_unexpected(self.fep.id)
        rec = UnexpectedRecord(
            src=pkt.src, msg_id=info.msg_id, op=info.op, ri=info.ri,
            initiator_id=info.initiator_id, match_bits=info.match_bits,
            total=info.total_size, stage=info.stage_size, irt=info.irt,
            memkey=info.memkey, arrived_at=self.sim.now)
        m.unexpected.append(rec)
        self._absorb_unexpected(rec, info)

    def _absorb_unexpected(self, rec: UnexpectedRecord, info: SesInfo):
        """Buffer what the policy allows; payload beyond that is discarded and
        must be resent after the resume."""
        if self.cfg.unexpected_policy == "partial" and info.length:
            room = self.cfg.unexpected_budget - self.unexpected_budget_used
            take = min(room, info.length)
            if take > 0 and info.offset == rec.buffered:
                rec.chunks.append((info.offset, take,
                                   info.data[:take] if info.data is not None else None))
                rec.buffered += take
                self.unexpected_budget_used += take
        if info.op == "send" and not rec.deferred_sent:
            rec.deferred_sent = True
            self._reply(rec.src, "defer_resp", msg_id=rec.msg_id, irt=rec.irt,
                        trt=rec.msg_id, buffered=rec.buffered)
        elif info.op == "rndzv_eager" and not rec.deferred_sent:
            rec.deferred_sent = True
            self._reply(rec.src, "not_matched", msg_id=rec.msg_id, irt=rec.irt)

    def _resume_unexpected(self, rec: UnexpectedRecord, entry: ReceiveEntry):
        """A freshly posted receive matched a deferred/buffered message."""
        state = RecvState(total=rec.total, buffer=entry.buffer,
                          flow_id=entry.flow_id, memkey=rec.memkey,
                          src=rec.src, msg_id=rec.msg_id)
        self.recvs[(rec.src, rec.msg_id)] = state
        for offset, length, content in rec.chunks:
            if state.buffer is not None:
                state.buffer.place(offset, length, content)
            state.seen_offsets.add(offset)
            state.placed += length
            self._credit_flow(state, length)
        self.unexpected_budget_used -= rec.buffered
        if rec.op == "send":
            self._reply(rec.src, "resume_req", msg_id=rec.msg_id, irt=rec.irt,
                        buffered=rec.buffered)
        elif rec.op == "rndzv_eager":
            # only the buffered prefix survived; read everything else back
            state.is_rndzv = True
            state.stage = rec.buffered
            self._maybe_read_remainder(state)
        elif rec.op == "notify":
            info = SesInfo(op="notify", msg_id=rec.msg_id, total_size=rec.total)
            self._reply_buffer_info(rec.src, info, entry)
        self._check_complete(state)

    # -- placement and completion ---------------------------------------------------

    def _place(self, state: RecvState, src: int, info: SesInfo):
        state.executions += 1
        if state.buffer is not None:
            state.buffer.place(info.offset, info.length, info.data)
        if info.offset in state.seen_offsets:
            self.fep.count("ses_duplicate_data")
            return
        state.seen_offsets.add(info.offset)
        state.placed += info.length
        self._credit_flow(state, info.length)
        self._check_complete(state)

    def _credit_flow(self, state: RecvState, nbytes: int):
        if state.flow_id is not None and nbytes:
            self.fep.metrics.flow_delivered(state.flow_id, nbytes, self.sim.now)

    def _check_complete(self, state: RecvState):
        if state.completed:
            return
        if state.is_rndzv:
            stream_goal = min(state.stage, state.total)
            read_needed = state.total > state.stage
            done = state.placed >= stream_goal and (state.read_done or not read_needed)
        else:
            done = state.placed >= state.total
        if not done:
            return
        state.completed = True
        if state.flow_id is not None:
            self.fep.metrics.flow_rx_complete(state.flow_id, self.sim.now)
        if state.is_rndzv:
            self._reply(state.src, "rndzv_done", msg_id=state.msg_id)

    def _maybe_read_remainder(self, state: RecvState):
        """Fetch everything beyond the eager stage from the source buffer."""
        if state.reading or state.read_done or state.completed:
            return
        remainder = state.total - state.stage
        if remainder <= 0:
            self._check_complete(state)
            return
        state.reading = True

        def done():
            state.reading = False
            state.read_done = True
            self._check_complete(state)

        self._issue_read(state.flow_id, state.src, state.memkey, remainder,
                         state.buffer, place_base=state.stage,
                         src_base=state.stage, on_complete=done)

    # -- RMA ---------------------------------------------------------------------------

    def _on_write(self, pkt, info: SesInfo):
        buf = self.rma.get(info.memkey)
        if buf is None:
            self.fep.count("rma_bad_memkey")
            self._reply(pkt.src, "rma_err", msg_id=info.msg_id)
            return
        if not buf.place(info.place_offset, info.length, info.data):
            self.fep.count("rma_out_of_bounds")
            self._reply(pkt.src, "rma_err", msg_id=info.msg_id)
            return
        key = (pkt.src, info.msg_id)
        state = self.recvs.get(key)
        if state is None:
            state = RecvState(total=info.total_size, buffer=None,
                              flow_id=buf.flow_id)
            self.recvs[key] = state
        state.executions += 1
        if info.offset not in state.seen_offsets:
            state.seen_offsets.add(info.offset)
            state.placed += info.length
            self._credit_flow(state, info.length)
            self._check_complete(state)

    def _on_read_req(self, pkt, info: SesInfo):
        """Serve one single-packet read; nothing is remembered afterwards."""
        buf = self.rma.get(info.memkey)
        if buf is None:
            self.fep.count("rma_bad_memkey")
            self._reply(pkt.src, "rma_err", msg_id=info.msg_id)
            return
        if info.offset < 0 or info.offset + info.length > buf.size:
            self.fep.count("rma_out_of_bounds")
            self._reply(pkt.src, "rma_err", msg_id=info.msg_id)
            return
        data = buf.read(info.offset, info.length)
        t = SesInfo(op="read_resp", msg_id=info.msg_id, length=info.length,
                    total_size=info.length, place_offset=info.place_offset,
                    data=data)
        hdr = self.fep.data_header("RUD", ses_variant("read_resp", info.length))
        msg = MsgSend(info.msg_id, None, info.length, self.cfg.mtu_payload, t, hdr)
        self.fep.send_on_pdc(pkt.src, "RUD", msg)

    def _on_read_resp(self, pkt, info: SesInfo):
        run = self.reads.get(info.msg_id)
        if run is None:
            self.fep.count("read_resp_orphan")
            return
        if run.place_buffer is not None:
            run.place_buffer.place(info.place_offset, info.length, info.data)
        run.outstanding -= 1
        run.placed += info.length
        if run.flow_id is not None:
            self.fep.metrics.flow_delivered(run.flow_id, info.length, self.sim.now)
        if run.placed >= run.total:
            del self.reads[info.msg_id]
            if run.on_complete is not None:
                run.on_complete()
        else:
            self._read_issue_more(run)

    # -- protocol control messages ---------------------------------------------------

    def _on_defer_resp(self, info: SesInfo):
        state = self.sends.get(info.irt)
        if state is None:
            self.fep.count("defer_unknown_irt")
            return
        state.deferred = True
        state.trt = info.trt
        if state.msg is not None:
            state.msg.halted = True  # the sender stops within one packet
        self.deferred_by_irt[info.irt] = state
        self.fep.metrics.count_defer(self.fep.id)

    def _on_resume_req(self, info: SesInfo):
        state = self.deferred_by_irt.pop(info.irt, None)
        if state is None:
            self.fep.count("resume_unknown_irt")
            return
        state.deferred = False
        t = SesInfo(op="send", msg_id=state.msg_id, total_size=state.size,
                    initiator_id=self.fep.id, irt=state.msg_id, data=state.data)
        self._submit_msg(state, t, state.size, offset=info.buffered)
        self.fep.metrics.count_resume(self.fep.id)

    def _on_rndzv_done(self, info: SesInfo):
        state = self.sends.get(info.msg_id)
        if state is not None and not state.tx_done:
            state.tx_done = True
            if state.flow_id is not None:
                self.fep.metrics.flow_tx_complete(state.flow_id, self.sim.now)

    def _reply_buffer_info(self, src: int, info: SesInfo, entry: ReceiveEntry):
        self.rma.setdefault(entry.buffer.memkey, entry.buffer)
        out = SesInfo(op="buffer_info", msg_id=info.msg_id,
                      memkey=entry.buffer.memkey, total_size=info.total_size)
        self._send_ctl_msg(src, out)

    def _on_buffer_info(self, pkt, info: SesInfo):
        state = self.sends.get(info.msg_id)
        if state is None:
            self.fep.count("buffer_info_orphan")
            return
        # the write is driven from software: a host thread takes a moment
        self.sim.after(self.cfg.sw_init_delay_ns, self._start_notified_write,
                       state, pkt.src, info.memkey)

    def _start_notified_write(self, state: SendState, dst: int, memkey: int):
        t = SesInfo(op="write", msg_id=state.msg_id, total_size=state.size,
                    memkey=memkey, initiator_id=self.fep.id, data=state.data)
        self._submit_msg(state, t, state.size)

    # -- helpers ------------------------------------------------------------------------

    def _reply(self, dst: int, op: str, msg_id: int = 0, irt: int | None = None,
               trt: int | None = None, buffered: int = 0):
        out = SesInfo(op=op, msg_id=msg_id, irt=irt, trt=trt, buffered=buffered)
        self._send_ctl_msg(dst, out)

    def _send_ctl_msg(self, dst: int, info: SesInfo):
        hdr = self.fep.data_header("RUD", ses_variant(info.op, 0))
        msg = MsgSend(info.msg_id, None, 0, self.cfg.mtu_payload, info, hdr)
        self.fep.send_on_pdc(dst, "RUD", msg)

    # -- sender-side completion hooks ----------------------------------------------------

    def on_msg_sent(self, msg: MsgSend):
        pass  # completion is acknowledgment-driven

    def on_packet_acked(self, rec):
        msg = rec.plan[0]
        length = rec.plan[2]
        state = self.sends.get(msg.msg_id)
        if state is None or state.tx_done:
            return
        state.acked_payload += length
        if state.protocol in ("send", "deferrable", "eager", "write",
                              "receiver_initiated") and not state.deferred:
            if state.acked_payload >= state.size and (
                    state.msg is None or state.msg.done_sending()):
                state.tx_done = True
                if state.flow_id is not None:
                    self.fep.metrics.flow_tx_complete(state.flow_id, self.sim.now)
