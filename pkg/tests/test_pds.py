"""Packet delivery sublayer: PDC lifecycle, tracking bitmap, loss detection."""

import random

from conftest import make_pair
from uetsim.cms import CmsConfig
from uetsim.pds import ACK_WAIT, CLOSED, ESTABLISHED, QUIESCE, SYN, PdsConfig
from uetsim.wire import Packet, SesInfo


def send_flow(net, size=40960, src=0, dst=1, **kw):
    return net.start_flow(1, src, dst, size, "send", **kw)


def first_pdc(net, fep=0, peer=1, mode="RUD"):
    return net.feps[fep].pdc_out[(peer, mode)]


# -- dynamic creation ---------------------------------------------------------

def test_syn_packets_flow_before_any_ack():
    sim, net = make_pair()
    sent_syn = []
    orig = net.feps[0].link.submit

    def spy(pkt):
        if pkt.kind == "req":
            sent_syn.append((pkt.syn, pkt.psn, pkt.base_psn))
        orig(pkt)

    net.feps[0].link.submit = spy
    send_flow(net, size=3 * 4096)
    # run only long enough to push the burst out, well under one RTT
    sim.run_until(1200)
    pdc = first_pdc(net)
    assert pdc.state == SYN
    assert len(sent_syn) == 3  # full rate during establishment
    assert all(syn for syn, _psn, _b in sent_syn)
    base = sent_syn[0][2]
    assert [p for _s, p, _b in sent_syn] == [base, base + 1, base + 2]


def test_first_ack_carries_target_id_and_establishes():
    sim, net = make_pair()
    send_flow(net)
    sim.run_until(10_000_000)
    pdc = first_pdc(net)
    assert pdc.state == ESTABLISHED
    target = net.feps[1].pdc_in[(0, pdc.local_id)]
    assert pdc.peer_id == target.local_id
    assert target.state == ESTABLISHED


def test_random_base_psn_differs_between_pdcs():
    _sim, net = make_pair()
    net.feps[0].ses.submit_send(1, 4096, "send")
    net.feps[0].ses.submit_send(1, 4096, "send", mode="ROD")
    rud = net.feps[0].pdc_out[(1, "RUD")]
    rod = net.feps[0].pdc_out[(1, "ROD")]
    assert rud.base_psn != rod.base_psn
    assert 1 <= rud.base_psn < (1 << 31)


def test_all_syn_packets_lost_recovers_by_rto():
    sim, net = make_pair(switch={"queue_bytes": 100})  # nothing fits: all drop
    stat = send_flow(net, size=2 * 4096)
    sim.run_until(30_000)
    assert stat.delivered == 0
    # widen the queue and let the SYN retransmission timer fire
    sw = net.switches[0]
    sw.capacity = 256 * 1024
    sim.run_until(10_000_000)
    assert stat.rx_complete_ns is not None
    assert sim.counters.get("loss_rto", 0) > 0


# -- target-side tracking ------------------------------------------------------

def deliver(fep, psns, base, mode="RUD", payload=4096, src=0, pdc_src=7,
            total=None, msg_id=500, memkey=None):
    """Inject self-describing write packets directly into a target FEP."""
    total = total if total is not None else len(psns) * payload
    if memkey is None:
        buf = fep.ses.rma.get(1234)
        if buf is None:
            fep.ses.register_rma(1 << 20, memkey=1234)
        memkey = 1234
    out = []
    for psn in psns:
        idx = psn - base
        pkt = Packet(kind="req", src=src, dst=fep.id, header=102, payload=payload,
                     mode=mode, ev=psn & 0xFFFF, psn=psn, syn=True, base_psn=base,
                     pdc_src=pdc_src,
                     ses=SesInfo(op="write", msg_id=msg_id, offset=idx * payload,
                                 length=payload, total_size=total, memkey=memkey,
                                 place_offset=idx * payload, initiator_id=src))
        pkt.injection = fep.sim.account_injection()
        fep.receive(pkt, None, None)
        out.append(pkt)
    return out


def target_pdc(fep, src=0, pdc_src=7):
    return fep.pdc_in[(src, pdc_src)]


def test_in_order_arrivals_advance_cack():
    _sim, net = make_pair()
    fep = net.feps[1]
    deliver(fep, [4, 5, 6], base=4)
    pdc = target_pdc(fep)
    assert pdc.rx_base == 7  # cack = 6
    assert pdc.rx_bits == 0


def test_out_of_order_bitmap_matches_brute_force_set_model():
    rng = random.Random(11)
    for _round in range(30):
        n = rng.randrange(2, 12)
        base = rng.randrange(1, 1 << 20)
        psns = [base + i for i in range(n)]
        rng.shuffle(psns)
        _sim, net = make_pair()
        fep = net.feps[1]
        seen = set()
        for psn in psns:
            deliver(fep, [psn], base=base)
            seen.add(psn)
            pdc = target_pdc(fep)
            # oracle: cack is the last psn of the contiguous prefix
            cack = base - 1
            while cack + 1 in seen:
                cack += 1
            assert pdc.rx_base == cack + 1
            for off in range(64):
                expect = (cack + 1 + off) in seen
                assert bool((pdc.rx_bits >> off) & 1) == expect


def test_sack_example_bitmap():
    _sim, net = make_pair()
    fep = net.feps[1]
    deliver(fep, [4, 5, 6, 8], base=4)
    pdc = target_pdc(fep)
    ack = pdc._mk_ack(Packet(kind="req", src=0, dst=1, header=102, ev=1))
    assert ack.cack == 6
    assert ack.sack == 0b10  # bit for psn 8, one above the cack+1 hole


def test_duplicate_rud_dropped_rudi_reexecuted():
    _sim, net = make_pair()
    fep = net.feps[1]
    deliver(fep, [4, 5], base=4)
    deliver(fep, [5], base=4)  # duplicate
    assert fep.sim.counters.get("duplicate_rx") == 1
    state = fep.ses.recvs[(0, 500)]
    assert state.executions == 2  # the duplicate never reached the semantics

    _sim2, net2 = make_pair()
    fep2 = net2.feps[1]
    deliver(fep2, [4, 5], base=4, mode="RUDI", msg_id=501)
    deliver(fep2, [5], base=4, mode="RUDI", msg_id=501)
    state2 = fep2.ses.recvs[(0, 501)]
    assert state2.executions == 3  # idempotent re-execution at the target


def test_out_of_window_arrival_nacks():
    _sim, net = make_pair(pds=PdsConfig(rx_window_pkts=8))
    fep = net.feps[1]
    deliver(fep, [4], base=4)
    nacks = []
    orig = fep.emit_ack

    def spy(pdc, ack, pkt):
        nacks.append(ack)
        orig(pdc, ack, pkt)

    fep.emit_ack = spy
    deliver(fep, [50], base=4)
    assert any(a.nack == "out_of_window" for a in nacks)


def test_rod_target_enforces_order_go_back_n():
    _sim, net = make_pair()
    fep = net.feps[1]
    acks = []
    orig = fep.emit_ack
    fep.emit_ack = lambda pdc, ack, pkt: (acks.append(ack), orig(pdc, ack, pkt))
    deliver(fep, [4], base=4, mode="ROD")
    deliver(fep, [6], base=4, mode="ROD")  # gap: dropped + nack
    pdc = target_pdc(fep)
    assert pdc.rx_base == 5
    assert any(a.nack == "rod_gap" and a.nack_psn == 5 for a in acks)
    assert fep.sim.counters.get("rod_ooo_drop") == 1


def test_trimmed_packet_never_creates_pdc():
    _sim, net = make_pair()
    fep = net.feps[1]
    sent = []
    orig = fep.emit_ctl_packet
    fep.emit_ctl_packet = lambda pkt: (sent.append(pkt), orig(pkt))
    pkt = Packet(kind="req", src=0, dst=1, header=64, payload=0, mode="RUD",
                 ev=9, psn=4, syn=True, base_psn=4, pdc_src=7, trimmed=True)
    pkt.injection = fep.sim.account_injection()
    fep.receive(pkt, None, None)
    assert (0, 7) not in fep.pdc_in
    # but the source is still told to retransmit
    assert sent and sent[0].ack.nack == "no_context"
    assert sent[0].ack.nack_psn == 4


# -- acknowledgment processing at the initiator ----------------------------------

def test_cumulative_ack_frees_retransmit_buffer():
    sim, net = make_pair()
    send_flow(net, size=5 * 4096)
    sim.run_until(10_000_000)
    pdc = first_pdc(net)
    assert not pdc.unacked


def test_service_time_excluded_from_rtt_sample():
    sim, net = make_pair()
    net.feps[1].cfg.service_time_ns = 1000
    samples = []
    ccc = net.feps[0].ccc_for(1)
    orig = ccc.on_ack
    ccc.on_ack = lambda sig: (samples.append(sig.rtt_ns), orig(sig))
    send_flow(net, size=4096)
    sim.run_until(10_000_000)
    wall = net.data_rtt_ns(0, 1, 4198)
    assert samples and abs(samples[0] - wall) <= 10  # the 1us pause is excluded


def test_clean_ack_recycles_ev_to_reps():
    sim, net = make_pair(cms=CmsConfig(fixed_window=16 * 4198, bdp_bytes=16 * 4198,
                                       base_rtt_ns=4000, mtu_wire=4198, lb="reps"))
    send_flow(net, size=4096)
    sim.run_until(10_000_000)
    lb = net.feps[0].ccc_for(1).lb
    assert len(lb.recycled) >= 1


def test_mp_range_caps_outstanding_psns():
    _sim, net = make_pair()
    net.feps[0].link.busy = True  # keep the NIC from pulling packets itself
    pdc = net.feps[0].send_on_pdc(1, "RUD", _msg(net, 100 * 4096))
    pdc.peer_mp_range = 64
    pdc.cack_seen = 100
    pdc.next_psn = 164
    pdc.highest_known_rx = 100
    assert pdc.next_wire_packet() is not None  # max emitted psn is 164
    pdc.next_psn = 165
    assert pdc.next_wire_packet() is None


def _msg(net, total, offset=0):
    from uetsim.pds import MsgSend

    info = SesInfo(op="send", msg_id=900, total_size=total, initiator_id=0)
    return MsgSend(900, None, total, 4096, info, 102, offset=offset)


def test_shrinking_mp_range_stalls_new_sends_until_cack_advances():
    sim, net = make_pair(window_pkts=64)
    stat = send_flow(net, size=80 * 4096)
    sim.run_until(3000)  # a few packets are in flight
    pdc = first_pdc(net)
    target = net.feps[1].pdc_in[(0, pdc.local_id)]
    target.advertised_range = 4  # target shrank the range under pressure
    in_flight_then = set(pdc.unacked)
    emissions = []
    orig = pdc._emit
    pdc._emit = lambda rec, retransmit: (
        emissions.append((rec.psn, pdc.cack_seen, pdc.peer_mp_range)),
        orig(rec, retransmit))[1]
    sim.run_until(30_000_000)
    # packets already in flight beyond the new range were still acked
    assert not (in_flight_then & set(pdc.unacked))
    assert sim.counters.get("retransmits", 0) == 0
    # the sender never outruns the range it has heard, and it does hear 4
    assert all(psn <= cack + rng for psn, cack, rng in emissions)
    heard = [e for e in emissions if e[2] == 4]
    assert heard
    assert all(psn <= cack + 4 for psn, cack, _ in heard)
    assert stat.rx_complete_ns is not None  # acks reopen the range


def test_sender_self_limits_to_its_retransmit_buffer():
    _sim, net = make_pair(pds=PdsConfig(tx_buf_pkts=2, rx_window_pkts=64),
                          window_pkts=64)
    net.feps[0].link.busy = True
    pdc = net.feps[0].send_on_pdc(1, "RUD", _msg(net, 10 * 4096))
    assert pdc.next_wire_packet() is not None
    assert pdc.next_wire_packet() is not None
    assert pdc.next_wire_packet() is None  # buffer full despite open window


# -- fast loss detection ----------------------------------------------------------

def test_ooo_distance_rule():
    _sim, net = make_pair(pds=PdsConfig(ooo_enabled=True, ooo_k=5,
                                        rx_window_pkts=64, tx_buf_pkts=64),
                          window_pkts=64)
    net.feps[0].link.busy = True
    pdc = net.feps[0].send_on_pdc(1, "RUD", _msg(net, 21 * 4096))
    pdc.base_psn = pdc.next_psn = 10
    pdc.cack_seen = pdc.highest_known_rx = 9
    for _ in range(11):  # psns 10..20
        assert pdc.next_wire_packet() is not None
    from uetsim.wire import AckInfo

    # target saw everything but 12: cack 11, sack covers 13..20
    sack = 0
    for psn in range(13, 21):
        sack |= 1 << (psn - 12)
    ack = AckInfo(cack=11, sack=sack, echo_ev=1, echo_ts=1)
    pdc.on_ack(Packet(kind="ack", src=1, dst=0, header=58, pdc_src=3,
                      pdc_dst=pdc.local_id, ack=ack))
    assert list(pdc.rtx) == [12]  # distance 20-12 = 8 > 5
    assert net.feps[0].sim.counters.get("loss_ooo") == 1


def test_ooo_distance_below_threshold_no_action():
    _sim, net = make_pair(pds=PdsConfig(ooo_enabled=True, ooo_k=64,
                                        rx_window_pkts=128, tx_buf_pkts=128),
                          window_pkts=64)
    net.feps[0].link.busy = True
    pdc = net.feps[0].send_on_pdc(1, "RUD", _msg(net, 21 * 4096))
    pdc.base_psn = pdc.next_psn = 10
    pdc.cack_seen = pdc.highest_known_rx = 9
    for _ in range(11):
        pdc.next_wire_packet()
    from uetsim.wire import AckInfo

    ack = AckInfo(cack=11, sack=0b10, echo_ev=1, echo_ts=1)  # 13 arrived
    pdc.on_ack(Packet(kind="ack", src=1, dst=0, header=58, pdc_src=3,
                      pdc_dst=pdc.local_id, ack=ack))
    assert not pdc.rtx


def test_ev_slot_inference():
    _sim, net = make_pair(pds=PdsConfig(ev_slots=4, rx_window_pkts=64,
                                        tx_buf_pkts=64),
                          cms=CmsConfig(fixed_window=64 * 4198, bdp_bytes=64 * 4198,
                                        base_rtt_ns=4000, mtu_wire=4198, ev_slots=4))
    net.feps[0].link.busy = True
    pdc = net.feps[0].send_on_pdc(1, "RUD", _msg(net, 12 * 4096))
    assert len(pdc.slots) == 4
    pdc.base_psn = pdc.next_psn = 0
    pdc.cack_seen = pdc.highest_known_rx = -1
    for _ in range(12):  # psns 0..11; slot 1 carries 1, 5, 9
        pdc.next_wire_packet()
    from uetsim.wire import AckInfo

    # an ack proves psn 9 arrived while 1 and 5 are still unacked
    ack = AckInfo(cack=0, sack=1 << 8, echo_ev=pdc.slots[1], echo_ts=1)
    pdc.on_ack(Packet(kind="ack", src=1, dst=0, header=58, pdc_src=3,
                      pdc_dst=pdc.local_id, ack=ack))
    assert sorted(pdc.rtx) == [1, 5]
    assert net.feps[0].sim.counters.get("loss_ev") == 2


def test_ev_slot_in_order_acks_trigger_nothing():
    _sim, net = make_pair(pds=PdsConfig(ev_slots=4, rx_window_pkts=64,
                                        tx_buf_pkts=64),
                          cms=CmsConfig(fixed_window=64 * 4198, bdp_bytes=64 * 4198,
                                        base_rtt_ns=4000, mtu_wire=4198, ev_slots=4))
    net.feps[0].link.busy = True
    pdc = net.feps[0].send_on_pdc(1, "RUD", _msg(net, 8 * 4096))
    pdc.base_psn = pdc.next_psn = 0
    pdc.cack_seen = pdc.highest_known_rx = -1
    for _ in range(8):
        pdc.next_wire_packet()
    from uetsim.wire import AckInfo

    for psn in range(8):  # acks arrive in per-slot order
        ack = AckInfo(cack=psn, sack=0, echo_ev=pdc.slots[psn % 4], echo_ts=1)
        pdc.on_ack(Packet(kind="ack", src=1, dst=0, header=58, pdc_src=3,
                          pdc_dst=pdc.local_id, ack=ack))
    assert not pdc.rtx


def test_tail_loss_covered_by_probe():
    sim, net = make_pair(pds=PdsConfig(ev_slots=2, rx_window_pkts=64,
                                       tx_buf_pkts=64, probe_timeout_ns=5000),
                         cms=CmsConfig(fixed_window=64 * 4198, bdp_bytes=64 * 4198,
                                       base_rtt_ns=4000, mtu_wire=4198, ev_slots=2))
    stat = send_flow(net, size=6 * 4096)
    # swallow the last data packet on the wire once
    fep0 = net.feps[0]
    orig = fep0.link.submit
    state = {"swallowed": False}

    def submit(pkt):
        if (pkt.kind == "req" and not state["swallowed"]
                and pkt.ses and pkt.ses.offset == 5 * 4096 and not pkt.trimmed):
            state["swallowed"] = True
            sim.account_injection()
            pkt.injection = sim.injected
            sim.account_fate(pkt, "dropped_corruption")
            fep0.link.busy = False
            fep0.wake(fep0.link)
            return
        orig(pkt)

    fep0.link.submit = submit
    sim.run_until(40_000_000)
    assert state["swallowed"]
    assert stat.rx_complete_ns is not None
    assert sim.counters.get("loss_ev", 0) >= 1  # probe confirmed the tail loss


# -- close sequence ---------------------------------------------------------------

def test_close_walks_quiesce_ack_wait_closed():
    sim, net = make_pair()
    stat = send_flow(net, size=10 * 4096)
    sim.run_until(10_000_000)
    pdc = first_pdc(net)
    assert stat.rx_complete_ns is not None
    pdc.request_close()
    sim.run_until(20_000_000)
    assert pdc.state == CLOSED
    assert (1, "RUD") not in net.feps[0].pdc_out
    assert (0, pdc.local_id) not in net.feps[1].pdc_in


def test_close_waits_for_in_flight_messages():
    sim, net = make_pair()
    stat = send_flow(net, size=200 * 4096)
    sim.run_until(20_000)  # mid-transfer
    pdc = first_pdc(net)
    pdc.request_close()
    assert pdc.state in (QUIESCE, ACK_WAIT)
    sim.run_until(80_000_000)
    assert stat.rx_complete_ns is not None  # the transfer finished first
    assert pdc.state == CLOSED


def test_new_message_during_quiesce_gets_a_fresh_pdc():
    sim, net = make_pair()
    send_flow(net, size=100 * 4096)
    sim.run_until(20_000)
    old = first_pdc(net)
    old.request_close()
    net.feps[0].ses.submit_send(1, 4096, "send")
    fresh = first_pdc(net)
    assert fresh is not old
    sim.run_until(80_000_000)
    assert old.state == CLOSED


# -- replay-prevention PSN establishment -------------------------------------------

def test_one_rtt_secure_open_costs_one_extra_rtt():
    def first_byte(secure):
        sim, net = make_pair(pds=PdsConfig(secure_mode=secure))
        stat = send_flow(net, size=4096, t_s=0)
        sim.run_until(10_000_000)
        return stat.first_byte_ns

    plain = first_byte("off")
    secured = first_byte("one_rtt")
    ctl_rtt = 2 * (net_ctl_one_way())
    assert abs((secured - plain) - ctl_rtt) <= 4


def net_ctl_one_way():
    _sim, net = make_pair()
    return net.one_way_ns(0, 1, 58)


def test_zero_rtt_secure_open_adds_nothing_when_synchronized():
    sim, net = make_pair(pds=PdsConfig(secure_mode="zero_rtt"))
    stat = send_flow(net, size=4096)
    sim.run_until(10_000_000)
    _sim2, net2 = make_pair(pds=PdsConfig(secure_mode="off"))
    stat2 = net2.start_flow(1, 0, 1, 4096, "send")
    _sim2.run_until(10_000_000)
    assert stat.first_byte_ns == stat2.first_byte_ns


def test_close_raises_expected_psn_and_stale_reopen_is_nacked():
    sim, net = make_pair(pds=PdsConfig(secure_mode="zero_rtt"))
    stat = send_flow(net, size=4 * 4096)
    sim.run_until(10_000_000)
    pdc = first_pdc(net)
    closing_psn = pdc.next_psn - 1
    pdc.request_close()
    sim.run_until(20_000_000)
    assert pdc.state == CLOSED
    assert net.feps[1].secure_expected[0] == closing_psn + 1
    assert net.feps[0].secure_start[1] == closing_psn + 1

    # replay an old data packet: it must not create a PDC
    fep1 = net.feps[1]
    replay = Packet(kind="req", src=0, dst=1, header=102, payload=4096,
                    mode="RUD", ev=1, psn=2, syn=True, base_psn=2, pdc_src=99,
                    ses=SesInfo(op="send", msg_id=7, total_size=4096))
    replay.injection = sim.account_injection()
    fep1.receive(replay, None, None)
    assert (0, 99) not in fep1.pdc_in
    assert sim.counters.get("secure_psn_nack") == 1

    # a fresh send reopens at the synchronized PSN with zero penalty
    stat2 = net.start_flow(2, 0, 1, 4096, "send", tag=2)
    t0 = sim.now
    sim.run_until(40_000_000)
    assert stat2.rx_complete_ns is not None
    pdc2 = first_pdc(net)
    assert pdc2.base_psn == closing_psn + 1
    assert sim.counters.get("secure_psn_nack") == 1  # no further nacks


def test_stale_start_psn_rebase_then_clean():
    sim, net = make_pair(pds=PdsConfig(secure_mode="zero_rtt"))
    net.feps[1].secure_expected[0] = 5000  # target remembers a closed PDC
    stat = send_flow(net, size=3 * 4096)
    sim.run_until(20_000_000)
    assert stat.rx_complete_ns is not None
    pdc = first_pdc(net)
    assert pdc.base_psn == 5000  # rebased onto the hint
    assert sim.counters.get("secure_psn_nack", 0) >= 1


def test_establishment_scenario_ids_and_psns(monkeypatch):
    # initiator builds PDC 7 sending three packets from PSN 4; the first ack
    # returns the target-assigned id 19 and establishes both sides
    sim, net = make_pair()
    net.feps[0]._next_pdc = 7
    net.feps[1]._next_pdc = 19
    monkeypatch.setattr(net.feps[0].rng, "randrange", lambda *a: 4)
    stat = send_flow(net, size=3 * 4096)
    sim.run_until(1200)
    pdc = first_pdc(net)
    assert pdc.local_id == 7
    assert pdc.base_psn == 4
    assert pdc.state == SYN
    sim.run_until(10_000_000)
    assert pdc.state == ESTABLISHED
    assert pdc.peer_id == 19
    assert stat.rx_complete_ns is not None


def test_close_requested_during_read_lets_the_read_finish():
    sim, net = make_pair(window_pkts=8)
    stat = net.start_flow(1, 0, 1, 60 * 4096, "read", content=True)
    sim.run_until(10_000)  # read requests in flight
    pdc = first_pdc(net)  # carries the read requests
    assert pdc.tx_msgs or pdc.unacked
    pdc.request_close()
    sim.run_until(100_000_000)
    assert stat.rx_complete_ns is not None  # the in-flight read completed
    assert pdc.state == CLOSED
    assert stat.rx_complete_ns <= sim.now


def test_ack_coalescing_one_ack_per_four_packets():
    _sim, net = make_pair(pds=PdsConfig(coalesce_n=4, coalesce_timeout_ns=50_000))
    fep = net.feps[1]
    acks = []
    orig = fep.emit_ack
    fep.emit_ack = lambda pdc, ack, pkt: (acks.append(ack), orig(pdc, ack, pkt))
    deliver(fep, [4, 5, 6], base=4)
    assert len(acks) == 1  # only the establishing ack goes out immediately
    deliver(fep, [7, 8], base=4)
    assert len(acks) == 2  # four receipts coalesced into one cumulative ack
    assert acks[-1].cack == 8


def test_per_packet_ack_policy_default():
    _sim, net = make_pair()
    fep = net.feps[1]
    acks = []
    orig = fep.emit_ack
    fep.emit_ack = lambda pdc, ack, pkt: (acks.append(ack), orig(pdc, ack, pkt))
    deliver(fep, [4, 5, 6], base=4)
    assert len(acks) == 3


def test_uud_is_fire_and_forget():
    sim, net = make_pair()
    stat = net.start_flow(1, 0, 1, 5 * 4096, "write", mode="UUD", content=True)
    sim.run_until(10_000_000)
    assert stat.delivered == 5 * 4096
    assert sim.counters.get("retransmits", 0) == 0
    # no tracking state was built at the target
    assert not net.feps[1].pdc_in


def test_uud_drops_are_final():
    # two datagram senders squeeze into one access link with a tiny queue
    sim, net = make_pair(endpoints=3, switch={"queue_bytes": 9000})
    s1 = net.start_flow(1, 0, 2, 8 * 4096, "write", mode="UUD")
    s2 = net.start_flow(2, 1, 2, 8 * 4096, "write", mode="UUD")
    sim.run_until(10_000_000)
    assert sim.fate_totals()["dropped_congestion"] > 0
    assert s1.delivered + s2.delivered < 16 * 4096  # nobody retransmits
