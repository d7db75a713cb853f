import pytest

from uetsim.wire import (HeaderStack, ack_header_bytes, enumerate_header_sizes,
                         header_bytes, packets_for_message, serialization_ns)

MASKS = {"ipv4": 20, "ipv6": 40}
ENCAPS = {"udp": 8, "native": 4}
PDS = {"RUD": 12, "ROD": 12, "RUD+RCCC": 16, "ROD+RCCC": 16, "RUDI": 8, "UUD": 4}
SES = {"standard": 44, "matching_small": 32, "minimal": 20}
TSS = {None: 0, "base": 12, "explicit_src": 16}


def test_standard_rud_stack_is_102_bytes():
    # Eth 14 + FCS 4 + IPv4 20 + UDP 8 + PDS 12 + SES 44
    assert header_bytes(HeaderStack()) == 102


def test_minimal_uud_native_stack_is_66_bytes():
    stack = HeaderStack(ip="ipv4", encap="native", pds="UUD", ses="minimal")
    assert header_bytes(stack) == 14 + 4 + 20 + 4 + 4 + 20 == 66


def test_security_header_adds_28_over_crc_baseline():
    base = HeaderStack(crc=True)
    secured = HeaderStack(tss="base", crc=False)  # ICV replaces the CRC
    assert header_bytes(secured) - header_bytes(base) == 12 + 16 - 4


def test_rccc_variant_adds_4_bytes():
    assert (header_bytes(HeaderStack(pds="RUD+RCCC"))
            - header_bytes(HeaderStack(pds="RUD"))) == 4


def test_full_enumeration_matches_component_sums():
    rows = enumerate_header_sizes()
    # 2 ip x 2 encap x 6 pds x 3 ses x 3 tss x 2 crc
    assert len(rows) == 2 * 2 * 6 * 3 * 3 * 2
    for stack, size in rows:
        expect = (14 + 4 + MASKS[stack.ip] + ENCAPS[stack.encap]
                  + PDS[stack.pds] + SES[stack.ses] + TSS[stack.tss]
                  + (16 if stack.tss else 0) + (4 if stack.crc else 0))
        assert size == expect, stack


def test_invalid_component_rejected():
    with pytest.raises(ValueError):
        header_bytes(HeaderStack(pds="bogus"))
    with pytest.raises(ValueError):
        header_bytes(HeaderStack(tss="icv_without_tss"))


def test_ack_header_size():
    assert ack_header_bytes() == 14 + 4 + 20 + 8 + 12
    assert ack_header_bytes(rccc=True) == 14 + 4 + 20 + 8 + 16


def test_serialization_delay_examples():
    # 102B header + 4096B payload at 400 Gb/s: 83.96ns rounds up to 84
    assert serialization_ns(102 + 4096, 400_000_000_000) == 84
    # 66B control frame at 400 Gb/s: 1.32ns rounds up to 2
    assert serialization_ns(66, 400_000_000_000) == 2
    # doubling the rate halves the delay (up to the ceiling)
    assert serialization_ns(4198, 200_000_000_000) == 168
    assert serialization_ns(4198, 100_000_000_000) == 336
    with pytest.raises(ValueError):
        serialization_ns(100, 0)


def test_payload_split_full_mtu_except_last():
    import random

    rng = random.Random(1234)
    for _ in range(200):
        mtu = rng.choice([1024, 4096, 9000])
        size = rng.randrange(1, 20 * mtu)
        sizes = packets_for_message(size, mtu)
        assert sum(sizes) == size
        assert len(sizes) == -(-size // mtu)
        assert all(s == mtu for s in sizes[:-1])
        assert 0 < sizes[-1] <= mtu
    assert packets_for_message(0) == [0]
    assert packets_for_message(4096, 4096) == [4096]
    assert packets_for_message(4097, 4096) == [4096, 1]
