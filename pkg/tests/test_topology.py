import random

import pytest

from uetsim.topology import build_clos, build_single_leaf, build_two_leaf, ecmp_select


@pytest.fixture(scope="module")
def clos83():
    return build_clos(8, 3)


def test_radix8_three_levels_gives_64_endpoints_in_4_groups(clos83):
    assert clos83.meta["endpoints"] == 64
    assert len(clos83.groups) == 4
    assert all(len(g) == 16 for g in clos83.groups)


def test_radix4_two_levels_gives_8_endpoints():
    topo = build_clos(4, 2)
    # closed form radix*(radix/2)^(levels-1) verified by construction
    assert topo.meta["endpoints"] == 8
    assert len(topo.endpoint_leaf) == 8


def test_oversubscribed_leaf_split_flagged_approximate():
    topo = build_clos(8, 3, "2:1")
    assert topo.meta["achieved_split"] == "5:3"
    assert topo.meta["oversubscription_exact"] is False
    exact = build_clos(8, 3, "1:1")
    assert exact.meta["oversubscription_exact"] is True


def test_infeasible_parameters_rejected():
    with pytest.raises(ValueError):
        build_clos(7, 3)
    with pytest.raises(ValueError):
        build_clos(8, 1)
    with pytest.raises(ValueError):
        build_clos(8, 3, "0:1")


def test_ecmp_select_is_deterministic_and_degenerate_group_trivial():
    group = [3, 5, 7, 9]
    pick = ecmp_select(group, salt=11, src=1, dst=2, ev=777)
    assert pick == ecmp_select(group, salt=11, src=1, dst=2, ev=777)
    assert ecmp_select([42], salt=0, src=1, dst=2, ev=999) == 42
    with pytest.raises(ValueError):
        ecmp_select([], 0, 1, 2, 3)


def test_ecmp_select_uniform_over_four_ports():
    group = [0, 1, 2, 3]
    rng = random.Random(99)
    counts = [0, 0, 0, 0]
    n = 1_000_000
    for _ in range(n):
        counts[ecmp_select(group, salt=5, src=1, dst=2, ev=rng.randrange(1 << 16))] += 1
    for c in counts:
        assert abs(c / n - 0.25) <= 0.005


def test_path_is_stable_for_fixed_ev(clos83):
    for ev in (0, 1, 1000, 65535):
        assert clos83.path_for(0, 20, ev) == clos83.path_for(0, 20, ev)


def test_intra_group_paths_have_three_switch_hops(clos83):
    # endpoints 0 and 5 share a group but not a leaf
    p = clos83.path_for(0, 5, ev=123)
    assert clos83.switch_hops(p) == 3


def test_cross_group_paths_have_five_switch_hops(clos83):
    p = clos83.path_for(0, 20, ev=123)
    assert clos83.switch_hops(p) == 5


def test_distinct_path_counts(clos83):
    assert clos83.count_distinct_paths(0, 5) == 4  # same group
    assert clos83.count_distinct_paths(0, 20) == 16  # cross group
    assert clos83.count_distinct_paths(0, 1) == 1  # same leaf
    assert clos83.count_distinct_paths(0, 0) == 0  # degenerate


def test_intra_group_ev_enumeration_covers_exactly_four_paths(clos83):
    paths = {tuple(clos83.path_for(0, 5, ev)) for ev in range(4096)}
    assert len(paths) == 4


def test_paths_ascend_then_descend(clos83):
    # up/down validity: level sequence rises to one peak then strictly falls
    rng = random.Random(5)
    eps = clos83.all_endpoints()
    for _ in range(200):
        src, dst = rng.sample(eps, 2)
        path = clos83.path_for(src, dst, rng.randrange(1 << 16))
        levels = []
        for name in path[1:-1] or []:
            tl = clos83.links[name]
            levels.append(tl.level)
        if levels:
            peak = levels.index(max(levels))
            assert levels[:peak + 1] == sorted(levels[:peak + 1])
            assert levels[peak:] == sorted(levels[peak:], reverse=True)


def test_unreachable_destination_reports_none():
    topo = build_single_leaf(2)
    assert topo.path_for(0, 99, ev=1) is None
    with pytest.raises(ValueError):
        topo.path_for(0, 0, ev=1)


def test_two_leaf_builder_shapes():
    topo = build_two_leaf(3, 2, spines=4)
    assert topo.meta["endpoints"] == 5
    assert topo.count_distinct_paths(0, 3) == 4
    assert topo.count_distinct_paths(0, 1) == 1
