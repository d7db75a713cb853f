import pytest

from uetsim.cms import CmsConfig
from uetsim.engine import Simulator
from uetsim.network import Network
from uetsim.pds import PdsConfig
from uetsim.ses import SesConfig
from uetsim.topology import build_single_leaf


def make_pair(seed=1, *, rate_gbps=100, delay_ns=500, endpoints=2,
              window_pkts=16, pds=None, ses=None, cms=None, switch=None):
    """Two (or more) endpoints on one leaf with sane desk-scale defaults."""
    sim = Simulator(seed=seed)
    topo = build_single_leaf(endpoints, hash_seed=seed)
    for tl in topo.links.values():
        tl.rate_bps = rate_gbps * 10**9
        tl.delay_ns = delay_ns
    wire = 4198
    cms = cms or CmsConfig(fixed_window=window_pkts * wire,
                           bdp_bytes=window_pkts * wire,
                           base_rtt_ns=4000, mtu_wire=wire)
    net = Network(sim, topo, cms_cfg=cms, pds_cfg=pds or PdsConfig(),
                  ses_cfg=ses or SesConfig(), switch_cfg=switch or {})
    return sim, net


@pytest.fixture
def pair():
    return make_pair()
