"""Deterministic discrete-event simulator of the Ultra Ethernet Transport stack."""

from .engine import Simulator
from .ses import completion_time_oracle
from .topology import build_clos
from .wire import HeaderStack, header_bytes

__all__ = ["Simulator", "build_clos", "HeaderStack", "header_bytes",
           "completion_time_oracle"]
__version__ = "0.1.0"
