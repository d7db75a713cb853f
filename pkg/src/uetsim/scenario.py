"""Scenario configuration: versioned JSON schema with strict validation.

Unknown keys are rejected (with a close-match suggestion), defaults are
filled in, and the fully resolved configuration is echoed into the report
header so any run is reproducible from its own output plus the seed.
"""

from __future__ import annotations

import difflib
import json


class ConfigError(Exception):
    pass


def _field(ftype, default, check=None, choices=None):
    return {"type": ftype, "default": default, "check": check, "choices": choices}


_POS = lambda v: v > 0
_NONNEG = lambda v: v >= 0
_FRAC = lambda v: 0.0 <= v <= 1.0

TOPOLOGY_SCHEMAS = {
    "clos": {
        "type": _field(str, "clos"),
        "radix": _field(int, 8, lambda v: v >= 4 and v % 2 == 0),
        "levels": _field(int, 3, lambda v: v >= 2),
        "oversubscription": _field(str, "1:1"),
        "groups": _field((int, type(None)), None),
        "hash_seed": _field(int, 0),
    },
    "single_leaf": {
        "type": _field(str, "single_leaf"),
        "endpoints": _field(int, 2, lambda v: v >= 2),
        "hash_seed": _field(int, 0),
    },
    "two_leaf": {
        "type": _field(str, "two_leaf"),
        "left": _field(int, 1, _POS),
        "right": _field(int, 1, _POS),
        "spines": _field(int, 1, _POS),
        "hash_seed": _field(int, 0),
    },
}

LINK_FIELDS = {
    "rate_gbps": _field((int, float), 100, _POS),
    "delay_ns": _field(int, 500, _NONNEG),
    "ber": _field((int, float), 0.0, lambda v: 0.0 <= v <= 1.0),
    "jitter_ns": _field(int, 0, _NONNEG),
}

SCHEMA = {
    "version": _field(int, 1, lambda v: v == 1),
    "seed": _field(int, 1),
    "t_end_us": _field((int, float), 1000, _POS),
    "sample_interval_us": _field((int, float), 10, _POS),
    "topology": None,  # nested, dispatched on "type"
    "link": LINK_FIELDS,
    "link_overrides": None,  # free-form map link-name -> LINK_FIELDS subset
    "features": {
        "trimming": _field(bool, False),
        "nscc": _field(bool, False),
        "rccc": _field(bool, False),
        "cbfc": _field(bool, False),
        "llr": _field(bool, False),
        "secure_psn": _field(str, "off", choices=("off", "one_rtt", "zero_rtt")),
    },
    "switch": {
        "queue_kib": _field((int, float), 256, _POS),
        "ecn_kmin_frac": _field((int, float), 0.2, _FRAC),
        "ecn_kmax_frac": _field((int, float), 0.8, _FRAC),
        "ecn_pmax": _field((int, float), 1.0, _FRAC),
        "trim_size": _field(int, 64, _POS),
        "transit_ns": _field(int, 0, _NONNEG),
    },
    "cms": {
        "fixed_window_kib": _field((int, float, type(None)), None),
        "base_rtt_us": _field((int, float, type(None)), None),
        "bdp_kib": _field((int, float, type(None)), None),
        "min_rto_us": _field((int, float), 50, _POS),
        "high_rtt_factor": _field((int, float), 1.15, lambda v: v >= 1.0),
        "md_gain": _field((int, float), 0.8, _FRAC),
        "md_cap": _field((int, float), 0.5, _FRAC),
        "f_fast": _field((int, float), 0.8, _NONNEG),
        "f_gentle": _field((int, float), 0.1, _NONNEG),
        "lb": _field(str, "oblivious", choices=("oblivious", "reps", "bitmap")),
        "bitmap_evs": _field(int, 16, _POS),
        "ooo_enabled": _field(bool, False),
        "ooo_k": _field(int, 64, _POS),
        "ev_slots": _field(int, 0, _NONNEG),
        "credit_quantum": _field((int, type(None)), None),
    },
    "pds": {
        "mtu_payload": _field(int, 4096, _POS),
        "coalesce_n": _field(int, 1, _POS),
        "rx_window_pkts": _field((int, type(None)), None),
        "tx_buf_pkts": _field((int, type(None)), None),
    },
    "ses": {
        "profile": _field(str, "ai_full", choices=("untagged", "ai_full", "hpc")),
        "unexpected_policy": _field(str, "headers", choices=("headers", "partial")),
        "unexpected_budget_kib": _field((int, float), 64, _POS),
        "sw_init_delay_us": _field((int, float), 2, _NONNEG),
    },
    "fep": {
        "service_time_ns": _field(int, 0, _NONNEG),
        "ttl": _field(int, 16, _POS),
        "ip": _field(str, "ipv4", choices=("ipv4", "ipv6")),
        "encap": _field(str, "udp", choices=("udp", "native")),
        "tss": _field(bool, False),
        "crc": _field(bool, False),
        "rx_drain_gbps": _field((int, float, type(None)), None),
    },
    "flows": None,  # list of FLOW_FIELDS
}

FLOW_FIELDS = {
    "src": _field(int, None, _NONNEG),
    "dst": _field(int, None, _NONNEG),
    "size": _field(int, None, _POS),
    "protocol": _field(str, "send", choices=(
        "send", "deferrable", "eager", "rendezvous", "receiver_initiated",
        "write", "read")),
    "mode": _field(str, "RUD", choices=("RUD", "ROD", "UUD", "RUDI")),
    "t_s_us": _field((int, float), 0, _NONNEG),
    "t_r_us": _field((int, float), 0, _NONNEG),
    "tag": _field(int, 0, _NONNEG),
    "content": _field(bool, False),
}


def _suggest(key, known):
    close = difflib.get_close_matches(key, known, n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def _type_ok(value, ftype) -> bool:
    types = ftype if isinstance(ftype, tuple) else (ftype,)
    if isinstance(value, bool):
        return bool in types
    return isinstance(value, types)


def _validate_block(block, schema, path):
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected an object")
    for key in block:
        if key not in schema:
            raise ConfigError(f"{path}.{key}: unknown key{_suggest(key, schema)}")
    out = {}
    for key, spec in schema.items():
        if key in block:
            value = block[key]
            if not _type_ok(value, spec["type"]):
                tname = getattr(spec["type"], "__name__", str(spec["type"]))
                raise ConfigError(f"{path}.{key}: expected {tname}, got {value!r}")
            if spec["choices"] and value not in spec["choices"]:
                raise ConfigError(
                    f"{path}.{key}: {value!r} not one of {list(spec['choices'])}"
                    f"{_suggest(str(value), [str(c) for c in spec['choices']])}")
            if spec["check"] and value is not None and not spec["check"](value):
                raise ConfigError(f"{path}.{key}: value {value!r} out of range")
            out[key] = value
        else:
            out[key] = spec["default"]
    return out


def validate(raw: dict) -> dict:
    """Validate a raw scenario dict; returns the fully defaulted config."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario root must be an object")
    known = list(SCHEMA)
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown key{_suggest(key, known)}")
    cfg = {}
    topo_raw = raw.get("topology", {"type": "single_leaf"})
    ttype = topo_raw.get("type", "clos") if isinstance(topo_raw, dict) else None
    if ttype not in TOPOLOGY_SCHEMAS:
        raise ConfigError(f"topology.type: {ttype!r} not one of {list(TOPOLOGY_SCHEMAS)}"
                          f"{_suggest(str(ttype), list(TOPOLOGY_SCHEMAS))}")
    cfg["topology"] = _validate_block(topo_raw, TOPOLOGY_SCHEMAS[ttype], "topology")

    for key, spec in SCHEMA.items():
        if key in ("topology", "flows", "link_overrides"):
            continue
        if spec is not None and "type" in spec:  # scalar field
            cfg[key] = _validate_block({key: raw[key]} if key in raw else {},
                                       {key: spec}, "")[key]
        else:
            cfg[key] = _validate_block(raw.get(key, {}), spec, key)

    overrides = raw.get("link_overrides", {})
    if not isinstance(overrides, dict):
        raise ConfigError("link_overrides: expected an object")
    cfg["link_overrides"] = {
        name: _validate_block_partial(ov, LINK_FIELDS, f"link_overrides.{name}")
        for name, ov in overrides.items()
    }

    flows = raw.get("flows", [])
    if not isinstance(flows, list):
        raise ConfigError("flows: expected a list")
    cfg["flows"] = []
    for i, flow in enumerate(flows):
        fl = _validate_block(flow, FLOW_FIELDS, f"flows[{i}]")
        for req in ("src", "dst", "size"):
            if fl[req] is None:
                raise ConfigError(f"flows[{i}].{req}: required")
        cfg["flows"].append(fl)
    return cfg


def _validate_block_partial(block, schema, path):
    """Like _validate_block but only keys present are kept (no defaults)."""
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected an object")
    full = _validate_block(block, schema, path)
    return {k: full[k] for k in block}


def load_scenario(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from err
    return validate(raw)


def loads_scenario(text: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from err
    return validate(raw)
