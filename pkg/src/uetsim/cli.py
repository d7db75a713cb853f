"""Command line interface.

Exit codes: 0 all checks passed, 1 threshold failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import os
import sys

from .harness import CANNED_NAMES, run_canned, run_scenario
from .scenario import ConfigError, load_scenario, validate
from .wire import enumerate_header_sizes


def _dump_header_sizes(out_path: str | None):
    rows = [("ip", "encap", "pds", "ses", "tss", "crc", "header_bytes")]
    for stack, size in enumerate_header_sizes():
        rows.append((stack.ip, stack.encap, stack.pds, stack.ses,
                     stack.tss or "none", int(stack.crc), size))
    if out_path:
        with open(out_path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        return
    try:
        csv.writer(sys.stdout).writerows(rows)
    except BrokenPipeError:
        pass  # downstream pager closed early


def _print_verdicts(rep):
    for name, ok, detail in rep.verdicts:
        mark = "PASS" if ok else "FAIL"
        line = f"[{mark}] {name}"
        if detail:
            line += f"  ({detail})"
        print(line)


def _sweep_one(args):
    cfg, out_dir = args
    rep = run_scenario(cfg, out_dir)
    return cfg["seed"], rep.passed()


def _set_path(cfg: dict, dotted: str, value):
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"sweep parameter {dotted!r}: no such path")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node:
        raise ConfigError(f"sweep parameter {dotted!r}: no such key {leaf!r}")
    current = node[leaf]
    if isinstance(current, bool):
        node[leaf] = value in ("1", "true", "True")
    elif isinstance(current, int):
        node[leaf] = int(value)
    elif isinstance(current, float) or current is None:
        node[leaf] = float(value)
    else:
        node[leaf] = value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uetsim",
        description="Deterministic discrete-event simulator of the UET stack")
    parser.add_argument("--dump-header-sizes", action="store_true",
                        help="print the header size table as CSV and exit")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="directory for CSV output")
    p_run.add_argument("--t-end-us", type=float, default=None)

    p_canned = sub.add_parser("run-canned", help="run a canned experiment")
    p_canned.add_argument("name", choices=sorted(CANNED_NAMES))
    p_canned.add_argument("--seed", type=int, default=1)
    p_canned.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="run a scenario over a parameter range")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("param", help="dotted config path, e.g. cms.f_fast")
    p_sweep.add_argument("values", help="comma-separated values")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--workers", type=int, default=None)

    p_dump = sub.add_parser("dump-header-sizes",
                            help="write the header size table as CSV")
    p_dump.add_argument("--out", default=None)

    args = parser.parse_args(argv)

    if args.dump_header_sizes:
        _dump_header_sizes(None)
        return 0
    if args.command is None:
        parser.print_help()
        return 2

    try:
        if args.command == "run":
            cfg = load_scenario(args.scenario)
            if args.seed is not None:
                cfg["seed"] = args.seed
            if args.t_end_us is not None:
                cfg["t_end_us"] = args.t_end_us
            rep = run_scenario(cfg, args.out)
            _print_verdicts(rep)
            return 0 if rep.passed() else 1

        if args.command == "run-canned":
            rep = run_canned(args.name, seed=args.seed, out_dir=args.out)
            _print_verdicts(rep)
            return 0 if rep.passed() else 1

        if args.command == "sweep":
            cfg = load_scenario(args.scenario)
            if args.seed is not None:
                cfg["seed"] = args.seed
            jobs = []
            for value in args.values.split(","):
                variant = copy.deepcopy(cfg)
                _set_path(variant, args.param, value)
                variant = validate(variant)
                out_dir = None
                if args.out:
                    out_dir = os.path.join(args.out, f"{args.param}={value}")
                jobs.append((value, variant, out_dir))
            results = []
            # one isolated simulator per value; nothing is shared
            with concurrent.futures.ProcessPoolExecutor(args.workers) as pool:
                futs = {pool.submit(run_scenario, v_cfg, out): value
                        for value, v_cfg, out in jobs}
                for fut, value in futs.items():
                    rep = fut.result()
                    results.append((value, rep.passed()))
            results.sort(key=lambda r: jobs_index(jobs, r[0]))
            all_ok = True
            for value, ok in results:
                print(f"{args.param}={value}: {'PASS' if ok else 'FAIL'}")
                all_ok = all_ok and ok
            return 0 if all_ok else 1

        if args.command == "dump-header-sizes":
            _dump_header_sizes(args.out)
            return 0
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    return 2


def jobs_index(jobs, value):
    for i, (v, _cfg, _out) in enumerate(jobs):
        if v == value:
            return i
    return len(jobs)


if __name__ == "__main__":
    sys.exit(main())
