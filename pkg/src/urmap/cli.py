"""Command-line driver: ``widesa {map|enumerate|check|estimate|sweep}``.

Exit codes: 0 ok, 1 internal error, 2 input/config error, 3 infeasible design.
Set URMAP_LOG=DEBUG|INFO|WARNING for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import report
from .check import SchemaError, check_artifacts
from .demarcation import LocalMemoryError, demarcate, suggest_factors
from .device import load_device
from .graph import GraphPolicy, PlioBudgetError
from .mapper import (GridError, IllegalScheduleError, SearchConfig, enumerate_space_choices,
                     generate_mappings, space_time_transform)
from .oracles import pairwise_order_legal
from .perf import Axis, sweep
from .pipeline import (ConfigError, NoFeasibleMapping, auto_candidate, design_candidate,
                       design_recurrence, load_benchmark, load_design, policy_from, realise)
from .router import PlacementError, RoutingInfeasible, SlotExhausted
from .schedule import interpret, random_inputs, identity_schedule, legality_check

log = logging.getLogger("urmap")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3

INFEASIBLE = (PlioBudgetError, RoutingInfeasible, SlotExhausted, PlacementError, GridError,
              IllegalScheduleError, LocalMemoryError, NoFeasibleMapping)

_PROVENANCE = {"recurrence": "recurrence-core", "schedule": "recurrence-core",
               "demarcation": "demarcation", "mapper": "systolic-mapper",
               "graph": "graph-builder", "router": "plio-router", "perf": "perf-model",
               "device": "perf-model", "pipeline": "emit-cli", "check": "emit-cli"}


def _provenance(exc: BaseException) -> str:
    mod = type(exc).__module__.rsplit(".", 1)[-1]
    return _PROVENANCE.get(mod, "emit-cli")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace("x", ",").split(",") if v.strip())


def _values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


# -- setup ------------------------------------------------------------------------

def _device(args):
    dev = load_device(args.device)
    over = {}
    if getattr(args, "packet_limit", None):
        over["packet_switch_limit"] = args.packet_limit
    if getattr(args, "rc_west", None):
        over["rc_west"] = args.rc_west
    if getattr(args, "rc_east", None):
        over["rc_east"] = args.rc_east
    return replace(dev, **over) if over else dev


def _policy(args, dev, doc=None) -> GraphPolicy:
    pol = policy_from(doc or {}, dev)
    if getattr(args, "packet_limit", None):
        pol = replace(pol, packet_limit=args.packet_limit)
    if getattr(args, "no_broadcast", False):
        pol = replace(pol, broadcast=False)
    return pol


def _recurrence(args):
    if not args.input:
        raise ConfigError("--input or --design is required")
    rec = load_benchmark(args.input)
    if args.dtype:
        rec = rec.with_dtype(args.dtype)
    return rec


def _candidate(args, dev):
    """Candidate and policy from ``--design`` or from an automatic search on ``--input``."""
    if getattr(args, "design", None):
        doc = load_design(args.design)
        rec = design_recurrence(doc)
        if args.dtype:
            rec = rec.with_dtype(args.dtype)
        return design_candidate(doc, dev, rec), _policy(args, dev, doc)
    rec = _recurrence(args)
    pol = _policy(args, dev)
    cfg = SearchConfig(max_candidates=args.max_candidates, offchip=args.offchip)
    return auto_candidate(rec, dev, args.tile, cfg, pol), pol


# -- commands ---------------------------------------------------------------------

def cmd_map(args) -> int:
    dev = _device(args)
    cand, pol = _candidate(args, dev)
    log.info("mapping %s", cand.label())
    design = realise(cand, dev, pol, offchip=args.offchip)
    out = Path(args.out)
    files = design.artifacts()
    if args.report:
        prof = design.profile
        rows = [(i, w, e) for i, (w, e) in enumerate(zip(prof.west, prof.east))]
        files["congestion.csv"] = report.csv_text(["column", "west", "east"], rows)
        files["congestion.png"] = report.congestion_figure(prof.west, prof.east, dev.rc_west,
                                                           dev.rc_east)
    for name, data in files.items():
        report.atomic_write(out / name, data)
    est = design.estimate
    print(f"{cand.label()}  nodes={cand.nodes}  ports={len(design.graph.ports)}  "
          f"{est.tops:.3f} TOPS  {est.bound.value}  peak congestion {design.profile.peak}")
    print(f"wrote {', '.join(sorted(files))} to {out}")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    dev = _device(args)
    rec = _recurrence(args)
    tile = args.tile or suggest_factors(rec, dev)[0]
    nest = demarcate(rec, tile, dev)
    rows = []
    rng = np.random.default_rng(args.seed)
    for choice in enumerate_space_choices(nest):
        sched = space_time_transform(nest, choice, check=False)
        verdict = legality_check(rec, sched)
        row = [",".join(choice), "legal" if verdict else "illegal",
               "" if verdict else verdict.violations[0].reason]
        if args.verify:
            oracle = pairwise_order_legal(rec, sched)
            same = ""
            if verdict:
                ins = random_inputs(rec, rng)
                same = bool(np.array_equal(interpret(rec, sched, ins),
                                           interpret(rec, identity_schedule(rec), ins)))
            row += [oracle == bool(verdict), same]
        rows.append(row)
    headers = ["space", "legality", "reason"] + (["oracle_agrees", "output_equal"] if args.verify else [])
    print(f"tile {tuple(tile)}")
    print(report.format_table(headers, rows))
    if args.max_candidates:
        cfg = SearchConfig(max_candidates=args.max_candidates, offchip=args.offchip)
        ranked = generate_mappings(nest, dev, cfg, _policy(args, dev))
        print()
        print(report.format_table(
            ["rank", "candidate", "nodes", "ports", "TOPS", "bound", "routable"],
            [(k + 1, r.cand.label(), r.cand.nodes, len(r.graph.ports), r.est.tops,
              r.est.bound.value, r.routable) for k, r in enumerate(ranked)]))
    return EXIT_OK


def cmd_check(args) -> int:
    dev = _device(args)
    try:
        graph = json.loads(Path(args.graph).read_text())
        cons = json.loads(Path(args.constraints).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc}") from exc
    verdicts = check_artifacts(graph, cons, dev, args.packet_limit)
    for v in verdicts:
        print(v.line())
    bad = sum(not v.ok for v in verdicts)
    print(f"{len(verdicts) - bad}/{len(verdicts)} invariants hold")
    return EXIT_OK if not bad else EXIT_INFEASIBLE


def cmd_estimate(args) -> int:
    dev = _device(args)
    cand, pol = _candidate(args, dev)
    est = realise(cand, dev, pol, offchip=args.offchip, strict=False).estimate
    if args.json:
        print(json.dumps(est.to_doc(), indent=1))
        return EXIT_OK
    print(cand.label())
    rows = [(k, v, v / dev.aie_freq_hz) for k, v in est.cycles.items()]
    print(report.format_table(["term", "cycles", "seconds"], rows))
    print(f"{est.tops:.4f} TOPS ({est.bound.value}), {est.per_aie / 1e12:.5f} TOPS/AIE, "
          f"peak {est.peak / 1e12:.3f} TOPS on {est.nodes} AIEs")
    return EXIT_OK


def cmd_sweep(args) -> int:
    dev = _device(args)
    cand, pol = _candidate(args, dev)
    design = realise(cand, dev, pol, offchip=args.offchip, strict=False)
    axis = Axis(args.axis)
    values = _values(args.values)
    points = sweep(cand, design.graph, dev, axis, values, offchip=args.offchip)
    headers = [axis.value, "tops", "bound", "tops_per_aie", "error"]
    rows = []
    for p in points:
        e = p.estimate
        rows.append([_num(p.value), None if e is None else round(e.tops, 6),
                     None if e is None else e.bound.value,
                     None if e is None else round(e.per_aie / 1e12, 9), p.error or ""])
    print(report.format_table(headers, rows))
    if args.out:
        out = Path(args.out)
        report.atomic_write(out / f"sweep_{axis.value}.csv", report.csv_text(headers, rows))
        report.atomic_write(out / f"sweep_{axis.value}.png", report.sweep_figure(
            {"aie": "AIE count", "plio": "PLIO ports", "buffer": "PL buffer bytes"}[axis.value],
            [r[0] for r in rows], [r[1] for r in rows], [r[2] or "" for r in rows]))
        print(f"wrote sweep_{axis.value}.csv and sweep_{axis.value}.png to {out}")
    return EXIT_OK


def _num(v: float):
    return int(v) if float(v).is_integer() else v


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="widesa", description="Map uniform recurrences onto an AIE array.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, design=True):
        sp.add_argument("--input", help="recurrence JSON file or packaged benchmark name")
        if design:
            sp.add_argument("--design", help="design JSON file or packaged design name")
        sp.add_argument("--device", help="device JSON (default: packaged vck5000)")
        sp.add_argument("--tile", type=_ints, help="kernel tiling factors, e.g. 32,32,32")
        sp.add_argument("--dtype", help="override the element type")
        sp.add_argument("--max-candidates", type=int, default=None)
        sp.add_argument("--packet-limit", type=int, default=None)
        sp.add_argument("--no-broadcast", action="store_true")
        sp.add_argument("--rc-west", type=int, default=None)
        sp.add_argument("--rc-east", type=int, default=None)
        sp.add_argument("--offchip", action="store_true", help="charge PL-DRAM traffic")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("map", help="map a recurrence and write the four artifacts")
    common(sp)
    sp.add_argument("--out", default="out")
    sp.add_argument("--report", action="store_true", help="also write congestion CSV and PNG")
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("enumerate", help="list space-loop choices and ranked candidates")
    common(sp, design=False)
    sp.add_argument("--verify", action="store_true",
                    help="cross-check legality with the pairwise oracle and the interpreter")
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("check", help="independently validate emitted artifacts")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--constraints", required=True)
    sp.add_argument("--device")
    sp.add_argument("--packet-limit", type=int, default=None)
    sp.add_argument("--rc-west", type=int, default=None)
    sp.add_argument("--rc-east", type=int, default=None)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("estimate", help="roofline estimate of one design")
    common(sp)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("sweep", help="sweep AIE count, PLIO count or PL buffer size")
    common(sp)
    sp.add_argument("--axis", required=True, choices=[a.value for a in Axis])
    sp.add_argument("--values", required=True)
    sp.add_argument("--out", default=None, help="directory for CSV and PNG")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("URMAP_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INFEASIBLE as exc:
        print(f"infeasible [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
