"""End-to-end glue: recurrence + design choices -> candidate, graph, routing, estimate."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .demarcation import demarcate, suggest_factors
from .device import DeviceModel
from .graph import GraphPolicy, MappedGraph, build_graph, kernel_descriptor, reduce_plio
from .mapper import MappingCandidate, SearchConfig, generate_mappings, make_candidate, rank_key
from .perf import PerfEstimate, estimate
from .recurrence import UniformRecurrence, load_recurrence, parse_recurrence
from .router import (CongestionProfile, PhysicalPlacement, PlioAssignment, apply_placement,
                     assign_plio, constraints_doc, place_array)


class ConfigError(ValueError):
    pass


class NoFeasibleMapping(RuntimeError):
    pass


def packaged(kind: str) -> list[str]:
    root = resources.files("urmap.data").joinpath(kind)
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _packaged_doc(kind: str, name: str) -> dict:
    f = resources.files("urmap.data").joinpath(kind, name + ".json")
    if not f.is_file():
        raise FileNotFoundError(f"no packaged {kind[:-1]} named {name!r}")
    return json.loads(f.read_text())


def load_benchmark(ref: str) -> UniformRecurrence:
    """A path to a recurrence file or the name of a packaged benchmark."""
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return load_recurrence(p)
    return parse_recurrence(_packaged_doc("benchmarks", ref))


def load_design(ref: str) -> dict:
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        if not p.is_file():
            raise FileNotFoundError(f"design file not found: {p}")
        return json.loads(p.read_text())
    return _packaged_doc("designs", ref)


def policy_from(doc: dict, device: DeviceModel) -> GraphPolicy:
    kw = dict(doc.get("policy", {}))
    kw.setdefault("packet_limit", device.packet_switch_limit)
    return GraphPolicy(**kw)


def design_recurrence(doc: dict) -> UniformRecurrence:
    rec = load_benchmark(doc["benchmark"])
    if "dtype" in doc:
        rec = rec.with_dtype(doc["dtype"])
    if "extents" in doc:
        rec = rec.with_extents(doc["extents"])
    return rec


def design_candidate(doc: dict, device: DeviceModel, rec: UniformRecurrence | None = None) -> MappingCandidate:
    rec = rec or design_recurrence(doc)
    nest = demarcate(rec, doc["tile"], device)
    threads = doc.get("threads")
    return make_candidate(nest, tuple(doc["space"]), device, doc.get("partition"),
                          doc.get("latency"), tuple(threads) if threads else None,
                          allow_fold=doc.get("allow_fold", True))


@dataclass(frozen=True)
class MappedDesign:
    cand: MappingCandidate
    graph: MappedGraph
    placement: PhysicalPlacement
    assignment: PlioAssignment
    profile: CongestionProfile
    estimate: PerfEstimate
    device: DeviceModel

    def artifacts(self) -> dict[str, str]:
        """File name -> text for the four emitted documents."""
        cons = constraints_doc(self.placement, self.assignment, self.profile, self.device)
        return {
            "graph.json": json.dumps(self.graph.to_doc(), indent=1) + "\n",
            "constraints.json": json.dumps(cons, indent=1) + "\n",
            "kernel.json": json.dumps(kernel_descriptor(self.cand), indent=1) + "\n",
            "perf.json": json.dumps({"candidate": self.cand.label(),
                                     "schedule": self.cand.schedule.describe(),
                                     **self.estimate.to_doc()}, indent=1) + "\n",
        }


def realise(cand: MappingCandidate, device: DeviceModel, policy: GraphPolicy | None = None,
            offchip: bool = False, strict: bool = True) -> MappedDesign:
    policy = policy or GraphPolicy(packet_limit=device.packet_switch_limit)
    raw = build_graph(cand, policy, device)
    placement = place_array(raw, device)
    g = reduce_plio(raw, device, policy, locality=placement.node_map)
    g = apply_placement(g, placement)
    assignment, profile = assign_plio(g, placement, device, strict=strict)
    est = estimate(cand, g, assignment, device, offchip=offchip)
    return MappedDesign(cand, g, placement, assignment, profile, est, device)


def auto_candidate(rec: UniformRecurrence, device: DeviceModel, tile=None,
                   cfg: SearchConfig | None = None, policy: GraphPolicy | None = None,
                   tiles_to_try: int = 3):
    """Best-ranked candidate over the top few tiles (or the given tile)."""
    cfg = cfg or SearchConfig()
    tiles = [tuple(tile)] if tile else suggest_factors(rec, device)[:tiles_to_try]
    if not tiles:
        raise ConfigError("no tiling fits local memory")
    best, rejected = None, []
    for t in tiles:
        nest = demarcate(rec, t, device)
        ranked = generate_mappings(nest, device, cfg, policy, rejected)
        if ranked and (best is None or rank_key(ranked[0]) < rank_key(best)):
            best = ranked[0]
    if best is None:
        detail = rejected[-1][1] if rejected else "no candidate"
        raise NoFeasibleMapping(f"no feasible mapping: {detail}")
    return best[0]
