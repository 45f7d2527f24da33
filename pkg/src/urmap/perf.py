"""Analytical roofline estimate of a mapped design and parameter sweeps.

Every term is expressed in AIE cycles; the largest term sets the run time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .device import DeviceModel
from .graph import NOC, PLIO, SHARED, MappedGraph
from .mapper import MappingCandidate
from .recurrence import UniformRecurrence, index_range
from .schedule import Tag


class Bound(str, enum.Enum):
    COMPUTE = "ComputeBound"
    PLIO = "PlioBound"
    DRAM = "DramBound"
    BUFFER = "BufferBound"
    INTERCONNECT = "InterconnectBound"


class Axis(str, enum.Enum):
    AIE = "aie"
    PLIO = "plio"
    BUFFER = "buffer"


@dataclass(frozen=True)
class PerfEstimate:
    ops: int
    macs: int
    nodes: int
    cycles: dict            # term -> cycles
    bound: Bound
    throughput: float       # ops / s
    peak: float             # compute peak of the used nodes, ops / s
    traffic: dict = field(default_factory=dict)   # bytes per channel class
    pl_block: tuple = ()
    in_ports: int = 0
    out_ports: int = 0

    @property
    def tops(self) -> float:
        return self.throughput / 1e12

    @property
    def per_aie(self) -> float:
        return self.throughput / self.nodes

    def to_doc(self) -> dict:
        return {
            "ops": self.ops, "macs": self.macs, "nodes": self.nodes,
            "cycles": {k: round(v, 3) for k, v in self.cycles.items()},
            "bound": self.bound.value,
            "throughput_ops_s": round(self.throughput, 3),
            "tops": round(self.tops, 6),
            "tops_per_aie": round(self.per_aie / 1e12, 9),
            "peak_tops": round(self.peak / 1e12, 6),
            "traffic_bytes": {k: int(v) for k, v in self.traffic.items()},
            "pl_block": list(self.pl_block),
            "in_ports": self.in_ports, "out_ports": self.out_ports,
        }


def array_block_bytes(rec: UniformRecurrence, array: str, block: dict, device: DeviceModel) -> int:
    accs = rec.accesses(array)
    n = 1
    for k in range(len(accs[0].terms)):
        lo = min(index_range(rec, a, k, block)[0] for a in accs)
        hi = max(index_range(rec, a, k, block)[1] for a in accs)
        n *= hi - lo + 1
    return n * device.element_bytes(rec.array(array).dtype)


def array_block(cand: MappingCandidate) -> dict:
    """Per-dim extent of the data block resident on the array between outer tile steps."""
    sched = cand.schedule
    space = sched.space_positions()
    last = max(space) if space else -1
    block = {}
    for dim, f in zip(cand.rec.dim_names, cand.nest.factors):
        b = f
        for k in sched.loops_of(dim):
            lp = sched.loops[k]
            if not lp.kernel and (k >= last or lp.tag == Tag.SPACE):
                b *= lp.extent
        block[dim] = b
    return block


def block_traffic(rec: UniformRecurrence, block: dict, device: DeviceModel) -> int:
    """Input bytes streamed when the domain is swept block by block, plus the output once."""
    n_blocks = math.prod(d.extent // block[d.name] for d in rec.dims)
    per_block = sum(array_block_bytes(rec, a, block, device) for a in rec.inputs)
    full = {d.name: d.extent for d in rec.dims}
    return n_blocks * per_block + array_block_bytes(rec, rec.output, full, device)


def grow_pl_block(rec: UniformRecurrence, start: dict, device: DeviceModel):
    """Round-robin doubling of the PL buffer block while it divides the domain and fits.

    Returns ``(block, limited)`` where ``limited`` says the buffer stopped growth.
    """
    def fits(b):
        return sum(array_block_bytes(rec, a.name, b, device) for a in rec.arrays) \
            <= device.pl_buffer_bytes

    block = dict(start)
    limited = not fits(block)
    if limited:
        return block, True
    changed = True
    while changed:
        changed = False
        for d in rec.dims:
            nb = block[d.name] * 2
            if d.extent % nb:
                continue
            trial = dict(block, **{d.name: nb})
            if fits(trial):
                block = trial
                changed = True
            else:
                limited = True
    return block, limited


def edge_traffic(cand: MappingCandidate, graph: MappedGraph, device: DeviceModel) -> dict:
    """Bytes carried by each inter-node edge over the whole run."""
    rec = cand.rec
    kblock = dict(zip(rec.dim_names, cand.nest.factors))
    invocations = rec.macs // (cand.nodes * math.prod(cand.nest.factors))
    tile = {a.name: array_block_bytes(rec, a.name, kblock, device) for a in rec.arrays}
    out_bytes = array_block_bytes(rec, rec.output, {d.name: d.extent for d in rec.dims}, device)
    drains = max(1, len([1 for e in graph.edges if e.comm == PLIO and e.dep == "output"]))
    per_pos = out_bytes / max(1, graph.shape[0] * graph.shape[1])
    out = {}
    for e in graph.inter_node_edges():
        if e.dep == "read":
            b = invocations * tile[e.array]
        elif e.dep == "output":
            b = out_bytes / drains
        elif e.direction[2]:
            b = per_pos           # partial sums along the thread axis
        else:
            b = invocations * tile[e.array]
        out[(e.src, e.dst, e.array)] = (b, e.comm)
    return out


def estimate(cand: MappingCandidate, graph: MappedGraph, assignment, device: DeviceModel,
             offchip: bool = False, nodes: int | None = None, in_ports: int | None = None,
             out_ports: int | None = None) -> PerfEstimate:
    """Roofline estimate; ``nodes``/``in_ports``/``out_ports`` override the design for sweeps.

    ``assignment`` is accepted for interface symmetry; placement does not change
    bandwidth terms beyond the edge types already recorded in ``graph``.
    """
    rec = cand.rec
    dtype = rec.dtype
    mpc = device.mpc(dtype)
    f = device.aie_freq_hz
    nodes = nodes or cand.nodes
    macs = rec.macs
    ops = macs * device.ops(dtype)
    cycles = {"compute": macs / (nodes * mpc)}

    block = array_block(cand)
    plio_bytes = block_traffic(rec, block, device)
    out_full = array_block_bytes(rec, rec.output, {d.name: d.extent for d in rec.dims}, device)
    in_bytes = plio_bytes - out_full
    n_in = in_ports if in_ports is not None else len(graph.ports_by_dir("in"))
    n_out = out_ports if out_ports is not None else len(graph.ports_by_dir("out"))
    bpc = device.plio_bytes_per_cycle
    cycles["plio_in"] = in_bytes / (max(n_in, 1) * bpc) if in_bytes else 0.0
    cycles["plio_out"] = out_full / (max(n_out, 1) * bpc)

    traffic = {"plio_in": in_bytes, "plio_out": out_full}
    pl_block, limited = (), False
    if offchip:
        grown, limited = grow_pl_block(rec, block, device)
        pl_block = tuple(grown[d] for d in rec.dim_names)
        dram = block_traffic(rec, grown, device)
        traffic["dram"] = dram
        cycles["dram"] = dram / (device.bytes_per_s("pl_dram") / f)

    worst = 0.0
    shared = noc = 0.0
    for b, comm in edge_traffic(cand, graph, device).values():
        bw = device.shared_buffer_bytes_per_cycle if comm == SHARED else device.noc_stream_bytes_per_cycle
        worst = max(worst, b / bw)
        if comm == SHARED:
            shared += b
        elif comm == NOC:
            noc += b
    cycles["interconnect"] = worst
    traffic["shared_buffer"] = shared
    traffic["noc"] = noc

    term = max(cycles, key=lambda k: (cycles[k], k == "compute"))
    bound = {"compute": Bound.COMPUTE, "plio_in": Bound.PLIO, "plio_out": Bound.PLIO,
             "interconnect": Bound.INTERCONNECT}.get(term)
    if term == "dram":
        bound = Bound.BUFFER if limited else Bound.DRAM
    if cycles[term] <= cycles["compute"]:
        bound = Bound.COMPUTE
    seconds = max(cycles.values()) / f
    peak = nodes * mpc * device.ops(dtype) * f
    return PerfEstimate(ops, macs, nodes, cycles, bound, ops / seconds, peak, traffic,
                        pl_block, n_in, n_out)


@dataclass(frozen=True)
class SweepPoint:
    value: float
    estimate: PerfEstimate | None
    error: str | None = None


def sweep(cand: MappingCandidate, graph: MappedGraph, device: DeviceModel, axis, values,
          offchip: bool = False) -> list[SweepPoint]:
    """One estimate per value of ``axis`` with every other parameter held fixed."""
    axis = Axis(axis)
    values = list(values)
    if any(v <= 0 for v in values):
        raise ValueError("sweep values must be positive")
    if values != sorted(values):
        raise ValueError("sweep values must be ascending")
    n_in = len(graph.ports_by_dir("in"))
    n_out = len(graph.ports_by_dir("out"))
    points = []
    for v in values:
        try:
            if axis is Axis.AIE:
                est = estimate(cand, graph, None, device, offchip=offchip, nodes=int(v))
            elif axis is Axis.PLIO:
                total = n_in + n_out
                i = max(1, round(v * n_in / total))
                o = max(1, int(v) - i)
                est = estimate(cand, graph, None, device, offchip=offchip, in_ports=i, out_ports=o)
            else:
                est = estimate(cand, graph, None, device.with_overrides(pl_buffer_bytes=int(v)),
                               offchip=True)
            points.append(SweepPoint(v, est))
        except (ValueError, ZeroDivisionError) as exc:
            points.append(SweepPoint(v, None, str(exc)))
    return points
