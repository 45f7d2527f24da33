"""Systolic schedule construction on the graph-level nest.

Pipeline per candidate: space-time transformation, array partition,
latency hiding and multiple threading, each returning a new schedule.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

from .demarcation import DemarcatedNest, divisors
from .device import DeviceModel
from .recurrence import DepKind, UniformRecurrence
from .schedule import (LegalityVerdict, MappingSchedule, ScheduledLoop, Tag, legality_check,
                       split_component)

log = logging.getLogger(__name__)


class MappingError(ValueError):
    pass


class IllegalScheduleError(MappingError):
    def __init__(self, verdict: LegalityVerdict, sched: MappingSchedule):
        self.verdict = verdict
        super().__init__(f"illegal schedule {sched.describe()}:\n{verdict.report()}")


class GridError(MappingError):
    pass


@dataclass(frozen=True)
class MappingCandidate:
    nest: DemarcatedNest
    schedule: MappingSchedule
    space_dims: tuple[str, ...]
    array_shape: tuple[int, int]
    thread_factor: int = 1
    thread_dim: str | None = None
    latency_factors: tuple[tuple[str, int], ...] = ()
    partition_factors: tuple[tuple[str, int], ...] = ()

    @property
    def rec(self) -> UniformRecurrence:
        return self.nest.rec

    @property
    def nodes(self) -> int:
        return self.array_shape[0] * self.array_shape[1] * self.thread_factor

    @property
    def combine(self) -> str | None:
        return self.schedule.combine

    def label(self) -> str:
        s = f"space={','.join(self.space_dims)} array={self.array_shape[0]}x{self.array_shape[1]}"
        if self.thread_factor > 1:
            s += f" threads={self.thread_dim}x{self.thread_factor}"
        if self.latency_factors:
            s += " latency=" + ",".join(f"{d}:{f}" for d, f in self.latency_factors)
        return s


# -- helpers ----------------------------------------------------------------------

def _graph_kernel(sched: MappingSchedule):
    return [lp for lp in sched.loops if not lp.kernel], [lp for lp in sched.loops if lp.kernel]


def array_shape_of(sched: MappingSchedule) -> tuple[int, int]:
    ext = [sched.loops[k].extent for k in sched.space_positions()]
    if len(ext) == 2:
        return ext[0], ext[1]
    if len(ext) == 1:
        return 1, ext[0]
    return 1, 1


def thread_factor_of(sched: MappingSchedule) -> int:
    return math.prod(lp.extent for lp in sched.loops if lp.tag == Tag.THREAD)


def tile_distance(delta: int, factor: int) -> int:
    """Largest graph-level distance realised by a component ``delta`` under tile ``factor``."""
    if delta == 0:
        return 0
    return (1 if delta > 0 else -1) * -(-abs(delta) // factor)


def fits_grid(shape: tuple[int, int], threads: int, device: DeviceModel) -> bool:
    """Whether a logical array (threads appended along columns) can be placed, folding allowed."""
    rows, cols = shape[0], shape[1] * threads
    if rows * cols > device.aie_count:
        return False
    if rows <= device.rows and cols <= device.cols:
        return True
    if rows <= device.rows:
        return -(-cols // device.cols) * rows <= device.rows
    if cols <= device.cols:
        return -(-rows // device.rows) * cols <= device.cols
    return True  # linear fallback placement


# -- operations -------------------------------------------------------------------

def enumerate_space_choices(nest: DemarcatedNest, deps=None) -> list[tuple[str, ...]]:
    """1- and 2-subsets of graph-level loops whose tile-level distances are all in {-1,0,1}."""
    rec = nest.rec
    deps = rec.dependences if deps is None else deps
    ok = []
    for dim, f in zip(rec.dim_names, nest.factors):
        k = rec.dim_names.index(dim)
        if all(abs(tile_distance(d.distance[k], f)) <= 1 for d in deps):
            ok.append(dim)
    return [c for n in (1, 2) for c in itertools.combinations(ok, n)]


def space_time_transform(nest: DemarcatedNest, choice, check: bool = True) -> MappingSchedule:
    choice = tuple(choice)
    if not 1 <= len(choice) <= 2:
        raise MappingError("only 1D and 2D arrays are generated")
    graph, kernel = _graph_kernel(nest.schedule)
    space = [replace(lp, tag=Tag.SPACE) for lp in graph if lp.dim in choice]
    if len(space) != len(choice):
        raise MappingError(f"unknown space dims {choice}")
    time = [replace(lp, tag=Tag.TIME) for lp in graph if lp.dim not in choice]
    sched = MappingSchedule(tuple(space + time + kernel))
    if check:
        verdict = legality_check(nest.rec, sched)
        if not verdict:
            raise IllegalScheduleError(verdict, sched)
    return sched


def array_partition(sched: MappingSchedule, factors: dict[str, int], device: DeviceModel,
                    allow_fold: bool = False) -> MappingSchedule:
    """Tile the outer band; space point loops stay Space, tile loops become outer Time."""
    graph, kernel = _graph_kernel(sched)
    space_dims = [graph[k].dim for k in range(len(graph)) if graph[k].tag == Tag.SPACE]
    tiles, new_graph = [], []
    for lp in graph:
        f = factors.get(lp.dim, 1)
        target = lp.tag == Tag.SPACE or (lp.dim not in space_dims and lp.tag == Tag.TIME
                                         and lp is _outermost_time(graph, lp.dim))
        if f == 1 or not target:
            new_graph.append(lp)
            continue
        if lp.extent % f:
            raise MappingError(f"non-divisible partition factor {f} for {lp.dim}={lp.extent}")
        tiles.append(ScheduledLoop(lp.dim, lp.extent // f, lp.stride * f, Tag.TIME,
                                   "partition-tile", f, lp.reverse))
        new_graph.append(replace(lp, extent=f, step="partition-point", factor=f))
    for d in factors:
        if d not in {lp.dim for lp in graph}:
            raise MappingError(f"unknown dim {d!r} in partition factors")
    out = sched.with_loops(tiles + new_graph + kernel)
    rows, cols = array_shape_of(out)
    threads = thread_factor_of(out)
    if rows * cols * threads > device.aie_count:
        raise GridError(f"array exceeds grid: {rows}x{cols}x{threads} > {device.aie_count} AIEs")
    if not allow_fold and (rows > device.rows or cols * threads > device.cols):
        raise GridError(f"array exceeds grid: {rows}x{cols} on {device.rows}x{device.cols}")
    if allow_fold and not fits_grid((rows, cols), threads, device):
        raise GridError(f"array exceeds grid even with folding: {rows}x{cols}")
    return out


def _outermost_time(graph, dim):
    for lp in graph:
        if lp.dim == dim and lp.tag == Tag.TIME:
            return lp
    return None


def _carries_flow(rec: UniformRecurrence, dim: str) -> bool:
    k = rec.dim_names.index(dim)
    return any(d.distance[k] != 0 for d in rec.deps(DepKind.FLOW))


def latency_hiding(rec: UniformRecurrence, sched: MappingSchedule,
                   factors: dict[str, int]) -> MappingSchedule:
    """Tile parallel Time loops and sink their point loops to the innermost graph level."""
    graph, kernel = _graph_kernel(sched)
    points = []
    for dim, f in factors.items():
        if dim not in rec.dim_names:
            raise MappingError(f"unknown dim {dim!r}")
        if _carries_flow(rec, dim):
            raise MappingError(f"latency hiding on {dim}: loop carries a flow dependence")
        if f == 1:
            continue
        target = _outermost_time(graph, dim)
        if target is None:
            raise MappingError(f"latency hiding on {dim}: no time loop to tile")
        if target.extent % f:
            raise MappingError(f"non-divisible latency factor {f} for {dim}={target.extent}")
        k = graph.index(target)
        graph[k] = replace(target, extent=target.extent // f, stride=target.stride * f,
                           step="latency-tile", factor=f)
        points.append(ScheduledLoop(dim, f, target.stride, Tag.POINT, "latency-point", f,
                                    target.reverse))
    threads = [lp for lp in graph if lp.tag == Tag.THREAD]
    rest = [lp for lp in graph if lp.tag != Tag.THREAD]
    return sched.with_loops(rest + points + threads + kernel)


def multiple_threading(rec: UniformRecurrence, sched: MappingSchedule, dim: str, factor: int,
                       device: DeviceModel | None = None) -> MappingSchedule:
    """Unroll ``factor`` iterations of a Time loop of ``dim`` across extra AIEs."""
    if factor == 1:
        return sched
    graph, kernel = _graph_kernel(sched)
    cands = [lp for lp in graph if lp.dim == dim and lp.tag == Tag.TIME]
    if not cands:
        raise MappingError(f"no time loop of {dim} to thread")
    target = cands[-1]
    combine = sched.combine
    if _carries_flow(rec, dim):
        if dim not in rec.reduction_dims():
            raise MappingError(f"{dim} carries a flow dependence and is not a reduction")
        combine = "sum"
    if target.extent % factor:
        raise MappingError(f"non-divisible thread factor {factor} for {dim}={target.extent}")
    k = graph.index(target)
    graph[k] = replace(target, extent=target.extent // factor, stride=target.stride * factor,
                       step="thread-tile", factor=factor)
    graph.append(ScheduledLoop(dim, factor, target.stride, Tag.THREAD, "thread-point", factor,
                               target.reverse))
    out = MappingSchedule(tuple(graph + kernel), combine)
    if device is not None:
        rows, cols = array_shape_of(out)
        if rows * cols * thread_factor_of(out) > device.aie_count:
            raise GridError(f"threaded array exceeds {device.aie_count} AIEs")
    return out


def make_candidate(nest: DemarcatedNest, space, device: DeviceModel, partition=None,
                   latency=None, threads=None, allow_fold=True) -> MappingCandidate:
    """Run the whole transformation pipeline for one configuration."""
    rec = nest.rec
    sched = space_time_transform(nest, space)
    partition = {d: f for d, f in (partition or {}).items() if f != 1}
    if partition:
        sched = array_partition(sched, partition, device, allow_fold=True)
    latency = {d: f for d, f in (latency or {}).items() if f != 1}
    if latency:
        sched = latency_hiding(rec, sched, latency)
    tdim, tfac = (threads or (None, 1))
    if tdim is not None and tfac > 1:
        sched = multiple_threading(rec, sched, tdim, tfac, device)
    shape = array_shape_of(sched)
    k2 = thread_factor_of(sched)
    if not allow_fold and (shape[0] > device.rows or shape[1] * k2 > device.cols):
        raise GridError(f"array exceeds grid: {shape[0]}x{shape[1]}x{k2}")
    if not fits_grid(shape, k2, device):
        raise GridError(f"array {shape[0]}x{shape[1]}x{k2} cannot be placed on "
                        f"{device.rows}x{device.cols}")
    verdict = legality_check(rec, sched)
    if not verdict:
        raise IllegalScheduleError(verdict, sched)
    return MappingCandidate(nest, sched, tuple(space), shape, k2, tdim if k2 > 1 else None,
                            tuple(sorted(latency.items())), tuple(sorted(partition.items())))


def latency_postcondition(rec: UniformRecurrence, sched: MappingSchedule) -> bool:
    """No flow dependence has a nonzero component on a graph-level Point loop."""
    points = [k for k, lp in enumerate(sched.loops) if lp.tag == Tag.POINT and not lp.kernel]
    for dep in rec.deps(DepKind.FLOW):
        comp = _nominal(rec, dep, sched)
        if any(comp[k] for k in points):
            return False
    return True


def _nominal(rec, dep, sched):
    comp = [0] * len(sched.loops)
    for dim, value in zip(rec.dim_names, dep.distance):
        idx = sched.loops_of(dim)
        for k, p in zip(idx, split_component(value, [sched.loops[k] for k in idx])):
            comp[k] = p
    return comp


# -- search -----------------------------------------------------------------------

@dataclass
class SearchConfig:
    partition_factors: tuple[int, ...] | None = None   # None: powers of two + device dims
    latency_factors: tuple[int, ...] = (1,)
    thread_factors: tuple[int, ...] | None = None       # None: powers of two + 3, 5
    allow_fold: bool = True
    max_candidates: int | None = None
    budget: int = 5000
    workers: int = 1
    offchip: bool = False


def _factor_options(extent: int, allowed: set[int] | None) -> list[int]:
    opts = [d for d in divisors(extent) if allowed is None or d in allowed or d == extent]
    return opts


def _candidate_configs(nest: DemarcatedNest, device: DeviceModel, cfg: SearchConfig,
                       rejected: list | None):
    rec = nest.rec
    pow2 = {1 << k for k in range(20)}
    part_allowed = set(cfg.partition_factors) if cfg.partition_factors else pow2 | {device.rows, device.cols}
    thr_allowed = set(cfg.thread_factors) if cfg.thread_factors else pow2 | {3, 5}
    gext = dict(zip(rec.dim_names, nest.graph_extents))
    count = 0
    for space in enumerate_space_choices(nest):
        try:
            space_time_transform(nest, space)
        except IllegalScheduleError as exc:
            if rejected is not None:
                rejected.append((space, str(exc).splitlines()[0]))
            continue
        per_dim = [[f for f in _factor_options(gext[d], part_allowed)
                    if f <= device.aie_count and (f > 1 or gext[d] == 1)] for d in space]
        for fs in itertools.product(*per_dim):
            if math.prod(fs) > device.aie_count:
                continue
            partition = {d: (1 if f == gext[d] else f) for d, f in zip(space, fs)}
            time_dims = [d for d in rec.dim_names if d not in space]
            thread_opts = [(None, 1)]
            for d in time_dims:
                if _carries_flow(rec, d) and d not in rec.reduction_dims():
                    continue
                for f in _factor_options(gext[d], thr_allowed):
                    if f > 1 and math.prod(fs) * f <= device.aie_count:
                        thread_opts.append((d, f))
            for thr in thread_opts:
                lat_dims = [d for d in space if partition[d] != 1 and not _carries_flow(rec, d)]
                lat_opts = [{}]
                for f in cfg.latency_factors:
                    if f > 1 and lat_dims:
                        lat_opts.append({d: f for d in lat_dims})
                for lat in lat_opts:
                    count += 1
                    if count > cfg.budget:
                        return
                    yield space, partition, lat, thr


class Ranked(NamedTuple):
    cand: MappingCandidate
    graph: object
    est: object
    profile: object
    routable: bool


def generate_mappings(nest: DemarcatedNest, device: DeviceModel, cfg: SearchConfig | None = None,
                      policy=None, rejected: list | None = None) -> list[Ranked]:
    """Ranked candidates, best first: routable designs, then throughput, then congestion."""
    from .graph import GraphPolicy, PlioBudgetError, build_graph, reduce_plio
    from .perf import estimate
    from .router import (PlacementError, SlotExhausted, apply_placement, assign_plio,
                         place_array)

    cfg = cfg or SearchConfig()
    policy = policy or GraphPolicy(packet_limit=device.packet_switch_limit)
    configs = list(_candidate_configs(nest, device, cfg, rejected))

    def evaluate(conf):
        space, partition, lat, thr = conf
        try:
            cand = make_candidate(nest, space, device, partition, lat, thr, cfg.allow_fold)
            raw = build_graph(cand, policy, device)
            placement = place_array(raw, device)
            graph = apply_placement(reduce_plio(raw, device, policy, placement.node_map), placement)
            assignment, profile = assign_plio(graph, placement, device, strict=False)
            est = estimate(cand, graph, assignment, device, offchip=cfg.offchip)
        except (MappingError, PlioBudgetError, PlacementError, SlotExhausted) as exc:
            return conf, None, str(exc)
        ok = not profile.violations(device.rc_west, device.rc_east)
        return conf, Ranked(cand, graph, est, profile, ok), None

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(evaluate, configs))
    else:
        results = [evaluate(c) for c in configs]
    out = []
    for conf, res, err in results:
        if res is None:
            if rejected is not None:
                rejected.append((conf, err))
            continue
        out.append(res)
    out.sort(key=rank_key)
    if cfg.max_candidates is not None:
        out = out[:cfg.max_candidates]
    return out


def rank_key(r: Ranked):
    return (not r.routable, -r.est.throughput, r.profile.peak, len(r.graph.ports),
            r.cand.schedule.describe())
