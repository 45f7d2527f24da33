"""Scheduled loop nests, the reference interpreter and the legality check.

A schedule is an ordered list of loops.  Each loop belongs to one original
dimension and contributes ``value * stride`` to it (``(extent-1-value) * stride``
when reversed), so tiling is a mixed-radix split of the original index.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

import numpy as np

from .recurrence import DepKind, DependenceVector, UniformRecurrence, array_origin, array_shape


class Tag(str, enum.Enum):
    SPACE = "space"
    TIME = "time"
    POINT = "point"
    THREAD = "thread"


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduledLoop:
    dim: str
    extent: int
    stride: int = 1
    tag: Tag = Tag.TIME
    step: str = "original"
    factor: int | None = None
    reverse: bool = False
    kernel: bool = False

    @property
    def name(self) -> str:
        suffix = {"original": "", "demarcate-tile": "_g", "demarcate-point": "_k",
                  "partition-tile": "_t", "partition-point": "_p",
                  "latency-tile": "_lt", "latency-point": "_l",
                  "thread-tile": "_tt", "thread-point": "_th"}.get(self.step, "_" + self.step)
        return self.dim + suffix


@dataclass(frozen=True)
class MappingSchedule:
    loops: tuple[ScheduledLoop, ...]
    combine: str | None = None

    def __iter__(self):
        return iter(self.loops)

    def __len__(self):
        return len(self.loops)

    def dims(self) -> list[str]:
        out: list[str] = []
        for lp in self.loops:
            if lp.dim not in out:
                out.append(lp.dim)
        return out

    def loops_of(self, dim: str) -> list[int]:
        return [k for k, lp in enumerate(self.loops) if lp.dim == dim]

    def space_positions(self) -> list[int]:
        return [k for k, lp in enumerate(self.loops) if lp.tag == Tag.SPACE]

    def space_dims(self) -> list[str]:
        return [self.loops[k].dim for k in self.space_positions()]

    def extent_of(self, dim: str) -> int:
        return int(np.prod([self.loops[k].extent for k in self.loops_of(dim)], dtype=object))

    @property
    def graph_loops(self) -> tuple[ScheduledLoop, ...]:
        return tuple(lp for lp in self.loops if not lp.kernel)

    @property
    def kernel_loops(self) -> tuple[ScheduledLoop, ...]:
        return tuple(lp for lp in self.loops if lp.kernel)

    def with_loops(self, loops, combine=...) -> "MappingSchedule":
        return MappingSchedule(tuple(loops), self.combine if combine is ... else combine)

    def describe(self) -> str:
        return "[" + ", ".join(f"{lp.name}:{lp.tag.value}({lp.extent})" for lp in self.loops) + "]"


def identity_schedule(rec: UniformRecurrence) -> MappingSchedule:
    return MappingSchedule(tuple(ScheduledLoop(d.name, d.extent) for d in rec.dims))


def validate_schedule(rec: UniformRecurrence, sched: MappingSchedule) -> None:
    """Structural check: every dim is covered exactly once as a mixed-radix split."""
    names = rec.dim_names
    for lp in sched.loops:
        if lp.dim not in names:
            raise ScheduleError(f"schedule references unknown dim {lp.dim!r}")
        if lp.extent <= 0 or lp.stride <= 0:
            raise ScheduleError(f"bad loop {lp}")
    for d in rec.dims:
        loops = [sched.loops[k] for k in sched.loops_of(d.name)]
        if not loops:
            raise ScheduleError(f"dim {d.name!r} missing from schedule")
        expect = 1
        for lp in sorted((lp for lp in loops if lp.extent > 1), key=lambda lp: lp.stride):
            if lp.stride != expect:
                raise ScheduleError(f"dim {d.name!r}: loop strides are not a mixed-radix split")
            expect *= lp.extent
        if expect != d.extent:
            raise ScheduleError(
                f"dim {d.name!r}: loop extents multiply to {expect}, expected {d.extent}")
    if len(sched.space_positions()) > 2:
        raise ScheduleError("at most two space loops are supported")


def split_component(value: int, loops: list[ScheduledLoop]) -> list[int]:
    """Sign-preserving mixed-radix split of a distance component over ``loops``."""
    mag = abs(value)
    sign = -1 if value < 0 else 1
    # unit-extent loops never move; the widest-stride real loop takes the overflow
    moving = [lp for lp in loops if lp.extent > 1] or loops[-1:]
    top = max(moving, key=lambda l: l.stride)
    out = []
    for lp in loops:
        if lp is top:
            digit = mag // lp.stride
        elif lp.extent == 1:
            digit = 0
        else:
            digit = (mag // lp.stride) % lp.extent
        out.append(sign * digit * (-1 if lp.reverse else 1))
    return out


def dependence_distance(dep: DependenceVector | tuple[int, ...], sched: MappingSchedule,
                        dims: tuple[str, ...] | None = None) -> tuple[int, ...]:
    """Distance of ``dep`` re-expressed per scheduled loop.

    ``dims`` names the components of a raw distance tuple; for a
    DependenceVector it defaults to the schedule's dim order of first appearance.
    """
    distance = dep.distance if isinstance(dep, DependenceVector) else tuple(dep)
    dims = tuple(dims) if dims is not None else tuple(sched.dims())
    if len(dims) != len(distance):
        raise ScheduleError("distance length does not match dims")
    for lp in sched.loops:
        if lp.dim not in dims:
            raise ScheduleError(f"schedule references unknown dim {lp.dim!r}")
    comp = [0] * len(sched.loops)
    for dim, value in zip(dims, distance):
        idx = sched.loops_of(dim)
        if not idx:
            raise ScheduleError(f"dim {dim!r} not in schedule")
        parts = split_component(value, [sched.loops[k] for k in idx])
        for k, p in zip(idx, parts):
            comp[k] = p
    return tuple(comp)


def rec_distance(rec: UniformRecurrence, dep: DependenceVector, sched: MappingSchedule):
    return dependence_distance(dep, sched, rec.dim_names)


# -- execution order ----------------------------------------------------------

def iterations(rec: UniformRecurrence, sched: MappingSchedule) -> Iterator[tuple[int, ...]]:
    """Original iteration points in the lexicographic order of ``sched``."""
    names = rec.dim_names
    pos = [names.index(lp.dim) for lp in sched.loops]
    lowers = [d.lower for d in rec.dims]
    for values in itertools.product(*(range(lp.extent) for lp in sched.loops)):
        point = list(lowers)
        for lp, p, v in zip(sched.loops, pos, values):
            point[p] += (lp.extent - 1 - v if lp.reverse else v) * lp.stride
        yield tuple(point)


def loop_values(rec: UniformRecurrence, sched: MappingSchedule, point) -> tuple[int, ...]:
    """Inverse of :func:`iterations`: per-loop values of an original point."""
    names = rec.dim_names
    out = []
    for lp in sched.loops:
        k = names.index(lp.dim)
        v = ((point[k] - rec.dims[k].lower) // lp.stride) % lp.extent
        out.append(lp.extent - 1 - v if lp.reverse else v)
    return tuple(out)


# -- interpreter ----------------------------------------------------------------

_NP_TYPES = {"int8": np.int64, "int16": np.int64, "int32": np.int64, "cint16": np.complex128,
             "float": np.float64, "cfloat": np.complex128}


def interpret(rec: UniformRecurrence, sched: MappingSchedule, inputs: Mapping[str, np.ndarray],
              cap: int = 32) -> np.ndarray:
    """Execute the statement over the domain in the order induced by ``sched``.

    Inputs are full arrays shaped by :func:`array_shape`; index ``e`` of the
    access maps to position ``e - origin``.  The written array starts at zero.
    """
    for d in rec.dims:
        if d.extent > cap:
            raise ScheduleError(f"domain exceeds interpreter cap: {d.name}={d.extent} > {cap}")
    validate_schedule(rec, sched)
    arrays = {}
    for name in rec.inputs:
        if name not in inputs:
            raise ScheduleError(f"missing input array {name!r}")
        arr = np.asarray(inputs[name])
        if arr.shape != array_shape(rec, name):
            raise ScheduleError(f"input {name!r} has shape {arr.shape}, expected {array_shape(rec, name)}")
        arrays[name] = arr.astype(_NP_TYPES[rec.array(name).dtype])
    out_name = rec.output
    out = np.zeros(array_shape(rec, out_name), dtype=_NP_TYPES[rec.array(out_name).dtype])
    arrays[out_name] = out
    names = rec.dim_names

    def compile_access(acc):
        origin = array_origin(rec, acc.array)
        idx = [([(names.index(l), c) for l, c in terms], off - o)
               for terms, off, o in zip(acc.terms, acc.offsets, origin)]

        def at(point):
            return tuple(sum(c * point[p] for p, c in terms) + off for terms, off in idx)
        return acc.array, at

    write = compile_access(rec.statement.write)
    reads = [compile_access(a) for a in rec.statement.reads if a.array != out_name]
    for point in iterations(rec, sched):
        prod = 1
        for name, at in reads:
            prod = prod * arrays[name][at(point)]
        out[write[1](point)] += prod
    return out


def random_inputs(rec: UniformRecurrence, rng: np.random.Generator, low=-4, high=5) -> dict:
    return {name: rng.integers(low, high, size=array_shape(rec, name)) for name in rec.inputs}


# -- legality -------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    dep: DependenceVector
    loop_distance: tuple[int, ...]
    reason: str


@dataclass(frozen=True)
class LegalityVerdict:
    """``legal`` uses the |d| <= 1 reading of the space bound.

    ``signed_ok`` additionally records whether every realised space
    difference also satisfies the stricter signed reading 0 <= d <= 1.
    """

    legal: bool
    violations: tuple[Violation, ...] = ()
    signed_ok: bool = True

    def __bool__(self):
        return self.legal

    def report(self) -> str:
        if self.legal:
            return "legal"
        lines = [f"{v.dep.kind.value} {v.dep.array} {v.dep.distance}: {v.reason} "
                 f"(scheduled distance {v.loop_distance})" for v in self.violations]
        lines.append("|d|<=1 reading: violated; signed 0<=d<=1 reading: "
                     + ("ok" if self.signed_ok else "violated"))
        return "\n".join(lines)


def pair_ok(sched: MappingSchedule, diff: tuple[int, ...]) -> str | None:
    """Causality rule for one (source, sink) pair given per-loop differences.

    Returns a reason string on violation, otherwise None.
    """
    space = sched.space_positions()
    time = [k for k in range(len(sched.loops)) if k not in space]
    first = next((k for k in time if diff[k] != 0), None)
    if first is None or diff[first] < 0:
        return "sink does not execute strictly after source"
    outer = not space or first < min(space)
    if not outer and any(abs(diff[k]) > 1 for k in space):
        return "space distance outside {-1,0,1}"
    return None


def _dim_diff_sets(rec: UniformRecurrence, sched: MappingSchedule, dim: str, delta: int):
    """Distinct per-loop difference vectors realised by component ``delta`` on ``dim``."""
    idx = sched.loops_of(dim)
    loops = [sched.loops[k] for k in idx]
    extent = rec.dim(dim).extent
    top = max(loops, key=lambda lp: lp.stride)
    modulus = top.stride
    found = set()
    for r in range(modulus):
        # top digit t must keep both x = t*modulus + r and x + delta inside the dim
        t_lo = max(0, -((r + delta) // modulus))
        t_hi = min(top.extent - 1, (extent - 1 - delta - r) // modulus)
        if t_lo > t_hi:
            continue
        x = t_lo * modulus + r
        y = x + delta
        diffs = []
        for lp in loops:
            dx = (x // lp.stride) % lp.extent
            dy = (y // lp.stride) % lp.extent
            d = dy - dx
            diffs.append(-d if lp.reverse else d)
        found.add(tuple(diffs))
    return idx, found


def legality_check(rec: UniformRecurrence, sched: MappingSchedule) -> LegalityVerdict:
    """Analytic legality of ``sched`` for the flow and output dependences.

    Each dimension is analysed separately (the domain is a box), enumerating
    only residues modulo the outermost stride, then the per-dim difference
    sets are combined.
    """
    validate_schedule(rec, sched)
    space = sched.space_positions()
    violations = []
    signed_ok = True
    for dep in rec.deps(DepKind.FLOW, DepKind.OUTPUT):
        per_dim = []
        for dim, delta in zip(rec.dim_names, dep.distance):
            idx, found = _dim_diff_sets(rec, sched, dim, delta)
            per_dim.append((idx, sorted(found)))
        if any(not f for _, f in per_dim):
            continue
        for combo in itertools.product(*(f for _, f in per_dim)):
            diff = [0] * len(sched.loops)
            for (idx, _), parts in zip(per_dim, combo):
                for k, p in zip(idx, parts):
                    diff[k] = p
            diff = tuple(diff)
            if any(not 0 <= diff[k] <= 1 for k in space):
                signed_ok = False
            reason = pair_ok(sched, diff)
            if reason:
                violations.append(Violation(dep, diff, reason))
                break
    return LegalityVerdict(not violations, tuple(violations), signed_ok and not violations)
