"""Kernel scope demarcation: split each loop into a graph-level tile loop and a
kernel-level point loop, and check the kernel tile against AIE local memory."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .device import DeviceModel
from .recurrence import UniformRecurrence, index_range
from .schedule import MappingSchedule, ScheduledLoop, Tag


class DemarcationError(ValueError):
    pass


class NonDivisibleError(DemarcationError):
    def __init__(self, dim: str, extent: int, factor: int):
        self.dim, self.extent, self.factor = dim, extent, factor
        self.suggested_extent = -(-extent // factor) * factor
        super().__init__(f"non-divisible: factor {factor} does not divide {dim}={extent} "
                         f"(smallest padded extent {self.suggested_extent})")


class LocalMemoryError(DemarcationError):
    pass


@dataclass(frozen=True)
class DemarcatedNest:
    rec: UniformRecurrence
    factors: tuple[int, ...]
    graph_level: MappingSchedule
    kernel_level: MappingSchedule
    footprint_bytes: int

    @property
    def schedule(self) -> MappingSchedule:
        return MappingSchedule(self.graph_level.loops + self.kernel_level.loops)

    @property
    def graph_extents(self) -> tuple[int, ...]:
        return tuple(e // f for e, f in zip(self.rec.extents, self.factors))

    def factor(self, dim: str) -> int:
        return self.factors[self.rec.dim_names.index(dim)]


def kernel_footprint(rec: UniformRecurrence, block: dict[str, int], device: DeviceModel) -> int:
    """Bytes of every array tile touched by one kernel block (bounding box per array)."""
    total = 0
    for arr in rec.arrays:
        accs = rec.accesses(arr.name)
        if not accs:
            continue
        elems = 1
        for k in range(arr.ndim):
            lo = min(_block_range(rec, a, k, block)[0] for a in accs)
            hi = max(_block_range(rec, a, k, block)[1] for a in accs)
            elems *= hi - lo + 1
        total += elems * device.element_bytes(arr.dtype)
    return total


def _block_range(rec, acc, k, block):
    return index_range(rec, acc, k, extents=block)


def demarcate(rec: UniformRecurrence, factors, device: DeviceModel) -> DemarcatedNest:
    factors = tuple(int(f) for f in factors)
    if len(factors) != len(rec.dims):
        raise DemarcationError(f"expected {len(rec.dims)} tiling factors, got {len(factors)}")
    for d, f in zip(rec.dims, factors):
        if f <= 0:
            raise DemarcationError(f"tiling factor for {d.name} must be positive")
        if d.extent % f:
            raise NonDivisibleError(d.name, d.extent, f)
    block = {d.name: f for d, f in zip(rec.dims, factors)}
    fp = kernel_footprint(rec, block, device)
    if fp > device.usable_local_memory:
        raise LocalMemoryError(f"kernel tile {factors} needs {fp} bytes, "
                               f"local memory budget is {device.usable_local_memory}")
    graph = tuple(ScheduledLoop(d.name, d.extent // f, f, Tag.TIME, "demarcate-tile", f)
                  for d, f in zip(rec.dims, factors))
    kernel = tuple(ScheduledLoop(d.name, f, 1, Tag.POINT, "demarcate-point", f, kernel=True)
                   for d, f in zip(rec.dims, factors))
    return DemarcatedNest(rec, factors, MappingSchedule(graph), MappingSchedule(kernel), fp)


def divisors(n: int) -> list[int]:
    small = [d for d in range(1, math.isqrt(n) + 1) if n % d == 0]
    return sorted(set(small + [n // d for d in small]))


def compute_io_ratio(rec: UniformRecurrence, factors) -> float:
    block = dict(zip(rec.dim_names, factors))
    macs = math.prod(factors)
    elems = 0
    for arr in rec.arrays:
        accs = rec.accesses(arr.name)
        n = 1
        for k in range(arr.ndim):
            lo = min(index_range(rec, a, k, block)[0] for a in accs)
            hi = max(index_range(rec, a, k, block)[1] for a in accs)
            n *= hi - lo + 1
        elems += n
    return macs / elems


def suggest_factors(rec: UniformRecurrence, device: DeviceModel,
                    limit: int = 200_000) -> list[tuple[int, ...]]:
    """Divisor tiles that fit local memory, best compute/IO ratio first."""
    choices = [divisors(d.extent) for d in rec.dims]
    out = []
    for n, combo in enumerate(itertools.product(*choices)):
        if n >= limit:
            break
        block = dict(zip(rec.dim_names, combo))
        if kernel_footprint(rec, block, device) <= device.usable_local_memory:
            out.append(combo)
    out.sort(key=lambda f: (-compute_io_ratio(rec, f), -math.prod(f), f))
    return out
