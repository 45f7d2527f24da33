"""Brute-force oracles used to cross-check the analytic paths."""

from __future__ import annotations

import itertools

from .recurrence import DepKind, UniformRecurrence
from .schedule import MappingSchedule, Tag, loop_values


def pairwise_order_legal(rec: UniformRecurrence, sched: MappingSchedule) -> bool:
    """Enumerate every (source, sink) instance pair of each flow/output dependence.

    A pair is fine when the sink's non-space loop vector is lexicographically
    greater than the source's, and either the space coordinates differ by at
    most one per axis or the first differing time loop sits outside every
    space loop (the dependence crosses array passes).
    """
    space = [k for k, lp in enumerate(sched.loops) if lp.tag == Tag.SPACE]
    time = [k for k in range(len(sched.loops)) if k not in space]
    ranges = [range(d.lower, d.lower + d.extent) for d in rec.dims]
    deps = rec.deps(DepKind.FLOW, DepKind.OUTPUT)
    points = list(itertools.product(*ranges))
    coords = {p: loop_values(rec, sched, p) for p in points}
    for dep in deps:
        for src in points:
            snk = tuple(a + b for a, b in zip(src, dep.distance))
            if snk not in coords:
                continue
            a, b = coords[src], coords[snk]
            ta = [a[k] for k in time]
            tb = [b[k] for k in time]
            if not tb > ta:
                return False
            first = next(k for k in time if a[k] != b[k])
            if space and first > min(space):
                if any(abs(b[k] - a[k]) > 1 for k in space):
                    return False
    return True


def crossing_counts(edges, port_col, node_col, ncols):
    """Triple-loop west/east crossing counter.

    ``edges`` holds ``(src, dst)`` pairs; ports and nodes are looked up in
    ``port_col`` / ``node_col``.  Returns two lists of length ``ncols``.
    """
    edge_set = set(edges)
    west = [0] * ncols
    east = [0] * ncols
    for i in range(ncols):
        for p, pc in port_col.items():
            for x, xc in node_col.items():
                if (pc < i < xc and (x, p) in edge_set) or (pc > i > xc and (p, x) in edge_set):
                    west[i] += 1
                if (pc < i < xc and (p, x) in edge_set) or (pc > i > xc and (x, p) in edge_set):
                    east[i] += 1
    return west, east
