"""Physical placement, horizontal NoC congestion and routing-aware PLIO assignment."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .device import DeviceModel
from .graph import NOC, PLIO, SHARED, Edge, MappedGraph


class PlacementError(ValueError):
    pass


class RoutingInfeasible(RuntimeError):
    def __init__(self, violations, assignment=None, profile=None):
        self.violations = violations      # [(direction, column, count, limit)]
        self.assignment = assignment
        self.profile = profile
        cols = ", ".join(f"{d} col {c}: {n} > {lim} (over by {n - lim})"
                         for d, c, n, lim in violations)
        super().__init__(f"routing congestion exceeds resources: {cols}")


class SlotExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class PhysicalPlacement:
    node_map: dict          # node id -> (row, col)
    buffer_map: dict        # "src->dst:array" -> {"tile": (row, col), "side": "dst"}
    mode: str = "direct"    # direct | fold-cols | fold-rows | linear

    def col(self, node: str) -> int:
        return self.node_map[node][1]


@dataclass(frozen=True)
class PlioAssignment:
    port_map: dict          # port id -> (col, slot)
    slots_per_column: int = 2

    def col(self, port: str) -> int:
        return self.port_map[port][0]


@dataclass(frozen=True)
class CongestionProfile:
    west: tuple[int, ...]
    east: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.west) + sum(self.east)

    @property
    def peak(self) -> int:
        return max(self.west + self.east, default=0)

    def violations(self, rc_west: int, rc_east: int):
        out = [("west", i, n, rc_west) for i, n in enumerate(self.west) if n > rc_west]
        out += [("east", i, n, rc_east) for i, n in enumerate(self.east) if n > rc_east]
        return out


# -- placement ------------------------------------------------------------------

def _logical(coord, S1):
    r, c, t = coord
    return r, t * S1 + c


def place_array(g: MappedGraph, device: DeviceModel) -> PhysicalPlacement:
    """Map logical (r, c, t) nodes onto the grid; threads extend the column axis.

    Arrays wider than the grid are cut into column slabs stacked downward,
    taller arrays into row slabs laid side by side.  Inside each slab the map
    is a translation, so every slab repeats the same kernel pattern.
    """
    S0, S1, K2 = g.shape
    rows, cols = S0, S1 * K2
    R, C = device.rows, device.cols
    if len(g.nodes) > R * C:
        raise PlacementError(f"{len(g.nodes)} nodes exceed the {R}x{C} grid")
    if rows <= R and cols <= C:
        mode, fn = "direct", lambda r, c: (r, c)
    elif rows <= R and -(-cols // C) * rows <= R:
        mode, fn = "fold-cols", lambda r, c: ((c // C) * rows + r, c % C)
    elif cols <= C and -(-rows // R) * cols <= C:
        mode, fn = "fold-rows", lambda r, c: (r % R, (r // R) * cols + c)
    else:
        mode, fn = "linear", lambda r, c: divmod(r * cols + c, C)
    node_map = {n.id: fn(*_logical(n.coord, S1)) for n in g.nodes}
    if len(set(node_map.values())) != len(node_map):
        raise PlacementError("placement is not injective")
    buffers = {}
    for e in g.edges:
        if e.src in node_map and e.dst in node_map and _adjacent(node_map[e.src], node_map[e.dst]):
            buffers[f"{e.src}->{e.dst}:{e.array}"] = {"tile": node_map[e.dst], "side": "dst"}
    return PhysicalPlacement(node_map, buffers, mode)


def _adjacent(a, b) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def apply_placement(g: MappedGraph, placement: PhysicalPlacement) -> MappedGraph:
    """Retype inter-node edges: adjacent cells share buffers, the rest use NoC streams."""
    edges = []
    for e in g.edges:
        if e.comm == PLIO:
            edges.append(e)
            continue
        a, b = placement.node_map[e.src], placement.node_map[e.dst]
        edges.append(replace(e, comm=SHARED if _adjacent(a, b) else NOC))
    return replace(g, edges=tuple(edges))


# -- congestion -----------------------------------------------------------------

def port_node_pairs(g: MappedGraph) -> list[tuple[str, str, bool]]:
    """Distinct (port, node, port_is_source) pairs of the PLIO edges."""
    ports = {p.id for p in g.ports}
    seen = {}
    for e in g.edges:
        if e.comm != PLIO:
            continue
        if e.src in ports:
            seen[(e.src, e.dst, True)] = None
        else:
            seen[(e.dst, e.src, False)] = None
    return list(seen)


def congestion(g: MappedGraph, placement: PhysicalPlacement, assignment: PlioAssignment,
               ncols: int) -> CongestionProfile:
    west = [0] * (ncols + 1)
    east = [0] * (ncols + 1)
    for port, node, outbound in port_node_pairs(g):
        if port not in assignment.port_map:
            raise KeyError(f"unassigned port {port!r}")
        pc, xc = assignment.col(port), placement.col(node)
        lo, hi = min(pc, xc), max(pc, xc)
        if hi - lo < 2:
            continue
        # columns strictly between the endpoints
        westward = (outbound and pc > xc) or (not outbound and xc > pc)
        arr = west if westward else east
        arr[lo + 1] += 1
        arr[hi] -= 1
    return CongestionProfile(tuple(_prefix(west)[:ncols]), tuple(_prefix(east)[:ncols]))


def _prefix(diff):
    out, acc = [], 0
    for v in diff:
        acc += v
        out.append(acc)
    return out


# -- assignment -----------------------------------------------------------------

def find_nearest(available, target: int):
    """Free slot ``(col, slot)`` closest to ``target``; ties go to the smaller column."""
    if not available:
        raise SlotExhausted("no free PLIO slot left")
    return min(available, key=lambda s: (abs(s[0] - target), s[0], s[1]))


def _natural(pid: str):
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", pid))


def initial_slots(device: DeviceModel) -> list[tuple[int, int]]:
    return [(c, s) for c in device.columns_with_plio for s in range(device.plio_slots_per_column)]


def _check_capacity(g: MappedGraph, device: DeviceModel, slots):
    if len(g.ports) > min(len(slots), device.plio_channels):
        raise SlotExhausted(f"{len(g.ports)} PLIO ports exceed capacity "
                            f"{min(len(slots), device.plio_channels)}")


def assign_plio(g: MappedGraph, placement: PhysicalPlacement, device: DeviceModel,
                rc_west: int | None = None, rc_east: int | None = None, strict: bool = True):
    """Greedy median assignment; returns ``(assignment, profile)``.

    Heavier ports go first.  Raises RoutingInfeasible when a column exceeds
    its routing resources (``strict``), carrying the assignment for reporting.
    """
    rc_west = device.rc_west if rc_west is None else rc_west
    rc_east = device.rc_east if rc_east is None else rc_east
    available = initial_slots(device)
    _check_capacity(g, device, available)
    cols_of = {p.id: [] for p in g.ports}
    for port, node, _ in port_node_pairs(g):
        cols_of[port].append(placement.col(node))
    order = sorted(g.ports, key=lambda p: (-len(cols_of[p.id]), _natural(p.id)))
    port_map = {}
    for p in order:
        S = sorted(cols_of[p.id])
        target = S[len(S) // 2] if S else 0
        slot = find_nearest(available, target)
        available.remove(slot)
        port_map[p.id] = slot
    assignment = PlioAssignment(dict(sorted(port_map.items(), key=lambda kv: _natural(kv[0]))),
                                device.plio_slots_per_column)
    profile = congestion(g, placement, assignment, device.cols)
    bad = profile.violations(rc_west, rc_east)
    if bad and strict:
        raise RoutingInfeasible(bad, assignment, profile)
    return assignment, profile


def naive_assignment(g: MappedGraph, device: DeviceModel) -> PlioAssignment:
    """Baseline: ports in id order take slots from the leftmost column onward."""
    slots = initial_slots(device)
    _check_capacity(g, device, slots)
    ports = sorted(g.ports, key=lambda p: _natural(p.id))
    return PlioAssignment({p.id: s for p, s in zip(ports, slots)}, device.plio_slots_per_column)


def constraints_doc(placement: PhysicalPlacement, assignment: PlioAssignment,
                    profile: CongestionProfile, device: DeviceModel) -> dict:
    return {
        "core_placement": {k: list(v) for k, v in sorted(placement.node_map.items(),
                                                         key=lambda kv: _natural(kv[0]))},
        "buffer_placement": {k: {"tile": list(v["tile"]), "side": v["side"]}
                             for k, v in sorted(placement.buffer_map.items())},
        "plio_assignment": {k: [v[0], v[1]] for k, v in assignment.port_map.items()},
        "congestion_profile": {"west": list(profile.west), "east": list(profile.east),
                               "rc_west": device.rc_west, "rc_east": device.rc_east},
        "placement_mode": placement.mode,
    }


def route(g: MappedGraph, device: DeviceModel, strict: bool = True):
    """Place, retype edges and assign PLIO ports in one go."""
    placement = place_array(g, device)
    placed = apply_placement(g, placement)
    assignment, profile = assign_plio(placed, placement, device, strict=strict)
    return placed, placement, assignment, profile
