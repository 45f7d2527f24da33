"""Logical dataflow graph of AIE nodes, PLIO ports and typed edges.

Dependences projected onto the space loops decide how each array moves:
a nonzero direction becomes a neighbour chain fed at the array boundary, a
zero direction on a read becomes a per-node port, outputs are drained
through chains or direct ports.  ``reduce_plio`` then broadcasts identical
read streams and packet-switches the rest into the device port budget.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, replace

from .device import DeviceModel
from .mapper import MappingCandidate, tile_distance
from .recurrence import DepKind
from .schedule import Tag


class GraphError(RuntimeError):
    """Internal inconsistency while building a graph (legality breach)."""


class PlioBudgetError(ValueError):
    pass


SHARED = "SharedBufferDMA"
NOC = "NocStream"
PLIO = "PlioLink"


@dataclass(frozen=True)
class AieNode:
    id: str
    coord: tuple[int, int, int]
    kernel: str = "kernel0"


@dataclass(frozen=True)
class PlioPort:
    id: str
    direction: str                            # "in" | "out"
    arrays: tuple[str, ...]
    streams: tuple[tuple[str, str], ...]      # logical (array, node) streams
    broadcast: bool = False
    kind: str = "read"
    key: tuple | None = None                  # data identity for broadcast merging

    @property
    def group_size(self) -> int:
        return 1 if self.broadcast else len(self.streams)


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    comm: str
    array: str
    dep: str
    direction: tuple[int, int, int] = (0, 0, 0)


@dataclass(frozen=True)
class MappedGraph:
    nodes: tuple[AieNode, ...]
    ports: tuple[PlioPort, ...]
    edges: tuple[Edge, ...]
    shape: tuple[int, int, int] = (1, 1, 1)

    def node_ids(self) -> set[str]:
        return {n.id for n in self.nodes}

    def port(self, pid: str) -> PlioPort:
        for p in self.ports:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def ports_by_dir(self, direction: str) -> list[PlioPort]:
        return [p for p in self.ports if p.direction == direction]

    def inter_node_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.comm != PLIO]

    def plio_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.comm == PLIO]

    def streams(self) -> Counter:
        """Multiset of logical ``(array, node, direction)`` streams carried by ports."""
        return Counter((a, n, p.direction) for p in self.ports for a, n in p.streams)

    def to_doc(self) -> dict:
        return {
            "shape": list(self.shape),
            "nodes": [{"id": n.id, "coord": list(n.coord), "kernel": n.kernel} for n in self.nodes],
            "ports": [{"id": p.id, "direction": p.direction, "arrays": list(p.arrays),
                       "broadcast": p.broadcast, "kind": p.kind,
                       "streams": [list(s) for s in p.streams]} for p in self.ports],
            "edges": [{"src": e.src, "dst": e.dst, "comm": e.comm, "array": e.array,
                       "dep": e.dep, "direction": list(e.direction)} for e in self.edges],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_doc(), indent=1)


def graph_from_doc(doc: dict) -> MappedGraph:
    nodes = tuple(AieNode(n["id"], tuple(n["coord"]), n.get("kernel", "kernel0")) for n in doc["nodes"])
    ports = tuple(PlioPort(p["id"], p["direction"], tuple(p["arrays"]),
                           tuple(tuple(s) for s in p["streams"]), bool(p.get("broadcast", False)),
                           p.get("kind", "read")) for p in doc["ports"])
    edges = tuple(Edge(e["src"], e["dst"], e["comm"], e["array"], e["dep"], tuple(e["direction"]))
                  for e in doc["edges"])
    return MappedGraph(nodes, ports, edges, tuple(doc.get("shape", (1, 1, 1))))


@dataclass(frozen=True)
class GraphPolicy:
    read_transport: str = "systolic"   # "systolic" | "direct"
    direct_reads: tuple[str, ...] = ()  # arrays fed node by node even when systolic
    drain: str = "auto"                # "auto" | "row" | "col" | "direct"
    broadcast: bool = True
    packet_limit: int = 4
    packing: str = "as_needed"         # "as_needed" | "minimal"
    broadcast_multiplex: bool = False

    def __post_init__(self):
        if self.read_transport not in ("systolic", "direct"):
            raise ValueError(f"bad read_transport {self.read_transport!r}")
        if self.drain not in ("auto", "row", "col", "direct"):
            raise ValueError(f"bad drain {self.drain!r}")
        if self.packing not in ("as_needed", "minimal"):
            raise ValueError(f"bad packing {self.packing!r}")
        object.__setattr__(self, "direct_reads", tuple(self.direct_reads))
        if self.packet_limit < 1:
            raise ValueError("packet limit must be >= 1")


def node_id(r: int, c: int, t: int) -> str:
    return f"aie_{r}_{c}_{t}"


def space_projection(cand: MappingCandidate, dep) -> tuple[int, int]:
    """Tile-level dependence components on the (row, col) space loops of ``cand``."""
    rec = cand.rec
    vals = []
    for k in cand.schedule.space_positions():
        dim = cand.schedule.loops[k].dim
        j = rec.dim_names.index(dim)
        vals.append(tile_distance(dep.distance[j], cand.nest.factors[j]))
    if len(vals) == 2:
        return vals[0], vals[1]
    if len(vals) == 1:
        return 0, vals[0]
    return 0, 0


def _axis_dims(cand: MappingCandidate):
    """Original dim driving each node axis (row, col, thread); None when the axis is trivial."""
    sd = cand.schedule.space_dims()
    rows = sd[0] if len(sd) == 2 else None
    cols = sd[-1] if sd else None
    return rows, cols, cand.thread_dim


def build_graph(cand: MappingCandidate, policy: GraphPolicy | None = None,
                device: DeviceModel | None = None) -> MappedGraph:
    policy = policy or GraphPolicy()
    rec = cand.rec
    S0, S1 = cand.array_shape
    K2 = cand.thread_factor
    coords = [(r, c, t) for r in range(S0) for c in range(S1) for t in range(K2)]
    nodes = tuple(AieNode(node_id(*rc), rc) for rc in coords)
    exists = set(coords)
    axes = _axis_dims(cand)
    edges: list[Edge] = []
    ports: list[PlioPort] = []
    counter = Counter()

    def add_port(direction, array, node, kind, key=None):
        n = counter[direction]
        counter[direction] += 1
        ports.append(PlioPort(f"{direction}{n}", direction, (array,), ((array, node_id(*node)),),
                              False, kind, key))

    def key_for(array, rc):
        used = set()
        for acc in rec.accesses(array):
            used |= acc.loops()
        return tuple(v for v, d in zip(rc, axes) if d is not None and d in used)

    def chain(array, kind, d, forward=True, among=None):
        """Neighbour edges along direction ``d`` inside ``among``; returns the chain ends."""
        dr, dc = d
        if abs(dr) > 1 or abs(dc) > 1:
            raise GraphError(f"direction {d} of {array} outside the neighbour set")
        among = exists if among is None else set(among)
        ends = []
        for rc in coords:
            if rc not in among:
                continue
            up = (rc[0] - dr, rc[1] - dc, rc[2])
            if up in among:
                edges.append(Edge(node_id(*up), node_id(*rc), SHARED, array, kind, (dr, dc, 0)))
            if forward and up not in among:
                ends.append(rc)
            down = (rc[0] + dr, rc[1] + dc, rc[2])
            if not forward and down not in among:
                ends.append(rc)
        return ends

    for array in rec.inputs:
        dirs = [space_projection(cand, dep) for dep in rec.deps(DepKind.READ) if dep.array == array]
        moving = list(dict.fromkeys(d for d in dirs if d != (0, 0)))
        if moving and policy.read_transport == "systolic" and array not in policy.direct_reads:
            heads = chain(array, "read", moving[0])
            # heads holding identical data are themselves chained along a second direction
            second = [d for d in moving[1:] if d[0] * moving[0][1] != d[1] * moving[0][0]]
            if second and len({key_for(array, rc) for rc in heads if rc[2] == 0}) == 1:
                heads = chain(array, "read", second[0], among=heads)
            for rc in heads:
                add_port("in", array, rc, "read", key_for(array, rc))
        else:
            for rc in coords:
                add_port("in", array, rc, "read", key_for(array, rc))

    out = rec.output
    flows = [space_projection(cand, dep) for dep in rec.deps(DepKind.FLOW) if dep.array == out]
    for d in dict.fromkeys(f for f in flows if f != (0, 0)):
        for rc in chain(out, "flow", d):
            add_port("in", out, rc, "flow")

    drain_nodes = coords
    if K2 > 1 and cand.combine:
        for r, c, t in coords:
            if t + 1 < K2:
                edges.append(Edge(node_id(r, c, t), node_id(r, c, t + 1), SHARED, out, "flow",
                                  (0, 0, 1)))
        drain_nodes = [rc for rc in coords if rc[2] == K2 - 1]
    outs = [space_projection(cand, dep) for dep in rec.deps(DepKind.OUTPUT) if dep.array == out]
    moving = [d for d in outs if d != (0, 0)]
    if moving:
        ends = [rc for rc in chain(out, "output", moving[0], forward=False) if rc in drain_nodes]
    else:
        mode = _drain_mode(policy, device, drain_nodes, S0, S1)
        ends = []
        keep = set(drain_nodes)
        for rc in drain_nodes:
            r, c, t = rc
            if mode == "direct":
                ends.append(rc)
            elif mode == "row":
                if c + 1 < S1:
                    edges.append(Edge(node_id(*rc), node_id(r, c + 1, t), SHARED, out, "output",
                                      (0, 1, 0)))
                else:
                    ends.append(rc)
            else:
                if r + 1 < S0:
                    edges.append(Edge(node_id(*rc), node_id(r + 1, c, t), SHARED, out, "output",
                                      (1, 0, 0)))
                else:
                    ends.append(rc)
        ends = [rc for rc in ends if rc in keep]
    for rc in ends:
        add_port("out", out, rc, "output")

    g = MappedGraph(nodes, tuple(ports), tuple(edges), (S0, S1, K2))
    return _with_plio_edges(g)


def _drain_mode(policy, device, drain_nodes, S0, S1):
    if policy.drain != "auto":
        return policy.drain
    n = len(drain_nodes)
    # "col" chains run down each column (one stream per column), "row" along each row;
    # prefer the most streams that still fit, so chains follow the shorter axis first
    if S0 <= S1:
        options = [("direct", n), ("col", n // S0), ("row", n // S1)]
    else:
        options = [("direct", n), ("row", n // S1), ("col", n // S0)]
    budget = (device.plio_out_budget if device else 39) * policy.packet_limit
    for mode, count in options:
        if count <= budget:
            return mode
    return min(options, key=lambda o: o[1])[0]


def _with_plio_edges(g: MappedGraph) -> MappedGraph:
    inner = [e for e in g.edges if e.comm != PLIO]
    plio = []
    for p in g.ports:
        for array, node in p.streams:
            if p.direction == "in":
                plio.append(Edge(p.id, node, PLIO, array, p.kind))
            else:
                plio.append(Edge(node, p.id, PLIO, array, p.kind))
    return replace(g, edges=tuple(inner + plio))


def _group_sizes(count: int, groups: int) -> list[int]:
    base, extra = divmod(count, groups)
    return [base + 1] * extra + [base] * (groups - extra)


def reduce_plio(g: MappedGraph, device: DeviceModel, policy: GraphPolicy | None = None,
                locality: dict | None = None) -> MappedGraph:
    """Broadcast identical read streams, then packet-switch ports into the budget.

    ``locality`` maps node id to a physical (row, col); when given, ports are
    grouped column by column so each packet-switched channel stays local.
    """
    policy = policy or GraphPolicy(packet_limit=device.packet_switch_limit)
    ports = list(g.ports)
    if policy.broadcast:
        merged: dict = {}
        rest = []
        for p in ports:
            if p.direction == "in" and p.kind == "read" and p.key is not None and not p.broadcast:
                merged.setdefault((p.arrays, p.key), []).append(p)
            else:
                rest.append(p)
        ports = list(rest)
        for (arrays, key), group in merged.items():
            if len(group) == 1:
                ports.append(group[0])
            else:
                streams = tuple(s for p in group for s in p.streams)
                ports.append(PlioPort(group[0].id, "in", arrays, streams, True, "read", key))
    budgets = {"in": device.plio_in_budget, "out": device.plio_out_budget}
    result = []
    for direction in ("in", "out"):
        mine = [p for p in ports if p.direction == direction]
        fixed = [p for p in mine if p.broadcast and not policy.broadcast_multiplex]
        pack = [p for p in mine if p not in fixed]
        if locality:
            pack.sort(key=lambda p: (locality[p.streams[0][1]][1], locality[p.streams[0][1]][0]))
        budget = budgets[direction]
        limit = policy.packet_limit
        if policy.packing == "minimal":
            groups = -(-len(pack) // limit) if pack else 0
        else:
            groups = min(len(pack), budget - len(fixed))
        floor = -(-len(pack) // limit) if pack else 0
        if groups < floor:
            groups = floor
        if len(fixed) + groups > budget:
            need = len(fixed) + floor
            raise PlioBudgetError(
                f"PLIO budget unattainable: {len(mine)} {direction} ports need at least {need} "
                f"with packet-switch limit {limit}, budget {budget} (deficit {need - budget})")
        out_ports = list(fixed)
        pos = 0
        for size in (_group_sizes(len(pack), groups) if groups else []):
            chunk = pack[pos:pos + size]
            pos += size
            if len(chunk) == 1:
                out_ports.append(chunk[0])
                continue
            arrays = tuple(dict.fromkeys(a for p in chunk for a in p.arrays))
            streams = tuple(s for p in chunk for s in p.streams)
            out_ports.append(PlioPort(chunk[0].id, direction, arrays, streams, False,
                                      chunk[0].kind))
        for k, p in enumerate(out_ports):
            result.append(replace(p, id=f"{direction}{k}"))
    reduced = _with_plio_edges(replace(g, ports=tuple(result)))
    if reduced.streams() != g.streams():
        raise GraphError("stream conservation violated in reduce_plio")
    return reduced


def kernel_descriptor(cand: MappingCandidate) -> dict:
    """Abstract description of the single kernel shared by every AIE node."""
    rec = cand.rec
    kloops = [lp for lp in cand.schedule.loops if lp.kernel]
    block = {lp.dim: lp.extent for lp in kloops}
    ports = []
    for acc in list(rec.statement.reads) + [rec.statement.write]:
        shape = [1 + sum(block[l] - 1 for l, _ in terms) for terms in acc.terms]
        role = "out" if acc.array == rec.output else "in"
        ports.append({"array": acc.array, "role": role, "access": str(acc), "tile_shape": shape})
    time_loops = [{"loop": lp.name, "extent": lp.extent, "tag": lp.tag.value}
                  for lp in cand.schedule.loops if not lp.kernel and lp.tag != Tag.SPACE]
    desc = {
        "recurrence": rec.name,
        "dtype": rec.dtype,
        "op": rec.statement.op,
        "loops": [{"loop": lp.name, "extent": lp.extent} for lp in kloops],
        "macs": math.prod(lp.extent for lp in kloops),
        "ports": ports,
        "data_schedule": {"time_loops": time_loops,
                          "per_step": "one tile per port binding per time iteration"},
        "combine": None,
    }
    if cand.thread_factor > 1 and cand.combine:
        desc["combine"] = {"op": cand.combine, "axis": cand.thread_dim,
                           "partner": "thread t+1 (adder chain along the thread axis)"}
    return desc
