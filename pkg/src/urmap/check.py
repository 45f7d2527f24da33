"""Independent validator for emitted graph and constraint artifacts.

Works on the JSON documents only and recounts congestion with its own loop,
so a bug in the producer's placement or counting code cannot hide itself.
"""

from __future__ import annotations

from dataclasses import dataclass

from .device import DeviceModel


@dataclass(frozen=True)
class Verdict:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}" + (f": {self.detail}" if self.detail else "")


class SchemaError(ValueError):
    pass


def _require(doc, keys, what):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise SchemaError(f"{what} is missing keys {missing}")


def recount(graph: dict, cons: dict, ncols: int):
    """West/east crossing counts straight from the documents."""
    ports = {p["id"] for p in graph["ports"]}
    core = cons["core_placement"]
    plio = cons["plio_assignment"]
    pairs = set()
    for e in graph["edges"]:
        if e["comm"] != "PlioLink":
            continue
        if e["src"] in ports:
            pairs.add((e["src"], e["dst"], "p2x"))
        else:
            pairs.add((e["dst"], e["src"], "x2p"))
    west, east = [0] * ncols, [0] * ncols
    for i in range(ncols):
        for p, x, kind in pairs:
            pc, xc = plio[p][0], core[x][1]
            if kind == "x2p":
                west[i] += pc < i < xc
                east[i] += xc < i < pc
            else:
                west[i] += xc < i < pc
                east[i] += pc < i < xc
    return west, east


def check_artifacts(graph: dict, cons: dict, device: DeviceModel,
                    packet_limit: int | None = None) -> list[Verdict]:
    _require(graph, ("nodes", "ports", "edges"), "graph")
    _require(cons, ("core_placement", "buffer_placement", "plio_assignment", "congestion_profile"),
             "constraints")
    limit = packet_limit or device.packet_switch_limit
    out: list[Verdict] = []
    nodes = [n["id"] for n in graph["nodes"]]
    ports = {p["id"]: p for p in graph["ports"]}
    ids = set(nodes) | set(ports)

    out.append(Verdict("graph: unique node ids", len(set(nodes)) == len(nodes)))
    dangling = [e for e in graph["edges"] if e["src"] not in ids or e["dst"] not in ids]
    out.append(Verdict("graph: edges reference known endpoints", not dangling,
                       f"{len(dangling)} dangling" if dangling else ""))
    bad_dir = [e for e in graph["edges"] if any(abs(v) > 1 for v in e["direction"])]
    out.append(Verdict("graph: direction components in {-1,0,1}", not bad_dir))
    groups = [p["id"] for p in ports.values()
              if not p.get("broadcast") and len(p["streams"]) > limit]
    out.append(Verdict(f"graph: packet-switch groups <= {limit}", not groups, ", ".join(groups)))
    n_in = sum(p["direction"] == "in" for p in ports.values())
    n_out = len(ports) - n_in
    out.append(Verdict("graph: PLIO in budget", n_in <= device.plio_in_budget,
                       f"{n_in}/{device.plio_in_budget}"))
    out.append(Verdict("graph: PLIO out budget", n_out <= device.plio_out_budget,
                       f"{n_out}/{device.plio_out_budget}"))
    out.append(Verdict("graph: PLIO channel total", len(ports) <= device.plio_channels,
                       f"{len(ports)}/{device.plio_channels}"))

    core = cons["core_placement"]
    unplaced = [n for n in nodes if n not in core]
    out.append(Verdict("placement: every node placed", not unplaced, ", ".join(unplaced[:5])))
    cells = [tuple(v) for v in core.values()]
    out.append(Verdict("placement: injective", len(set(cells)) == len(cells)))
    off = [k for k, (r, c) in core.items() if not (0 <= r < device.rows and 0 <= c < device.cols)]
    out.append(Verdict("placement: inside grid", not off, ", ".join(off[:5])))
    far = []
    for e in graph["edges"]:
        if e["comm"] == "SharedBufferDMA" and e["src"] in core and e["dst"] in core:
            (r1, c1), (r2, c2) = core[e["src"]], core[e["dst"]]
            if abs(r1 - r2) + abs(c1 - c2) != 1:
                far.append(f"{e['src']}->{e['dst']}")
    out.append(Verdict("placement: shared-buffer edges adjacent", not far, ", ".join(far[:5])))

    plio = cons["plio_assignment"]
    missing = [p for p in ports if p not in plio]
    out.append(Verdict("assignment: every port assigned", not missing, ", ".join(missing[:5])))
    slots = [tuple(v) for v in plio.values()]
    dup = sorted({s for s in slots if slots.count(s) > 1})
    bad_slot = [k for k, (c, s) in plio.items()
                if not (0 <= c < device.cols and 0 <= s < device.plio_slots_per_column)]
    out.append(Verdict("assignment: slot capacity", not dup and not bad_slot,
                       "; ".join([f"slot {d} used twice" for d in dup] + bad_slot)))

    if missing or unplaced:
        out.append(Verdict("congestion: within routing resources", False, "incomplete artifacts"))
        return out
    west, east = recount(graph, cons, device.cols)
    rc_w = cons["congestion_profile"].get("rc_west", device.rc_west)
    rc_e = cons["congestion_profile"].get("rc_east", device.rc_east)
    over = [f"west col {i}: {v} > {rc_w}" for i, v in enumerate(west) if v > rc_w]
    over += [f"east col {i}: {v} > {rc_e}" for i, v in enumerate(east) if v > rc_e]
    out.append(Verdict("congestion: within routing resources", not over, "; ".join(over)))
    prof = cons["congestion_profile"]
    same = list(prof.get("west", [])) == west and list(prof.get("east", [])) == east
    out.append(Verdict("congestion: reported profile matches recount", same))
    return out
