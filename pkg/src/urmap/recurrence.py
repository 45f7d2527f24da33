"""Uniform recurrences: loop domains, uniform accesses and dependence vectors.

A recurrence is a perfectly nested loop over a rectangular box with a single
multiply-accumulate statement.  Every array index is a sum of loop variables
with unit coefficients plus a constant, so all dependences are constant
integer vectors.
"""

from __future__ import annotations

import enum
import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DTYPES = ("int8", "int16", "int32", "float", "cfloat", "cint16")


class RecurrenceError(ValueError):
    """Malformed or unsupported recurrence document."""


class DepKind(str, enum.Enum):
    READ = "read"
    FLOW = "flow"
    OUTPUT = "output"


@dataclass(frozen=True)
class Dim:
    name: str
    extent: int
    lower: int = 0


@dataclass(frozen=True)
class Array:
    name: str
    ndim: int
    dtype: str


@dataclass(frozen=True)
class AccessFunction:
    """``array[e_0][e_1]...`` where each ``e_k`` is ``sum(coef * loop) + offset``.

    ``terms[k]`` is a tuple of ``(loop, coef)`` pairs with ``coef`` in {-1, 1}.
    """

    array: str
    terms: tuple[tuple[tuple[str, int], ...], ...]
    offsets: tuple[int, ...]

    def loops(self) -> set[str]:
        return {loop for dim_terms in self.terms for loop, _ in dim_terms}

    def matrix(self, dims: tuple[str, ...]) -> np.ndarray:
        mat = np.zeros((len(self.terms), len(dims)), dtype=np.int64)
        for row, dim_terms in enumerate(self.terms):
            for loop, coef in dim_terms:
                mat[row, dims.index(loop)] = coef
        return mat

    def __str__(self) -> str:
        parts = []
        for dim_terms, off in zip(self.terms, self.offsets):
            s = ""
            for loop, coef in dim_terms:
                s += ("-" if coef < 0 else ("+" if s else "")) + loop
            if off:
                s += f"{off:+d}" if s else str(off)
            parts.append(f"[{s or '0'}]")
        return self.array + "".join(parts)


@dataclass(frozen=True)
class DependenceVector:
    kind: DepKind
    array: str
    distance: tuple[int, ...]


@dataclass(frozen=True)
class Statement:
    write: AccessFunction
    reads: tuple[AccessFunction, ...]
    op: str = "mac"


@dataclass(frozen=True)
class UniformRecurrence:
    name: str
    dims: tuple[Dim, ...]
    arrays: tuple[Array, ...]
    statement: Statement
    dependences: tuple[DependenceVector, ...]
    dtype: str = "int32"

    @property
    def dim_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(d.extent for d in self.dims)

    def dim(self, name: str) -> Dim:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def array(self, name: str) -> Array:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def output(self) -> str:
        return self.statement.write.array

    @property
    def inputs(self) -> tuple[str, ...]:
        seen: list[str] = []
        for acc in self.statement.reads:
            if acc.array != self.output and acc.array not in seen:
                seen.append(acc.array)
        return tuple(seen)

    def accesses(self, array: str) -> list[AccessFunction]:
        accs = [a for a in self.statement.reads if a.array == array]
        if self.statement.write.array == array:
            accs.append(self.statement.write)
        return accs

    def deps(self, *kinds: DepKind) -> tuple[DependenceVector, ...]:
        return tuple(d for d in self.dependences if not kinds or d.kind in kinds)

    @property
    def macs(self) -> int:
        return int(np.prod(self.extents, dtype=object))

    def with_extents(self, extents) -> "UniformRecurrence":
        dims = tuple(Dim(d.name, int(e), d.lower) for d, e in zip(self.dims, extents))
        return UniformRecurrence(self.name, dims, self.arrays, self.statement,
                                 self.dependences, self.dtype)

    def with_dtype(self, dtype: str) -> "UniformRecurrence":
        if dtype not in DTYPES:
            raise RecurrenceError(f"unknown data type {dtype!r}")
        arrays = tuple(Array(a.name, a.ndim, dtype) for a in self.arrays)
        return UniformRecurrence(self.name, self.dims, arrays, self.statement,
                                 self.dependences, dtype)

    def reduction_dims(self) -> tuple[str, ...]:
        """Loops that do not index the written array (accumulated over)."""
        if self.statement.op != "mac":
            return ()
        used = self.statement.write.loops()
        return tuple(n for n in self.dim_names if n not in used)


# -- array geometry ---------------------------------------------------------

def index_range(rec: UniformRecurrence, acc: AccessFunction, k: int,
                extents: dict[str, int] | None = None) -> tuple[int, int]:
    """Inclusive ``(lo, hi)`` of index expression ``k`` over the domain box."""
    lo = hi = acc.offsets[k]
    for loop, coef in acc.terms[k]:
        d = rec.dim(loop)
        ext = extents[loop] if extents else d.extent
        a, b = coef * d.lower, coef * (d.lower + ext - 1)
        lo += min(a, b)
        hi += max(a, b)
    return lo, hi


def array_bounds(rec: UniformRecurrence, name: str) -> list[tuple[int, int]]:
    """Inclusive index bounds per array dimension, union over all accesses."""
    bounds = None
    for acc in rec.accesses(name):
        cur = [index_range(rec, acc, k) for k in range(len(acc.terms))]
        bounds = cur if bounds is None else [
            (min(a[0], b[0]), max(a[1], b[1])) for a, b in zip(bounds, cur)]
    if bounds is None:
        raise KeyError(name)
    return bounds


def array_shape(rec: UniformRecurrence, name: str) -> tuple[int, ...]:
    return tuple(hi - lo + 1 for lo, hi in array_bounds(rec, name))


def array_origin(rec: UniformRecurrence, name: str) -> tuple[int, ...]:
    return tuple(lo for lo, _ in array_bounds(rec, name))


def footprint(acc: AccessFunction, block: dict[str, int]) -> int:
    """Distinct elements touched by ``acc`` over a box with extents ``block``."""
    total = 1
    for dim_terms in acc.terms:
        span = 1 + sum(block[loop] - 1 for loop, _ in dim_terms)
        total *= span
    return total


# -- parsing ----------------------------------------------------------------

_ACCESS_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*((?:\[[^\[\]]*\]\s*)+)$")
_TERM_RE = re.compile(r"([+-]?)\s*(?:(\d+)\s*\*\s*)?([A-Za-z_]\w*|\d+)")


def parse_access(text: str, loops: tuple[str, ...]) -> AccessFunction:
    m = _ACCESS_RE.match(text)
    if not m:
        raise RecurrenceError(f"malformed access {text!r}")
    name = m.group(1)
    exprs = re.findall(r"\[([^\[\]]*)\]", m.group(2))
    all_terms, offsets = [], []
    for expr in exprs:
        src = expr.replace(" ", "")
        if not src:
            raise RecurrenceError(f"empty index in {text!r}")
        pos, terms, off = 0, {}, 0
        while pos < len(src):
            tm = _TERM_RE.match(src, pos)
            if not tm or tm.end() == pos:
                raise RecurrenceError(f"malformed index expression {expr!r} in {text!r}")
            if pos > 0 and not tm.group(1):
                raise RecurrenceError(f"malformed index expression {expr!r} in {text!r}")
            sign = -1 if tm.group(1) == "-" else 1
            coef = int(tm.group(2)) if tm.group(2) else 1
            atom = tm.group(3)
            if atom.isdigit():
                if tm.group(2):
                    raise RecurrenceError(f"malformed index expression {expr!r}")
                off += sign * int(atom)
            else:
                if atom not in loops:
                    raise RecurrenceError(f"unknown loop variable {atom!r} in {text!r}")
                if coef != 1:
                    raise RecurrenceError(
                        f"non-uniform access {text!r}: coefficient {coef} on {atom}")
                if atom in terms:
                    raise RecurrenceError(
                        f"non-uniform access {text!r}: {atom} repeated")
                terms[atom] = sign
            pos = tm.end()
        all_terms.append(tuple(terms.items()))
        offsets.append(off)
    return AccessFunction(name, tuple(all_terms), tuple(offsets))


def _canonical(v: tuple[int, ...]) -> tuple[int, ...]:
    for x in v:
        if x:
            return v if x > 0 else tuple(-y for y in v)
    return v


def lex_positive(v) -> bool:
    for x in v:
        if x:
            return x > 0
    return False


def reuse_directions(acc: AccessFunction, dims: tuple[str, ...]) -> list[tuple[int, ...]]:
    """Basis of unit-step reuse directions: lex-positive v in {-1,0,1}^n with F v = 0."""
    mat = acc.matrix(dims)
    cands = []
    for v in itertools.product((-1, 0, 1), repeat=len(dims)):
        if any(v) and lex_positive(v) and not (mat @ np.array(v)).any():
            cands.append(v)
    cands.sort(key=lambda v: (sum(map(abs, v)), [-abs(x) for x in v]))
    basis: list[tuple[int, ...]] = []
    for v in cands:
        trial = np.array(basis + [v])
        if np.linalg.matrix_rank(trial) > len(basis):
            basis.append(v)
    return basis


def _offset_distance(a: AccessFunction, b: AccessFunction,
                     dims: tuple[str, ...]) -> tuple[int, ...] | None:
    """Smallest iteration vector ``v`` with ``a(x + v) == b(x)``."""
    if a.terms != b.terms:
        return None
    mat = a.matrix(dims)
    delta = np.array(b.offsets) - np.array(a.offsets)
    bound = int(np.abs(delta).max()) if delta.size else 0
    best = None
    for v in itertools.product(range(-bound, bound + 1), repeat=len(dims)):
        if (mat @ np.array(v) == delta).all() and any(v):
            key = (sum(map(abs, v)), v)
            if best is None or key < best[0]:
                best = (key, v)
    return best[1] if best else None


def derive_dependences(dims: tuple[str, ...], stmt: Statement) -> tuple[DependenceVector, ...]:
    deps: list[DependenceVector] = []
    out = stmt.write.array
    seen_arrays: list[str] = []
    for acc in stmt.reads:
        if acc.array == out or acc.array in seen_arrays:
            continue
        seen_arrays.append(acc.array)
        for v in reuse_directions(acc, dims):
            deps.append(DependenceVector(DepKind.READ, acc.array, v))
        same = [a for a in stmt.reads if a.array == acc.array]
        for a, b in itertools.combinations(same, 2):
            v = _offset_distance(a, b, dims)
            if v is not None:
                dv = DependenceVector(DepKind.READ, acc.array, _canonical(v))
                if dv not in deps:
                    deps.append(dv)
    for v in reuse_directions(stmt.write, dims):
        deps.append(DependenceVector(DepKind.FLOW, out, v))
        deps.append(DependenceVector(DepKind.OUTPUT, out, v))
    return tuple(deps)


def _check(rec: UniformRecurrence) -> UniformRecurrence:
    n = len(rec.dims)
    if n == 0:
        raise RecurrenceError("empty domain: no loops")
    names = rec.dim_names
    if len(set(names)) != n:
        raise RecurrenceError("duplicate loop names")
    for d in rec.dims:
        if d.extent <= 0:
            raise RecurrenceError(f"empty domain: extent of {d.name} is {d.extent}")
    declared = {a.name: a for a in rec.arrays}
    for acc in (rec.statement.write, *rec.statement.reads):
        if acc.array not in declared:
            raise RecurrenceError(f"undeclared array {acc.array!r}")
        if len(acc.terms) != declared[acc.array].ndim:
            raise RecurrenceError(
                f"array {acc.array!r} has {declared[acc.array].ndim} dims, accessed with {len(acc.terms)}")
    for a in rec.arrays:
        if a.dtype not in DTYPES:
            raise RecurrenceError(f"unknown data type {a.dtype!r}")
    for dep in rec.dependences:
        if len(dep.distance) != n:
            raise RecurrenceError(f"dependence {dep} has wrong length")
        if dep.kind == DepKind.FLOW and not lex_positive(dep.distance):
            raise RecurrenceError(f"flow dependence {dep.distance} is not lexicographically positive")
    if rec.statement.op != "mac":
        raise RecurrenceError(f"unsupported statement op {rec.statement.op!r}")
    return rec


def parse_recurrence(doc: dict | str) -> UniformRecurrence:
    """Build a recurrence from the JSON input document (dict or JSON text)."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise RecurrenceError(f"malformed document: {exc}") from exc
    if not isinstance(doc, dict):
        raise RecurrenceError("malformed document: expected an object")
    try:
        name = str(doc["name"])
        dims = tuple(Dim(str(d["name"]), int(d["extent"]), int(d.get("lower", 0)))
                     for d in doc["dims"])
        stmt_doc = doc["statement"]
    except (KeyError, TypeError, ValueError) as exc:
        raise RecurrenceError(f"malformed document: missing or bad field {exc}") from exc
    if not dims:
        raise RecurrenceError("empty domain: no loops")
    if isinstance(stmt_doc, list):
        if len(stmt_doc) != 1:
            raise RecurrenceError("exactly one statement is supported")
        stmt_doc = stmt_doc[0]
    loops = tuple(d.name for d in dims)
    dtype = str(doc.get("dtype", "int32"))
    write = parse_access(stmt_doc["write"], loops)
    reads = tuple(parse_access(r, loops) for r in stmt_doc.get("reads", []))
    stmt = Statement(write, reads, str(stmt_doc.get("op", "mac")))

    arrays_doc = doc.get("arrays")
    if arrays_doc is None:
        found: dict[str, int] = {}
        for acc in (write, *reads):
            found.setdefault(acc.array, len(acc.terms))
        arrays = tuple(Array(n, k, dtype) for n, k in found.items())
    else:
        arrays = tuple(Array(str(a["name"]), int(a.get("dims", a.get("ndim", 0))),
                             str(a.get("dtype", dtype))) for a in arrays_doc)
    if "dependences" in doc:
        deps = tuple(DependenceVector(DepKind(str(d["kind"]).lower()), str(d["array"]),
                                      tuple(int(x) for x in d["distance"]))
                     for d in doc["dependences"])
    else:
        deps = derive_dependences(loops, stmt)
    return _check(UniformRecurrence(name, dims, arrays, stmt, deps, dtype))


def load_recurrence(path: str | Path) -> UniformRecurrence:
    return parse_recurrence(Path(path).read_text())


def recurrence_to_doc(rec: UniformRecurrence) -> dict:
    return {
        "name": rec.name,
        "dtype": rec.dtype,
        "dims": [{"name": d.name, "extent": d.extent, "lower": d.lower} for d in rec.dims],
        "arrays": [{"name": a.name, "dims": a.ndim, "dtype": a.dtype} for a in rec.arrays],
        "statement": {"op": rec.statement.op, "write": str(rec.statement.write),
                      "reads": [str(r) for r in rec.statement.reads]},
        "dependences": [{"kind": d.kind.value, "array": d.array, "distance": list(d.distance)}
                        for d in rec.dependences],
    }
