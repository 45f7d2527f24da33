import json

import pytest

from urmap.pipeline import load_benchmark, packaged
from urmap.recurrence import (DepKind, RecurrenceError, array_shape, parse_access,
                              parse_recurrence, recurrence_to_doc)

from conftest import conv_rec, fir_rec, mm_rec


def deps_of(rec, kind, array):
    return {d.distance for d in rec.deps(kind) if d.array == array}


def test_mm_read_dependences():
    rec = mm_rec(8)
    assert (0, 1, 0) in deps_of(rec, DepKind.READ, "A")
    assert (1, 0, 0) in deps_of(rec, DepKind.READ, "B")


def test_mm_flow_and_output_on_c():
    rec = mm_rec(8)
    assert deps_of(rec, DepKind.FLOW, "C") == {(0, 0, 1)}
    assert deps_of(rec, DepKind.OUTPUT, "C") == {(0, 0, 1)}


def test_conv_and_fir_reuse():
    conv = conv_rec()
    assert deps_of(conv, DepKind.READ, "I") == {(1, 0, -1, 0), (0, 1, 0, -1)}
    assert deps_of(conv, DepKind.READ, "W") == {(1, 0, 0, 0), (0, 1, 0, 0)}
    fir = fir_rec()
    assert deps_of(fir, DepKind.READ, "x") == {(1, 1)}
    assert deps_of(fir, DepKind.FLOW, "y") == {(0, 1)}


def test_scaled_index_is_non_uniform():
    doc = {"name": "bad", "dims": [{"name": "i", "extent": 4}],
           "statement": {"write": "B[i]", "reads": ["A[2*i]"]}}
    with pytest.raises(RecurrenceError, match="non-uniform access"):
        parse_recurrence(doc)


def test_repeated_variable_is_non_uniform():
    with pytest.raises(RecurrenceError, match="non-uniform"):
        parse_access("A[i+i]", ("i",))


@pytest.mark.parametrize("doc, msg", [
    ({"name": "e", "dims": [], "statement": {"write": "B[i]", "reads": []}}, "empty domain"),
    ({"name": "e", "dims": [{"name": "i", "extent": 0}],
      "statement": {"write": "B[i]", "reads": []}}, "empty domain"),
    ({"name": "e", "dims": [{"name": "i", "extent": 2}],
      "statement": {"write": "B[z]", "reads": []}}, "unknown loop"),
    ("{not json", "malformed"),
    ({"name": "e", "dims": [{"name": "i", "extent": 2}],
      "statement": [{"write": "B[i]"}, {"write": "C[i]"}]}, "one statement"),
])
def test_parse_errors(doc, msg):
    with pytest.raises(RecurrenceError, match=msg):
        parse_recurrence(doc)


def test_explicit_dependences_override_derivation():
    doc = {"name": "d", "dims": [{"name": "i", "extent": 4}, {"name": "j", "extent": 4}],
           "statement": {"write": "C[i][j]", "reads": ["A[i][j]"]},
           "dependences": [{"kind": "flow", "array": "C", "distance": [0, 2]}]}
    rec = parse_recurrence(doc)
    assert [d.distance for d in rec.dependences] == [(0, 2)]


def test_negative_flow_rejected():
    doc = {"name": "d", "dims": [{"name": "i", "extent": 4}],
           "statement": {"write": "C[i]", "reads": []},
           "dependences": [{"kind": "flow", "array": "C", "distance": [-1]}]}
    with pytest.raises(RecurrenceError, match="lexicographically"):
        parse_recurrence(doc)


def test_fir_input_shape_covers_history():
    rec = fir_rec(8, 3)
    assert array_shape(rec, "x") == (10,)
    assert array_shape(rec, "y") == (8,)


def test_doc_round_trip():
    rec = conv_rec()
    again = parse_recurrence(json.dumps(recurrence_to_doc(rec)))
    assert again == rec


def test_shipped_benchmarks_parse():
    names = packaged("benchmarks")
    assert {"mm", "conv2d", "fft2d_row", "fft2d_col", "fir"} <= set(names)
    for n in names:
        rec = load_benchmark(n)
        assert rec.deps(DepKind.FLOW)
