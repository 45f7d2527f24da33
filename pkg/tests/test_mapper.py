import numpy as np
import pytest

from urmap.demarcation import demarcate
from urmap.mapper import (GridError, IllegalScheduleError, MappingError, SearchConfig,
                          array_partition, enumerate_space_choices, generate_mappings,
                          latency_hiding, latency_postcondition, make_candidate,
                          multiple_threading, space_time_transform)
from urmap.recurrence import parse_recurrence
from urmap.schedule import Tag, identity_schedule, interpret, legality_check, random_inputs

from conftest import conv_rec, fir_rec, mm_rec


def tags(sched):
    return [(lp.dim, lp.tag) for lp in sched.graph_loops]


def test_mm_space_choices(device):
    nest = demarcate(mm_rec(8), (2, 2, 2), device)
    choices = enumerate_space_choices(nest)
    assert len(choices) == 6
    assert ("i", "j") in choices


def test_distance_two_excluded(device):
    doc = {"name": "d2", "dims": [{"name": "m", "extent": 8}, {"name": "n", "extent": 8}],
           "statement": {"write": "C[m][n]", "reads": ["A[m][n]"]},
           "dependences": [{"kind": "flow", "array": "C", "distance": [2, 0]},
                           {"kind": "output", "array": "C", "distance": [2, 0]}]}
    nest = demarcate(parse_recurrence(doc), (1, 1), device)
    assert all("m" not in c for c in enumerate_space_choices(nest))


def test_space_time_orders(device):
    nest = demarcate(mm_rec(8), (2, 2, 2), device)
    assert tags(space_time_transform(nest, ("i", "j"))) == [
        ("i", Tag.SPACE), ("j", Tag.SPACE), ("k", Tag.TIME)]
    assert tags(space_time_transform(nest, ("k",), check=False)) == [
        ("k", Tag.SPACE), ("i", Tag.TIME), ("j", Tag.TIME)]
    conv = demarcate(conv_rec(8, 8, 2, 2), (2, 2, 1, 1), device)
    assert tags(space_time_transform(conv, ("h", "w"))) == [
        ("h", Tag.SPACE), ("w", Tag.SPACE), ("p", Tag.TIME), ("q", Tag.TIME)]


def test_illegal_space_choice_raises(device):
    nest = demarcate(mm_rec(8), (2, 2, 2), device)
    with pytest.raises(IllegalScheduleError):
        space_time_transform(nest, ("i", "k"))


def test_partition_400(device):
    nest = demarcate(mm_rec(9600, dtype="int16"), (24, 24, 24), device)
    sched = array_partition(space_time_transform(nest, ("i", "j")), {"i": 4, "j": 100}, device,
                            allow_fold=True)
    space = [sched.loops[k].extent for k in sched.space_positions()]
    assert space == [4, 100]
    outer = [lp.extent for lp in sched.graph_loops if lp.tag == Tag.TIME]
    assert outer == [100, 4, 400]


def test_partition_unit_is_identity(device):
    nest = demarcate(mm_rec(8), (2, 2, 2), device)
    sched = space_time_transform(nest, ("i", "j"))
    assert array_partition(sched, {"i": 1, "j": 1, "k": 1}, device) == sched


def test_partition_exceeds_rows(device):
    nest = demarcate(mm_rec(256), (1, 1, 1), device)
    sched = space_time_transform(nest, ("i", "j"))
    with pytest.raises(GridError, match="array exceeds grid"):
        array_partition(sched, {"i": 16, "j": 16}, device)
    folded = array_partition(sched, {"i": 16, "j": 16}, device, allow_fold=True)
    assert [folded.loops[k].extent for k in folded.space_positions()] == [16, 16]


def test_latency_hiding_on_mm(device):
    nest = demarcate(mm_rec(16), (2, 2, 2), device)
    sched = array_partition(space_time_transform(nest, ("i", "j")), {"i": 2, "j": 2}, device)
    out = latency_hiding(nest.rec, sched, {"i": 2, "j": 2})
    inner = [(lp.dim, lp.tag) for lp in out.graph_loops][-2:]
    assert inner == [("i", Tag.POINT), ("j", Tag.POINT)]
    assert latency_postcondition(nest.rec, out)
    assert legality_check(nest.rec, out)
    assert latency_hiding(nest.rec, sched, {"i": 1, "j": 1}) == sched


def test_latency_hiding_rejects_k(device):
    nest = demarcate(mm_rec(8), (2, 2, 2), device)
    sched = space_time_transform(nest, ("i", "j"))
    with pytest.raises(MappingError, match="flow"):
        latency_hiding(nest.rec, sched, {"k": 2})


def test_threading_reduction(device):
    nest = demarcate(mm_rec(8), (2, 2, 2), device)
    sched = space_time_transform(nest, ("i", "j"))
    out = multiple_threading(nest.rec, sched, "k", 2)
    assert out.combine == "sum"
    assert sum(lp.tag == Tag.THREAD for lp in out.loops) == 1
    assert multiple_threading(nest.rec, sched, "k", 1) == sched
    cand = make_candidate(nest, ("i", "j"), device, threads=("k", 2))
    assert cand.nodes == 2 * 4 * 4


def test_fir_taps_threads(device):
    nest = demarcate(fir_rec(16, 15), (4, 1), device)
    cand = make_candidate(nest, ("n",), device, threads=("taps", 3))
    assert cand.thread_factor == 3 and cand.combine == "sum"


def test_threading_non_divisor(device):
    nest = demarcate(fir_rec(16, 15), (4, 1), device)
    sched = space_time_transform(nest, ("n",))
    with pytest.raises(MappingError, match="non-divisible"):
        multiple_threading(nest.rec, sched, "taps", 4)


def test_threading_non_reduction_flow(device):
    doc = {"name": "scan", "dims": [{"name": "i", "extent": 8}, {"name": "j", "extent": 8}],
           "statement": {"write": "C[i][j]", "reads": ["A[i][j]"]},
           "dependences": [{"kind": "flow", "array": "C", "distance": [0, 1]}]}
    rec = parse_recurrence(doc)
    nest = demarcate(rec, (1, 1), device)
    sched = space_time_transform(nest, ("i",))
    with pytest.raises(MappingError, match="not a reduction"):
        multiple_threading(rec, sched, "j", 2)


def test_generate_toy(device):
    nest = demarcate(mm_rec(8), (2, 2, 2), device)
    ranked = generate_mappings(nest, device, SearchConfig(latency_factors=(1, 2)))
    assert ranked
    assert len(ranked[0].cand.space_dims) == 2
    for r in ranked:
        assert r.cand.nodes <= device.aie_count
        assert legality_check(nest.rec, r.cand.schedule)
        assert latency_postcondition(nest.rec, r.cand.schedule)
    again = generate_mappings(nest, device, SearchConfig(latency_factors=(1, 2), workers=4))
    assert [r.cand.label() for r in again] == [r.cand.label() for r in ranked]


def test_generate_semantics(device):
    rec = mm_rec(8)
    ins = random_inputs(rec, np.random.default_rng(1))
    ref = interpret(rec, identity_schedule(rec), ins)
    for r in generate_mappings(demarcate(rec, (2, 4, 2), device), device):
        assert np.array_equal(interpret(rec, r.cand.schedule, ins), ref)


def test_generate_empty_for_far_dependences(device):
    doc = {"name": "far", "dims": [{"name": "m", "extent": 8}, {"name": "n", "extent": 8}],
           "statement": {"write": "C[m][n]", "reads": ["A[m][n]"]},
           "dependences": [{"kind": "flow", "array": "C", "distance": [2, 2]},
                           {"kind": "read", "array": "A", "distance": [0, 2]}]}
    nest = demarcate(parse_recurrence(doc), (1, 1), device)
    assert generate_mappings(nest, device) == []


def test_generate_on_narrow_grid(device):
    narrow = device.with_overrides(rows=1, cols=4)
    nest = demarcate(mm_rec(8), (2, 2, 2), narrow)
    ranked = generate_mappings(nest, narrow, SearchConfig(allow_fold=False))
    assert ranked
    assert all(min(r.cand.array_shape) == 1 for r in ranked)
    # folding lets a 2x2 array take the row as a line
    folded = generate_mappings(nest, narrow)
    assert any(r.cand.array_shape == (2, 2) for r in folded)
