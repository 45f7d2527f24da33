import numpy as np
import pytest
from hypothesis import given, strategies as st

from urmap.demarcation import (LocalMemoryError, NonDivisibleError, compute_io_ratio, demarcate,
                               divisors, kernel_footprint, suggest_factors)
from urmap.schedule import identity_schedule, interpret, random_inputs, validate_schedule

from conftest import conv_rec, mm_rec


def test_small_tiling(device):
    nest = demarcate(mm_rec(8), (4, 4, 4), device)
    assert nest.graph_extents == (2, 2, 2)
    assert [lp.extent for lp in nest.kernel_level.loops] == [4, 4, 4]
    assert all(lp.kernel for lp in nest.kernel_level.loops)


def test_benchmark_tiling(device):
    nest = demarcate(mm_rec(8192, dtype="float"), (32, 32, 32), device)
    assert nest.graph_extents == (256, 256, 256)
    assert nest.footprint_bytes == 3 * 32 * 32 * 4


def test_non_divisible(device):
    with pytest.raises(NonDivisibleError, match="non-divisible") as info:
        demarcate(mm_rec(10), (4, 4, 4), device)
    assert info.value.suggested_extent == 12


def test_local_memory(device):
    with pytest.raises(LocalMemoryError):
        demarcate(mm_rec(128, dtype="float"), (64, 64, 64), device)


def test_demarcation_preserves_semantics(device):
    rec = conv_rec(8, 8, 2, 2)
    nest = demarcate(rec, (4, 2, 2, 1), device)
    validate_schedule(rec, nest.schedule)
    ins = random_inputs(rec, np.random.default_rng(0))
    assert np.array_equal(interpret(rec, nest.schedule, ins),
                          interpret(rec, identity_schedule(rec), ins))


def test_suggestions_contain_divisor_tiles(device):
    tiles = suggest_factors(mm_rec(8), device)
    assert (4, 4, 4) in tiles and (8, 8, 8) in tiles


def test_suggestions_empty_when_budget_tiny(device):
    tight = device.with_overrides(local_memory_bytes=8, double_buffer=False)
    assert suggest_factors(mm_rec(8), tight) == []


def test_suggestion_ranking(device):
    rec = mm_rec(16)
    tiles = suggest_factors(rec, device)
    best = max(compute_io_ratio(rec, t) for t in tiles)
    assert compute_io_ratio(rec, tiles[0]) == best
    n, m, k = tiles[0]
    assert compute_io_ratio(rec, tiles[0]) == pytest.approx(n * m * k / (n * k + k * m + n * m))


@given(st.sampled_from(divisors(16)), st.sampled_from(divisors(16)), st.sampled_from(divisors(16)),
       st.integers(0, 2))
def test_footprint_monotone(a, b, c, axis):
    rec = conv_rec(16, 16, 4, 4)
    block = {"h": a, "w": b, "p": min(c, 4), "q": 2}
    grown = dict(block)
    name = ["h", "w", "p"][axis]
    grown[name] = block[name] + 1
    from urmap.device import default_device
    dev = default_device()
    assert kernel_footprint(rec, grown, dev) >= kernel_footprint(rec, block, dev)
