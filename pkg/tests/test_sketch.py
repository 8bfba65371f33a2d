from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchci.errors import ConfigurationError
from sketchci.sketch import CountMinSketch, classical_lower_bound_value


def test_single_insert_both_kinds():
    for kind in ("cms", "cmscu"):
        sk = CountMinSketch(kind, 3, 1000, seed=0)
        sk.update("x")
        assert sk.upper_bound("x") == 1
        assert sk.items == 1


def test_cu_collision_free_counters():
    sk = CountMinSketch("cmscu", 3, 1 << 16, seed=1)
    for _ in range(3):
        sk.update("x")
    cols = sk.family.buckets("x")
    grid = sk.grid
    assert all(grid[j, c] == 3 for j, c in enumerate(cols))


def test_empty_sketch_query_is_zero():
    sk = CountMinSketch("cms", 3, 100, seed=0)
    assert sk.upper_bound("never") == 0


def test_unknown_kind_rejected():
    with pytest.raises(ConfigurationError):
        CountMinSketch("count-sketch", 3, 100)


def _random_stream(seed, n=400, alphabet=40):
    rng = np.random.default_rng(seed)
    return rng.integers(0, alphabet, size=n).tolist()


@pytest.mark.parametrize("seed", range(8))
def test_dominance_and_row_sums(seed):
    stream = _random_stream(seed)
    exact = Counter(stream)
    cms = CountMinSketch("cms", 3, 29, seed=seed)
    cms.update_many(stream)
    cu = CountMinSketch("cmscu", 3, 29, seed=seed)
    cu.update_many(stream)
    for token, count in exact.items():
        assert cms.upper_bound(token) >= count
        assert cu.upper_bound(token) >= count
    assert cms.row_sums() == [len(stream)] * 3
    assert all(s <= len(stream) for s in cu.row_sums())
    assert (cu.grid <= cms.grid).all()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 15), min_size=1, max_size=120),
       st.integers(0, 2**31 - 1))
def test_cu_never_exceeds_cms(stream, seed):
    cms = CountMinSketch("cms", 2, 7, seed=seed)
    cu = CountMinSketch("cmscu", 2, 7, seed=seed)
    cms.update_many(stream)
    cu.update_many(stream)
    assert (cu.grid <= cms.grid).all()
    for token in set(stream):
        assert cu.upper_bound(token) >= stream.count(token)


def test_update_many_matches_sequential_updates():
    stream = _random_stream(123, n=300, alphabet=25)
    for kind in ("cms", "cmscu"):
        bulk = CountMinSketch(kind, 3, 17, seed=9)
        bulk.update_many(stream)
        one = CountMinSketch(kind, 3, 17, seed=9)
        for token in stream:
            one.update(token)
        assert (bulk.grid == one.grid).all()
        assert bulk.items == one.items == len(stream)


def test_classical_lower_bound_arithmetic():
    # bound 10, 1000 items, width 1000: shift is e, so ceil(10 - e) = 8
    assert classical_lower_bound_value(10, 1000, 1000) == 8
    assert classical_lower_bound_value(0, 1000, 1000) == 0
    assert classical_lower_bound_value(2, 1000, 10) == 0  # clamped


def test_classical_lower_bound_on_sketch():
    sk = CountMinSketch("cms", 3, 1000, seed=0)
    for _ in range(10):
        sk.update("x")
    for i in range(990):
        sk.update(i)
    assert sk.items == 1000
    expected = classical_lower_bound_value(sk.upper_bound("x"), 1000, 1000)
    assert sk.classical_lower_bound("x") == expected
    assert sk.confidence == pytest.approx(1 - np.exp(-3))


def test_classical_lower_bound_rejected_for_cu():
    sk = CountMinSketch("cmscu", 3, 100, seed=0)
    sk.update("x")
    with pytest.raises(ConfigurationError):
        sk.classical_lower_bound("x")


def test_classical_lower_bound_needs_items():
    sk = CountMinSketch("cms", 3, 100, seed=0)
    with pytest.raises(ConfigurationError):
        sk.classical_lower_bound("x")


def test_freeze_blocks_updates():
    sk = CountMinSketch("cms", 2, 10, seed=0)
    sk.update("a")
    sk.freeze()
    assert sk.frozen
    with pytest.raises(RuntimeError):
        sk.update("b")
    with pytest.raises(RuntimeError):
        sk.update_many(["b"])
    assert sk.upper_bound("a") == 1  # queries still fine


def test_counter_overflow_detected():
    sk = CountMinSketch("cms", 1, 4, seed=0)
    col = sk.family.bucket(0, "x")
    sk._rows[0][col] = (1 << 63) - 1
    with pytest.raises(OverflowError):
        sk.update("x")


def test_snapshot_roundtrip(tmp_path):
    for kind in ("cms", "cmscu"):
        sk = CountMinSketch(kind, 3, 50, seed=77)
        sk.update_many(_random_stream(4, n=500))
        sk.freeze()
        back = CountMinSketch.from_bytes(sk.to_bytes())
        assert back.kind == kind
        assert (back.grid == sk.grid).all()
        assert back.items == sk.items
        assert back.family.seed == 77
        assert back.frozen
        for token in range(40):
            assert back.upper_bound(token) == sk.upper_bound(token)

        path = tmp_path / f"{kind}.sketch"
        sk.save(path)
        assert (CountMinSketch.load(path).grid == sk.grid).all()


def test_snapshot_rejects_garbage():
    with pytest.raises(ConfigurationError):
        CountMinSketch.from_bytes(b"not a snapshot, definitely" + b"\x00" * 40)
    sk = CountMinSketch("cms", 2, 4, seed=0)
    blob = sk.to_bytes()
    with pytest.raises(ConfigurationError):
        CountMinSketch.from_bytes(blob[:-8])  # truncated counters
