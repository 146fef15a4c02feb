import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amcmc_diffusion.rng import BLOCK, RandomSource, philox, replica_sources


def test_same_key_same_stream():
    a = RandomSource(7, 3, 1).normals(2500)
    b = RandomSource(7, 3, 1).normals(2500)
    assert np.array_equal(a, b)


def test_distinct_replicas_and_streams_differ():
    base = RandomSource(7, 0, 0).normals(16)
    assert not np.array_equal(base, RandomSource(7, 1, 0).normals(16))
    assert not np.array_equal(base, RandomSource(7, 0, 1).normals(16))
    assert not np.array_equal(base, RandomSource(8, 0, 0).normals(16))


@given(st.lists(st.integers(1, 700), min_size=1, max_size=8))
@settings(max_examples=30, deadline=None)
def test_chunking_does_not_change_draws(chunks):
    total = sum(chunks)
    whole = RandomSource(11).normals(total)
    src = RandomSource(11)
    pieces = np.concatenate([src.normals(c) for c in chunks])
    assert np.array_equal(whole, pieces)


def test_interleaved_scalar_matches_block_draws():
    src = RandomSource(5)
    scalar = [(src.normal(), src.uniform()) for _ in range(BLOCK + 10)]
    blk = RandomSource(5)
    z1, u1 = blk.normals(BLOCK), blk.uniforms(BLOCK)
    z2, u2 = blk.normals(10), blk.uniforms(10)
    z, u = np.concatenate([z1, z2]), np.concatenate([u1, u2])
    assert np.array_equal(np.array(scalar), np.column_stack([z, u]))


def test_adding_replicas_keeps_existing_streams():
    few = [s.normals(4) for s in replica_sources(3, 2)]
    many = [s.normals(4) for s in replica_sources(3, 5)]
    assert all(np.array_equal(a, b) for a, b in zip(few, many))


def test_key_range_checked():
    with pytest.raises(ValueError):
        philox(-1)
    with pytest.raises(ValueError):
        philox(0, replica=2**32)
