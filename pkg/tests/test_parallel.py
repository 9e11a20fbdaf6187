import numpy as np
from hypothesis import given, settings, strategies as st

from tiltcond.parallel import block_rng, block_sizes, run_blocks


def _draw(size, rng):
    return rng.standard_normal(size)


@settings(max_examples=50, deadline=None)
@given(total=st.integers(0, 10_000), block=st.integers(1, 3000))
def test_block_sizes_partition(total, block):
    sizes = block_sizes(total, block)
    assert sum(sizes) == total
    assert all(0 < s <= block for s in sizes)
    assert all(s == block for s in sizes[:-1])


def test_results_independent_of_threads():
    ref = np.concatenate(run_blocks(_draw, 5500, 11, threads=1))
    for threads in (2, 3, 8):
        np.testing.assert_array_equal(np.concatenate(run_blocks(_draw, 5500, 11, threads=threads)), ref)


def test_blocks_use_their_own_streams():
    out = run_blocks(_draw, 2500, 3)
    assert [b.size for b in out] == [1000, 1000, 500]
    np.testing.assert_array_equal(out[2], block_rng(3, 2).standard_normal(500))
    assert not np.array_equal(out[0][:500], out[2])


def test_streams_are_disjoint():
    a = np.concatenate(run_blocks(_draw, 100, 5, stream=(0, 0)))
    b = np.concatenate(run_blocks(_draw, 100, 5, stream=(1, 0)))
    c = np.concatenate(run_blocks(_draw, 100, 5, stream=(0, 0)))
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, c)
