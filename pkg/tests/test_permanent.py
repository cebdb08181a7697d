import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photon_overlaps.permanent import (
    batch_permanent,
    permanent,
    permanent_naive,
    permanent_ryser,
    permutation_table,
)


def _random_complex(seed, n):
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_ryser_matches_permutation_sum(seed, n):
    m = _random_complex(seed, n)
    assert permanent_ryser(m) == pytest.approx(permanent_naive(m), rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 7])
def test_all_ones_gives_factorial(n):
    assert permanent(np.ones((n, n))) == pytest.approx(math.factorial(n))


def test_identity_and_empty():
    assert permanent(np.eye(6)) == pytest.approx(1.0)
    assert permanent(np.zeros((0, 0))) == 1.0


def test_two_by_two():
    m = np.array([[1, 2], [3, 4]])
    assert permanent(m) == pytest.approx(10)


def test_invariant_under_row_and_column_permutation():
    m = _random_complex(3, 5)
    p = permanent(m)
    assert permanent(m[[2, 0, 4, 1, 3]][:, [1, 4, 3, 0, 2]]) == pytest.approx(p)
    assert permanent(m.T) == pytest.approx(p)


def test_batch_matches_single():
    stack = np.stack([_random_complex(s, 3) for s in range(5)])
    np.testing.assert_allclose(batch_permanent(stack), [permanent(a) for a in stack])
    stack5 = np.stack([_random_complex(s, 5) for s in range(3)]).reshape(3, 1, 5, 5)
    out = batch_permanent(stack5)
    assert out.shape == (3, 1)
    np.testing.assert_allclose(out[:, 0], [permanent(a) for a in stack5[:, 0]])


def test_guard_limits():
    with pytest.raises(ValueError):
        permanent(np.ones((13, 13)))
    with pytest.raises(ValueError):
        permanent(np.ones((2, 3)))


def test_permutation_table_identity_first():
    table = permutation_table(4)
    assert table.shape == (24, 4)
    assert list(table[0]) == [0, 1, 2, 3]
