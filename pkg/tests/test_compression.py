import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedthreat.federation import CompressionSpec, compress, decompress


def topk(v, k):
    return decompress(compress(v, CompressionSpec("topk", k)))


def test_keeps_largest_magnitudes():
    sp = compress([0.1, -5.0, 3.0], CompressionSpec("topk", 2))
    np.testing.assert_array_equal(sp.indices, [1, 2])
    np.testing.assert_array_equal(sp.values, [-5.0, 3.0])
    np.testing.assert_array_equal(decompress(sp), [0.0, -5.0, 3.0])


def test_tie_keeps_lower_index():
    v = np.zeros(9)
    v[2], v[7] = 4.0, -4.0
    np.testing.assert_array_equal(compress(v, CompressionSpec("topk", 1)).indices, [2])


def test_full_k_round_trips():
    v = np.array([1e-300, -2.5, 0.0, 7.0])
    np.testing.assert_array_equal(topk(v, 4), v)


def test_none_is_identity():
    v = np.array([3.0, -0.0, 1.5])
    np.testing.assert_array_equal(decompress(compress(v, CompressionSpec())), v)


def test_errors():
    with pytest.raises(ValueError):
        CompressionSpec("topk", 0)
    with pytest.raises(ValueError):
        CompressionSpec("zip", 3)
    with pytest.raises(ValueError):
        compress([1.0, 2.0], CompressionSpec("topk", 3))


@given(st.lists(st.floats(-1e9, 1e9), min_size=1, max_size=30), st.integers(1, 30))
def test_at_most_k_nonzeros_from_original(values, k):
    v = np.array(values)
    k = min(k, v.size)
    out = topk(v, k)
    assert np.count_nonzero(out) <= k
    kept = out != 0
    np.testing.assert_array_equal(out[kept], v[kept])
    # nothing dropped is larger than anything kept
    if kept.any() and (~kept).any():
        assert np.abs(v[~kept]).max() <= np.abs(v[kept]).min()
