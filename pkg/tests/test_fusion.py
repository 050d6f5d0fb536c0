import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedthreat.fusion import (
    ExtractorSpec,
    ModalityFeature,
    extract,
    extract_batch,
    fuse,
    fuse_batch,
    normalize_weights,
)


def feats(*vectors):
    return [ModalityFeature(k, np.asarray(v, dtype=float)) for k, v in enumerate(vectors)]


class TestExtract:
    def test_identity(self):
        out = extract(ExtractorSpec(0), [1, 2, 3])
        np.testing.assert_array_equal(out.vector, [1.0, 2.0, 3.0])
        assert out.modality_id == 0

    def test_affine_zero_matrix(self):
        spec = ExtractorSpec(1, "affine", matrix=np.zeros((4, 3)))
        np.testing.assert_array_equal(extract(spec, [5.0, -1.0, 2.0]).vector, np.zeros(4))

    def test_affine_projects_and_pads(self):
        spec = ExtractorSpec(0, "affine", matrix=[[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]], offset=[0.0, 0.0, 1.0])
        np.testing.assert_array_equal(extract(spec, [3.0, 4.0]).vector, [3.0, 8.0, 1.0])

    def test_hash_text_deterministic(self):
        spec = ExtractorSpec(2, "hash-text", buckets=8)
        a = extract(spec, "Failed login from 10.0.0.7 failed")
        b = extract(spec, "Failed login from 10.0.0.7 failed")
        np.testing.assert_array_equal(a.vector, b.vector)
        assert a.vector.sum() == 8  # "10.0.0.7" is four \w+ tokens

    def test_hash_text_case_insensitive(self):
        spec = ExtractorSpec(0, "hash-text", buckets=16)
        np.testing.assert_array_equal(extract(spec, "ALERT").vector, extract(spec, "alert").vector)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            extract(ExtractorSpec(0, "affine", matrix=np.eye(2)), [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            extract(ExtractorSpec(0), "text")
        with pytest.raises(ValueError):
            extract(ExtractorSpec(0, "hash-text", buckets=4), [1.0])
        with pytest.raises(ValueError):
            extract(ExtractorSpec(0), [[1.0]])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ExtractorSpec(0, "cnn")
        with pytest.raises(ValueError):
            ExtractorSpec(0, "affine")
        with pytest.raises(ValueError):
            ExtractorSpec(0, "hash-text")

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        spec = ExtractorSpec(0, "affine", matrix=rng.normal(size=(3, 5)), offset=rng.normal(size=3))
        X = rng.normal(size=(7, 5))
        batch = extract_batch(spec, X)
        for i in range(7):
            np.testing.assert_allclose(batch[i], extract(spec, X[i]).vector, rtol=1e-13)

    def test_dict_round_trip(self):
        spec = ExtractorSpec(3, "affine", matrix=[[1.0, 2.0]], offset=[0.5])
        again = ExtractorSpec.from_dict(spec.to_dict())
        np.testing.assert_array_equal(again.matrix, spec.matrix)
        assert again.modality_id == 3


class TestFuse:
    def test_single_modality(self):
        np.testing.assert_array_equal(fuse(feats([1.5, -2.0]), [1.0]), [1.5, -2.0])

    def test_zero_weights(self):
        np.testing.assert_array_equal(fuse(feats([1, 2], [3, 4]), [0, 0]), [0.0, 0.0])

    def test_half_half(self):
        np.testing.assert_array_equal(fuse(feats([2, 0], [0, 2]), [0.5, 0.5]), [1.0, 1.0])

    def test_missing_or_duplicate_modality(self):
        with pytest.raises(ValueError):
            fuse([ModalityFeature(0, np.ones(2)), ModalityFeature(0, np.ones(2))], [1, 1])
        with pytest.raises(ValueError):
            fuse([ModalityFeature(1, np.ones(2))], [1])

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            fuse(feats([1, 2], [1, 2, 3]), [1, 1])
        with pytest.raises(ValueError):
            fuse(feats([1, 2], [3, 4]), [1, 1, 1])

    @given(st.integers(0, 2**32 - 1), st.floats(0, 100))
    def test_linear_in_weights(self, seed, a):
        rng = np.random.default_rng(seed)
        fs = feats(*rng.normal(size=(3, 5)))
        w = rng.random(3)
        np.testing.assert_allclose(fuse(fs, a * w), a * fuse(fs, w), rtol=1e-12, atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_permutation_safe(self, seed):
        rng = np.random.default_rng(seed)
        fs = feats(*rng.normal(size=(4, 3)))
        w = rng.random(4)
        shuffled = [fs[i] for i in rng.permutation(4)]
        np.testing.assert_array_equal(fuse(shuffled, w), fuse(fs, w))

    def test_one_hot_returns_modality(self):
        rng = np.random.default_rng(1)
        vecs = rng.normal(size=(3, 6))
        for k in range(3):
            np.testing.assert_array_equal(fuse(feats(*vecs), np.eye(3)[k]), vecs[k])

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        mods = [rng.normal(size=(5, 3)) for _ in range(3)]
        w = [0.2, 0.3, 0.5]
        out = fuse_batch(mods, w)
        for i in range(5):
            np.testing.assert_array_equal(out[i], fuse(feats(*(M[i] for M in mods)), w))


class TestNormalizeWeights:
    def test_pair(self):
        np.testing.assert_array_equal(normalize_weights([1, 1]), [0.5, 0.5])

    def test_singleton(self):
        np.testing.assert_array_equal(normalize_weights([1]), [1.0])

    def test_with_zero(self):
        np.testing.assert_array_equal(normalize_weights([2, 0, 2]), [0.5, 0.0, 0.5])

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=20).filter(lambda w: sum(w) > 1e-3))
    def test_sums_to_one(self, w):
        assert abs(normalize_weights(w).sum() - 1.0) <= 1e-12

    def test_all_zero(self):
        with pytest.raises(ValueError):
            normalize_weights([0, 0])

    def test_negative(self):
        with pytest.raises(ValueError):
            normalize_weights([1, -1])
