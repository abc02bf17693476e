"""Principal component analysis against an eigendecomposition oracle."""

import numpy as np
import pytest

from engagekit.errors import (
    DataError,
    DegenerateInputError,
    DimensionMismatchError,
    ParseError,
)
from engagekit.pca import (
    fit_pca,
    load_pca,
    pca_from_dict,
    pca_inverse_transform,
    pca_to_dict,
    pca_transform,
    save_pca,
)

from .oracles import pca_by_eigh


class TestAgainstEigh:
    def test_eigenvalues_match(self, rng):
        for _ in range(10):
            x = rng.standard_normal((40, 6)) @ rng.standard_normal((6, 6))
            model = fit_pca(x, target_fraction=1.0)
            want_vals, _ = pca_by_eigh(x)
            assert model.explained_variance == pytest.approx(
                want_vals, rel=1e-9, abs=1e-12
            )

    def test_components_match_up_to_sign(self, rng):
        x = rng.standard_normal((60, 5)) * np.array([5.0, 3.0, 1.0, 0.5, 0.1])
        model = fit_pca(x, target_fraction=1.0)
        _, want_vecs = pca_by_eigh(x)
        for row, ref in zip(model.components, want_vecs):
            dot = abs(float(np.dot(row, ref)))
            assert dot == pytest.approx(1.0, abs=1e-8)

    def test_sign_convention(self, rng):
        for _ in range(10):
            x = rng.standard_normal((30, 4))
            model = fit_pca(x)
            for row in model.components:
                assert row[np.argmax(np.abs(row))] > 0


class TestComponentCount:
    def test_keeps_smallest_sufficient_k(self, rng):
        # variances 100, 25, ~0.01: two components already carry > 99%
        base = rng.standard_normal((500, 3))
        x = base * np.array([10.0, 5.0, 0.1])
        model = fit_pca(x, target_fraction=0.99)
        assert model.n_components == 2
        assert model.retained_fraction >= 0.99

    def test_full_fraction_keeps_all(self, rng):
        x = rng.standard_normal((30, 4))
        assert fit_pca(x, target_fraction=1.0).n_components == 4

    def test_tiny_fraction_keeps_one(self, rng):
        x = rng.standard_normal((30, 4))
        assert fit_pca(x, target_fraction=1e-6).n_components == 1

    def test_exact_boundary_not_overshot(self):
        # two equal-variance orthogonal directions: each carries exactly 0.5
        x = np.array(
            [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] * 5
        )
        assert fit_pca(x, target_fraction=0.5).n_components == 1
        assert fit_pca(x, target_fraction=0.75).n_components == 2


class TestTransform:
    def test_round_trip_full_rank(self, rng):
        x = rng.standard_normal((25, 4))
        model = fit_pca(x, target_fraction=1.0)
        z = pca_transform(model, x)
        back = pca_inverse_transform(model, z)
        assert back == pytest.approx(x, abs=1e-10)

    def test_single_vector_shapes(self, rng):
        x = rng.standard_normal((25, 4))
        model = fit_pca(x, target_fraction=1.0)
        z = pca_transform(model, x[0])
        assert z.shape == (model.n_components,)
        assert pca_inverse_transform(model, z).shape == (4,)

    def test_projection_decorrelates(self, rng):
        x = rng.standard_normal((300, 5)) @ rng.standard_normal((5, 5))
        model = fit_pca(x, target_fraction=1.0)
        z = pca_transform(model, x)
        cov = np.cov(z, rowvar=False)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 1e-8

    def test_width_mismatch(self, rng):
        model = fit_pca(rng.standard_normal((10, 3)))
        with pytest.raises(DimensionMismatchError):
            pca_transform(model, np.zeros(4))
        with pytest.raises(DimensionMismatchError):
            pca_inverse_transform(model, np.zeros(model.n_components + 1))


class TestValidation:
    def test_needs_two_rows(self):
        with pytest.raises(DegenerateInputError):
            fit_pca(np.zeros((1, 3)))

    def test_zero_variance(self):
        with pytest.raises(DegenerateInputError):
            fit_pca(np.ones((5, 3)))

    def test_non_finite(self):
        x = np.zeros((5, 3))
        x[0, 0] = np.inf
        with pytest.raises(DataError):
            fit_pca(x)

    def test_bad_fraction(self, rng):
        x = rng.standard_normal((5, 3))
        with pytest.raises(DataError):
            fit_pca(x, target_fraction=0.0)
        with pytest.raises(DataError):
            fit_pca(x, target_fraction=1.5)


class TestSerialization:
    def test_dict_round_trip(self, rng):
        model = fit_pca(rng.standard_normal((20, 4)), target_fraction=0.9)
        clone = pca_from_dict(pca_to_dict(model))
        assert np.array_equal(clone.mean, model.mean)
        assert np.array_equal(clone.components, model.components)
        assert clone.retained_fraction == model.retained_fraction

    def test_file_round_trip(self, rng, tmp_path):
        model = fit_pca(rng.standard_normal((20, 4)))
        path = tmp_path / "pca.json"
        save_pca(path, model)
        clone = load_pca(path)
        x = rng.standard_normal(4)
        assert pca_transform(clone, x) == pytest.approx(
            pca_transform(model, x), abs=0
        )

    def test_malformed(self, tmp_path):
        p = tmp_path / "pca.json"
        p.write_text("[1, 2]")
        with pytest.raises(ParseError):
            load_pca(p)
