"""Estimator-style wrappers: params, fitted state, and score recovery."""

from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from relval.exceptions import DataError
from relval.factor import ConfirmatoryFactorAnalysis, ExploratoryFactorAnalysis
from relval.simulate import FactorSimSpec, generate_factor

TWO_FACTOR_LOADINGS = np.array([
    [0.80, 0.0], [0.75, 0.0], [0.70, 0.0],
    [0.0, 0.75], [0.0, 0.70], [0.0, 0.65],
])


def two_factor_data(n=4000, seed=50):
    spec = FactorSimSpec(
        n_candidates=n,
        loadings=TWO_FACTOR_LOADINGS,
        uniquenesses=1.0 - (TWO_FACTOR_LOADINGS ** 2).sum(axis=1),
        seed=seed,
    )
    data = generate_factor(spec)
    return data.observed.values, data.latent_factors


class TestExploratoryEstimator:
    def test_get_set_params_and_clone(self):
        est = ExploratoryFactorAnalysis(n_factors=2, rotation="varimax")
        assert est.get_params() == {"n_factors": 2, "rotation": "varimax",
                                    "max_iter": 1000, "tol": 1e-6}
        est.set_params(tol=1e-8)
        assert est.tol == 1e-8
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_requires_fit_before_transform(self):
        x, _ = two_factor_data(n=50)
        with pytest.raises(NotFittedError):
            ExploratoryFactorAnalysis(n_factors=1).transform(x)

    def test_fitted_attributes(self):
        x, _ = two_factor_data(n=300)
        est = ExploratoryFactorAnalysis(n_factors=2).fit(x)
        assert est.loadings_.shape == (6, 2)
        assert est.uniquenesses_.shape == (6,)
        assert est.n_factors_ == 2
        assert est.correlation_.shape == (6, 6)
        assert est.eigenvalues_[0] >= est.eigenvalues_[-1]
        assert est.model_.converged

    def test_kaiser_default_finds_two_factors(self):
        x, _ = two_factor_data(n=4000)
        est = ExploratoryFactorAnalysis().fit(x)
        assert est.n_factors_ == 2

    def test_varimax_recovers_cluster_loadings(self):
        x, _ = two_factor_data(n=4000)
        est = ExploratoryFactorAnalysis(n_factors=2, rotation="varimax").fit(x)
        got = est.loadings_
        order = np.argsort(np.argmax(np.abs(got), axis=0))
        aligned = got[:, order]
        np.testing.assert_allclose(aligned, TWO_FACTOR_LOADINGS, atol=0.06)
        assert est.model_.rotation == "varimax"

    def test_transform_correlates_with_latents(self):
        x, f = two_factor_data(n=4000)
        est = ExploratoryFactorAnalysis(n_factors=2, rotation="varimax").fit(x)
        scores = est.transform(x)
        assert scores.shape == (4000, 2)
        # each latent factor must be well tracked by some score column
        corr = np.corrcoef(np.hstack([f, scores]), rowvar=False)[:2, 2:]
        best = np.abs(corr).max(axis=1)
        assert np.all(best > 0.85)

    def test_transform_uses_training_moments(self):
        x, _ = two_factor_data(n=500)
        est = ExploratoryFactorAnalysis(n_factors=2).fit(x)
        shifted = est.transform(x + 10.0)
        base = est.transform(x)
        # a constant shift moves standardized scores by a constant offset,
        # not by a rescaling
        np.testing.assert_allclose(shifted - shifted.mean(axis=0),
                                   base - base.mean(axis=0), atol=1e-8)

    def test_input_validation(self):
        x, _ = two_factor_data(n=50)
        with pytest.raises(DataError, match="rotation"):
            ExploratoryFactorAnalysis(rotation="promax").fit(x)
        flat = x.copy()
        flat[:, 0] = 3.0
        with pytest.raises(DataError, match="constant"):
            ExploratoryFactorAnalysis(n_factors=1).fit(flat)
        est = ExploratoryFactorAnalysis(n_factors=1).fit(x)
        with pytest.raises(DataError, match="columns"):
            est.transform(x[:, :3])


class TestConfirmatoryEstimator:
    def test_pattern_required(self):
        x, _ = two_factor_data(n=50)
        with pytest.raises(DataError, match="pattern"):
            ConfirmatoryFactorAnalysis().fit(x)

    def test_planted_structure_recovered(self):
        x, _ = two_factor_data(n=4000)
        est = ConfirmatoryFactorAnalysis(
            pattern=TWO_FACTOR_LOADINGS != 0).fit(x)
        assert est.fit_.converged
        assert est.discrepancy_ < 0.02
        np.testing.assert_allclose(est.loadings_, TWO_FACTOR_LOADINGS,
                                   atol=0.06)

    def test_clone_keeps_pattern(self):
        est = ConfirmatoryFactorAnalysis(pattern=TWO_FACTOR_LOADINGS != 0)
        twin = clone(est)
        np.testing.assert_array_equal(twin.pattern, est.pattern)

    def test_transform_shape(self):
        x, _ = two_factor_data(n=1000)
        est = ConfirmatoryFactorAnalysis(
            pattern=TWO_FACTOR_LOADINGS != 0).fit(x)
        assert est.transform(x).shape == (1000, 2)
        with pytest.raises(NotFittedError):
            ConfirmatoryFactorAnalysis(
                pattern=TWO_FACTOR_LOADINGS != 0).transform(x)
