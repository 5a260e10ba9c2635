"""Reliability estimators against closed-form test-theory identities."""

from __future__ import annotations

import numpy as np
import pytest
from conftest import matrix_with_exact_cov

from relval.exceptions import ConstantInputError, DataError
from relval.ingest import ScoreMatrix
from relval.reliability import cronbach_alpha, sem, spearman_brown, split_half
from relval.reliability import test_retest as retest


def compound_symmetric(j: int, rho: float) -> np.ndarray:
    """Unit-variance covariance with a common inter-item correlation."""
    return np.full((j, j), rho) + np.eye(j) * (1.0 - rho)


class TestSem:
    def test_known_value(self):
        # 10 * sqrt(0.09) = 3 exactly.
        assert sem(10.0, 0.91) == pytest.approx(3.0, abs=1e-12)

    def test_endpoints(self):
        assert sem(5.0, 1.0) == 0.0
        assert sem(5.0, 0.0) == 5.0

    def test_domain(self):
        with pytest.raises(DataError):
            sem(-1.0, 0.5)
        with pytest.raises(DataError):
            sem(1.0, 1.5)
        with pytest.raises(DataError):
            sem(1.0, -0.1)


class TestSpearmanBrown:
    def test_known_values(self):
        assert spearman_brown(0.5) == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert spearman_brown(1.0) == 1.0
        assert spearman_brown(0.0) == 0.0

    def test_monotone(self):
        rs = np.linspace(-0.9, 1.0, 50)
        stepped = [spearman_brown(float(r)) for r in rs]
        assert all(b > a for a, b in zip(stepped, stepped[1:]))

    def test_domain(self):
        with pytest.raises(DataError):
            spearman_brown(-1.0)
        with pytest.raises(DataError):
            spearman_brown(1.0001)


class TestCronbachAlpha:
    def test_two_item_closed_form(self):
        # var(X) = 1 + 1 + 2*0.5 = 3; alpha = 2 * (1 - 2/3) = 2/3.
        m = matrix_with_exact_cov(compound_symmetric(2, 0.5), n=30)
        assert cronbach_alpha(m).estimate == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_three_item_closed_form(self):
        # var(X) = 3 + 6*0.6 = 6.6; alpha = 1.5 * (1 - 3/6.6) = 9/11.
        m = matrix_with_exact_cov(compound_symmetric(3, 0.6), n=30)
        assert cronbach_alpha(m).estimate == pytest.approx(9.0 / 11.0, abs=1e-9)

    def test_sem_uses_total_sd(self):
        m = matrix_with_exact_cov(compound_symmetric(3, 0.6), n=30)
        est = cronbach_alpha(m)
        # total sd = sqrt(6.6), sem = sqrt(6.6) * sqrt(1 - 9/11) = sqrt(1.2).
        assert est.sem == pytest.approx(np.sqrt(1.2), abs=1e-9)

    def test_item_order_invariance(self):
        rng = np.random.default_rng(7)
        m = matrix_with_exact_cov(compound_symmetric(5, 0.4), n=40)
        base = cronbach_alpha(m).estimate
        for _ in range(5):
            perm = rng.permutation(5)
            shuffled = ScoreMatrix(m.candidates,
                                   [m.items[p] for p in perm],
                                   m.values[:, perm])
            assert cronbach_alpha(shuffled).estimate == pytest.approx(
                base, abs=1e-12)

    def test_negative_alpha_reported_raw_and_clamped(self):
        cov = np.array([[1.0, -0.4], [-0.4, 1.0]])
        m = matrix_with_exact_cov(cov, n=30)
        # var(X) = 1.2; alpha = 2 * (1 - 2/1.2) = -4/3.
        est = cronbach_alpha(m)
        assert est.estimate == pytest.approx(-4.0 / 3.0, abs=1e-9)
        assert est.estimate_clamped == 0.0
        assert any("clamped" in w for w in est.warnings)

    def test_constant_item_warns_but_computes(self):
        m = matrix_with_exact_cov(compound_symmetric(2, 0.5), n=30)
        with_flat = ScoreMatrix(
            m.candidates, list(m.items) + ["flat"],
            np.hstack([m.values, np.full((30, 1), 7.0)]))
        est = cronbach_alpha(with_flat)
        assert any("flat" in w for w in est.warnings)
        assert np.isfinite(est.estimate)

    def test_constant_totals_error(self):
        values = np.array([[1.0, -1.0], [2.0, -2.0], [3.0, -3.0],
                           [4.0, -4.0]])
        m = ScoreMatrix(["a", "b", "c", "d"], ["x", "negx"], values)
        with pytest.raises(ConstantInputError):
            cronbach_alpha(m)

    def test_size_requirements(self):
        m = ScoreMatrix(["a", "b"], ["i1", "i2"],
                        np.array([[1.0, 2.0], [3.0, 4.0]]))
        with pytest.raises(DataError, match="3 candidates"):
            cronbach_alpha(m)
        one_item = ScoreMatrix(["a", "b", "c"], ["i1"],
                               np.array([[1.0], [2.0], [3.0]]))
        with pytest.raises(DataError, match="2 items"):
            cronbach_alpha(one_item)


class TestSplitHalf:
    def test_parallel_items_match_alpha(self):
        # Compound symmetry J=4, rho=0.5: any balanced split correlates
        # halves at k*rho/(1 + (k-1)*rho) = 2/3, stepping up to 0.8 --
        # identical to alpha, as parallel-item theory requires.
        m = matrix_with_exact_cov(compound_symmetric(4, 0.5), n=40)
        est = split_half(m, scheme="odd-even")
        assert est.estimate == pytest.approx(0.8, abs=1e-9)
        assert cronbach_alpha(m).estimate == pytest.approx(0.8, abs=1e-9)
        split = est.details["splits"][0]
        assert split["half_correlation"] == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_all_balanced_splits_agree_under_exchangeability(self):
        m = matrix_with_exact_cov(compound_symmetric(4, 0.5), n=40)
        for seed in range(10):
            est = split_half(m, scheme="random", seed=seed)
            assert est.estimate == pytest.approx(0.8, abs=1e-9)

    def test_half_item_bookkeeping(self):
        m = matrix_with_exact_cov(compound_symmetric(4, 0.5), n=40)
        odd_even = split_half(m, scheme="odd-even").details["splits"][0]
        assert odd_even["half1_items"] == ["i000", "i002"]
        assert odd_even["half2_items"] == ["i001", "i003"]
        first_second = split_half(m, scheme="first-second").details["splits"][0]
        assert first_second["half1_items"] == ["i000", "i001"]
        assert first_second["half2_items"] == ["i002", "i003"]

    def test_multi_split_averages(self):
        rng = np.random.default_rng(11)
        m = ScoreMatrix([f"c{i}" for i in range(50)],
                        [f"i{k}" for k in range(9)],
                        rng.standard_normal((50, 9)) + rng.standard_normal((50, 1)))
        est = split_half(m, scheme="random", seed=3, n_splits=4)
        splits = est.details["splits"]
        assert len(splits) == 4
        assert [s["seed"] for s in splits] == [3, 4, 5, 6]
        assert est.estimate == pytest.approx(
            np.mean([s["stepped_up"] for s in splits]), abs=1e-12)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(12)
        m = ScoreMatrix([f"c{i}" for i in range(30)],
                        [f"i{k}" for k in range(6)],
                        rng.standard_normal((30, 6)))
        a = split_half(m, scheme="random", seed=42, n_splits=3)
        b = split_half(m, scheme="random", seed=42, n_splits=3)
        assert a.estimate == b.estimate
        assert a.details == b.details

    def test_scheme_constraints(self):
        m = matrix_with_exact_cov(compound_symmetric(4, 0.5), n=40)
        with pytest.raises(DataError, match="deterministic"):
            split_half(m, scheme="odd-even", n_splits=2)
        with pytest.raises(DataError, match="seed"):
            split_half(m, scheme="random")
        one_item = ScoreMatrix(["a", "b", "c"], ["i1"],
                               np.array([[1.0], [2.0], [3.0]]))
        with pytest.raises(DataError, match="2 items"):
            split_half(one_item)


def _retest_pair(cross_cov: float, n: int = 30, seed: int = 0):
    """Two 2-item administrations whose totals correlate at 4c/3 exactly."""
    j = 2
    cov = np.block([
        [compound_symmetric(j, 0.5), np.full((j, j), cross_cov)],
        [np.full((j, j), cross_cov), compound_symmetric(j, 0.5)],
    ])
    wide = matrix_with_exact_cov(cov, n=n, seed=seed)
    m1 = ScoreMatrix(wide.candidates, ["i1", "i2"], wide.values[:, :j].copy())
    m2 = ScoreMatrix(wide.candidates, ["i1", "i2"], wide.values[:, j:].copy())
    return m1, m2


class TestTestRetest:
    def test_closed_form_correlation(self):
        # Each admin total has variance 3; cross-covariance 4 * 0.375 = 1.5.
        m1, m2 = _retest_pair(0.375)
        est = retest(m1, m2)
        assert est.estimate == pytest.approx(0.5, abs=1e-9)
        assert est.sem == pytest.approx(np.sqrt(3.0) * np.sqrt(0.5), abs=1e-9)
        lo, hi, level = est.details["fisher_ci"]
        assert lo < 0.5 < hi and level == 0.95

    def test_alignment_by_candidate_id(self):
        m1, m2 = _retest_pair(0.375)
        order = np.random.default_rng(5).permutation(m2.n_candidates)
        shuffled = ScoreMatrix([m2.candidates[i] for i in order],
                               m2.items, m2.values[order, :])
        est = retest(m1, shuffled)
        assert est.estimate == pytest.approx(0.5, abs=1e-9)

    def test_candidate_mismatch_names_examples(self):
        m1, m2 = _retest_pair(0.375)
        renamed = ScoreMatrix(["zz" + c for c in m2.candidates],
                              m2.items, m2.values)
        with pytest.raises(DataError, match="different candidates.*c0000"):
            retest(m1, renamed)

    def test_item_mismatch(self):
        m1, m2 = _retest_pair(0.375)
        relabeled = ScoreMatrix(m2.candidates, ["j1", "j2"], m2.values)
        with pytest.raises(DataError, match="items"):
            retest(m1, relabeled)

    def test_negative_correlation_clamped(self):
        x = np.arange(10.0)
        m1 = ScoreMatrix([f"c{i}" for i in range(10)], ["i1"],
                         x.reshape(-1, 1))
        m2 = ScoreMatrix([f"c{i}" for i in range(10)], ["i1"],
                         (-x).reshape(-1, 1))
        est = retest(m1, m2)
        assert est.estimate == -1.0
        assert est.estimate_clamped == 0.0
        assert any("clamped" in w for w in est.warnings)
        assert est.details["fisher_ci"] is None
