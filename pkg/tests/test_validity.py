"""Criterion validity, attenuation accounting, and MTMM bookkeeping."""

from __future__ import annotations

import numpy as np
import pytest
from conftest import matrix_with_exact_cov

from relval.exceptions import DataError
from relval.ingest import ScoreMatrix
from relval.validity import (
    BLOCKS,
    MtmmTable,
    build_mtmm,
    campbell_fiske,
    criterion_validity,
    disattenuate,
)


def exact_pair(r: float, n: int = 30, seed: int = 0):
    """Two vectors whose sample correlation is exactly ``r``."""
    cov = np.array([[1.0, r], [r, 1.0]])
    m = matrix_with_exact_cov(cov, n=n, seed=seed)
    return m.values[:, 0], m.values[:, 1]


class TestDisattenuate:
    def test_known_value(self):
        # 0.3 / sqrt(0.5 * 0.72) = 0.3 / 0.6 = 0.5.
        assert disattenuate(0.3, 0.5, 0.72) == pytest.approx(0.5, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DataError, match="rel_x"):
            disattenuate(0.3, 1.5, 0.5)
        with pytest.raises(DataError, match="rel_y"):
            disattenuate(0.3, 0.5, -0.1)
        with pytest.raises(DataError, match="0"):
            disattenuate(0.3, 0.0, 0.5)


class TestCriterionValidity:
    def test_without_reliabilities(self):
        x = np.arange(10.0)
        report = criterion_validity(x, 2 * x + 1)
        assert report.r_xy == 1.0
        assert report.n == 10
        assert report.attenuation_bound is None
        assert report.r_disattenuated is None
        assert report.bound_satisfied is None

    def test_full_report_closed_form(self):
        x, y = exact_pair(0.3)
        report = criterion_validity(x, y, rel_x=0.5, rel_y=0.72)
        assert report.r_xy == pytest.approx(0.3, abs=1e-9)
        assert report.attenuation_bound == pytest.approx(0.6, abs=1e-12)
        assert report.bound_margin == pytest.approx(0.3, abs=1e-9)
        assert report.bound_satisfied is True
        assert report.r_disattenuated == pytest.approx(0.5, abs=1e-9)
        assert report.warnings == []
        lo, hi, level = report.ci
        assert lo < 0.3 < hi and level == 0.95

    def test_bound_violation_warns(self):
        x, y = exact_pair(0.9)
        report = criterion_validity(x, y, rel_x=0.5, rel_y=0.72)
        assert report.bound_satisfied is False
        assert report.bound_margin == pytest.approx(-0.3, abs=1e-9)
        assert any("attenuation bound" in w for w in report.warnings)
        # 0.9 / 0.6 = 1.5, reported unclamped with its own warning.
        assert report.r_disattenuated == pytest.approx(1.5, abs=1e-9)
        assert any("unclamped" in w for w in report.warnings)

    def test_slack_absorbs_small_overshoot(self):
        # |r| = 0.63 overshoots the 0.6 bound by less than the 0.05 slack:
        # flagged via the negative margin but not failed.
        x, y = exact_pair(0.63)
        report = criterion_validity(x, y, rel_x=0.5, rel_y=0.72)
        assert report.bound_satisfied is True
        assert report.bound_margin == pytest.approx(-0.03, abs=1e-9)
        assert not any("attenuation bound" in w for w in report.warnings)

    def test_single_reliability_gives_no_bound(self):
        x, y = exact_pair(0.3)
        report = criterion_validity(x, y, rel_x=0.5)
        assert report.attenuation_bound is None
        assert report.r_disattenuated is None

    def test_mode_recorded_and_validated(self):
        x, y = exact_pair(0.3)
        assert criterion_validity(x, y, mode="predictive").mode == "predictive"
        with pytest.raises(DataError, match="mode"):
            criterion_validity(x, y, mode="retrospective")

    def test_to_dict_is_json_ready(self):
        x, y = exact_pair(0.3)
        d = criterion_validity(x, y, rel_x=0.5, rel_y=0.72).to_dict()
        assert set(d) == {"r_xy", "n", "mode", "rel_x", "rel_y",
                          "attenuation_bound", "bound_satisfied",
                          "bound_margin", "r_disattenuated", "ci", "warnings"}
        assert isinstance(d["ci"], list) and len(d["ci"]) == 3


def mtmm_target(convergent=0.8, mono=0.3, hetero=0.15) -> np.ndarray:
    """2 traits x 2 methods correlation target, method-major order.

    Built as I (x) A + (J - I) (x) B with A the within-method trait block
    and B the cross-method block; its eigenvalues are those of A+B and
    A-B, so the defaults are checked positive-definite.
    """
    a = np.array([[1.0, mono], [mono, 1.0]])
    b = np.array([[convergent, hetero], [hetero, convergent]])
    return np.block([[a, b], [b, a]])


def table_from_vectors(corr: np.ndarray, n: int = 40, seed: int = 0,
                       shuffle_insertion: bool = False) -> MtmmTable:
    m = matrix_with_exact_cov(corr, n=n, seed=seed)
    cells = [("t1", "m1"), ("t2", "m1"), ("t1", "m2"), ("t2", "m2")]
    datasets = {cell: m.values[:, i] for i, cell in enumerate(cells)}
    if shuffle_insertion:
        keys = list(datasets)[::-1]
        datasets = {k: datasets[k] for k in keys}
    return build_mtmm(datasets)


class TestMtmmTable:
    def test_method_major_label_order(self):
        t = table_from_vectors(mtmm_target())
        assert t.labels == [("t1", "m1"), ("t2", "m1"),
                            ("t1", "m2"), ("t2", "m2")]
        assert t.index_of("t1", "m2") == 2

    def test_correlations_match_target(self):
        target = mtmm_target()
        t = table_from_vectors(target)
        np.testing.assert_allclose(t.corr, target, atol=1e-9)
        assert t.n_candidates == 40

    def test_insertion_order_invariance(self):
        a = table_from_vectors(mtmm_target())
        b = table_from_vectors(mtmm_target(), shuffle_insertion=True)
        np.testing.assert_array_equal(a.corr, b.corr)
        assert a.labels == b.labels

    def test_blocks_partition_all_pairs(self):
        # 3 traits x 2 methods: 15 off-diagonal pairs split 3/6/6.
        t = MtmmTable(traits=["t1", "t2", "t3"], methods=["m1", "m2"],
                      corr=np.eye(6))
        sizes = {block: len(t.cells(block)) for block in BLOCKS}
        assert sizes == {
            "reliability-diagonal": 0,
            "monotrait-heteromethod": 3,
            "heterotrait-monomethod": 6,
            "heterotrait-heteromethod": 6,
        }
        labels = t.labels
        seen = [t.block_of(labels[i], labels[j])
                for i in range(6) for j in range(i + 1, 6)]
        assert len(seen) == 15

    def test_block_of_diagonal(self):
        t = table_from_vectors(mtmm_target())
        assert t.block_of(("t1", "m1"), ("t1", "m1")) == "reliability-diagonal"
        with pytest.raises(DataError, match="unknown trait"):
            t.block_of(("tx", "m1"), ("t1", "m1"))

    def test_shape_and_symmetry_validation(self):
        with pytest.raises(DataError, match="4x4"):
            MtmmTable(["t1", "t2"], ["m1", "m2"], np.eye(3))
        lopsided = np.eye(4)
        lopsided[0, 1] = 0.5
        with pytest.raises(DataError, match="symmetric"):
            MtmmTable(["t1", "t2"], ["m1", "m2"], lopsided)
        scaled = np.eye(4) * 2.0
        with pytest.raises(DataError, match="unit diagonal"):
            MtmmTable(["t1", "t2"], ["m1", "m2"], scaled)
        with pytest.raises(DataError, match="length 4"):
            MtmmTable(["t1", "t2"], ["m1", "m2"], np.eye(4),
                      reliability_diagonal=np.array([0.8, 0.8]))


class TestBuildMtmm:
    def test_matrices_align_by_candidate_id(self):
        target = mtmm_target()
        wide = matrix_with_exact_cov(target, n=40, seed=1)
        cells = [("t1", "m1"), ("t2", "m1"), ("t1", "m2"), ("t2", "m2")]
        rng = np.random.default_rng(9)
        datasets = {}
        for i, cell in enumerate(cells):
            order = rng.permutation(40)
            datasets[cell] = ScoreMatrix(
                [wide.candidates[p] for p in order], ["only"],
                wide.values[order, i].reshape(-1, 1))
        t = build_mtmm(datasets)
        np.testing.assert_allclose(t.corr, target, atol=1e-9)

    def test_matrix_candidate_mismatch(self):
        target = mtmm_target()
        wide = matrix_with_exact_cov(target, n=40, seed=1)
        cells = [("t1", "m1"), ("t2", "m1"), ("t1", "m2"), ("t2", "m2")]
        datasets = {
            cell: ScoreMatrix(wide.candidates, ["only"],
                              wide.values[:, i].reshape(-1, 1))
            for i, cell in enumerate(cells)
        }
        bad = datasets[("t2", "m2")]
        datasets[("t2", "m2")] = ScoreMatrix(
            ["x" + c for c in bad.candidates], bad.items, bad.values)
        with pytest.raises(DataError, match="different candidates"):
            build_mtmm(datasets)

    def test_missing_cell(self):
        datasets = {
            ("t1", "m1"): np.arange(5.0),
            ("t2", "m1"): np.arange(5.0) ** 2,
            ("t1", "m2"): np.arange(5.0) + 1,
        }
        with pytest.raises(DataError, match=r"missing.*t2.*m2"):
            build_mtmm(datasets)

    def test_needs_two_traits_and_methods(self):
        with pytest.raises(DataError, match="2 traits"):
            build_mtmm({("t1", "m1"): np.arange(5.0),
                        ("t1", "m2"): np.arange(5.0) ** 2})
        with pytest.raises(DataError, match="2 methods"):
            build_mtmm({("t1", "m1"): np.arange(5.0),
                        ("t2", "m1"): np.arange(5.0) ** 2})

    def test_minimum_candidates(self):
        datasets = {
            ("t1", "m1"): np.array([1.0, 2.0, 3.0]),
            ("t2", "m1"): np.array([1.0, 3.0, 2.0]),
            ("t1", "m2"): np.array([2.0, 1.0, 3.0]),
            ("t2", "m2"): np.array([3.0, 2.0, 1.0]),
        }
        with pytest.raises(DataError, match=">= 4"):
            build_mtmm(datasets)

    def test_reliability_diagonal(self):
        from relval.reliability import ReliabilityEstimate
        target = mtmm_target()
        m = matrix_with_exact_cov(target, n=40, seed=2)
        cells = [("t1", "m1"), ("t2", "m1"), ("t1", "m2"), ("t2", "m2")]
        datasets = {cell: m.values[:, i] for i, cell in enumerate(cells)}
        rels = {cell: 0.7 for cell in cells}
        rels[("t1", "m1")] = ReliabilityEstimate(
            method="alpha", estimate=0.85, estimate_clamped=0.85,
            n_candidates=40, n_items=4)
        t = build_mtmm(datasets, reliabilities=rels)
        assert t.reliability_diagonal[t.index_of("t1", "m1")] == 0.85
        assert t.reliability_diagonal[t.index_of("t2", "m2")] == 0.7

        with pytest.raises(DataError, match="missing"):
            build_mtmm(datasets, reliabilities={("t1", "m1"): 0.8})
        rels[("t2", "m1")] = 1.2
        with pytest.raises(DataError, match=r"\[0, 1\]"):
            build_mtmm(datasets, reliabilities=rels)


class TestCampbellFiske:
    def test_clean_table_passes_both(self):
        t = table_from_vectors(mtmm_target())
        summary = campbell_fiske(t)
        assert summary.convergent_pass is True
        assert summary.discriminant_pass is True
        assert summary.violations == []
        assert summary.convergent_mean == pytest.approx(0.8, abs=1e-9)
        assert summary.discriminant_mono_mean == pytest.approx(0.3, abs=1e-9)
        assert summary.discriminant_hetero_mean == pytest.approx(0.15, abs=1e-9)

    def test_identical_measures_fail_discriminant(self):
        # Every cell the same vector: all correlations are 1, so no
        # monotrait value *strictly* exceeds the adjacent heterotrait ones.
        vec = np.array([3.0, 1.0, 4.0, 1.5, 9.0])
        datasets = {(t, m): vec for t in ("t1", "t2") for m in ("m1", "m2")}
        summary = campbell_fiske(build_mtmm(datasets))
        assert summary.convergent_pass is True
        assert summary.discriminant_pass is False
        assert len(summary.violations) > 0

    def test_single_weak_cell_named_in_violations(self):
        corr = mtmm_target()
        # Depress the (t1,m1)-(t1,m2) convergent cell below the 0.3
        # monomethod correlations it must dominate.
        corr[0, 2] = corr[2, 0] = 0.25
        t = MtmmTable(["t1", "t2"], ["m1", "m2"], corr)
        summary = campbell_fiske(t)
        assert summary.convergent_pass is True  # mean 0.525, all positive
        assert summary.discriminant_pass is False
        assert len(summary.violations) == 2
        for v in summary.violations:
            assert "t1/m1" in v and "t1/m2" in v and "0.2500" in v

    def test_negative_convergent_cell_fails_convergent(self):
        corr = mtmm_target()
        corr[0, 2] = corr[2, 0] = -0.1
        summary = campbell_fiske(MtmmTable(["t1", "t2"], ["m1", "m2"], corr))
        assert summary.convergent_pass is False
        assert any("<= 0" in v for v in summary.violations)

    def test_threshold_is_configurable(self):
        corr = mtmm_target(convergent=0.45, mono=0.2, hetero=0.1)
        t = MtmmTable(["t1", "t2"], ["m1", "m2"], corr)
        assert campbell_fiske(t).convergent_pass is False
        assert campbell_fiske(t, convergent_threshold=0.4).convergent_pass
        loose = campbell_fiske(t, convergent_threshold=0.4)
        assert loose.convergent_threshold == 0.4
        assert loose.discriminant_pass is True
