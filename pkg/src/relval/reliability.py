"""Reliability estimation for candidate-by-item score matrices.

A score matrix is treated as a test: items are the test's questions,
candidates are the examinees, and a candidate's total score is the row
sum. Reliability is the share of total-score variance attributable to
stable differences between candidates rather than to measurement noise.
Three estimators are provided: test-retest correlation across repeated
administrations, split-half with the Spearman-Brown step-up, and
Cronbach's alpha from the item covariance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConstantInputError, DataError
from .ingest import ScoreMatrix, split_matrix
from .stats import pearson, variance

_METHODS = ("test-retest", "split-half", "alpha")


@dataclass
class ReliabilityEstimate:
    """A reliability coefficient with its provenance.

    ``estimate`` is the raw value and may fall outside [0, 1] in small
    samples; ``estimate_clamped`` is the same value clipped into [0, 1]
    for use wherever a proportion of variance is required (e.g. the
    standard error of measurement). ``warnings`` records any clamping
    or other caveats.
    """

    method: str
    estimate: float
    estimate_clamped: float
    n_candidates: int
    n_items: int
    sem: float | None = None
    details: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in _METHODS:
            raise DataError(f"unknown reliability method {self.method!r}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimate": self.estimate,
            "estimate_clamped": self.estimate_clamped,
            "n_candidates": self.n_candidates,
            "n_items": self.n_items,
            "sem": self.sem,
            "details": self.details,
            "warnings": list(self.warnings),
        }


@dataclass
class SplitHalfResult:
    """One split of a test into halves, with raw and stepped-up estimates."""

    scheme: str
    half_correlation: float
    stepped_up: float
    half1_items: list[str]
    half2_items: list[str]
    seed: int | None = None


def _clamp_unit(value: float, warnings: list[str], what: str) -> float:
    if value < 0.0:
        warnings.append(f"{what} estimate {value:.6g} < 0; clamped to 0")
        return 0.0
    if value > 1.0:
        warnings.append(f"{what} estimate {value:.6g} > 1; clamped to 1")
        return 1.0
    return value


def sem(total_sd: float, reliability: float) -> float:
    """Standard error of measurement sd(X) * sqrt(1 - reliability)."""
    if total_sd < 0:
        raise DataError(f"total_sd must be non-negative, got {total_sd}")
    if not 0.0 <= reliability <= 1.0:
        raise DataError(f"reliability must be in [0, 1], got {reliability}")
    return float(total_sd * np.sqrt(1.0 - reliability))


def spearman_brown(half_correlation: float) -> float:
    """Step up a half-test correlation to full-length reliability.

    rho = 2 r / (1 + r). Defined for r in (-1, 1]; r = -1 makes the
    denominator vanish.
    """
    if not -1.0 < half_correlation <= 1.0:
        raise DataError(
            f"half correlation must be in (-1, 1], got {half_correlation}"
        )
    return float(2.0 * half_correlation / (1.0 + half_correlation))


def test_retest(m1: ScoreMatrix, m2: ScoreMatrix) -> ReliabilityEstimate:
    """Correlation of total scores across two administrations.

    Both matrices must cover the same candidates and the same items;
    candidate order is aligned by identifier before correlating.
    """
    if m1.candidates != m2.candidates:
        a, b = set(m1.candidates), set(m2.candidates)
        if a != b:
            missing = sorted(a ^ b)[:5]
            raise DataError(
                f"administrations cover different candidates (e.g. {missing})"
            )
        m1 = m1.sorted_by_candidate()
        m2 = m2.sorted_by_candidate()
    if m1.items != m2.items:
        raise DataError("administrations cover different items")

    t1 = m1.total_scores()
    t2 = m2.total_scores()
    result = pearson(t1, t2)
    warnings: list[str] = []
    clamped = _clamp_unit(result.r, warnings, "test-retest")
    pooled_sd = float(np.sqrt((variance(t1) + variance(t2)) / 2.0))
    return ReliabilityEstimate(
        method="test-retest",
        estimate=result.r,
        estimate_clamped=clamped,
        n_candidates=m1.n_candidates,
        n_items=m1.n_items,
        sem=sem(pooled_sd, clamped),
        details={
            "fisher_ci": list(result.fisher_ci) if result.fisher_ci else None,
        },
        warnings=warnings,
    )


def split_half(m: ScoreMatrix, scheme: str = "odd-even", seed: int | None = None,
               n_splits: int = 1) -> ReliabilityEstimate:
    """Split-half reliability with the Spearman-Brown step-up.

    Items are partitioned into two halves, half totals are correlated,
    and the correlation is stepped up to full test length. For the
    ``random`` scheme, ``n_splits`` independent splits (substreams
    ``seed+0 .. seed+n_splits-1`` of the split RNG) are averaged; the
    deterministic schemes admit only one split.
    """
    if m.n_items < 2:
        raise DataError(f"split-half requires at least 2 items, got {m.n_items}")
    if n_splits < 1:
        raise DataError(f"n_splits must be >= 1, got {n_splits}")
    if scheme != "random" and n_splits != 1:
        raise DataError(f"scheme {scheme!r} is deterministic; n_splits must be 1")

    splits: list[SplitHalfResult] = []
    for k in range(n_splits):
        split_seed = None if seed is None else seed + k
        h1, h2 = split_matrix(m, scheme=scheme, seed=split_seed)
        r = pearson(h1.total_scores(), h2.total_scores()).r
        splits.append(SplitHalfResult(
            scheme=scheme,
            half_correlation=r,
            stepped_up=spearman_brown(r),
            half1_items=list(h1.items),
            half2_items=list(h2.items),
            seed=split_seed,
        ))

    estimate = float(np.mean([s.stepped_up for s in splits]))
    warnings: list[str] = []
    clamped = _clamp_unit(estimate, warnings, "split-half")
    total_sd = float(np.sqrt(variance(m.total_scores())))
    return ReliabilityEstimate(
        method="split-half",
        estimate=estimate,
        estimate_clamped=clamped,
        n_candidates=m.n_candidates,
        n_items=m.n_items,
        sem=sem(total_sd, clamped),
        details={
            "scheme": scheme,
            "n_splits": n_splits,
            "splits": [
                {
                    "half_correlation": s.half_correlation,
                    "stepped_up": s.stepped_up,
                    "half1_items": s.half1_items,
                    "half2_items": s.half2_items,
                    "seed": s.seed,
                }
                for s in splits
            ],
        },
        warnings=warnings,
    )


def cronbach_alpha(m: ScoreMatrix) -> ReliabilityEstimate:
    """Cronbach's alpha from item variances and the total-score variance.

    alpha = J/(J-1) * (1 - sum_j var(Y_j) / var(X)) with unbiased
    variances throughout. Alpha is a lower bound on reliability, with
    equality when items are tau-equivalent (equal true-score loadings);
    under unequal loadings it understates reliability.
    """
    if m.n_items < 2:
        raise DataError(f"alpha requires at least 2 items, got {m.n_items}")
    if m.n_candidates < 3:
        raise DataError(
            f"alpha requires at least 3 candidates, got {m.n_candidates}"
        )
    totals = m.total_scores()
    total_var = variance(totals)
    if total_var == 0.0:
        raise ConstantInputError("total scores are constant; alpha undefined")
    item_vars = np.var(m.values, axis=0, ddof=1)
    constant = np.flatnonzero(item_vars == 0.0)
    warnings: list[str] = []
    if constant.size:
        # Constant items contribute nothing to either variance term; alpha
        # remains defined, but flag them since they usually indicate a
        # degenerate metric or a saturated benchmark.
        names = [m.items[int(j)] for j in constant[:5]]
        warnings.append(f"{constant.size} constant item(s), e.g. {names}")
    j = m.n_items
    alpha = (j / (j - 1.0)) * (1.0 - float(item_vars.sum()) / total_var)
    clamped = _clamp_unit(alpha, warnings, "alpha")
    return ReliabilityEstimate(
        method="alpha",
        estimate=float(alpha),
        estimate_clamped=clamped,
        n_candidates=m.n_candidates,
        n_items=m.n_items,
        sem=sem(float(np.sqrt(total_var)), clamped),
        details={"item_variances": item_vars.tolist(), "total_variance": total_var},
        warnings=warnings,
    )
