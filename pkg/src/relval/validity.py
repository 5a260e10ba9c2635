"""Criterion-related validity and multitrait-multimethod analysis.

Criterion validity correlates a metric's candidate-level scores with an
external criterion (e.g. human judgments), bounds the observed
correlation by the square root of the product of the two reliabilities,
and optionally disattenuates it. The MTMM half treats each (trait,
method) pairing as a separate measurement, builds the full correlation
table over common candidates, and applies the Campbell-Fiske
convergent/discriminant rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError
from .ingest import ScoreMatrix
from .reliability import ReliabilityEstimate
from .stats import pearson

MODES = ("concurrent", "predictive")
BLOCKS = (
    "reliability-diagonal",
    "monotrait-heteromethod",
    "heterotrait-monomethod",
    "heterotrait-heteromethod",
)

#: Sampling slack added to the attenuation bound before flagging a violation.
BOUND_SLACK = 0.05

#: Default convergent-validity threshold on the mean monotrait-heteromethod
#: correlation. A convention, not a law; override per analysis as needed.
CONVERGENT_THRESHOLD = 0.5


@dataclass
class CriterionValidityReport:
    """Validity coefficient with attenuation bound and disattenuation.

    ``bound_margin`` is the raw slack-free margin
    ``attenuation_bound - |r_xy|`` (negative when the sample correlation
    overshoots the bound); ``bound_satisfied`` applies ``BOUND_SLACK`` on
    top to absorb sampling noise. ``r_disattenuated`` may exceed 1 in
    magnitude in small samples — it is reported with a warning, not
    clamped.
    """

    r_xy: float
    n: int
    mode: str = "concurrent"
    rel_x: float | None = None
    rel_y: float | None = None
    attenuation_bound: float | None = None
    bound_satisfied: bool | None = None
    bound_margin: float | None = None
    r_disattenuated: float | None = None
    ci: tuple[float, float, float] | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "r_xy": self.r_xy,
            "n": self.n,
            "mode": self.mode,
            "rel_x": self.rel_x,
            "rel_y": self.rel_y,
            "attenuation_bound": self.attenuation_bound,
            "bound_satisfied": self.bound_satisfied,
            "bound_margin": self.bound_margin,
            "r_disattenuated": self.r_disattenuated,
            "ci": list(self.ci) if self.ci else None,
            "warnings": list(self.warnings),
        }


def disattenuate(r_xy: float, rel_x: float, rel_y: float) -> float:
    """Correct a correlation for unreliability: r / sqrt(rel_x * rel_y)."""
    for name, rel in (("rel_x", rel_x), ("rel_y", rel_y)):
        if not 0.0 <= rel <= 1.0:
            raise DataError(f"{name} must be in [0, 1], got {rel}")
    if rel_x * rel_y == 0.0:
        raise DataError("disattenuation undefined when a reliability is 0")
    return float(r_xy / np.sqrt(rel_x * rel_y))


def criterion_validity(x_scores, y_criterion, rel_x: float | None = None,
                       rel_y: float | None = None,
                       mode: str = "concurrent") -> CriterionValidityReport:
    """Correlate metric scores with a criterion; attenuation-aware report.

    ``mode`` records whether the criterion was measured at the same time
    (concurrent) or later (predictive); it does not change the math.
    The attenuation bound and disattenuated coefficient are filled only
    when both reliabilities are supplied.
    """
    if mode not in MODES:
        raise DataError(f"mode must be one of {MODES}, got {mode!r}")
    for name, rel in (("rel_x", rel_x), ("rel_y", rel_y)):
        if rel is not None and not 0.0 <= rel <= 1.0:
            raise DataError(f"{name} must be in [0, 1], got {rel}")

    result = pearson(x_scores, y_criterion)
    report = CriterionValidityReport(
        r_xy=result.r, n=result.n, mode=mode, rel_x=rel_x, rel_y=rel_y,
        ci=result.fisher_ci,
    )
    if rel_x is None or rel_y is None:
        return report

    bound = float(np.sqrt(rel_x * rel_y))
    report.attenuation_bound = bound
    report.bound_margin = bound - abs(result.r)
    report.bound_satisfied = bool(abs(result.r) <= bound + BOUND_SLACK)
    if not report.bound_satisfied:
        report.warnings.append(
            f"|r_xy| = {abs(result.r):.4f} exceeds attenuation bound "
            f"{bound:.4f} by more than {BOUND_SLACK}; reliabilities are "
            "likely underestimated"
        )
    if rel_x * rel_y > 0.0:
        rd = disattenuate(result.r, rel_x, rel_y)
        report.r_disattenuated = rd
        if abs(rd) > 1.0:
            report.warnings.append(
                f"disattenuated r = {rd:.4f} exceeds 1 in magnitude "
                "(sampling artifact); reported unclamped"
            )
    return report


@dataclass
class MtmmTable:
    """Trait-by-method correlation table in method-major index order.

    Cell ``(trait, method)`` sits at index ``methods.index(method) *
    len(traits) + traits.index(trait)``, so each method contributes a
    contiguous block of rows — the layout in which the
    heterotrait-monomethod triangles are the within-block triangles.
    ``corr`` keeps a unit diagonal; supplied reliabilities live in
    ``reliability_diagonal``.
    """

    traits: list[str]
    methods: list[str]
    corr: np.ndarray
    reliability_diagonal: np.ndarray | None = None
    n_candidates: int = 0

    def __post_init__(self):
        k = len(self.traits) * len(self.methods)
        self.corr = np.asarray(self.corr, dtype=float)
        if self.corr.shape != (k, k):
            raise DataError(
                f"corr must be {k}x{k} for {len(self.traits)} traits x "
                f"{len(self.methods)} methods, got {self.corr.shape}"
            )
        if not np.allclose(self.corr, self.corr.T):
            raise DataError("corr must be symmetric")
        if not np.allclose(np.diag(self.corr), 1.0):
            raise DataError("corr must have a unit diagonal")
        if self.reliability_diagonal is not None:
            self.reliability_diagonal = np.asarray(
                self.reliability_diagonal, dtype=float)
            if self.reliability_diagonal.shape != (k,):
                raise DataError(
                    f"reliability_diagonal must have length {k}, "
                    f"got {self.reliability_diagonal.shape}"
                )

    @property
    def labels(self) -> list[tuple[str, str]]:
        """(trait, method) pairs in index order."""
        return [(t, m) for m in self.methods for t in self.traits]

    def index_of(self, trait: str, method: str) -> int:
        if trait not in self.traits:
            raise DataError(f"unknown trait {trait!r}")
        if method not in self.methods:
            raise DataError(f"unknown method {method!r}")
        return self.methods.index(method) * len(self.traits) + self.traits.index(trait)

    def block_of(self, cell_a: tuple[str, str], cell_b: tuple[str, str]) -> str:
        """Campbell-Fiske block of the cell (exhaustive, mutually exclusive)."""
        t1, m1 = cell_a
        t2, m2 = cell_b
        self.index_of(t1, m1)
        self.index_of(t2, m2)
        same_trait = t1 == t2
        same_method = m1 == m2
        if same_trait and same_method:
            return "reliability-diagonal"
        if same_trait:
            return "monotrait-heteromethod"
        if same_method:
            return "heterotrait-monomethod"
        return "heterotrait-heteromethod"

    def cells(self, block: str) -> list[tuple[tuple[str, str], tuple[str, str], float]]:
        """All upper-triangle cells of one block as (cell_a, cell_b, r)."""
        if block not in BLOCKS:
            raise DataError(f"unknown block {block!r}")
        labels = self.labels
        out = []
        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                if self.block_of(labels[i], labels[j]) == block:
                    out.append((labels[i], labels[j], float(self.corr[i, j])))
        return out

    def to_dict(self) -> dict:
        return {
            "traits": list(self.traits),
            "methods": list(self.methods),
            "labels": [list(lab) for lab in self.labels],
            "corr": self.corr.tolist(),
            "reliability_diagonal": (
                None if self.reliability_diagonal is None
                else self.reliability_diagonal.tolist()
            ),
            "n_candidates": self.n_candidates,
        }


@dataclass
class MtmmSummary:
    """Campbell-Fiske convergent/discriminant verdicts for an MTMM table."""

    convergent_mean: float
    discriminant_mono_mean: float
    discriminant_hetero_mean: float
    convergent_pass: bool
    discriminant_pass: bool
    violations: list[str] = field(default_factory=list)
    convergent_threshold: float = CONVERGENT_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "convergent_mean": self.convergent_mean,
            "discriminant_mono_mean": self.discriminant_mono_mean,
            "discriminant_hetero_mean": self.discriminant_hetero_mean,
            "convergent_pass": self.convergent_pass,
            "discriminant_pass": self.discriminant_pass,
            "violations": list(self.violations),
            "convergent_threshold": self.convergent_threshold,
        }


def _totals_of(value, cell: tuple[str, str]) -> tuple[np.ndarray, list[str] | None]:
    if isinstance(value, ScoreMatrix):
        sorted_m = value.sorted_by_candidate()
        return sorted_m.total_scores(), list(sorted_m.candidates)
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1:
        raise DataError(
            f"cell {cell} must be a ScoreMatrix or a 1-D total-score vector"
        )
    if not np.all(np.isfinite(arr)):
        raise DataError(f"cell {cell} contains non-finite total scores")
    return arr, None


def build_mtmm(datasets: dict, reliabilities: dict | None = None) -> MtmmTable:
    """Build the trait-by-method correlation table from per-cell datasets.

    ``datasets`` maps ``(trait, method)`` to either a ScoreMatrix or a
    candidate-level total-score vector. Every combination of the traits
    and methods present must be supplied, over an identical candidate set
    of size >= 4. Matrices are aligned by candidate identifier; plain
    vectors are taken as already aligned (one value per candidate, same
    order everywhere). The output is invariant to the iteration order of
    the mapping. ``reliabilities`` optionally maps the same keys to
    ReliabilityEstimates (or plain floats) for the reliability diagonal.
    """
    if not datasets:
        raise DataError("datasets is empty")
    traits = sorted({t for t, _ in datasets})
    methods = sorted({m for _, m in datasets})
    if len(traits) < 2:
        raise DataError(f"MTMM requires >= 2 traits, got {traits}")
    if len(methods) < 2:
        raise DataError(f"MTMM requires >= 2 methods, got {methods}")
    missing = [(t, m) for m in methods for t in traits if (t, m) not in datasets]
    if missing:
        raise DataError(f"missing (trait, method) cells: {missing[:5]}")
    extra = [key for key in datasets if key[0] not in traits or key[1] not in methods]
    if extra:
        raise DataError(f"unexpected dataset keys: {extra[:5]}")

    labels = [(t, m) for m in methods for t in traits]
    totals = []
    candidate_lists = []
    for cell in labels:
        vec, cands = _totals_of(datasets[cell], cell)
        totals.append(vec)
        candidate_lists.append((cell, cands))

    lengths = {len(v) for v in totals}
    if len(lengths) != 1:
        raise DataError(f"cells disagree on candidate count: {sorted(lengths)}")
    n = lengths.pop()
    if n < 4:
        raise DataError(f"MTMM requires >= 4 common candidates, got {n}")
    known = [(cell, c) for cell, c in candidate_lists if c is not None]
    if known:
        ref_cell, ref = known[0]
        for cell, cands in known[1:]:
            if cands != ref:
                raise DataError(
                    f"cells {ref_cell} and {cell} cover different candidates"
                )

    k = len(labels)
    corr = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            r = pearson(totals[i], totals[j], ci_level=None).r
            corr[i, j] = corr[j, i] = r

    rel_diag = None
    if reliabilities is not None:
        missing_rel = [cell for cell in labels if cell not in reliabilities]
        if missing_rel:
            raise DataError(
                f"reliabilities missing for cells: {missing_rel[:5]}"
            )
        rel_diag = np.empty(k)
        for idx, cell in enumerate(labels):
            value = reliabilities[cell]
            if isinstance(value, ReliabilityEstimate):
                value = value.estimate_clamped
            value = float(value)
            if not 0.0 <= value <= 1.0:
                raise DataError(
                    f"reliability for cell {cell} must be in [0, 1], got {value}"
                )
            rel_diag[idx] = value

    return MtmmTable(traits=traits, methods=methods, corr=corr,
                     reliability_diagonal=rel_diag, n_candidates=n)


def campbell_fiske(t: MtmmTable,
                   convergent_threshold: float = CONVERGENT_THRESHOLD) -> MtmmSummary:
    """Apply the Campbell-Fiske convergent/discriminant rules to a table.

    Convergent validity passes iff every monotrait-heteromethod
    correlation is positive and their mean reaches
    ``convergent_threshold``. Discriminant validity passes iff each
    monotrait-heteromethod correlation strictly exceeds every heterotrait
    correlation that shares one of its two (trait, method) measurements.
    Every failed comparison is named in ``violations``.
    """
    convergent = t.cells("monotrait-heteromethod")
    mono = t.cells("heterotrait-monomethod")
    hetero = t.cells("heterotrait-heteromethod")

    convergent_mean = float(np.mean([r for _, _, r in convergent]))
    mono_mean = float(np.mean([r for _, _, r in mono])) if mono else float("nan")
    hetero_mean = float(np.mean([r for _, _, r in hetero])) if hetero else float("nan")

    violations: list[str] = []
    convergent_pass = convergent_mean >= convergent_threshold
    for a, b, r in convergent:
        if r <= 0.0:
            convergent_pass = False
            violations.append(
                f"convergent cell r({a[0]}/{a[1]}, {b[0]}/{b[1]}) = {r:.4f} <= 0"
            )
    if convergent_mean < convergent_threshold:
        violations.append(
            f"convergent mean {convergent_mean:.4f} below threshold "
            f"{convergent_threshold}"
        )

    discriminant_pass = True
    heterotrait = mono + hetero
    for a, b, r in convergent:
        endpoints = {a, b}
        for c, d, r_het in heterotrait:
            if endpoints & {c, d} and r <= r_het:
                discriminant_pass = False
                violations.append(
                    f"r({a[0]}/{a[1]}, {b[0]}/{b[1]}) = {r:.4f} does not exceed "
                    f"heterotrait r({c[0]}/{c[1]}, {d[0]}/{d[1]}) = {r_het:.4f}"
                )

    return MtmmSummary(
        convergent_mean=convergent_mean,
        discriminant_mono_mean=mono_mean,
        discriminant_hetero_mean=hetero_mean,
        convergent_pass=convergent_pass,
        discriminant_pass=discriminant_pass,
        violations=violations,
        convergent_threshold=convergent_threshold,
    )
