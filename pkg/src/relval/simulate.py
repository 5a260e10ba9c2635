"""Ground-truth simulators for score matrices with known latent structure.

Every estimator in this package is checked against data generated here,
where the latent quantities (true scores, errors, factors) are held by
construction rather than estimated. Reliabilities are computed from the
spec algebra in closed form — never from the sample. All generators are
pure functions of their spec, including the seed (Philox substreams via
:func:`relval.stats.substream`): identical specs give bit-identical
output.

Latents and errors are normal throughout. Classical test theory only
constrains first and second moments, so normality is the simplest
sufficient choice; it is a convention of this module, not a claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ComputationError, DataError
from .ingest import ScoreMatrix
from .stats import MAX_SEED, substream

STRUCTURES = ("parallel", "tau-equivalent", "congeneric")


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise DataError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise DataError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return int(seed)


def _candidate_ids(n: int) -> list[str]:
    return [f"c{i:06d}" for i in range(n)]


def _item_ids(j: int) -> list[str]:
    return [f"i{j_:04d}" for j_ in range(j)]


@dataclass
class CttSpec:
    """Generative spec for a true-score-plus-error score matrix.

    Item j of candidate i is scored ``a_j * T_i + c_j + E_ij`` with
    ``T ~ N(0, true_sd^2)`` and ``E_ij ~ N(0, error_sd_j^2)``. The
    structure fixes the loadings ``a_j``: ``parallel`` (all 1, one
    shared error variance), ``tau-equivalent`` (all 1, per-item error
    variances), or ``congeneric`` (explicit per-item loadings).
    Intercepts ``c_j`` default to zero. ``true_sd = 0`` is admitted as
    the degenerate zero-signal case used by oracle tests.
    """

    n_candidates: int
    n_items: int
    seed: int
    structure: str = "parallel"
    true_sd: float = 1.0
    error_sd: float | list | tuple | np.ndarray = 1.0
    loadings: list | tuple | np.ndarray | None = None
    intercepts: list | tuple | np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.n_candidates < 2:
            raise DataError(f"n_candidates must be >= 2, got {self.n_candidates}")
        if self.n_items < 1:
            raise DataError(f"n_items must be >= 1, got {self.n_items}")
        if self.structure not in STRUCTURES:
            raise DataError(
                f"structure must be one of {STRUCTURES}, got {self.structure!r}"
            )
        self.seed = _check_seed(self.seed)
        self.true_sd = float(self.true_sd)
        if self.true_sd < 0:
            raise DataError(f"true_sd must be >= 0, got {self.true_sd}")

        error = np.atleast_1d(np.asarray(self.error_sd, dtype=float))
        if error.size == 1:
            error = np.full(self.n_items, float(error[0]))
        if error.shape != (self.n_items,):
            raise DataError(
                f"error_sd must be a scalar or length-{self.n_items} vector"
            )
        if np.any(error <= 0) or not np.all(np.isfinite(error)):
            raise DataError("every error_sd must be finite and > 0")
        if self.structure == "parallel" and not np.all(error == error[0]):
            raise DataError("parallel items require a single shared error_sd")
        self.error_sd = error

        if self.structure == "congeneric":
            if self.loadings is None:
                raise DataError("congeneric structure requires loadings")
            loadings = np.asarray(self.loadings, dtype=float)
            if loadings.shape != (self.n_items,):
                raise DataError(
                    f"loadings must have length {self.n_items}, "
                    f"got {loadings.shape}"
                )
            if not np.all(np.isfinite(loadings)):
                raise DataError("loadings must be finite")
            self.loadings = loadings
        else:
            if self.loadings is not None:
                raise DataError(
                    f"{self.structure} structure fixes loadings to 1; "
                    "do not supply them"
                )
            self.loadings = np.ones(self.n_items)

        if self.intercepts is None:
            self.intercepts = np.zeros(self.n_items)
        else:
            intercepts = np.asarray(self.intercepts, dtype=float)
            if self.structure == "parallel" and np.any(intercepts != 0.0):
                raise DataError("parallel items require zero intercepts")
            if intercepts.shape != (self.n_items,):
                raise DataError(
                    f"intercepts must have length {self.n_items}, "
                    f"got {intercepts.shape}"
                )
            if not np.all(np.isfinite(intercepts)):
                raise DataError("intercepts must be finite")
            self.intercepts = intercepts

    def analytic_reliability(self) -> float:
        """Closed-form reliability of the total score implied by the spec.

        Var(sum_j a_j T) / Var(sum_j Y_j)
        = (sum a)^2 sd_T^2 / ((sum a)^2 sd_T^2 + sum error_sd_j^2).
        """
        signal = (float(self.loadings.sum()) ** 2) * self.true_sd ** 2
        noise = float((self.error_sd ** 2).sum())
        if signal + noise == 0.0:
            raise DataError("spec has zero total variance")
        return signal / (signal + noise)

    def to_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "n_items": self.n_items,
            "seed": self.seed,
            "structure": self.structure,
            "true_sd": self.true_sd,
            "error_sd": np.asarray(self.error_sd).tolist(),
            "loadings": (
                np.asarray(self.loadings).tolist()
                if self.structure == "congeneric" else None
            ),
            "intercepts": np.asarray(self.intercepts).tolist(),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CttSpec":
        if not isinstance(data, dict):
            raise DataError("CTT spec must be a JSON object")
        allowed = {"n_candidates", "n_items", "seed", "structure", "true_sd",
                   "error_sd", "loadings", "intercepts", "label"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise DataError(f"unknown CTT spec key(s): {unknown}")
        required = {"n_candidates", "n_items", "seed"}
        missing = sorted(required - set(data))
        if missing:
            raise DataError(f"CTT spec missing required key(s): {missing}")
        kwargs = {k: v for k, v in data.items() if v is not None}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise DataError(f"invalid CTT spec: {exc}")


@dataclass
class FactorSimSpec:
    """Generative spec for orthogonal common-factor data X = Lambda f + U."""

    n_candidates: int
    loadings: list | tuple | np.ndarray
    uniquenesses: list | tuple | np.ndarray
    seed: int
    label: str = ""

    def __post_init__(self):
        if self.n_candidates < 2:
            raise DataError(f"n_candidates must be >= 2, got {self.n_candidates}")
        self.seed = _check_seed(self.seed)
        loadings = np.asarray(self.loadings, dtype=float)
        if loadings.ndim == 1:
            loadings = loadings[:, None]
        if loadings.ndim != 2 or loadings.shape[0] < 2 or loadings.shape[1] < 1:
            raise DataError(
                f"loadings must be a J x K matrix with J >= 2, got {loadings.shape}"
            )
        if not np.all(np.isfinite(loadings)):
            raise DataError("loadings must be finite")
        self.loadings = loadings
        uniq = np.asarray(self.uniquenesses, dtype=float)
        if uniq.shape != (loadings.shape[0],):
            raise DataError(
                f"uniquenesses must have length {loadings.shape[0]}, "
                f"got {uniq.shape}"
            )
        if np.any(uniq < 0) or not np.all(np.isfinite(uniq)):
            raise DataError("uniquenesses must be finite and >= 0")
        self.uniquenesses = uniq
        try:
            np.linalg.cholesky(self.implied_cov())
        except np.linalg.LinAlgError:
            raise ComputationError(
                "implied covariance Lambda Lambda' + Psi is not positive definite"
            )

    def implied_cov(self) -> np.ndarray:
        return self.loadings @ self.loadings.T + np.diag(self.uniquenesses)

    def to_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "loadings": np.asarray(self.loadings).tolist(),
            "uniquenesses": np.asarray(self.uniquenesses).tolist(),
            "seed": self.seed,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FactorSimSpec":
        if not isinstance(data, dict):
            raise DataError("factor spec must be a JSON object")
        allowed = {"n_candidates", "loadings", "uniquenesses", "seed", "label"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise DataError(f"unknown factor spec key(s): {unknown}")
        missing = sorted({"n_candidates", "loadings", "uniquenesses", "seed"}
                         - set(data))
        if missing:
            raise DataError(f"factor spec missing required key(s): {missing}")
        kwargs = {k: v for k, v in data.items() if v is not None}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise DataError(f"invalid factor spec: {exc}")


@dataclass
class SimulatedDataset:
    """A generated score matrix with its latent ground truth attached.

    ``true_scores`` holds the per-candidate latent signal (T for
    true-score generators; the common-part row sums for factor
    generators); ``true_totals`` is the mean-zero true part of the total
    score and ``true_totals_sd`` its population standard deviation —
    the pair the criterion generator standardizes against.
    ``true_reliability_total`` is analytic, computed from the generating
    spec's parameters rather than estimated from the sample.
    """

    observed: ScoreMatrix
    true_scores: np.ndarray
    true_reliability_total: float
    true_totals: np.ndarray
    true_totals_sd: float
    latent_factors: np.ndarray | None = None
    spec: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        """Summary for report envelopes (no raw matrix, no latents)."""
        return {
            "label": self.observed.label,
            "n_candidates": self.observed.n_candidates,
            "n_items": self.observed.n_items,
            "true_reliability_total": self.true_reliability_total,
            "spec": dict(self.spec),
        }


def _ctt_values(spec: CttSpec, t: np.ndarray, error_rng) -> np.ndarray:
    noise = error_rng.standard_normal((spec.n_candidates, spec.n_items))
    noise *= spec.error_sd
    return t[:, None] * spec.loadings[None, :] + spec.intercepts[None, :] + noise


def _ctt_dataset(spec: CttSpec, t: np.ndarray, error_rng,
                 label_suffix: str = "") -> SimulatedDataset:
    values = _ctt_values(spec, t, error_rng)
    label = (spec.label or f"sim-ctt-{spec.structure}") + label_suffix
    observed = ScoreMatrix(
        candidates=_candidate_ids(spec.n_candidates),
        items=_item_ids(spec.n_items),
        values=values,
        label=label,
    )
    loading_sum = float(spec.loadings.sum())
    return SimulatedDataset(
        observed=observed,
        true_scores=t.copy(),
        true_reliability_total=spec.analytic_reliability(),
        true_totals=loading_sum * t,
        true_totals_sd=abs(loading_sum) * spec.true_sd,
        spec=spec.to_dict(),
    )


def generate_ctt(spec: CttSpec) -> SimulatedDataset:
    """Draw one score matrix from a true-score-plus-error spec.

    True scores come from substream 0 of the spec seed and errors from
    substream 1, so the same candidates' true scores persist if only the
    error structure of the spec changes.
    """
    t = substream(spec.seed, 0).normal(0.0, spec.true_sd, spec.n_candidates)
    return _ctt_dataset(spec, t, substream(spec.seed, 1))


def generate_retest(spec: CttSpec) -> tuple[SimulatedDataset, SimulatedDataset]:
    """Two administrations sharing true scores, with fresh independent errors.

    Errors for the administrations come from substreams 1 and 2; both
    datasets report the same analytic reliability.
    """
    t = substream(spec.seed, 0).normal(0.0, spec.true_sd, spec.n_candidates)
    first = _ctt_dataset(spec, t, substream(spec.seed, 1), ":admin1")
    second = _ctt_dataset(spec, t, substream(spec.seed, 2), ":admin2")
    return first, second


def generate_factor(spec: FactorSimSpec) -> SimulatedDataset:
    """Draw X = Lambda f + U with standard-normal orthogonal factors.

    Factors come from substream 0, unique parts from substream 1;
    ``latent_factors`` retains the drawn f. The total-score reliability
    is (sum over factors of squared column sums of Lambda) over that
    plus the summed uniquenesses.
    """
    n = spec.n_candidates
    j, k = spec.loadings.shape
    f = substream(spec.seed, 0).standard_normal((n, k))
    unique = substream(spec.seed, 1).standard_normal((n, j))
    unique *= np.sqrt(spec.uniquenesses)
    values = f @ spec.loadings.T + unique

    column_sums = spec.loadings.sum(axis=0)
    signal = float((column_sums ** 2).sum())
    noise = float(spec.uniquenesses.sum())
    true_totals = f @ column_sums
    observed = ScoreMatrix(
        candidates=_candidate_ids(n),
        items=_item_ids(j),
        values=values,
        label=spec.label or "sim-factor",
    )
    return SimulatedDataset(
        observed=observed,
        true_scores=true_totals.copy(),
        true_reliability_total=signal / (signal + noise) if signal + noise else 0.0,
        true_totals=true_totals,
        true_totals_sd=float(np.sqrt(signal)),
        latent_factors=f,
        spec=spec.to_dict(),
    )


def generate_criterion(dataset: SimulatedDataset, criterion_reliability: float,
                       latent_corr: float, seed: int) -> np.ndarray:
    """External criterion correlated with the dataset's latent signal.

    The criterion's true part blends the standardized true totals with
    independent noise to correlate ``latent_corr`` with them, then adds
    measurement noise sized so the criterion's own reliability equals
    ``criterion_reliability``. The population validity coefficient of
    the observed totals against this criterion is therefore
    ``latent_corr * sqrt(dataset_reliability * criterion_reliability)``.
    """
    if not 0.0 < criterion_reliability <= 1.0:
        raise DataError(
            f"criterion_reliability must be in (0, 1], got {criterion_reliability}"
        )
    if not -1.0 <= latent_corr <= 1.0:
        raise DataError(f"latent_corr must be in [-1, 1], got {latent_corr}")
    seed = _check_seed(seed)
    if dataset.true_totals_sd == 0.0:
        raise DataError(
            "dataset has zero true-score variance; criterion undefined"
        )
    z = dataset.true_totals / dataset.true_totals_sd
    n = z.shape[0]
    blend = substream(seed, 0).standard_normal(n)
    criterion_true = latent_corr * z + np.sqrt(1.0 - latent_corr ** 2) * blend
    noise_sd = float(np.sqrt((1.0 - criterion_reliability) / criterion_reliability))
    noise = substream(seed, 1).standard_normal(n)
    return criterion_true + noise_sd * noise


def ctt_spec_for_reliability(n_candidates: int, n_items: int, reliability: float,
                             seed: int, true_sd: float = 1.0,
                             label: str = "") -> CttSpec:
    """Parallel-items spec whose analytic total reliability hits a target.

    Solves (J sd_T)^2 / ((J sd_T)^2 + J e^2) = reliability for the
    shared per-item error sd e.
    """
    if not 0.0 < reliability < 1.0:
        raise DataError(f"target reliability must be in (0, 1), got {reliability}")
    if true_sd <= 0:
        raise DataError(f"true_sd must be > 0, got {true_sd}")
    error_sd = true_sd * np.sqrt(n_items * (1.0 - reliability) / reliability)
    return CttSpec(
        n_candidates=n_candidates,
        n_items=n_items,
        seed=seed,
        structure="parallel",
        true_sd=true_sd,
        error_sd=float(error_sd),
        label=label,
    )
