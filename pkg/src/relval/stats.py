"""Shared numerical primitives: moments, correlations, intervals, bootstrap.

Randomness contract
-------------------
All randomness in this package flows through :func:`substream`, built on
the Philox4x64-10 counter-based generator (Salmon et al., implemented by
``numpy.random.Philox``). Substream ``i`` of seed ``s`` is the generator
keyed by ``s`` with its 256-bit counter advanced by ``i * 2**128``
(``Philox(key=s).jumped(i)``), so every stream is a pure function of
``(seed, index)`` regardless of evaluation order or parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .exceptions import ComputationError, ConstantInputError, DataError
from .ingest import ScoreMatrix

MAX_SEED = 2**64 - 1


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator number ``index`` of the stream keyed by ``seed``."""
    if not (0 <= int(seed) <= MAX_SEED):
        raise DataError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    if index < 0:
        raise DataError(f"substream index must be non-negative, got {index}")
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(index)))


@dataclass
class CorrelationResult:
    """Sample Pearson correlation with an optional Fisher-z interval."""

    r: float
    n: int
    fisher_ci: tuple[float, float, float] | None = None  # (lo, hi, level)


@dataclass
class BootstrapCI:
    """Percentile bootstrap confidence interval.

    ``replicates`` is the requested replicate count; ``n_failed`` counts
    replicates whose statistic raised on a degenerate resample (tolerated
    up to half of the total, then an error).
    """

    lo: float
    hi: float
    level: float
    replicates: int
    seed: int
    n_failed: int = 0
    samples: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "level": self.level,
            "replicates": self.replicates,
            "seed": self.seed,
            "n_failed": self.n_failed,
        }


def variance(x) -> float:
    """Unbiased sample variance (divisor n-1)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("variance expects a 1-dimensional vector")
    if x.size < 2:
        raise DataError(f"variance requires at least 2 values, got {x.size}")
    return float(np.var(x, ddof=1))


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1:
        raise DataError("pearson expects 1-dimensional vectors")
    if x.size != y.size:
        raise DataError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise DataError(f"pearson requires at least 3 paired values, got {x.size}")
    return x, y


def pearson(x, y, ci_level: float | None = 0.95) -> CorrelationResult:
    """Sample Pearson correlation, exactly symmetric in its arguments.

    A zero-variance input is an error, never NaN. The point estimate is
    clamped to [-1, 1] against floating-point overshoot. The Fisher-z
    interval is attached when ``ci_level`` is given, n >= 4 and |r| < 1.
    """
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0:
        raise ConstantInputError("first vector is constant; correlation undefined")
    if syy == 0.0:
        raise ConstantInputError("second vector is constant; correlation undefined")
    r = float(np.dot(dx, dy)) / (np.sqrt(sxx) * np.sqrt(syy))
    r = min(1.0, max(-1.0, r))
    n = int(x.size)

    ci = None
    if ci_level is not None and n >= 4 and abs(r) < 1.0:
        lo, hi = fisher_z_interval(r, n, ci_level)
        ci = (lo, hi, ci_level)
    return CorrelationResult(r=r, n=n, fisher_ci=ci)


def correlation_matrix(m: ScoreMatrix, orientation: str = "columns") -> np.ndarray:
    """Symmetric correlation matrix over items (columns) or candidates (rows).

    Raises :class:`ConstantInputError` naming the offending series if any
    row/column is constant.
    """
    if orientation == "columns":
        data = m.values
        names = m.items
        kind = "item"
    elif orientation == "rows":
        data = m.values.T
        names = m.candidates
        kind = "candidate"
    else:
        raise DataError(f"unknown orientation {orientation!r}")

    n_obs = data.shape[0]
    if n_obs < 3:
        raise DataError(
            f"correlation over {kind}s requires at least 3 observations, got {n_obs}"
        )
    centered = data - data.mean(axis=0)
    ss = np.einsum("ij,ij->j", centered, centered)
    constant = np.flatnonzero(ss == 0.0)
    if constant.size:
        raise ConstantInputError(
            f"{kind} {names[int(constant[0])]!r} is constant; correlation undefined"
        )
    cov = centered.T @ centered
    denom = np.sqrt(ss)
    corr = cov / np.outer(denom, denom)
    corr = (corr + corr.T) / 2.0
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr


def fisher_z_interval(r: float, n: int, level: float) -> tuple[float, float]:
    """Fisher-z confidence interval tanh(atanh(r) +- z / sqrt(n-3))."""
    if not 0.0 < level < 1.0:
        raise DataError(f"level must be in (0, 1), got {level}")
    if n < 4:
        raise DataError(f"Fisher interval requires n >= 4, got {n}")
    if abs(r) >= 1.0:
        raise DataError(f"Fisher interval undefined at |r| = 1 (got r={r})")
    z = norm.ppf((1.0 + level) / 2.0)
    half_width = z / np.sqrt(n - 3)
    center = np.arctanh(r)
    return float(np.tanh(center - half_width)), float(np.tanh(center + half_width))


def bootstrap(statistic, m: ScoreMatrix, replicates: int, seed: int,
              level: float = 0.95, keep_samples: bool = True) -> BootstrapCI:
    """Percentile bootstrap CI for ``statistic(matrix)``, resampling candidates.

    Replicate ``i`` draws its resample indices from ``substream(seed, i + 1)``
    and from nothing else, so the interval is identical under any execution
    order or parallel schedule. Substream 0 of the seed is left free by
    convention for non-replicate randomness (e.g. a random item split),
    letting one seed drive an entire analysis without stream reuse.
    A statistic may raise on a degenerate resample; more than 50% failures
    is an error.
    """
    if replicates < 100:
        raise DataError(f"bootstrap requires at least 100 replicates, got {replicates}")
    if not 0.0 < level < 1.0:
        raise DataError(f"level must be in (0, 1), got {level}")
    n = m.n_candidates

    values = np.full(replicates, np.nan)
    for i in range(replicates):
        rng = substream(seed, i + 1)
        indices = rng.integers(0, n, size=n)
        try:
            v = float(statistic(m.take_candidates(indices)))
        except (ConstantInputError, ComputationError, DataError):
            continue
        if np.isfinite(v):
            values[i] = v

    ok = np.isfinite(values)
    n_failed = int(replicates - ok.sum())
    if n_failed > replicates / 2:
        raise ComputationError(
            f"statistic failed on {n_failed} of {replicates} bootstrap replicates"
        )
    kept = values[ok]
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(kept, [tail, 100.0 - tail])
    return BootstrapCI(lo=float(lo), hi=float(hi), level=level,
                       replicates=replicates, seed=int(seed), n_failed=n_failed,
                       samples=kept if keep_samples else None)
