"""Factor analysis over item correlation matrices.

Exploratory analysis uses iterated principal-axis factoring (robust to
mildly non-PSD inputs, simple to verify); confirmatory analysis fits a
fixed zero/free loading pattern by minimizing the maximum-likelihood
discrepancy with its analytic gradient; factor scores use the
regression (Thurstone) estimator. Factors are orthogonal with unit
variance throughout — identification by fixed factor variance, all
pattern loadings free.

Module-level functions do the math on plain arrays/matrices;
:class:`ExploratoryFactorAnalysis` and
:class:`ConfirmatoryFactorAnalysis` wrap them in the scikit-learn
estimator idiom (``fit``/``transform``/``get_params``) for pipeline use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ComputationError, DataError
from .ingest import ScoreMatrix

ROTATIONS = ("none", "varimax")

#: Communality ceiling for Heywood handling: items whose communality
#: would exceed this are rescaled onto it and flagged.
HEYWOOD_CAP = 0.995

_SYM_TOL = 1e-8


@dataclass
class FactorModel:
    """A fitted linear factor model for standardized indicators.

    For exploratory fits on a correlation matrix, communality
    (row sum of squared loadings) and uniqueness add to 1 within 1e-8
    by construction; a confirmatory fit reproduces that only as well as
    the model fits. ``heywood_flags`` lists item indices whose
    communality hit the ceiling and were rescaled.
    """

    loadings: np.ndarray
    uniquenesses: np.ndarray
    n_factors: int
    converged: bool
    iterations: int
    rotation: str = "none"
    heywood_flags: list[int] = field(default_factory=list)
    residual_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.loadings = np.asarray(self.loadings, dtype=float)
        self.uniquenesses = np.asarray(self.uniquenesses, dtype=float)
        if self.loadings.ndim != 2:
            raise DataError("loadings must be a J x K matrix")
        j, k = self.loadings.shape
        if self.n_factors != k:
            raise DataError(
                f"n_factors = {self.n_factors} does not match loadings "
                f"with {k} column(s)"
            )
        if k < 1:
            raise DataError("a factor model needs at least 1 factor")
        if self.uniquenesses.shape != (j,):
            raise DataError(
                f"uniquenesses must have length {j}, got {self.uniquenesses.shape}"
            )
        if np.any(self.uniquenesses < -_SYM_TOL):
            raise DataError("uniquenesses must be non-negative")
        np.clip(self.uniquenesses, 0.0, None, out=self.uniquenesses)
        if self.rotation not in ROTATIONS:
            raise DataError(f"rotation must be one of {ROTATIONS}")

    @property
    def n_items(self) -> int:
        return self.loadings.shape[0]

    def communalities(self) -> np.ndarray:
        return (self.loadings ** 2).sum(axis=1)

    def implied_corr(self) -> np.ndarray:
        """Model-implied matrix Lambda Lambda' + Psi."""
        return self.loadings @ self.loadings.T + np.diag(self.uniquenesses)

    def to_dict(self) -> dict:
        return {
            "loadings": self.loadings.tolist(),
            "uniquenesses": self.uniquenesses.tolist(),
            "n_factors": self.n_factors,
            "converged": self.converged,
            "iterations": self.iterations,
            "rotation": self.rotation,
            "heywood_flags": list(self.heywood_flags),
        }


@dataclass
class CfaFit:
    """Confirmatory fit: model plus discrepancy diagnostics."""

    model: FactorModel
    discrepancy: float
    gradient_norm: float
    converged: bool
    implied_corr: np.ndarray
    pattern: np.ndarray

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "discrepancy": self.discrepancy,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "implied_corr": self.implied_corr.tolist(),
            "pattern": self.pattern.astype(int).tolist(),
        }


@dataclass
class FactorScores:
    """Per-candidate factor score estimates."""

    scores: np.ndarray
    method: str = "regression"
    candidates: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scores": self.scores.tolist(),
            "method": self.method,
            "candidates": list(self.candidates),
        }


def _validate_corr(corr, what: str = "correlation matrix") -> np.ndarray:
    r = np.asarray(corr, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DataError(f"{what} must be square, got shape {r.shape}")
    if r.shape[0] < 2:
        raise DataError(f"{what} must be at least 2x2")
    if not np.all(np.isfinite(r)):
        raise DataError(f"{what} contains non-finite entries")
    if np.abs(r - r.T).max() > _SYM_TOL:
        raise DataError(f"{what} is not symmetric")
    if np.abs(np.diag(r) - 1.0).max() > _SYM_TOL:
        raise DataError(f"{what} must have a unit diagonal")
    r = (r + r.T) / 2.0
    np.fill_diagonal(r, 1.0)
    return r


def _fix_signs(loadings: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: largest-|loading| per factor positive."""
    out = loadings.copy()
    for k in range(out.shape[1]):
        pivot = int(np.argmax(np.abs(out[:, k])))
        if out[pivot, k] < 0:
            out[:, k] = -out[:, k]
    return out


def smc(corr: np.ndarray) -> np.ndarray:
    """Squared multiple correlations 1 - 1/diag(R^-1), clipped into [0, cap].

    For singular matrices the pseudo-inverse is used, which can push
    individual values outside [0, 1]; clipping keeps them usable as
    communality starting values.
    """
    r = _validate_corr(corr)
    try:
        inv_diag = np.diag(np.linalg.inv(r))
    except np.linalg.LinAlgError:
        inv_diag = np.diag(np.linalg.pinv(r))
    with np.errstate(divide="ignore"):
        values = 1.0 - 1.0 / inv_diag
    values = np.where(np.isfinite(values), values, 0.0)
    return np.clip(values, 0.0, HEYWOOD_CAP)


def _offdiag_residual(corr: np.ndarray, loadings: np.ndarray) -> float:
    resid = corr - loadings @ loadings.T
    np.fill_diagonal(resid, 0.0)
    return float(np.sqrt((resid ** 2).sum()))


def efa(corr, n_factors: int, max_iter: int = 1000, tol: float = 1e-6) -> FactorModel:
    """Iterated principal-axis factoring of a correlation matrix.

    Communalities start at the squared multiple correlations; each pass
    eigendecomposes the reduced matrix (observed correlations with
    communalities on the diagonal), keeps the top ``n_factors``
    components as loadings, and updates the communalities, stopping when
    the largest communality change drops below ``tol``. Communalities
    hitting :data:`HEYWOOD_CAP` are rescaled onto it and the item is
    flagged. Non-convergence is reported via ``converged=False``, not an
    exception. ``residual_trace`` records the off-diagonal Frobenius
    residual of the loading reconstruction after each pass.
    """
    r = _validate_corr(corr)
    j = r.shape[0]
    if not 1 <= n_factors <= j - 1:
        raise DataError(
            f"n_factors out of range: need 1 <= K <= {j - 1} for {j} items, "
            f"got {n_factors}"
        )
    if max_iter < 1:
        raise DataError(f"max_iter must be >= 1, got {max_iter}")
    eigenvalues = np.linalg.eigvalsh(r)
    if eigenvalues[0] < -1e-6 * max(1.0, eigenvalues[-1]):
        raise ComputationError(
            f"correlation matrix is not positive semidefinite "
            f"(smallest eigenvalue {eigenvalues[0]:.3g})"
        )

    communalities = smc(r)
    heywood: set[int] = set()
    trace: list[float] = []
    converged = False
    iterations = 0
    loadings = np.zeros((j, n_factors))
    for iterations in range(1, max_iter + 1):
        reduced = r.copy()
        np.fill_diagonal(reduced, communalities)
        values, vectors = np.linalg.eigh(reduced)
        top = np.argsort(values)[::-1][:n_factors]
        lam = np.clip(values[top], 0.0, None)
        loadings = vectors[:, top] * np.sqrt(lam)

        new_comm = (loadings ** 2).sum(axis=1)
        over = np.flatnonzero(new_comm > HEYWOOD_CAP)
        for idx in over:
            heywood.add(int(idx))
            loadings[idx] *= np.sqrt(HEYWOOD_CAP / new_comm[idx])
            new_comm[idx] = HEYWOOD_CAP
        trace.append(_offdiag_residual(r, loadings))

        change = float(np.abs(new_comm - communalities).max())
        communalities = new_comm
        if change < tol:
            converged = True
            break

    loadings = _fix_signs(loadings)
    return FactorModel(
        loadings=loadings,
        uniquenesses=1.0 - (loadings ** 2).sum(axis=1),
        n_factors=n_factors,
        converged=converged,
        iterations=iterations,
        rotation="none",
        heywood_flags=sorted(heywood),
        residual_trace=trace,
    )


def suggest_n_factors(corr) -> int:
    """Kaiser rule: the number of eigenvalues strictly greater than 1.

    Eigenvalues within 1e-8 of 1 are not counted, so an identity matrix
    suggests 0 factors.
    """
    r = _validate_corr(corr)
    values = np.linalg.eigvalsh(r)
    return int(np.count_nonzero(values > 1.0 + 1e-8))


def varimax(loadings, max_iter: int = 500, tol: float = 1e-8) -> np.ndarray:
    """Orthogonal varimax rotation of a J x K loading matrix (K >= 2).

    Iterates the standard SVD update of the rotation matrix until the
    criterion stops improving. Row communalities are preserved exactly
    up to floating point (the rotation is orthogonal). The deterministic
    sign convention is re-applied afterwards.
    """
    lam = np.asarray(loadings, dtype=float)
    if lam.ndim != 2:
        raise DataError("loadings must be a J x K matrix")
    j, k = lam.shape
    if k < 2:
        raise DataError(f"varimax requires at least 2 factors, got {k}")

    rotation = np.eye(k)
    criterion = 0.0
    for _ in range(max_iter):
        rotated = lam @ rotation
        gradient = lam.T @ (
            rotated ** 3 - rotated @ np.diag((rotated ** 2).sum(axis=0)) / j
        )
        u, s, vt = np.linalg.svd(gradient)
        rotation = u @ vt
        new_criterion = float(s.sum())
        if new_criterion <= criterion * (1.0 + tol):
            break
        criterion = new_criterion
    return _fix_signs(lam @ rotation)


def ml_discrepancy(sample_corr: np.ndarray, loadings: np.ndarray,
                   uniquenesses: np.ndarray) -> float:
    """ML discrepancy F = ln|Sigma| + tr(S Sigma^-1) - ln|S| - J.

    Nonnegative for positive-definite S and Sigma, zero exactly when the
    implied matrix equals the sample matrix.
    """
    s = np.asarray(sample_corr, dtype=float)
    lam = np.asarray(loadings, dtype=float)
    psi = np.asarray(uniquenesses, dtype=float)
    j = s.shape[0]
    sigma = lam @ lam.T + np.diag(psi)
    sign_s, logdet_s = np.linalg.slogdet(s)
    if sign_s <= 0:
        raise ComputationError("sample matrix is not positive definite")
    try:
        factor = cho_factor(sigma)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(f"implied matrix is not positive definite: {exc}")
    logdet_sigma = 2.0 * float(np.log(np.diag(factor[0])).sum())
    trace_term = float(np.trace(cho_solve(factor, s)))
    return logdet_sigma + trace_term - float(logdet_s) - j


def ml_gradient(sample_corr: np.ndarray, loadings: np.ndarray,
                uniquenesses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`ml_discrepancy`.

    With G = Sigma^-1 (Sigma - S) Sigma^-1, the loading gradient is
    2 G Lambda and the uniqueness gradient is diag(G). Returns the full
    J x K loading gradient (mask it for a fixed pattern) and the
    length-J uniqueness gradient.
    """
    s = np.asarray(sample_corr, dtype=float)
    lam = np.asarray(loadings, dtype=float)
    psi = np.asarray(uniquenesses, dtype=float)
    sigma = lam @ lam.T + np.diag(psi)
    try:
        factor = cho_factor(sigma)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(f"implied matrix is not positive definite: {exc}")
    inv_sigma = cho_solve(factor, np.eye(s.shape[0]))
    g = inv_sigma @ (sigma - s) @ inv_sigma
    return 2.0 * g @ lam, np.diag(g).copy()


def _validate_pattern(pattern, j: int) -> np.ndarray:
    mask = np.asarray(pattern)
    if mask.ndim != 2 or mask.shape[0] != j:
        raise DataError(
            f"pattern must be a {j} x K matrix, got shape {mask.shape}"
        )
    if mask.dtype != bool:
        unique = np.unique(mask)
        if not np.all(np.isin(unique, (0, 1))):
            raise DataError("pattern entries must be boolean (0/1)")
        mask = mask.astype(bool)
    per_factor = mask.sum(axis=0)
    thin = np.flatnonzero(per_factor < 2)
    if thin.size:
        raise DataError(
            f"factor {int(thin[0])} has {int(per_factor[thin[0]])} free "
            "loading(s); each factor needs at least 2"
        )
    empty_rows = np.flatnonzero(mask.sum(axis=1) == 0)
    if empty_rows.size:
        raise DataError(
            f"item {int(empty_rows[0])} loads on no factor; every item "
            "needs at least one free loading"
        )
    return mask


_LOADING_BOUND = 10.0
_LOG_PSI_BOUNDS = (-15.0, 15.0)


def cfa_fit(sample_corr, pattern, max_iter: int = 500,
            tol: float = 1e-6) -> CfaFit:
    """Fit a confirmatory factor model with a fixed zero/free pattern.

    Minimizes the ML discrepancy over the free loadings and the
    log-uniquenesses (keeping every uniqueness positive) with L-BFGS-B
    and the analytic gradient. Factors are orthogonal with unit
    variance. Optimizer failure is reported via ``converged=False`` on
    the last iterate, not an exception.
    """
    s = _validate_corr(sample_corr, "sample correlation matrix")
    j = s.shape[0]
    mask = _validate_pattern(pattern, j)
    k = mask.shape[1]
    try:
        cho_factor(s)
    except np.linalg.LinAlgError:
        raise ComputationError("sample correlation matrix is not positive definite")

    n_free = int(mask.sum())

    def unpack(theta):
        lam = np.zeros((j, k))
        lam[mask] = theta[:n_free]
        psi = np.exp(theta[n_free:])
        return lam, psi

    def objective(theta):
        lam, psi = unpack(theta)
        f = ml_discrepancy(s, lam, psi)
        grad_lam, grad_psi = ml_gradient(s, lam, psi)
        return f, np.concatenate([grad_lam[mask], grad_psi * psi])

    theta0 = np.concatenate([np.full(n_free, 0.5), np.full(j, np.log(0.5))])
    bounds = [(-_LOADING_BOUND, _LOADING_BOUND)] * n_free + [_LOG_PSI_BOUNDS] * j
    result = minimize(
        objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-14},
    )

    lam, psi = unpack(result.x)
    grad_lam, grad_psi = ml_gradient(s, lam, psi)
    gradient_norm = float(np.sqrt(
        (grad_lam[mask] ** 2).sum() + ((grad_psi * psi) ** 2).sum()
    ))
    discrepancy = ml_discrepancy(s, lam, psi)
    if -1e-12 < discrepancy < 0.0:
        discrepancy = 0.0

    lam = _fix_signs(lam)
    communalities = (lam ** 2).sum(axis=1)
    model = FactorModel(
        loadings=lam,
        uniquenesses=psi,
        n_factors=k,
        converged=bool(result.success) and gradient_norm < tol * 10,
        iterations=int(result.nit),
        rotation="none",
        heywood_flags=sorted(int(i) for i in np.flatnonzero(
            communalities > HEYWOOD_CAP)),
    )
    return CfaFit(
        model=model,
        discrepancy=float(discrepancy),
        gradient_norm=gradient_norm,
        converged=model.converged,
        implied_corr=lam @ lam.T + np.diag(psi),
        pattern=mask,
    )


def standardize(m: ScoreMatrix) -> ScoreMatrix:
    """Column-standardize a score matrix (mean 0, unbiased sd 1 per item)."""
    values = m.values
    if values.shape[0] < 3:
        raise DataError("standardization requires at least 3 candidates")
    means = values.mean(axis=0)
    sds = values.std(axis=0, ddof=1)
    constant = np.flatnonzero(sds == 0.0)
    if constant.size:
        raise DataError(
            f"item {m.items[int(constant[0])]!r} is constant; cannot standardize"
        )
    return ScoreMatrix(
        candidates=list(m.candidates),
        items=list(m.items),
        values=(values - means) / sds,
        label=f"{m.label}:standardized" if m.label else "standardized",
    )


def _check_standardized(values: np.ndarray) -> None:
    if np.abs(values.mean(axis=0)).max() > 1e-8:
        raise DataError(
            "matrix is not standardized (column means differ from 0); "
            "apply standardize() first"
        )
    if np.abs(values.std(axis=0, ddof=1) - 1.0).max() > 1e-6:
        raise DataError(
            "matrix is not standardized (column sds differ from 1); "
            "apply standardize() first"
        )


def factor_scores(m: ScoreMatrix, model: FactorModel) -> FactorScores:
    """Regression (Thurstone) factor scores f_hat = z Sigma^-1 Lambda.

    ``m`` must be column-standardized (see :func:`standardize`); the
    implied covariance of the model must be invertible.
    """
    if m.n_items != model.n_items:
        raise DataError(
            f"matrix has {m.n_items} items but model covers {model.n_items}"
        )
    _check_standardized(m.values)
    sigma = model.implied_corr()
    try:
        weights = np.linalg.solve(sigma, model.loadings)
    except np.linalg.LinAlgError:
        raise ComputationError("implied covariance is singular; cannot score")
    return FactorScores(
        scores=m.values @ weights,
        method="regression",
        candidates=list(m.candidates),
    )


class ExploratoryFactorAnalysis(BaseEstimator, TransformerMixin):
    """Scikit-learn style wrapper around :func:`efa`.

    ``fit`` standardizes the raw N x J score array, factors its
    correlation matrix, and stores the solution; ``transform`` returns
    regression factor scores for (new) data standardized with the
    training means and standard deviations.

    Parameters
    ----------
    n_factors : number of factors to extract; ``None`` applies the
        Kaiser rule to the training correlation matrix (minimum 1).
    rotation : "none" or "varimax" (varimax requires >= 2 factors).
    max_iter, tol : principal-axis iteration controls.
    """

    def __init__(self, n_factors: int | None = None, rotation: str = "none",
                 max_iter: int = 1000, tol: float = 1e-6):
        self.n_factors = n_factors
        self.rotation = rotation
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        if self.rotation not in ROTATIONS:
            raise DataError(f"rotation must be one of {ROTATIONS}")
        X = check_array(X, ensure_min_samples=3, ensure_min_features=2)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0, ddof=1)
        if np.any(self.scale_ == 0.0):
            raise DataError("a column is constant; cannot standardize")
        z = (X - self.mean_) / self.scale_
        corr = (z.T @ z) / (X.shape[0] - 1)
        corr = (corr + corr.T) / 2.0
        np.fill_diagonal(corr, 1.0)
        self.correlation_ = corr
        self.eigenvalues_ = np.linalg.eigvalsh(corr)[::-1].copy()

        k = self.n_factors
        if k is None:
            k = max(1, suggest_n_factors(corr))
        model = efa(corr, k, max_iter=self.max_iter, tol=self.tol)
        if self.rotation == "varimax":
            rotated = varimax(model.loadings)
            model = FactorModel(
                loadings=rotated,
                uniquenesses=model.uniquenesses,
                n_factors=model.n_factors,
                converged=model.converged,
                iterations=model.iterations,
                rotation="varimax",
                heywood_flags=model.heywood_flags,
                residual_trace=model.residual_trace,
            )
        self.model_ = model
        self.loadings_ = model.loadings
        self.uniquenesses_ = model.uniquenesses
        self.n_factors_ = model.n_factors
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.loadings_.shape[0]:
            raise DataError(
                f"X has {X.shape[1]} columns but the model covers "
                f"{self.loadings_.shape[0]} items"
            )
        z = (X - self.mean_) / self.scale_
        sigma = self.model_.implied_corr()
        try:
            weights = np.linalg.solve(sigma, self.loadings_)
        except np.linalg.LinAlgError:
            raise ComputationError("implied covariance is singular; cannot score")
        return z @ weights


class ConfirmatoryFactorAnalysis(BaseEstimator, TransformerMixin):
    """Scikit-learn style wrapper around :func:`cfa_fit`.

    Parameters
    ----------
    pattern : J x K boolean free-loading mask (required).
    max_iter, tol : optimizer controls.
    """

    def __init__(self, pattern=None, max_iter: int = 500, tol: float = 1e-6):
        self.pattern = pattern
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        if self.pattern is None:
            raise DataError("ConfirmatoryFactorAnalysis requires a pattern")
        X = check_array(X, ensure_min_samples=3, ensure_min_features=2)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0, ddof=1)
        if np.any(self.scale_ == 0.0):
            raise DataError("a column is constant; cannot standardize")
        z = (X - self.mean_) / self.scale_
        corr = (z.T @ z) / (X.shape[0] - 1)
        corr = (corr + corr.T) / 2.0
        np.fill_diagonal(corr, 1.0)
        self.correlation_ = corr

        fit = cfa_fit(corr, self.pattern, max_iter=self.max_iter, tol=self.tol)
        self.fit_ = fit
        self.model_ = fit.model
        self.loadings_ = fit.model.loadings
        self.uniquenesses_ = fit.model.uniquenesses
        self.discrepancy_ = fit.discrepancy
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.loadings_.shape[0]:
            raise DataError(
                f"X has {X.shape[1]} columns but the model covers "
                f"{self.loadings_.shape[0]} items"
            )
        z = (X - self.mean_) / self.scale_
        sigma = self.model_.implied_corr()
        try:
            weights = np.linalg.solve(sigma, self.loadings_)
        except np.linalg.LinAlgError:
            raise ComputationError("implied covariance is singular; cannot score")
        return z @ weights
