"""Shared fixtures and oracle helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from relval.ingest import ScoreMatrix


def matrix_with_exact_cov(cov: np.ndarray, n: int, seed: int = 0,
                          label: str = "exact") -> ScoreMatrix:
    """Build an N x J matrix whose *sample* covariance equals ``cov`` exactly.

    Draw a random N x J basis, orthonormalize it against the constant
    vector (so column means are 0), scale by sqrt(N-1), and color by the
    Cholesky factor: the unbiased sample covariance of the result is the
    target matrix up to floating-point rounding. This turns population
    covariance fixtures into exact sample fixtures, letting closed-form
    values be asserted at 1e-9 rather than Monte-Carlo tolerances.
    """
    cov = np.asarray(cov, dtype=float)
    j = cov.shape[0]
    if n < j + 2:
        raise ValueError(f"need n >= J + 2 = {j + 2} rows, got {n}")
    rng = np.random.default_rng(seed)
    base = np.hstack([np.ones((n, 1)), rng.standard_normal((n, j))])
    q, _ = np.linalg.qr(base)
    z = q[:, 1:] * np.sqrt(n - 1)  # orthonormal columns, each orthogonal to 1
    chol = np.linalg.cholesky(cov)
    values = z @ chol.T
    return ScoreMatrix(
        candidates=[f"c{i:04d}" for i in range(n)],
        items=[f"i{k:03d}" for k in range(j)],
        values=values,
        label=label,
    )


@pytest.fixture
def small_matrix() -> ScoreMatrix:
    """A tiny fixed 4x3 matrix used by shape/plumbing tests."""
    return ScoreMatrix(
        candidates=["a", "b", "c", "d"],
        items=["i1", "i2", "i3"],
        values=np.array([
            [1.0, 2.0, 3.0],
            [2.0, 3.0, 1.0],
            [3.0, 1.0, 2.0],
            [4.0, 4.0, 4.0],
        ]),
        label="toy",
    )


CSV_HEADER = "candidate_id,item_id,metric_id,run_id,rater_id,score"


def csv_bytes(rows: list[str]) -> bytes:
    """Assemble a long-format CSV byte stream from data rows."""
    return ("\n".join([CSV_HEADER] + rows) + "\n").encode("utf-8")
