"""Quadratic-form score statistics and their fourth-order variance estimators.

Every quantity has two implementations: a fast one working through the
n x n Gram matrix of the covariate (or projection-residual) rows, and a
literal enumeration over index tuples that serves as an independent
oracle in the test suite.
"""

from __future__ import annotations

import itertools
from math import comb

import numpy as np
from numba import njit

__all__ = [
    "DegenerateVarianceError",
    "stat_tn",
    "stat_mn",
    "stat_tn_enumerated",
    "stat_mn_enumerated",
    "var_est_r1n",
    "var_est_rn",
    "quartic_variance_core",
    "quartic_sum_enumerated",
    "trace_sigma_sq",
    "cross_kernel_mean",
]


class DegenerateVarianceError(RuntimeError):
    """Raised when a variance estimate is nonpositive.

    The rejection rule divides by the square root of the estimate, so a
    nonpositive value leaves the standardized statistic undefined; the
    estimate is reported rather than clamped.
    """

    def __init__(self, value: float):
        super().__init__(f"nonpositive variance estimate {value!r}")
        self.value = value


def _quadratic_score(m: np.ndarray, eps: np.ndarray) -> float:
    # (1/n) sum_{i != j} eps_i eps_j m_i' m_j, via the rank-one identity
    # ||sum_i eps_i m_i||^2 - sum_i eps_i^2 ||m_i||^2.
    n = eps.shape[0]
    s = m.T @ eps
    diag = float(np.einsum("i,i->", eps * eps, np.einsum("ij,ij->i", m, m)))
    return (float(s @ s) - diag) / n


def _check_pair(m, eps, min_n):
    m = np.asarray(m, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if m.ndim != 2 or eps.ndim != 1 or m.shape[0] != eps.shape[0]:
        raise ValueError("rows of the covariate block must match the residual length")
    if m.shape[0] < min_n:
        raise ValueError(f"need at least {min_n} observations")
    return m, eps


def stat_tn(x: np.ndarray, residuals: np.ndarray) -> float:
    """Score statistic of the interest block against nuisance residuals.

    Computed in O(n p) through the score sum rather than the literal
    double loop over index pairs.
    """
    x, residuals = _check_pair(x, residuals, 2)
    return _quadratic_score(x, residuals)


def stat_mn(eta_hat: np.ndarray, residuals: np.ndarray) -> float:
    """Orthogonalized score statistic, on projection residuals.

    Identical arithmetic to :func:`stat_tn`; callers supply
    eta_hat = x - z @ w for an estimated or known projection matrix, so a
    zero projection reproduces the non-orthogonalized statistic exactly.
    """
    eta_hat, residuals = _check_pair(eta_hat, residuals, 2)
    return _quadratic_score(eta_hat, residuals)


def stat_tn_enumerated(x: np.ndarray, residuals: np.ndarray) -> float:
    """Literal double-loop evaluation of the score statistic (test oracle)."""
    x, eps = _check_pair(x, residuals, 2)
    n = eps.shape[0]
    g = x @ x.T
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += eps[i] * eps[j] * g[i, j]
    return total / n


def stat_mn_enumerated(eta_hat: np.ndarray, residuals: np.ndarray) -> float:
    """Literal double-loop evaluation on projection residuals (test oracle)."""
    return stat_tn_enumerated(eta_hat, residuals)


@njit(cache=True)
def _triple_pattern_sum(g):
    # Sum over ordered triples a < b < c of the three one-shared-index
    # Gram products, each weighted by the count of admissible positions
    # for the fourth (free) index.  The weights below are the collapsed
    # signed tallies of the twelve patterns arising from the expanded
    # quadruple kernel.
    n = g.shape[0]
    total = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            gab = g[a, b]
            for c in range(b + 1, n):
                total += gab * g[a, c] * (2 * c - 2 * b - n + 1)
                total += gab * g[b, c] * (2 * a - 2 * c + n + 1)
                total += g[a, c] * g[b, c] * (2 * b - 2 * a - n + 1)
    return total


def _quartic_gram_sum(m: np.ndarray) -> float:
    """Sum over ordered quadruples i<j<k<l of the cyclic difference kernel.

    The kernel (m_i - m_j)'(m_k - m_l) * (m_j - m_k)'(m_l - m_i) expands
    into sixteen products of Gram entries; grouping them by how many
    indices the two entries share gives square, interleaved-pair, and
    one-shared-index pattern sums, each computable from the Gram matrix
    with prefix sums or an O(n^3) pass.  The expansion is certified
    against literal enumeration in the test suite.
    """
    n = m.shape[0]
    g = m @ m.T
    np.fill_diagonal(g, 0.0)

    a_idx, b_idx = np.triu_indices(n, k=1)
    gap = b_idx - a_idx - 1
    squares = float(np.sum(g[a_idx, b_idx] ** 2 * (gap * (n - 1 - b_idx) + a_idx * gap)))

    # interleaved pairs: sum_{a<b<c<d} g[a,c] * g[b,d]
    lower = np.cumsum(g, axis=0) - g          # lower[b, c] = sum_{a<b} g[a, c]
    upper = g.sum(axis=1, keepdims=True) - np.cumsum(g, axis=1)  # sum_{d>c} g[b, d]
    cross = float(np.sum(np.triu(lower * upper, k=1)))

    triples = float(_triple_pattern_sum(g))
    return squares + 2.0 * cross + triples


def quartic_variance_core(m: np.ndarray) -> float:
    """Fourth-order trace estimate before the noise-variance factor.

    Equals the quadruple-kernel sum divided by 2 * C(n, 4); multiplying
    by sigma_hat^4 gives the variance estimate for the matching score
    statistic.  May be negative in tiny samples.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-D array of observation rows")
    n = m.shape[0]
    if n < 4:
        raise ValueError("need at least 4 observations")
    return _quartic_gram_sum(m) / (2.0 * comb(n, 4))


def var_est_r1n(x: np.ndarray, sigma2_hat: float) -> float:
    """Variance estimate for the non-orthogonalized score statistic.

    Raises :class:`DegenerateVarianceError` when the estimate is
    nonpositive (e.g. a constant design), since the rejection rule is
    undefined there.
    """
    core = quartic_variance_core(x)
    value = float(sigma2_hat) ** 2 * core
    if not value > 0.0:
        raise DegenerateVarianceError(value)
    return value


def var_est_rn(eta_hat: np.ndarray, sigma2_hat: float) -> float:
    """Variance estimate for the orthogonalized statistic.

    Same fourth-order form as :func:`var_est_r1n` with projection
    residuals in place of the raw interest block.
    """
    return var_est_r1n(eta_hat, sigma2_hat)


def quartic_sum_enumerated(m: np.ndarray) -> float:
    """Literal enumeration of the quadruple kernel sum (test oracle)."""
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    if n < 4:
        raise ValueError("need at least 4 observations")
    total = 0.0
    for i, j, k, l in itertools.combinations(range(n), 4):
        total += float((m[i] - m[j]) @ (m[k] - m[l])) * float((m[j] - m[k]) @ (m[l] - m[i]))
    return total


def trace_sigma_sq(cov: np.ndarray) -> float:
    """Trace of the squared matrix, sum_ij A_ij A_ji."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("expected a square matrix")
    return float(np.sum(cov * cov.T))


def cross_kernel_mean(z: np.ndarray, m: np.ndarray, k: int, l: int) -> float:
    """Averaged cross-product kernel entry (1/(n(n-1))) sum_{i!=j} z_ik m_i'm_j z_jl.

    With m the raw interest block this targets the product of population
    cross-covariances E(z_k m)'E(z_l m); with projection residuals its
    expectation is zero.  Used by the degeneracy diagnostics.
    """
    z = np.asarray(z, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    n = z.shape[0]
    if n < 2 or m.shape[0] != n:
        raise ValueError("need matching blocks with at least 2 rows")
    a = m.T @ z[:, k]
    b = m.T @ z[:, l]
    diag = float(np.sum(z[:, k] * z[:, l] * np.einsum("ij,ij->i", m, m)))
    return (float(a @ b) - diag) / (n * (n - 1))
