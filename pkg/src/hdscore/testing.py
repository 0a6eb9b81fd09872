"""End-to-end hypothesis-testing pipelines.

Both pipelines share the same nuisance machinery: a cross-validated
lasso of the response on the nuisance block supplies the residuals, a
scaled lasso on the same regression supplies the noise level, and the
matching fourth-order estimator supplies the variance.  Rejection is
one-sided: reject when statistic >= z_alpha * sqrt(2 * variance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .lasso import cv_select_lambda, estimate_w, lasso_fit, scaled_lasso_sigma
from .streams import as_generator
from .ustat import stat_mn, stat_tn, var_est_r1n, var_est_rn

__all__ = [
    "TestResult",
    "normal_upper_quantile",
    "normal_cdf",
    "run_tn_test",
    "run_mn_test",
]

DEFAULT_ALPHAS = (0.01, 0.05, 0.10)

# Rational inverse-normal approximation (Acklam's coefficients), refined
# below by one Halley step against the erfc-based CDF, which pushes the
# error to full double precision.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(x: float) -> float:
    """Standard normal distribution function via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _inverse_normal_cdf(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie strictly inside (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # One Halley refinement on Phi(x) - p.
    err = normal_cdf(x) - p
    u = err * _SQRT_2PI * math.exp(0.5 * x * x)
    x -= u / (1.0 + 0.5 * x * u)
    return x


def normal_upper_quantile(alpha: float) -> float:
    """z with P(N(0,1) > z) = alpha, for alpha strictly inside (0, 1)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    return -_inverse_normal_cdf(alpha)


@dataclass
class TestResult:
    """Outcome of one significance test.

    ``z_value`` is statistic / sqrt(2 * variance); ``p_value`` is the
    one-sided upper-tail probability 1 - Phi(z_value); ``reject_at``
    maps each requested level alpha to the decision z_value >= z_alpha.
    """

    method: str  # "tn" | "mn" | "mn_oracle"
    statistic: float
    variance: float
    z_value: float
    p_value: float
    reject_at: dict[float, bool]
    sigma2_hat: float
    nuisance_sparsity: int
    w_split: bool = False

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "variance": self.variance,
            "z_value": self.z_value,
            "p_value": self.p_value,
            "reject_at": {f"{a:g}": bool(r) for a, r in sorted(self.reject_at.items())},
            "sigma2_hat": self.sigma2_hat,
            "nuisance_sparsity": self.nuisance_sparsity,
            "w_split": self.w_split,
        }


def _nuisance_residuals(z, y, rng, n_folds, path_len):
    """CV-lasso residuals of y on the nuisance block, with fit sparsity."""
    if z.shape[1] == 0:
        return y.copy(), 0
    lam, _ = cv_select_lambda(z, y, n_folds=n_folds, path_len=path_len, rng=rng)
    fit = lasso_fit(z, y, lam)
    return fit.residuals, int(np.count_nonzero(fit.coefficients))


def _finish(method, statistic, variance, alpha_levels, sigma2, sparsity, w_split):
    z_value = statistic / math.sqrt(2.0 * variance)
    p_value = 0.5 * math.erfc(z_value / math.sqrt(2.0))
    reject = {float(a): bool(z_value >= normal_upper_quantile(float(a)))
              for a in alpha_levels}
    return TestResult(method=method, statistic=float(statistic),
                      variance=float(variance), z_value=float(z_value),
                      p_value=float(p_value), reject_at=reject,
                      sigma2_hat=float(sigma2), nuisance_sparsity=sparsity,
                      w_split=w_split)


def run_tn_test(dataset: Dataset, alpha_levels=DEFAULT_ALPHAS, rng=None, *,
                n_folds: int = 10, path_len: int = 100,
                sigma2: float | None = None) -> TestResult:
    """Non-orthogonalized score test of whether the interest block matters.

    Fits the nuisance coefficients by cross-validated lasso, estimates
    the noise level by scaled lasso on the same regression (unless
    ``sigma2`` is supplied), and standardizes the quadratic score
    statistic by its fourth-order variance estimate.
    """
    if dataset.n < 4:
        raise ValueError("need at least 4 observations")
    rng = as_generator(rng)
    eps, sparsity = _nuisance_residuals(dataset.z, dataset.y, rng, n_folds, path_len)
    if sigma2 is None:
        sigma2 = scaled_lasso_sigma(dataset.z, dataset.y).sigma2_hat
    statistic = stat_tn(dataset.x, eps)
    variance = var_est_r1n(dataset.x, sigma2)
    return _finish("tn", statistic, variance, alpha_levels, sigma2, sparsity, False)


def run_mn_test(dataset: Dataset, alpha_levels=DEFAULT_ALPHAS,
                w_source="estimate_full", rng=None, *, split_fraction: float = 0.5,
                w_lambda_mode="per_column_cv", n_folds: int = 10,
                path_len: int = 100, sigma2: float | None = None) -> TestResult:
    """Orthogonalized score test using projection residuals x - z @ w.

    ``w_source`` selects how the projection matrix is obtained:

    - ``"estimate_full"``: column-wise lasso fits on all rows (the
      default), with ``w_lambda_mode`` passed through to
      :func:`hdscore.lasso.estimate_w`;
    - ``"estimate_split"``: the first ceil(split_fraction * n) rows fit
      the projection, the remaining rows form the statistic (nuisance
      residuals and noise level are refit on the statistic rows);
    - a (p_gamma x p_beta) array: a known projection matrix, reported as
      method ``"mn_oracle"``.
    """
    if dataset.n < 4:
        raise ValueError("need at least 4 observations")
    rng = as_generator(rng)
    method = "mn"
    w_split = False

    if isinstance(w_source, np.ndarray):
        w = np.asarray(w_source, dtype=np.float64)
        if w.shape != (dataset.p_gamma, dataset.p_beta):
            raise ValueError("projection matrix has wrong shape")
        method = "mn_oracle"
        x_stat, z_stat, y_stat = dataset.x, dataset.z, dataset.y
    elif w_source == "estimate_full":
        w = estimate_w(dataset.z, dataset.x, lambda_mode=w_lambda_mode, rng=rng,
                       n_folds=n_folds, path_len=path_len)
        x_stat, z_stat, y_stat = dataset.x, dataset.z, dataset.y
    elif w_source == "estimate_split":
        if not 0.0 < split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        n_w = math.ceil(split_fraction * dataset.n)
        if dataset.n - n_w < 4:
            raise ValueError("split leaves fewer than 4 rows for the statistic")
        w = estimate_w(dataset.z[:n_w], dataset.x[:n_w], lambda_mode=w_lambda_mode,
                       rng=rng, n_folds=n_folds, path_len=path_len)
        x_stat = dataset.x[n_w:]
        z_stat = dataset.z[n_w:]
        y_stat = dataset.y[n_w:]
        w_split = True
    else:
        raise ValueError(f"unknown w_source {w_source!r}")

    eta_hat = x_stat - z_stat @ w
    eps, sparsity = _nuisance_residuals(z_stat, y_stat, rng, n_folds, path_len)
    if sigma2 is None:
        sigma2 = scaled_lasso_sigma(z_stat, y_stat).sigma2_hat
    statistic = stat_mn(eta_hat, eps)
    variance = var_est_rn(eta_hat, sigma2)
    return _finish(method, statistic, variance, alpha_levels, sigma2, sparsity, w_split)
