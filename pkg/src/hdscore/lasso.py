"""Penalized least-squares machinery.

Cyclic coordinate-descent lasso with soft thresholding, cross-validated
penalty selection on a log-spaced path with warm starts, iterative
scaled-lasso noise estimation, and column-wise estimation of the
projection matrix mapping the nuisance block onto the interest block.

The solver minimizes (1/2n)||target - design @ coef||^2 + lam * ||coef||_1
with no intercept and no internal column rescaling: callers are expected
to pass centered (and, if desired, standardized) data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .streams import as_generator

__all__ = [
    "LassoFit",
    "VarianceEstimate",
    "CvCurve",
    "soft_threshold",
    "lasso_fit",
    "lasso_objective",
    "kkt_violation",
    "cv_select_lambda",
    "scaled_lasso_sigma",
    "estimate_w_column",
    "estimate_w",
]


@dataclass
class LassoFit:
    """Solution of one penalized least-squares problem.

    ``residuals`` always equals ``target - design @ coefficients`` for the
    data the fit was computed on.  ``objective_history`` is populated only
    when the fit was run with per-sweep objective tracking.
    """

    coefficients: np.ndarray
    lam: float
    residuals: np.ndarray
    n_iterations: int
    converged: bool
    objective_history: np.ndarray | None = None


@dataclass
class VarianceEstimate:
    """Error-variance estimate with the method that produced it."""

    sigma2_hat: float
    method: str  # "scaled_lasso" | "residual_df"
    converged: bool = True
    n_iterations: int = 0


@dataclass
class CvCurve:
    """Cross-validation curve: penalty grid and mean held-out squared error."""

    lambdas: np.ndarray
    mse: np.ndarray


def soft_threshold(value, lam):
    """sign(value) * max(|value| - lam, 0), elementwise."""
    return np.sign(value) * np.maximum(np.abs(value) - lam, 0.0)


@njit(cache=True)
def _cd_sweeps(design_t, colsq, lam, coef, resid, max_sweeps, tol):
    """Run full cyclic coordinate-descent sweeps in place.

    ``design_t`` holds the design transposed (one row per column) so each
    coordinate touches contiguous memory.  Returns (sweeps, converged).
    """
    p = design_t.shape[0]
    work_idx = np.arange(p)
    return _cd_active_sweeps(design_t, colsq, lam, coef, resid, work_idx,
                             max_sweeps, tol)


@njit(cache=True)
def _cd_active_sweeps(design_t, colsq, lam, coef, resid, work_idx, max_sweeps, tol):
    """Cyclic sweeps restricted to the coordinates listed in ``work_idx``."""
    n = resid.shape[0]
    sweeps = 0
    converged = False
    for _ in range(max_sweeps):
        max_delta = 0.0
        for t in range(work_idx.shape[0]):
            j = work_idx[t]
            cj = colsq[j]
            if cj <= 0.0:
                continue
            col = design_t[j]
            rho = 0.0
            for i in range(n):
                rho += col[i] * resid[i]
            rho = rho / n + cj * coef[j]
            if rho > lam:
                cnew = (rho - lam) / cj
            elif rho < -lam:
                cnew = (rho + lam) / cj
            else:
                cnew = 0.0
            d = cnew - coef[j]
            if d != 0.0:
                coef[j] = cnew
                for i in range(n):
                    resid[i] -= col[i] * d
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        sweeps += 1
        if max_delta < tol:
            converged = True
            break
    return sweeps, converged


@njit(cache=True)
def _cd_solve_screened(design_t, colsq, lam, lam_prev, coef, resid, max_sweeps, tol):
    """Coordinate descent with sequential-strong-rule screening.

    Sweeps run on a working set (current support plus coordinates passing
    the strong-rule filter at the warm start); a stationarity pass over
    all coordinates then admits any violators and iterates.  The returned
    solution therefore satisfies the same stopping criterion as full
    cyclic sweeps: no excluded coordinate would move, and the last sweep
    over the working set changed no coefficient by ``tol`` or more.
    """
    p, n = design_t.shape
    grad = np.dot(design_t, resid)
    screen = n * (2.0 * lam - lam_prev)
    work = np.zeros(p, np.bool_)
    for j in range(p):
        if coef[j] != 0.0 or abs(grad[j]) >= screen:
            work[j] = True
    total = 0
    converged = False
    lam_n = lam * n
    while total < max_sweeps:
        n_work = 0
        for j in range(p):
            if work[j]:
                n_work += 1
        work_idx = np.empty(n_work, np.int64)
        t = 0
        for j in range(p):
            if work[j]:
                work_idx[t] = j
                t += 1
        s, conv = _cd_active_sweeps(design_t, colsq, lam, coef, resid, work_idx,
                                    max_sweeps - total, tol)
        total += s
        grad = np.dot(design_t, resid)
        added = False
        for j in range(p):
            if not work[j] and abs(grad[j]) > lam_n:
                work[j] = True
                added = True
        if not added:
            converged = conv
            break
    return total, converged


@njit(cache=True)
def _cd_path(design_t, colsq, target, lams, max_sweeps, tol):
    """Warm-started screened solutions along a decreasing penalty path."""
    p = design_t.shape[0]
    n_lam = lams.shape[0]
    coefs = np.zeros((n_lam, p))
    coef = np.zeros(p)
    resid = target.copy()
    lam_prev = lams[0]
    for k in range(n_lam):
        _cd_solve_screened(design_t, colsq, lams[k], lam_prev, coef, resid,
                           max_sweeps, tol)
        lam_prev = lams[k]
        coefs[k] = coef
    return coefs


def _check_problem(design: np.ndarray, target: np.ndarray):
    if design.ndim != 2:
        raise ValueError("design must be 2-D")
    if target.ndim != 1 or target.shape[0] != design.shape[0]:
        raise ValueError("target length must match design rows")
    if design.size and not np.all(np.isfinite(design)):
        raise ValueError("non-finite entries in design")
    if not np.all(np.isfinite(target)):
        raise ValueError("non-finite entries in target")


def lasso_fit(design: np.ndarray, target: np.ndarray, lam: float, *,
              coef_init: np.ndarray | None = None, max_sweeps: int = 10_000,
              tol: float = 1e-7, track_objective: bool = False) -> LassoFit:
    """Solve the lasso problem at a single penalty by coordinate descent.

    Stops when the largest coefficient change in a full sweep falls below
    ``tol`` (default 1e-7) or after ``max_sweeps`` sweeps.  With
    ``track_objective=True`` the penalized objective is recorded after
    every sweep (used by the monotonicity checks).
    """
    design = np.asarray(design, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_problem(design, target)
    if not lam > 0:
        raise ValueError("penalty must be positive")
    n, p = design.shape
    if p == 0:
        return LassoFit(np.zeros(0), float(lam), target.copy(), 0, True)

    design_t = np.ascontiguousarray(design.T)
    colsq = (design_t ** 2).sum(axis=1) / n
    if coef_init is None:
        coef = np.zeros(p)
        resid = target.copy()
    else:
        coef = np.array(coef_init, dtype=np.float64, copy=True)
        if coef.shape != (p,):
            raise ValueError("coef_init has wrong length")
        resid = target - design @ coef

    if track_objective:
        history = []
        sweeps = 0
        converged = False
        for _ in range(max_sweeps):
            _, done = _cd_sweeps(design_t, colsq, lam, coef, resid, 1, tol)
            sweeps += 1
            history.append(lasso_objective(design, target, coef, lam))
            if done:
                converged = True
                break
        obj_hist = np.asarray(history)
    else:
        sweeps, converged = _cd_solve_screened(design_t, colsq, lam, lam, coef,
                                               resid, max_sweeps, tol)
        obj_hist = None

    residuals = target - design @ coef
    return LassoFit(coef, float(lam), residuals, int(sweeps), bool(converged),
                    obj_hist)


def lasso_objective(design, target, coef, lam) -> float:
    """(1/2n)||target - design @ coef||^2 + lam * ||coef||_1."""
    n = len(target)
    r = target - design @ coef
    return float(r @ r / (2.0 * n) + lam * np.abs(coef).sum())


def kkt_violation(design, target, coef, lam) -> float:
    """Largest stationarity violation of a candidate lasso solution.

    For zero coefficients the score -(1/n) d_j' r must lie in
    [-lam, lam]; for active ones it must equal -sign(coef_j) * lam.
    Returns the maximum absolute violation over coordinates.
    """
    design = np.asarray(design, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    coef = np.asarray(coef, dtype=np.float64)
    n, p = design.shape
    if p == 0:
        return 0.0
    grad = -(design.T @ (target - design @ coef)) / n
    active = coef != 0
    worst = 0.0
    if np.any(~active):
        worst = max(worst, float(np.max(np.abs(grad[~active]) - lam, initial=-np.inf)))
    if np.any(active):
        worst = max(worst, float(np.max(np.abs(grad[active] + np.sign(coef[active]) * lam))))
    return max(worst, 0.0)


def cv_select_lambda(design: np.ndarray, target: np.ndarray, n_folds: int = 10,
                     path_len: int = 100, rng=None, *,
                     path_tol: float = 1e-4,
                     path_max_sweeps: int = 2000) -> tuple[float, CvCurve]:
    """Pick a penalty by k-fold cross-validation over a log-spaced path.

    The path runs from lam_max = max_j |(1/n) d_j' target| down to
    1e-3 * lam_max.  Folds are a seeded random partition of the rows;
    fits along the path reuse warm starts.  Ties in mean held-out squared
    error break toward the larger (sparser) penalty.

    ``path_tol`` controls only the internal path fits: held-out error is
    insensitive far below its own Monte Carlo noise, so the default is
    looser than the final-fit tolerance.  The fit a caller performs at
    the selected penalty still uses the strict default.
    """
    design = np.asarray(design, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_problem(design, target)
    n, p = design.shape
    if p == 0:
        raise ValueError("cannot cross-validate an empty design")
    if not 2 <= n_folds <= n:
        raise ValueError("need 2 <= n_folds <= n")
    rng = as_generator(rng)

    lam_max = float(np.max(np.abs(design.T @ target)) / n)
    if lam_max <= 0.0:
        lam_max = 1.0  # degenerate zero target: any penalty gives zero error
    lams = np.geomspace(lam_max, 1e-3 * lam_max, path_len)

    perm = rng.permutation(n)
    folds = np.array_split(perm, n_folds)
    total_sq_err = np.zeros(path_len)
    for hold in folds:
        mask = np.ones(n, dtype=bool)
        mask[hold] = False
        train_x = np.ascontiguousarray(design[mask])
        train_y = np.ascontiguousarray(target[mask])
        design_t = np.ascontiguousarray(train_x.T)
        colsq = (design_t ** 2).sum(axis=1) / train_x.shape[0]
        coefs = _cd_path(design_t, colsq, train_y, lams, path_max_sweeps, path_tol)
        pred = design[hold] @ coefs.T  # (n_hold, path_len)
        total_sq_err += ((target[hold][:, None] - pred) ** 2).sum(axis=0)

    cv_mse = total_sq_err / n
    best = int(np.argmin(cv_mse))  # first minimum = largest penalty on ties
    return float(lams[best]), CvCurve(lams, cv_mse)


def scaled_lasso_sigma(design: np.ndarray, target: np.ndarray, *,
                       max_iter: int = 50, tol: float = 1e-6) -> VarianceEstimate:
    """Joint noise-level and coefficient estimation by alternating fits.

    Alternates a lasso fit at penalty sigma_hat * sqrt(2 log p / n) with
    the update sigma_hat^2 = ||residuals||^2 / n, starting from the
    target's raw variance, until successive sigma_hat values differ by
    less than ``tol`` or ``max_iter`` rounds pass.
    """
    design = np.asarray(design, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_problem(design, target)
    n, p = design.shape
    if n < 2:
        raise ValueError("need at least two observations")
    if p == 0:
        sigma2 = float(target @ target / n)
        return VarianceEstimate(sigma2, "scaled_lasso", True, 0)

    lam0 = math.sqrt(2.0 * math.log(p) / n) if p > 1 else math.sqrt(2.0 / n)
    design_t = np.ascontiguousarray(design.T)
    colsq = (design_t ** 2).sum(axis=1) / n
    coef = np.zeros(p)
    resid = target.copy()
    sigma = math.sqrt(float(np.var(target)))
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        lam = max(sigma * lam0, 1e-12)
        _cd_solve_screened(design_t, colsq, lam, lam, coef, resid, 10_000, 1e-7)
        resid = target - design @ coef
        sigma_new = math.sqrt(float(resid @ resid / n))
        if abs(sigma_new - sigma) < tol:
            sigma = sigma_new
            converged = True
            break
        sigma = sigma_new
    return VarianceEstimate(sigma * sigma, "scaled_lasso", converged, iters)


def estimate_w_column(z: np.ndarray, x_col: np.ndarray, lambda_mode="per_column_cv",
                      rng=None, *, n_folds: int = 10, path_len: int = 100,
                      coef_init: np.ndarray | None = None) -> LassoFit:
    """Lasso regression of one interest column on the nuisance block.

    ``lambda_mode`` is either ``"per_column_cv"`` (cross-validate the
    penalty for this column) or a positive number (use that shared
    penalty, typically obtained once and reused across columns).
    """
    if isinstance(lambda_mode, (int, float)) and not isinstance(lambda_mode, bool):
        lam = float(lambda_mode)
    elif lambda_mode == "per_column_cv":
        lam, _ = cv_select_lambda(z, x_col, n_folds=n_folds, path_len=path_len, rng=rng)
    else:
        raise ValueError(f"unknown lambda_mode {lambda_mode!r}")
    return lasso_fit(z, x_col, lam, coef_init=coef_init)


def estimate_w(z: np.ndarray, x: np.ndarray, lambda_mode="per_column_cv",
               rng=None, *, n_folds: int = 10, path_len: int = 100) -> np.ndarray:
    """Column-wise projection-matrix estimate (p_gamma x p_beta).

    Modes: ``"per_column_cv"`` cross-validates every column separately;
    ``"shared_cv"`` cross-validates the first column once and reuses that
    penalty with warm starts across columns; a number is used directly as
    the shared penalty.
    """
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or z.ndim != 2 or x.shape[0] != z.shape[0]:
        raise ValueError("x and z need matching row counts")
    p_gamma, p_beta = z.shape[1], x.shape[1]
    w = np.zeros((p_gamma, p_beta))
    if p_gamma == 0 or p_beta == 0:
        return w
    rng = as_generator(rng)

    if lambda_mode == "per_column_cv":
        for k in range(p_beta):
            fit = estimate_w_column(z, x[:, k], "per_column_cv", rng,
                                    n_folds=n_folds, path_len=path_len)
            w[:, k] = fit.coefficients
        return w

    if lambda_mode == "shared_cv":
        lam, _ = cv_select_lambda(z, x[:, 0], n_folds=n_folds,
                                  path_len=path_len, rng=rng)
    elif isinstance(lambda_mode, (int, float)) and not isinstance(lambda_mode, bool):
        lam = float(lambda_mode)
    else:
        raise ValueError(f"unknown lambda_mode {lambda_mode!r}")

    prev = None
    for k in range(p_beta):
        fit = lasso_fit(z, x[:, k], lam, coef_init=prev)
        w[:, k] = fit.coefficients
        prev = fit.coefficients
    return w
