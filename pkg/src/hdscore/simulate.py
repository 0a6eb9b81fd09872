"""Monte Carlo harness and theoretical power calculators.

A scenario bundles a generative design with a coefficient setting
(null, sparse alternative, dense alternative), a grid of signal values,
and the methods to run.  Replications are independent units of work
keyed by (master_seed, replication), so reports do not depend on worker
count or scheduling order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .data import (DesignSpec, SparsePattern, Toeplitz, CornerW, build_coefficients,
                   covariance_parts, design_from_dict, design_to_dict,
                   sample_covariates)
from .lasso import estimate_w, scaled_lasso_sigma
from .streams import derive_rng
from .testing import _nuisance_residuals, normal_cdf, normal_upper_quantile
from .ustat import DegenerateVarianceError, quartic_variance_core, stat_mn, trace_sigma_sq

__all__ = [
    "ScenarioConfig",
    "MonteCarloCell",
    "MonteCarloReport",
    "run_scenario",
    "null_density_diagnostic",
    "theoretical_power_tn",
    "theoretical_power_mn",
    "relative_efficiency",
    "ks_distance_to_normal",
    "signal_grid",
    "toeplitz_scenario",
    "corner_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
]

SETTINGS = ("null", "sparse_alt", "dense_alt")
METHODS = ("tn", "mn", "mn_oracle")
SEED_SCHEME = "numpy SeedSequence(master_seed, spawn_key=(replication,))"


@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo configuration."""

    design: DesignSpec
    setting: str
    b0_grid: tuple[float, ...]
    n_reps: int
    alpha: float = 0.05
    methods: tuple[str, ...] = ("tn", "mn")
    master_seed: int = 0
    w_lambda_mode: object = "shared_cv"  # passed to estimate_w for "mn"

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate methods")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if not self.b0_grid:
            raise ValueError("b0_grid must be nonempty")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.setting == "null" and any(b != 0.0 for b in self.b0_grid):
            raise ValueError("null setting requires a zero signal grid")
        p_beta = self.design.p_beta
        s_beta = self.design.beta_pattern.s
        if self.setting == "sparse_alt" and s_beta != int(0.05 * p_beta):
            raise ValueError("sparse alternative requires s_beta = floor(0.05 * p_beta)")
        if self.setting == "dense_alt" and s_beta != int(0.50 * p_beta):
            raise ValueError("dense alternative requires s_beta = floor(0.50 * p_beta)")


@dataclass
class MonteCarloCell:
    """Tally for one (method, signal value) pair."""

    method: str
    b0: float
    rejections: int
    n_reps: int
    n_degenerate: int
    n_errors: int
    z_values: np.ndarray  # standardized statistics, NaN where a replication failed

    @property
    def n_effective(self) -> int:
        # degenerate-variance replications carry no decision
        return self.n_reps - self.n_degenerate

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.n_effective if self.n_effective else float("nan")

    @property
    def binomial_se(self) -> float:
        if not self.n_effective:
            return float("nan")
        r = self.rejection_rate
        return math.sqrt(r * (1.0 - r) / self.n_effective)


@dataclass
class MonteCarloReport:
    """Per-configuration rejection frequencies with seed lineage."""

    alpha: float
    master_seed: int
    seed_scheme: str
    cells: list[MonteCarloCell]
    runtime_seconds: float = 0.0  # informational; excluded from serialized output

    def cell(self, method: str, b0: float | None = None) -> MonteCarloCell:
        for c in self.cells:
            if c.method == method and (b0 is None or c.b0 == b0):
                return c
        raise KeyError(f"no cell for method={method!r}, b0={b0!r}")

    def to_json_dict(self, include_z: bool = False) -> dict:
        rows = []
        for c in self.cells:
            row = {
                "method": c.method,
                "b0": c.b0,
                "rejections": c.rejections,
                "n_reps": c.n_reps,
                "n_degenerate": c.n_degenerate,
                "n_errors": c.n_errors,
                "rejection_rate": c.rejection_rate,
                "binomial_se": c.binomial_se,
            }
            if include_z:
                row["z_values"] = [None if math.isnan(z) else z for z in c.z_values]
            rows.append(row)
        return {
            "alpha": self.alpha,
            "master_seed": self.master_seed,
            "seed_scheme": self.seed_scheme,
            "cells": rows,
        }

    def to_csv_text(self) -> str:
        lines = ["method,b0,rejections,n_reps,n_degenerate,n_errors,"
                 "rejection_rate,binomial_se"]
        for c in self.cells:
            lines.append(f"{c.method},{c.b0!r},{c.rejections},{c.n_reps},"
                         f"{c.n_degenerate},{c.n_errors},{c.rejection_rate!r},"
                         f"{c.binomial_se!r}")
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=16)
def _true_w_cached(cov, p_beta: int, p_gamma: int) -> np.ndarray:
    return covariance_parts(cov, p_beta, p_gamma).w


def _simulate_replication(task):
    """Run one replication; returns (method_idx, b0_idx, reject, degen, err, z)."""
    config, rep = task
    design = config.design
    rng = derive_rng(config.master_seed, rep)
    x, z = sample_covariates(design, rng)
    noise = design.error_sd * rng.standard_normal(design.n)
    z_gamma = z @ design.gamma if design.p_gamma else np.zeros(design.n)

    blocks = {}
    if "tn" in config.methods:
        blocks["tn"] = x
    if "mn" in config.methods:
        w_hat = estimate_w(z, x, lambda_mode=config.w_lambda_mode, rng=rng)
        blocks["mn"] = x - z @ w_hat
    if "mn_oracle" in config.methods:
        w_true = _true_w_cached(design.covariance, design.p_beta, design.p_gamma)
        blocks["mn_oracle"] = x - z @ w_true

    cores = {m: quartic_variance_core(blocks[m]) for m in config.methods}
    z_alpha = normal_upper_quantile(config.alpha)
    nan = float("nan")
    out = []
    for bi, b0 in enumerate(config.b0_grid):
        beta = build_coefficients(design.p_beta, design.beta_pattern.s, b0)
        y = x @ beta + z_gamma + noise
        try:
            eps, _ = _nuisance_residuals(z, y, rng, 10, 100)
            sigma2 = scaled_lasso_sigma(z, y).sigma2_hat
        except Exception:
            out.extend((mi, bi, 0, 0, 1, nan) for mi in range(len(config.methods)))
            continue
        for mi, meth in enumerate(config.methods):
            try:
                variance = sigma2 * sigma2 * cores[meth]
                if not variance > 0.0:
                    raise DegenerateVarianceError(variance)
                statistic = stat_mn(blocks[meth], eps)
                z_val = statistic / math.sqrt(2.0 * variance)
                out.append((mi, bi, int(z_val >= z_alpha), 0, 0, z_val))
            except DegenerateVarianceError:
                out.append((mi, bi, 0, 1, 0, nan))
            except Exception:
                out.append((mi, bi, 0, 0, 1, nan))
    return out


def run_scenario(config: ScenarioConfig, threads: int = 1) -> MonteCarloReport:
    """Run all replications of a scenario and tally rejections.

    ``threads`` > 1 distributes replications over worker processes; the
    report is identical for any worker count because every replication
    derives its own stream and the tallies are index-ordered sums.
    """
    start = time.perf_counter()
    n_methods, n_b0 = len(config.methods), len(config.b0_grid)
    rejections = np.zeros((n_methods, n_b0), dtype=np.int64)
    degenerate = np.zeros_like(rejections)
    errors = np.zeros_like(rejections)
    z_values = np.full((n_methods, n_b0, config.n_reps), np.nan)

    tasks = [(config, rep) for rep in range(config.n_reps)]
    if threads <= 1:
        results = map(_simulate_replication, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=threads)
        results = pool.map(_simulate_replication, tasks,
                           chunksize=max(1, config.n_reps // (8 * threads)))

    for rep, rows in enumerate(results):
        for mi, bi, rej, deg, err, z in rows:
            rejections[mi, bi] += rej
            degenerate[mi, bi] += deg
            errors[mi, bi] += err
            z_values[mi, bi, rep] = z
    if threads > 1:
        pool.shutdown()

    cells = [
        MonteCarloCell(method=m, b0=b0, rejections=int(rejections[mi, bi]),
                       n_reps=config.n_reps, n_degenerate=int(degenerate[mi, bi]),
                       n_errors=int(errors[mi, bi]), z_values=z_values[mi, bi].copy())
        for mi, m in enumerate(config.methods)
        for bi, b0 in enumerate(config.b0_grid)
    ]
    return MonteCarloReport(alpha=config.alpha, master_seed=config.master_seed,
                            seed_scheme=SEED_SCHEME, cells=cells,
                            runtime_seconds=time.perf_counter() - start)


def ks_distance_to_normal(z_samples) -> float:
    """Kolmogorov-Smirnov distance between a sample and the standard normal."""
    z = np.sort(np.asarray(z_samples, dtype=np.float64))
    z = z[np.isfinite(z)]
    n = z.size
    if n == 0:
        raise ValueError("no finite samples")
    cdf = np.array([normal_cdf(v) for v in z])
    upper = np.max(np.arange(1, n + 1) / n - cdf)
    lower = np.max(cdf - np.arange(0, n) / n)
    return float(max(upper, lower))


def null_density_diagnostic(config: ScenarioConfig, threads: int = 1):
    """Standardized statistics under the null plus their KS distance to normal.

    Requires a null-setting configuration with a single method; returns
    (z_samples, ks_statistic).
    """
    if config.setting != "null":
        raise ValueError("diagnostic requires a null-setting configuration")
    if len(config.methods) != 1 or len(config.b0_grid) != 1:
        raise ValueError("diagnostic requires a single method and a single grid point")
    report = run_scenario(config, threads=threads)
    z = report.cells[0].z_values
    z = z[np.isfinite(z)]
    return z, ks_distance_to_normal(z)


# ---------------------------------------------------------------------------
# Theoretical power


def _power(beta, design: DesignSpec, n, alpha, use_eta_variance: bool) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (design.p_beta,):
        raise ValueError("beta has wrong length")
    n = design.n if n is None else int(n)
    parts = covariance_parts(design.covariance, design.p_beta, design.p_gamma)
    base = parts.sigma_eta if use_eta_variance else parts.sigma_x
    lam = design.error_sd ** 4 * trace_sigma_sq(base)
    v = parts.sigma_eta @ beta
    shift = n * float(v @ v) / math.sqrt(2.0 * lam)
    return normal_cdf(-normal_upper_quantile(alpha) + shift)


def theoretical_power_tn(beta, design: DesignSpec, n=None, alpha: float = 0.05) -> float:
    """Asymptotic local power of the non-orthogonalized test.

    Noncentrality n * beta' sigma_eta^2 beta over sqrt(2 sigma^4
    tr(sigma_x^2)), evaluated from the design's closed-form covariance.
    """
    return _power(beta, design, n, alpha, use_eta_variance=False)


def theoretical_power_mn(beta, design: DesignSpec, n=None, alpha: float = 0.05) -> float:
    """Asymptotic local power of the orthogonalized test (eta-based variance)."""
    return _power(beta, design, n, alpha, use_eta_variance=True)


def relative_efficiency(design: DesignSpec) -> float:
    """Pitman efficiency of the orthogonalized vs. plain test, always >= 1."""
    parts = covariance_parts(design.covariance, design.p_beta, design.p_gamma)
    return math.sqrt(trace_sigma_sq(parts.sigma_x) / trace_sigma_sq(parts.sigma_eta))


# ---------------------------------------------------------------------------
# Scenario builders


def signal_grid(design: DesignSpec, points: int = 6) -> tuple[float, ...]:
    """Evenly spaced signal values from 0 to sqrt(||gamma||^2 / s_beta)."""
    s_beta = design.beta_pattern.s
    if s_beta < 1:
        raise ValueError("signal grid needs s_beta >= 1")
    gamma = design.gamma_pattern
    top = math.sqrt(gamma.s * gamma.value ** 2 / s_beta)
    return tuple(np.linspace(0.0, top, points))


def _setting_s_beta(setting: str, p_beta: int) -> int:
    if setting == "dense_alt":
        return int(0.50 * p_beta)
    return int(0.05 * p_beta)  # sparse default; irrelevant under the null


def _build_config(design, setting, b0_grid, n_reps, alpha, methods, master_seed,
                  w_lambda_mode):
    if b0_grid is None:
        if setting == "null":
            grid = (0.0,)
        else:
            grid = (signal_grid(design)[-1],)  # endpoint of the signal range
    elif b0_grid == "curve":
        grid = signal_grid(design)
    else:
        grid = tuple(float(b) for b in b0_grid)
    design = replace(design, beta_pattern=SparsePattern(design.beta_pattern.s,
                                                        grid[-1]))
    return ScenarioConfig(design=design, setting=setting, b0_grid=grid,
                          n_reps=n_reps, alpha=alpha, methods=tuple(methods),
                          master_seed=master_seed, w_lambda_mode=w_lambda_mode)


def toeplitz_scenario(n: int, p: int, rho: float, setting: str, *,
                      n_reps: int = 500, alpha: float = 0.05,
                      methods=("tn", "mn"), master_seed: int = 0,
                      b0_grid=None, g0: float = 0.5,
                      w_lambda_mode="shared_cv") -> ScenarioConfig:
    """Joint AR(1)-correlated design with the covariates split evenly."""
    if p % 2:
        raise ValueError("p must be even (equal interest/nuisance split)")
    p_beta = p_gamma = p // 2
    design = DesignSpec(
        n=n, p_beta=p_beta, p_gamma=p_gamma, covariance=Toeplitz(rho),
        beta_pattern=SparsePattern(_setting_s_beta(setting, p_beta), 0.0),
        gamma_pattern=SparsePattern(int(0.05 * p_gamma), g0),
    )
    return _build_config(design, setting, b0_grid, n_reps, alpha, methods,
                         master_seed, w_lambda_mode)


def corner_scenario(n: int, p: int, d_x: int, d_z: int = 3, q: float = 0.5,
                    rho: float = 0.5, setting: str = "null", *,
                    n_reps: int = 500, alpha: float = 0.05, methods=("tn", "mn"),
                    master_seed: int = 0, b0_grid=None, g0: float = 0.5,
                    w_lambda_mode="shared_cv") -> ScenarioConfig:
    """Corner design with strong interest/nuisance correlation."""
    if p % 2:
        raise ValueError("p must be even (equal interest/nuisance split)")
    p_beta = p_gamma = p // 2
    design = DesignSpec(
        n=n, p_beta=p_beta, p_gamma=p_gamma,
        covariance=CornerW(d_x=d_x, d_z=d_z, q=q, rho_eta=rho, rho_z=rho),
        beta_pattern=SparsePattern(_setting_s_beta(setting, p_beta), 0.0),
        gamma_pattern=SparsePattern(int(0.05 * p_gamma), g0),
    )
    return _build_config(design, setting, b0_grid, n_reps, alpha, methods,
                         master_seed, w_lambda_mode)


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return {
        "design": design_to_dict(config.design),
        "setting": config.setting,
        "b0_grid": list(config.b0_grid),
        "n_reps": config.n_reps,
        "alpha": config.alpha,
        "methods": list(config.methods),
        "master_seed": config.master_seed,
        "w_lambda_mode": config.w_lambda_mode,
    }


def scenario_from_dict(d: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig(
            design=design_from_dict(d["design"]),
            setting=d["setting"],
            b0_grid=tuple(float(b) for b in d["b0_grid"]),
            n_reps=int(d["n_reps"]),
            alpha=float(d.get("alpha", 0.05)),
            methods=tuple(d.get("methods", ("tn", "mn"))),
            master_seed=int(d.get("master_seed", 0)),
            w_lambda_mode=d.get("w_lambda_mode", "shared_cv"),
        )
    except KeyError as exc:
        raise ValueError(f"scenario config missing field {exc.args[0]!r}") from exc
