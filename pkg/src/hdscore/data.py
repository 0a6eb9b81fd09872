"""Dataset containers, synthetic covariate designs, and CSV ingestion.

The regression model splits covariates into an interest block ``x`` and a
nuisance block ``z``.  This module owns the immutable dataset container,
the generative designs used in the simulation studies (joint AR(1)
correlation, and a corner construction that forces strong cross-block
correlation), plus ingestion/standardization of external CSV data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .streams import as_generator

__all__ = [
    "Dataset",
    "SparsePattern",
    "Toeplitz",
    "CornerW",
    "Identity",
    "CovSpec",
    "DesignSpec",
    "CovarianceParts",
    "sample_toeplitz_normal",
    "sample_corner_design",
    "sample_covariates",
    "build_coefficients",
    "corner_w_matrix",
    "toeplitz_matrix",
    "covariance_parts",
    "generate_dataset",
    "ingest_csv",
    "design_to_dict",
    "design_from_dict",
]


class Dataset:
    """Immutable container for a response and the two covariate blocks.

    ``y`` has length n, ``x`` is n x p_beta (the block under test), ``z``
    is n x p_gamma (the nuisance block, possibly zero columns).  All
    entries must be finite.
    """

    __slots__ = ("y", "x", "z", "column_names")

    def __init__(self, y, x, z, column_names=None):
        y = np.array(y, dtype=np.float64, order="C", copy=True)
        x = np.array(x, dtype=np.float64, order="C", copy=True)
        z = np.array(z, dtype=np.float64, order="C", copy=True)
        if y.ndim != 1 or y.size < 1:
            raise ValueError("response must be a nonempty 1-D vector")
        n = y.size
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"interest block must be 2-D with {n} rows")
        if x.shape[1] < 1:
            raise ValueError("interest block needs at least one column")
        if z.ndim != 2 or z.shape[0] != n:
            raise ValueError(f"nuisance block must be 2-D with {n} rows")
        for name, arr in (("y", y), ("x", x), ("z", z)):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        y.flags.writeable = False
        x.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "column_names", column_names)

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p_beta(self) -> int:
        return self.x.shape[1]

    @property
    def p_gamma(self) -> int:
        return self.z.shape[1]

    def __repr__(self):
        return f"Dataset(n={self.n}, p_beta={self.p_beta}, p_gamma={self.p_gamma})"


@dataclass(frozen=True)
class SparsePattern:
    """First ``s`` coefficients equal ``value``, the rest are zero."""

    s: int
    value: float

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("sparsity count must be nonnegative")


@dataclass(frozen=True)
class Toeplitz:
    """Joint covariance with entries rho^|i-j| over the stacked covariates."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("Toeplitz rho must lie in [0, 1)")


@dataclass(frozen=True)
class CornerW:
    """Corner construction: x = W^T z + eta with two constant corner blocks.

    ``W^T`` is zero except for its last ``2*d_x`` rows, whose first and
    last ``d_z`` columns all equal ``q``.  ``z`` and ``eta`` are AR(1)
    Gaussian with parameters ``rho_z`` and ``rho_eta``; ``eta`` is drawn
    independently of ``z``.
    """

    d_x: int
    d_z: int
    q: float
    rho_eta: float = 0.5
    rho_z: float = 0.5

    def __post_init__(self):
        if self.d_x < 0 or self.d_z < 0:
            raise ValueError("corner block dimensions must be nonnegative")
        for r in (self.rho_eta, self.rho_z):
            if not 0.0 <= r < 1.0:
                raise ValueError("AR(1) parameter must lie in [0, 1)")


@dataclass(frozen=True)
class Identity:
    """Independent standard-normal covariates."""


CovSpec = Union[Toeplitz, CornerW, Identity]


@dataclass(frozen=True)
class DesignSpec:
    """Generative description of one simulation configuration."""

    n: int
    p_beta: int
    p_gamma: int
    covariance: CovSpec
    beta_pattern: SparsePattern
    gamma_pattern: SparsePattern
    error_sd: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one observation")
        if self.p_beta < 1:
            raise ValueError("interest block needs at least one column")
        if self.p_gamma < 0:
            raise ValueError("nuisance dimension must be nonnegative")
        if self.beta_pattern.s > self.p_beta:
            raise ValueError("beta sparsity exceeds p_beta")
        if self.gamma_pattern.s > self.p_gamma:
            raise ValueError("gamma sparsity exceeds p_gamma")
        if not self.error_sd > 0:
            raise ValueError("error_sd must be positive")
        cov = self.covariance
        if isinstance(cov, CornerW):
            if 2 * cov.d_x > self.p_beta:
                raise ValueError("corner blocks need 2*d_x <= p_beta")
            if cov.d_z > self.p_gamma:
                raise ValueError("corner blocks need d_z <= p_gamma")

    @property
    def beta(self) -> np.ndarray:
        return build_coefficients(self.p_beta, self.beta_pattern.s, self.beta_pattern.value)

    @property
    def gamma(self) -> np.ndarray:
        return build_coefficients(self.p_gamma, self.gamma_pattern.s, self.gamma_pattern.value)


def build_coefficients(p: int, s: int, value: float) -> np.ndarray:
    """Vector of length ``p`` whose first ``s`` entries equal ``value``."""
    if s < 0 or s > p:
        raise ValueError(f"sparsity count {s} outside [0, {p}]")
    coef = np.zeros(p)
    coef[:s] = value
    return coef


def sample_toeplitz_normal(n: int, p: int, rho: float, rng) -> np.ndarray:
    """Draw n rows from a p-variate normal with covariance rho^|i-j|.

    Uses the AR(1) recursion v_1 = e_1, v_j = rho v_{j-1} +
    sqrt(1 - rho^2) e_j, which realizes the target covariance exactly
    without factorizing a p x p matrix.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    if not abs(rho) < 1.0:
        raise ValueError("|rho| must be below 1")
    rng = as_generator(rng)
    e = rng.standard_normal((n, p))
    if rho == 0.0:
        return e
    v = np.empty((n, p))
    v[:, 0] = e[:, 0]
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        v[:, j] = rho * v[:, j - 1] + scale * e[:, j]
    return v


def corner_w_matrix(d_x: int, d_z: int, q: float, p_beta: int, p_gamma: int) -> np.ndarray:
    """Projection matrix (p_gamma x p_beta) of the corner construction.

    Its transpose carries two constant corner blocks of shape
    (2*d_x) x d_z, sitting in the last 2*d_x rows against the first and
    last d_z columns.
    """
    if 2 * d_x > p_beta:
        raise ValueError("corner blocks need 2*d_x <= p_beta")
    if d_z > p_gamma:
        raise ValueError("corner blocks need d_z <= p_gamma")
    w = np.zeros((p_gamma, p_beta))
    if d_x > 0 and d_z > 0:
        w[:d_z, p_beta - 2 * d_x:] = q
        w[p_gamma - d_z:, p_beta - 2 * d_x:] = q
    return w


def sample_corner_design(spec: CornerW, n: int, p_beta: int, p_gamma: int, rng,
                         return_eta: bool = False):
    """Draw (x, z) from the corner design; optionally also return eta.

    z and eta are independent AR(1) normal draws (z first, then eta), and
    x = z @ w + eta, so x - z @ w reproduces eta to machine precision.
    """
    rng = as_generator(rng)
    w = corner_w_matrix(spec.d_x, spec.d_z, spec.q, p_beta, p_gamma)
    if p_gamma > 0:
        z = sample_toeplitz_normal(n, p_gamma, spec.rho_z, rng)
    else:
        z = np.empty((n, 0))
    eta = sample_toeplitz_normal(n, p_beta, spec.rho_eta, rng)
    x = z @ w + eta
    if return_eta:
        return x, z, eta
    return x, z


def sample_covariates(design: DesignSpec, rng):
    """Draw the (x, z) covariate blocks for one replication."""
    rng = as_generator(rng)
    n, pb, pg = design.n, design.p_beta, design.p_gamma
    cov = design.covariance
    if isinstance(cov, Identity):
        v = rng.standard_normal((n, pb + pg))
        return v[:, :pb].copy(), v[:, pb:].copy()
    if isinstance(cov, Toeplitz):
        v = sample_toeplitz_normal(n, pb + pg, cov.rho, rng)
        return v[:, :pb].copy(), v[:, pb:].copy()
    if isinstance(cov, CornerW):
        return sample_corner_design(cov, n, pb, pg, rng)
    raise TypeError(f"unknown covariance spec {cov!r}")


def generate_dataset(design: DesignSpec, rng) -> Dataset:
    """Draw a full dataset (covariates, noise, response) from a design."""
    rng = as_generator(rng)
    x, z = sample_covariates(design, rng)
    noise = design.error_sd * rng.standard_normal(design.n)
    y = x @ design.beta + (z @ design.gamma if design.p_gamma else 0.0) + noise
    return Dataset(y=y, x=x, z=z)


def toeplitz_matrix(p: int, rho: float) -> np.ndarray:
    """Dense p x p matrix with entries rho^|i-j|."""
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


@dataclass(frozen=True)
class CovarianceParts:
    """Closed-form population covariance blocks implied by a design."""

    sigma_x: np.ndarray
    sigma_z: np.ndarray
    sigma_xz: np.ndarray
    sigma_eta: np.ndarray
    w: np.ndarray


def covariance_parts(cov: CovSpec, p_beta: int, p_gamma: int) -> CovarianceParts:
    """Explicit covariance blocks and projection matrix for a covariance spec.

    ``w`` solves sigma_z w = sigma_zx, and sigma_eta = sigma_x -
    sigma_xz sigma_z^{-1} sigma_zx is the covariance of the projection
    residual x - w^T z.
    """
    if isinstance(cov, Identity):
        sigma_x = np.eye(p_beta)
        sigma_z = np.eye(p_gamma)
        sigma_xz = np.zeros((p_beta, p_gamma))
        return CovarianceParts(sigma_x, sigma_z, sigma_xz, sigma_x.copy(),
                               np.zeros((p_gamma, p_beta)))
    if isinstance(cov, Toeplitz):
        joint = toeplitz_matrix(p_beta + p_gamma, cov.rho)
        sigma_x = joint[:p_beta, :p_beta]
        sigma_z = joint[p_beta:, p_beta:]
        sigma_xz = joint[:p_beta, p_beta:]
        if p_gamma > 0:
            try:
                w = np.linalg.solve(sigma_z, sigma_xz.T)
            except np.linalg.LinAlgError as exc:
                raise ValueError("singular nuisance covariance") from exc
        else:
            w = np.zeros((0, p_beta))
        sigma_eta = sigma_x - sigma_xz @ w
        return CovarianceParts(sigma_x, sigma_z, sigma_xz, sigma_eta, w)
    if isinstance(cov, CornerW):
        w = corner_w_matrix(cov.d_x, cov.d_z, cov.q, p_beta, p_gamma)
        sigma_z = toeplitz_matrix(p_gamma, cov.rho_z)
        sigma_eta = toeplitz_matrix(p_beta, cov.rho_eta)
        sigma_xz = (sigma_z @ w).T
        sigma_x = w.T @ sigma_z @ w + sigma_eta
        return CovarianceParts(sigma_x, sigma_z, sigma_xz, sigma_eta, w)
    raise TypeError(f"unknown covariance spec {cov!r}")


# ---------------------------------------------------------------------------
# JSON configuration


def _cov_to_dict(cov: CovSpec) -> dict:
    if isinstance(cov, Toeplitz):
        return {"type": "toeplitz", "rho": cov.rho}
    if isinstance(cov, CornerW):
        return {"type": "corner_w", "d_x": cov.d_x, "d_z": cov.d_z, "q": cov.q,
                "rho_eta": cov.rho_eta, "rho_z": cov.rho_z}
    if isinstance(cov, Identity):
        return {"type": "identity"}
    raise TypeError(f"unknown covariance spec {cov!r}")


def _cov_from_dict(d: dict) -> CovSpec:
    kind = d.get("type")
    if kind == "toeplitz":
        return Toeplitz(rho=float(d["rho"]))
    if kind == "corner_w":
        return CornerW(d_x=int(d["d_x"]), d_z=int(d["d_z"]), q=float(d["q"]),
                       rho_eta=float(d.get("rho_eta", 0.5)),
                       rho_z=float(d.get("rho_z", 0.5)))
    if kind == "identity":
        return Identity()
    raise ValueError(f"unknown covariance type {kind!r}")


def design_to_dict(design: DesignSpec) -> dict:
    return {
        "n": design.n,
        "p_beta": design.p_beta,
        "p_gamma": design.p_gamma,
        "covariance": _cov_to_dict(design.covariance),
        "beta_pattern": {"s": design.beta_pattern.s, "value": design.beta_pattern.value},
        "gamma_pattern": {"s": design.gamma_pattern.s, "value": design.gamma_pattern.value},
        "error_sd": design.error_sd,
    }


def design_from_dict(d: dict) -> DesignSpec:
    try:
        return DesignSpec(
            n=int(d["n"]),
            p_beta=int(d["p_beta"]),
            p_gamma=int(d["p_gamma"]),
            covariance=_cov_from_dict(d["covariance"]),
            beta_pattern=SparsePattern(int(d["beta_pattern"]["s"]),
                                       float(d["beta_pattern"]["value"])),
            gamma_pattern=SparsePattern(int(d["gamma_pattern"]["s"]),
                                        float(d["gamma_pattern"]["value"])),
            error_sd=float(d.get("error_sd", 1.0)),
        )
    except KeyError as exc:
        raise ValueError(f"design config missing field {exc.args[0]!r}") from exc


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_csv_columns(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    return header, rows


def _numeric_column(rows, col_idx, col_name) -> np.ndarray:
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        cell = row[col_idx] if col_idx < len(row) else ""
        try:
            out[i] = float(cell)
        except ValueError:
            raise ValueError(
                f"non-numeric value {cell!r} at row {i + 1}, column {col_name!r}"
            ) from None
    return out


def ingest_csv(path, response_col: str, x_cols: list[str],
               z_cols: list[str] | None = None, standardize: bool = True) -> Dataset:
    """Load a dataset from a headered CSV file.

    ``z_cols=None`` selects every column that is neither the response nor
    in ``x_cols``.  With ``standardize=True`` each covariate column is
    centered and scaled to unit sample standard deviation (n-1
    denominator) and the response is centered.
    """
    header, rows = _read_csv_columns(path)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    index = {name: i for i, name in enumerate(header)}

    def locate(name: str) -> int:
        if name not in index:
            raise ValueError(f"missing column {name!r}")
        return index[name]

    y_idx = locate(response_col)
    x_idx = [locate(c) for c in x_cols]
    if z_cols is None:
        used = {response_col, *x_cols}
        z_names = [c for c in header if c not in used]
    else:
        z_names = list(z_cols)
    z_idx = [locate(c) for c in z_names]

    y = _numeric_column(rows, y_idx, response_col)
    x = np.column_stack([_numeric_column(rows, i, header[i]) for i in x_idx]) \
        if x_idx else np.empty((len(rows), 0))
    z = np.column_stack([_numeric_column(rows, i, header[i]) for i in z_idx]) \
        if z_idx else np.empty((len(rows), 0))

    if standardize:
        y = y - y.mean()
        for block, names in ((x, x_cols), (z, z_names)):
            for j in range(block.shape[1]):
                col = block[:, j]
                sd = col.std(ddof=1) if len(col) > 1 else 0.0
                if sd == 0.0:
                    raise ValueError(
                        f"constant column {names[j]!r} cannot be standardized")
                block[:, j] = (col - col.mean()) / sd

    names = {"response": response_col, "x": list(x_cols), "z": z_names}
    return Dataset(y=y, x=x, z=z, column_names=names)
