"""Closed-form analysis of Gaussian M-densities.

For a zero-mean prior with diagonal covariance ``diag(tau_i^2)`` the
M-density is Gaussian with a block-diagonal precision matrix ``F``: one
``M x M`` block per coordinate. Blocks are stored per coordinate; the full
``Md x Md`` matrix is only assembled by the dense cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidParameterError, MeasurementBundle, NoiseModel


@dataclass(frozen=True)
class GaussianPrior:
    """Zero-mean prior with per-coordinate standard deviations ``taus``."""

    taus: np.ndarray

    def __post_init__(self):
        taus = np.array(self.taus, dtype=float, ndmin=1)
        if taus.ndim != 1 or len(taus) == 0:
            raise InvalidParameterError("taus must be a non-empty vector")
        if np.any(~np.isfinite(taus)) or np.any(taus <= 0):
            raise InvalidParameterError(f"all taus must be positive, got {taus}")
        taus.flags.writeable = False
        object.__setattr__(self, "taus", taus)

    @property
    def d(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class BlockPrecision:
    """Block-diagonal precision: ``blocks[i]`` couples the M measurements of coordinate i."""

    blocks: np.ndarray  # (d, M, M)
    omegas_sq: np.ndarray  # (d,)

    @property
    def d(self) -> int:
        return self.blocks.shape[0]

    @property
    def m(self) -> int:
        return self.blocks.shape[1]

    def matvec(self, y: np.ndarray) -> np.ndarray:
        """``F y`` for ``y`` of shape ``(..., M, d)``."""
        return np.einsum("imn,...ni->...mi", self.blocks, y)

    def quadratic_form(self, y: np.ndarray) -> np.ndarray:
        return np.einsum("...mi,...mi->...", y, self.matvec(y))


def _check_sigmas(sigmas) -> np.ndarray:
    sigmas = np.array(sigmas, dtype=float, ndmin=1)
    if sigmas.ndim != 1 or np.any(~np.isfinite(sigmas)) or np.any(sigmas <= 0):
        raise InvalidParameterError(f"noise levels must be positive, got {sigmas}")
    return sigmas


def precision_general(sigmas, prior: GaussianPrior) -> BlockPrecision:
    """Precision of the M-density with heterogeneous noise levels ``sigmas``."""
    sigmas = _check_sigmas(sigmas)
    inv2 = sigmas**-2
    omegas_sq = 1.0 / (inv2.sum() + prior.taus**-2)
    blocks = -omegas_sq[:, None, None] * np.outer(inv2, inv2)[None]
    diag = np.arange(len(sigmas))
    blocks[:, diag, diag] = inv2[None, :] * (1.0 - omegas_sq[:, None] * inv2[None, :])
    return BlockPrecision(blocks, omegas_sq)


def covariance_blocks(sigmas, prior: GaussianPrior) -> np.ndarray:
    """Per-coordinate ``M x M`` covariance of ``Y``: ``tau_i^2 + sigma_m^2 [m == m']``."""
    sigmas = _check_sigmas(sigmas)
    return prior.taus[:, None, None] ** 2 + np.diag(sigmas**2)[None]


def energy_general(y, sigmas, prior: GaussianPrior) -> float:
    """Energy ``f(y)`` of the general Gaussian M-density, up to a constant."""
    rows = y.rows if isinstance(y, MeasurementBundle) else np.asarray(y, dtype=float)
    sigmas = _check_sigmas(sigmas)
    if rows.shape != (len(sigmas), prior.d):
        raise ValueError(f"bundle shape {rows.shape} does not match (M, d)=({len(sigmas)}, {prior.d})")
    inv2 = sigmas**-2
    omegas_sq = 1.0 / (inv2.sum() + prior.taus**-2)
    weighted = inv2 @ rows  # (d,)
    return float(0.5 * np.sum(inv2[:, None] * rows**2) - 0.5 * np.sum(omegas_sq * weighted**2))


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenstructure of the precision of a Gaussian ``(sigma, M)`` M-density.

    For ``M > 1`` the largest eigenvalue is ``1/sigma^2`` with multiplicity
    ``(M-1) d``. For ``M = 1`` that family is absent (multiplicity 0) and
    ``lambda_max`` is the largest of the per-coordinate eigenvalues.
    """

    sigma: float
    m: int
    taus: np.ndarray
    lambda_max: float
    lambda_max_multiplicity: int
    lambda_per_coord: np.ndarray
    lambda_min: float
    kappa: float
    omegas_sq: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        """All ``Md`` eigenvalues, sorted ascending."""
        top = np.full(self.lambda_max_multiplicity, self.lambda_max)
        return np.sort(np.concatenate([self.lambda_per_coord, top]))

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "m": self.m,
            "taus": self.taus.tolist(),
            "lambda_max": self.lambda_max,
            "multiplicity": self.lambda_max_multiplicity,
            "lambda_per_coord": self.lambda_per_coord.tolist(),
            "lambda_min": self.lambda_min,
            "kappa": self.kappa,
        }


def spectrum_closed_form(sigma: float, m: int, prior: GaussianPrior) -> SpectrumReport:
    model = NoiseModel(sigma, m)
    s2 = model.sigma**-2
    taus = prior.taus
    omegas_sq = 1.0 / (m * s2 + taus**-2)
    a = s2 * (1.0 - omegas_sq * s2)
    b = -omegas_sq * s2**2
    # a + (M-1) b rewritten without the cancellation in 1 - M omega^2 / sigma^2
    lam = s2 / (1.0 + m * s2 * taus**2)
    lam_min = float(lam.min())
    if m > 1:
        lam_max, mult = s2, (m - 1) * prior.d
    else:
        lam_max, mult = float(lam.max()), 0
    kappa = condition_number(model, float(taus.max()), float(taus.min()))
    return SpectrumReport(model.sigma, m, taus.copy(), float(lam_max), mult, lam, lam_min,
                          kappa, omegas_sq, a, b)


def condition_number(model: NoiseModel, tau_max: float, tau_min: float) -> float:
    """Condition number of the Gaussian M-density precision.

    An isotropic prior still gives an anisotropic M-density once ``M > 1``:
    ``kappa = 1 + M tau^2 / sigma^2`` regardless of ``tau_min``.
    """
    if tau_min < 0 or tau_max < tau_min:
        raise InvalidParameterError(f"need tau_max >= tau_min >= 0, got ({tau_max}, {tau_min})")
    s2 = model.sigma**2
    if model.m == 1:
        return (tau_max**2 + s2) / (tau_min**2 + s2)
    return 1.0 + model.m * tau_max**2 / s2


def kappa_class_member(sigma_eff: float, m: int, tau_max: float, tau_min: float) -> float:
    return condition_number(NoiseModel(sigma_eff * math.sqrt(m), m), tau_max, tau_min)


def dense_covariance(sigmas, prior: GaussianPrior) -> np.ndarray:
    """Full ``Md x Md`` covariance of the stacked bundle, row-major in ``(m, i)``."""
    sigmas = _check_sigmas(sigmas)
    m, d = len(sigmas), prior.d
    same_coord = np.kron(np.ones((m, m)), np.diag(prior.taus**2))
    return same_coord + np.kron(np.diag(sigmas**2), np.eye(d))


def dense_eigen_residual(report: SpectrumReport) -> float:
    """Largest gap between closed-form eigenvalues and a dense solve of the inverted covariance."""
    cov = dense_covariance(np.full(report.m, report.sigma), GaussianPrior(report.taus))
    prec = np.linalg.inv(cov)
    dense = np.linalg.eigvalsh(0.5 * (prec + prec.T))
    return float(np.max(np.abs(dense - report.eigenvalues())))
