"""Noise models, universality classes, measurement bundles and data sources."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InvalidParameterError(ValueError):
    """A model parameter is outside its admissible range."""


@dataclass(frozen=True)
class NoiseModel:
    """Factorial Gaussian kernel with ``m`` channels of scale ``sigma``."""

    sigma: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"sigma must be positive and finite, got {self.sigma}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidParameterError(f"m must be a positive integer, got {self.m}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "m", int(self.m))

    def sigma_eff(self) -> float:
        return self.sigma / math.sqrt(self.m)

    def in_class(self, sigma_eff: float, rtol: float = 1e-9) -> bool:
        return abs(self.sigma_eff() - sigma_eff) <= rtol * abs(sigma_eff)


def make_noise_model(sigma: float, m: int) -> NoiseModel:
    return NoiseModel(sigma, m)


def class_members(sigma_eff: float, ms) -> list[NoiseModel]:
    """The models ``(sigma_eff * sqrt(M), M)`` of the class ``[sigma_eff]``."""
    ms = list(ms)
    if not ms:
        raise InvalidParameterError("ms must be non-empty")
    if not sigma_eff > 0:
        raise InvalidParameterError(f"sigma_eff must be positive, got {sigma_eff}")
    return [NoiseModel(sigma_eff * math.sqrt(m), m) for m in ms]


@dataclass(frozen=True)
class MeasurementBundle:
    """A point ``(y_1, ..., y_M)`` of R^{Md}, one row per measurement."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float, ndmin=2)
        if rows.ndim != 2:
            raise ValueError(f"rows must be an M x d matrix, got shape {rows.shape}")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MeasurementBundle):
            return NotImplemented
        return self.rows.shape == other.rows.shape and bool(np.array_equal(self.rows, other.rows))

    __hash__ = None


def mean_rows(y: np.ndarray) -> np.ndarray:
    """Mean over the measurement axis (-2) of an ``(..., M, d)`` array.

    Rows are sorted per coordinate before summing, so the result is bitwise
    invariant under any permutation of the measurements.
    """
    y = np.asarray(y, dtype=float)
    m = y.shape[-2]
    if m == 1:
        return y[..., 0, :].copy()
    return np.sort(y, axis=-2).sum(axis=-2) / m


def bundle_mean(y: MeasurementBundle) -> np.ndarray:
    return mean_rows(y.rows)


def corrupt_array(x: np.ndarray, model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Batched corruption: ``x`` of shape ``(..., d)`` to ``(..., M, d)``."""
    x = np.asarray(x, dtype=float)
    noise = rng.standard_normal(x.shape[:-1] + (model.m, x.shape[-1]))
    return x[..., None, :] + model.sigma * noise


def corrupt(x, model: NoiseModel, rng: np.random.Generator) -> MeasurementBundle:
    """Draw ``Y_m = x + N(0, sigma^2 I)`` independently for every channel."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("x must be a finite vector")
    return MeasurementBundle(corrupt_array(x, model, rng))


# --- data sources -------------------------------------------------------------

BUILTIN_DOC = {
    "gaussian:<t1,t2,...>": "zero-mean Gaussian with per-coordinate std devs",
    "gmm8": "8 equal-weight components on a ring of radius 4, component std 0.3 (d=2)",
    "gmm2": "2 equal-weight components at (+-2, 0), component std 0.5 (d=2)",
}


@dataclass(frozen=True)
class DataSource:
    """Where clean samples ``x`` come from.

    ``kind`` is ``"gaussian"``, ``"gmm"`` or ``"csv"``. Analytic sources use
    diagonal covariances only.
    """

    kind: str
    d: int
    weights: np.ndarray | None = None
    means: np.ndarray | None = None
    taus: np.ndarray | None = None
    path: str | None = None
    data: np.ndarray | None = field(default=None, repr=False, compare=False)
    name: str = ""

    @classmethod
    def gaussian(cls, mu, taus, name: str = "") -> "DataSource":
        taus = np.asarray(taus, dtype=float).ravel()
        mu = np.broadcast_to(np.asarray(mu, dtype=float), taus.shape).copy()
        if np.any(taus <= 0):
            raise InvalidParameterError("all variances must be positive")
        return cls("gaussian", len(taus), np.ones(1), mu[None, :], taus[None, :], name=name)

    @classmethod
    def gmm(cls, weights, means, taus, name: str = "") -> "DataSource":
        weights = np.asarray(weights, dtype=float).ravel()
        means = np.atleast_2d(np.asarray(means, dtype=float))
        taus = np.broadcast_to(np.asarray(taus, dtype=float).reshape(-1, 1) if np.ndim(taus) == 1
                               else np.asarray(taus, dtype=float), means.shape).copy()
        if len(weights) != len(means):
            raise InvalidParameterError("one weight per component required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"weights must sum to 1, got {weights.sum()!r}")
        if np.any(taus <= 0):
            raise InvalidParameterError("all variances must be positive")
        return cls("gmm", means.shape[1], weights, means, taus, name=name)

    @classmethod
    def csv(cls, path) -> "DataSource":
        path = str(path)
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
        if not first:
            raise InvalidParameterError(f"{path}: empty data file")
        d = len(first.split(","))
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if data.shape[1] != d:
            raise InvalidParameterError(f"{path}: rows must all have {d} columns")
        return cls("csv", d, path=path, data=data, name=f"csv:{path}")

    @classmethod
    def parse(cls, spec: str) -> "DataSource":
        """``builtin:gaussian:1,0.5``, ``builtin:gmm8``, ``builtin:gmm2`` or a CSV path."""
        if spec.startswith("builtin:gaussian:"):
            taus = [float(t) for t in spec.split(":", 2)[2].split(",")]
            return cls.gaussian(0.0, taus, name=spec)
        if spec == "builtin:gmm8":
            angles = 2 * np.pi * np.arange(8) / 8
            means = 4.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
            return cls.gmm(np.full(8, 1 / 8), means, np.full(8, 0.3), name=spec)
        if spec == "builtin:gmm2":
            return cls.gmm([0.5, 0.5], [[2.0, 0.0], [-2.0, 0.0]], [0.5, 0.5], name=spec)
        if spec.startswith("builtin:"):
            raise InvalidParameterError(f"unknown builtin source {spec!r}; known: {sorted(BUILTIN_DOC)}")
        path = spec[4:] if spec.startswith("csv:") else spec
        if not Path(path).exists():
            raise FileNotFoundError(path)
        return cls.csv(path)

    @property
    def analytic(self) -> bool:
        return self.kind in ("gaussian", "gmm")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "csv":
            return self.data[rng.integers(0, len(self.data), size=n)]
        comp = rng.choice(len(self.weights), size=n, p=self.weights) if len(self.weights) > 1 \
            else np.zeros(n, dtype=int)
        z = rng.standard_normal((n, self.d))
        return self.means[comp] + self.taus[comp] * z

    def analytic_nu(self, sigma_eff: float):
        from .nu_analytic import GaussianNu, GmmNu

        if self.kind == "gaussian":
            return GaussianNu(self.means[0], self.taus[0], sigma_eff)
        if self.kind == "gmm":
            return GmmNu(self.weights, self.means, self.taus, sigma_eff)
        raise InvalidParameterError("CSV sources have no analytic nu")

    def mmse(self, sigma_eff: float) -> float:
        """Minimum denoising loss at noise level ``sigma_eff``."""
        from .nu_analytic import gaussian_mmse, gmm_mmse_quadrature

        if self.kind == "gaussian":
            return gaussian_mmse(self.taus[0], sigma_eff)
        if self.kind == "gmm":
            return gmm_mmse_quadrature(self.analytic_nu(sigma_eff))
        raise InvalidParameterError("CSV sources have no analytic MMSE")
