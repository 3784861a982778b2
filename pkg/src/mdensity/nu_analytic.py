"""Closed-form nu fields for Gaussian and Gaussian-mixture data.

Smoothing a diagonal Gaussian component ``N(mu, diag(tau^2))`` at level
``sigma_eff`` gives ``N(mu, diag(tau^2 + sigma_eff^2))``; ``nu`` is minus the
gradient of the log of the smoothed density.
"""

from __future__ import annotations

import numpy as np

from .gps import NuField


class GaussianNu(NuField):
    has_potential = True

    def __init__(self, mu, taus, sigma_eff: float):
        self.taus = np.array(taus, dtype=float, ndmin=1)
        self.mu = np.broadcast_to(np.asarray(mu, dtype=float), self.taus.shape).copy()
        self.sigma_eff = float(sigma_eff)
        self.var = self.taus**2 + self.sigma_eff**2
        self.d = len(self.taus)

    def evaluate(self, ybar):
        return (np.asarray(ybar, dtype=float) - self.mu) / self.var

    def potential(self, ybar):
        return 0.5 * np.sum((np.asarray(ybar, dtype=float) - self.mu) ** 2 / self.var, axis=-1)


class GmmNu(NuField):
    """Mixture of diagonal Gaussians; responsibilities via log-sum-exp."""

    has_potential = True

    def __init__(self, weights, means, taus, sigma_eff: float):
        self.weights = np.asarray(weights, dtype=float).ravel()
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        taus = np.asarray(taus, dtype=float)
        if taus.ndim == 1:
            taus = taus[:, None]
        self.taus = np.broadcast_to(taus, self.means.shape).copy()
        self.sigma_eff = float(sigma_eff)
        self.var = self.taus**2 + self.sigma_eff**2  # (K, d)
        self.d = self.means.shape[1]
        self._log_norm = np.log(self.weights) - 0.5 * np.sum(np.log(2 * np.pi * self.var), axis=1)

    def _log_components(self, ybar):
        diff = np.asarray(ybar, dtype=float)[..., None, :] - self.means  # (..., K, d)
        return diff, self._log_norm - 0.5 * np.sum(diff**2 / self.var, axis=-1)

    def responsibilities(self, ybar):
        _, logc = self._log_components(ybar)
        logc = logc - logc.max(axis=-1, keepdims=True)
        r = np.exp(logc)
        return r / r.sum(axis=-1, keepdims=True)

    def evaluate(self, ybar):
        diff, logc = self._log_components(ybar)
        logc = logc - logc.max(axis=-1, keepdims=True)
        r = np.exp(logc)
        r /= r.sum(axis=-1, keepdims=True)
        return np.sum(r[..., None] * diff / self.var, axis=-2)

    def potential(self, ybar):
        _, logc = self._log_components(ybar)
        top = logc.max(axis=-1)
        return -(top + np.log(np.sum(np.exp(logc - top[..., None]), axis=-1)))

    def log_density(self, ybar):
        return -self.potential(ybar)


def gaussian_mmse(taus, sigma_eff: float) -> float:
    """Least achievable denoising loss for Gaussian data at level ``sigma_eff``."""
    t2 = np.asarray(taus, dtype=float) ** 2
    s2 = float(sigma_eff) ** 2
    return float(np.sum(t2 * s2 / (t2 + s2)))


def gmm_mmse_quadrature(nu: GmmNu, points_per_std: int = 12, width: float = 9.0) -> float:
    """Denoising MMSE of a mixture by grid quadrature (``d <= 2``).

    Uses ``mmse = d sigma^2 - sigma^4 E||nu(Ybar)||^2``, integrated over a
    uniform grid; the integrand is smooth with Gaussian tails, so the
    rectangle rule converges geometrically.
    """
    if nu.d > 2:
        raise ValueError("grid quadrature is only provided for d <= 2")
    std = np.sqrt(nu.var)
    h = std.min() / points_per_std
    lo = (nu.means - width * std).min(axis=0)
    hi = (nu.means + width * std).max(axis=0)
    axes = [np.arange(lo[i], hi[i] + h, h) for i in range(nu.d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, nu.d)
    dens = np.exp(nu.log_density(grid))
    sq = np.sum(nu.evaluate(grid) ** 2, axis=-1)
    mean_sq = np.sum(dens * sq) * h**nu.d
    s2 = nu.sigma_eff**2
    return float(nu.d * s2 - s2**2 * mean_sq)
