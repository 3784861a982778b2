"""GPS parametrization of the M-density score.

Every row of the score is built from the measurement mean ``ybar`` and a
single evaluation of a d-dimensional field ``nu`` at ``ybar``:

    sigma^2 g_m(y) = (ybar - y_m) - sigma_eff^2 nu(ybar)

All array functions accept a leading batch shape, ``y`` of shape ``(..., M, d)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .core import MeasurementBundle, NoiseModel, mean_rows


class NuField(ABC):
    """A vector field ``nu: R^d -> R^d`` evaluated on batches ``(..., d)``.

    Implementations that are gradients of a scalar potential set
    ``has_potential`` and implement :meth:`potential`. Evaluation must not
    mutate the field; a single instance is shared across chains.
    """

    d: int
    has_potential: bool = False

    @abstractmethod
    def evaluate(self, ybar: np.ndarray) -> np.ndarray: ...

    def potential(self, ybar: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no potential")

    def __call__(self, ybar):
        return self.evaluate(ybar)


class ZeroNu(NuField):
    has_potential = True

    def __init__(self, d: int):
        self.d = d

    def evaluate(self, ybar):
        return np.zeros_like(np.asarray(ybar, dtype=float))

    def potential(self, ybar):
        return np.zeros(np.shape(ybar)[:-1])


@dataclass(frozen=True)
class GpsScore:
    """Score of the ``model`` M-density induced by the field ``nu``."""

    nu: NuField
    model: NoiseModel

    def _check(self, y: np.ndarray):
        if y.shape[-2:] != (self.model.m, self.nu.d):
            raise ValueError(f"expected trailing shape (M, d)=({self.model.m}, {self.nu.d}), got {y.shape}")

    def __call__(self, y: np.ndarray) -> np.ndarray:
        """Score rows ``g_m`` for ``y`` of shape ``(..., M, d)``."""
        y = np.asarray(y, dtype=float)
        self._check(y)
        ybar = mean_rows(y)
        shift = self.model.sigma_eff() ** 2 * self.nu.evaluate(ybar)
        return ((ybar[..., None, :] - y) - shift[..., None, :]) / self.model.sigma**2

    def xhat(self, y: np.ndarray) -> np.ndarray:
        """Bayes estimate ``ybar - sigma_eff^2 nu(ybar)`` for ``y`` of shape ``(..., M, d)``."""
        y = np.asarray(y, dtype=float)
        self._check(y)
        ybar = mean_rows(y)
        return ybar - self.model.sigma_eff() ** 2 * self.nu.evaluate(ybar)

    def energy(self, y: np.ndarray) -> np.ndarray:
        """``(mean ||y_m||^2 - ||ybar||^2) / (2 sigma_eff^2) + phi(ybar)``; needs a potential."""
        y = np.asarray(y, dtype=float)
        self._check(y)
        ybar = mean_rows(y)
        spread = np.mean(np.sum(y**2, axis=-1), axis=-1) - np.sum(ybar**2, axis=-1)
        return spread / (2 * self.model.sigma_eff() ** 2) + self.nu.potential(ybar)


def _rows(y) -> np.ndarray:
    return y.rows if isinstance(y, MeasurementBundle) else np.asarray(y, dtype=float)


def gps_score(s: GpsScore, y: MeasurementBundle) -> MeasurementBundle:
    return MeasurementBundle(s(_rows(y)))


def bayes_estimate(s: GpsScore, y: MeasurementBundle) -> np.ndarray:
    return s.xhat(_rows(y))


def bayes_estimate_channelwise(s: GpsScore, y: MeasurementBundle, m: int) -> np.ndarray:
    """``y_m + sigma^2 g_m(y)`` for a 1-based measurement index ``m``.

    Under GPS this equals :func:`bayes_estimate` for every ``m``; kept as a
    consistency check rather than as the estimator of record.
    """
    rows = _rows(y)
    if not 1 <= m <= rows.shape[0]:
        raise IndexError(f"measurement index {m} outside [1, {rows.shape[0]}]")
    g = s(rows)
    return rows[m - 1] + s.model.sigma**2 * g[m - 1]


def _check_permutation(pi, m: int) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape != (m,) or not np.issubdtype(pi.dtype, np.integer) \
            or not np.array_equal(np.sort(pi), np.arange(m)):
        raise ValueError(f"not a permutation of range({m}): {pi!r}")
    return pi


def permute_bundle(y: MeasurementBundle, pi) -> MeasurementBundle:
    """Row ``m`` of the result is row ``pi[m]`` of ``y`` (0-based permutation)."""
    rows = _rows(y)
    pi = _check_permutation(pi, rows.shape[0])
    return MeasurementBundle(rows[pi])
