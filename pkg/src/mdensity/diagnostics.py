"""Chain-quality and distribution-distance metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

# prefer OpenMP: the TBB layer warns on older system TBB builds
numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]


class UndefinedAutocorrelationError(ValueError):
    """The series has zero variance."""


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation of a 1-D series via FFT."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if acov[0] <= 0:
        raise UndefinedAutocorrelationError("constant series")
    return acov / acov[0]


def iact(series) -> float:
    """Integrated autocorrelation time, Geyer's initial positive sequence.

    ``1 + 2 sum_k rho_k`` with the sum truncated at the first pair
    ``rho_{2k} + rho_{2k+1}`` that is not positive.
    """
    x = np.asarray(series, dtype=float).ravel()
    if len(x) < 100:
        raise ValueError(f"need at least 100 samples, got {len(x)}")
    if np.ptp(x) == 0:
        raise UndefinedAutocorrelationError("constant series")
    rho = autocorrelation(x)
    n_pairs = len(rho) // 2
    pairs = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    nonpos = np.flatnonzero(pairs <= 0)
    stop = nonpos[0] if len(nonpos) else n_pairs
    return float(-1.0 + 2.0 * pairs[:stop].sum())


def ess(series) -> float:
    x = np.asarray(series, dtype=float).ravel()
    return len(x) / max(iact(x), 1.0)


@dataclass(frozen=True)
class ChainStats:
    iact: np.ndarray
    ess: float
    mean: np.ndarray
    covariance: np.ndarray


def chain_stats(samples) -> ChainStats:
    """Per-coordinate IACT, the smallest per-coordinate ESS, and moments of an ``(n, d)`` chain."""
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    taus = np.array([iact(s[:, j]) for j in range(s.shape[1])])
    return ChainStats(taus, float(len(s) / max(taus.max(), 1.0)), s.mean(axis=0),
                      np.atleast_2d(np.cov(s, rowvar=False)))


# --- energy distance ------------------------------------------------------------

def _sorted_pair_sum(z: np.ndarray) -> float:
    """Sum of ``|z_i - z_j|`` over unordered pairs, by sorting."""
    z = np.sort(z)
    n = len(z)
    return float(np.dot(z, 2 * np.arange(n) - n + 1))


@numba.njit(cache=True, parallel=True)
def _row_pair_sums(a, b, same):
    # per-row partial sums, reduced serially by the caller so the total does
    # not depend on the thread count
    n, m, d = a.shape[0], b.shape[0], a.shape[1]
    out = np.zeros(n)
    for i in numba.prange(n):
        start = i + 1 if same else 0
        acc_row = 0.0
        for j in range(start, m):
            acc = 0.0
            for k in range(d):
                t = a[i, k] - b[j, k]
                acc += t * t
            acc_row += np.sqrt(acc)
        out[i] = acc_row
    return out


def _lexsorted(x: np.ndarray) -> np.ndarray:
    return x[np.lexsort(x.T[::-1])]


def _pair_sums(a, b):
    """Sums of pairwise distances: within ``a`` (i<j), within ``b`` (i<j), and across.

    Rows are put in lexicographic order first so the sums do not depend on
    the order the samples arrive in.
    """
    a = np.ascontiguousarray(_lexsorted(np.asarray(a, dtype=float)))
    b = np.ascontiguousarray(_lexsorted(np.asarray(b, dtype=float)))
    return (math.fsum(_row_pair_sums(a, a, True)), math.fsum(_row_pair_sums(b, b, True)),
            math.fsum(_row_pair_sums(a, b, False)))


def energy_distance_terms(a, b) -> tuple[float, float, float]:
    """Mean pairwise distances ``(E|A-A'|, E|B-B'|, E|A-B|)``, within-sample terms as U-statistics."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    n, m = len(a), len(b)
    if n < 2 or m < 2:
        raise ValueError("energy distance needs at least two samples on each side")
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples must share a dimension")
    if a.shape[1] == 1:
        saa = _sorted_pair_sum(a[:, 0])
        sbb = _sorted_pair_sum(b[:, 0])
        sab = _sorted_pair_sum(np.concatenate([a[:, 0], b[:, 0]])) - saa - sbb
    else:
        saa, sbb, sab = _pair_sums(a, b)
    return 2 * saa / (n * (n - 1)), 2 * sbb / (m * (m - 1)), sab / (n * m)


def energy_distance(a, b) -> float:
    """``2 E|A-B| - E|A-A'| - E|B-B'|`` (unbiased U-statistic estimate)."""
    eaa, ebb, eab = energy_distance_terms(a, b)
    return 2 * eab - eaa - ebb


def energy_distance_pairwise(a, b) -> float:
    """Same statistic through the general pairwise kernel, whatever the dimension."""
    a = np.atleast_2d(np.asarray(a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(b, dtype=float).T).T
    n, m = len(a), len(b)
    saa, sbb, sab = _pair_sums(a, b)
    return 2 * sab / (n * m) - 2 * saa / (n * (n - 1)) - 2 * sbb / (m * (m - 1))


def energy_test(a, b, n_permutations: int = 199, rng: np.random.Generator | None = None):
    """Permutation test of equal distributions; returns ``(statistic, p_value)``.

    Intended for 1-D samples, where each permutation costs ``O(n log n)``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    stat = energy_distance(a, b)
    pooled = np.concatenate([a, b])
    n = len(a)
    exceed = 0
    for _ in range(n_permutations):
        perm = rng.permutation(len(pooled))
        if energy_distance(pooled[perm[:n]], pooled[perm[n:]]) >= stat:
            exceed += 1
    return stat, (exceed + 1) / (n_permutations + 1)


# --- covariance ----------------------------------------------------------------

class CovarianceError(NamedTuple):
    value: float
    rank_deficient: bool


def covariance_error(samples, reference) -> CovarianceError:
    """Max-norm relative error ``max|C_hat - C| / max|C|`` of the empirical covariance."""
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    ref = np.atleast_2d(np.asarray(reference, dtype=float))
    n, d = s.shape
    if ref.shape != (d, d):
        raise ValueError(f"reference covariance must be {d}x{d}")
    if n < d + 1:
        raise ValueError(f"need at least d+1={d + 1} samples")
    emp = np.atleast_2d(np.cov(s, rowvar=False))
    deficient = bool(np.linalg.matrix_rank(s - s.mean(axis=0)) < d)
    if deficient:
        warnings.warn("sample set is rank deficient", RuntimeWarning, stacklevel=2)
    return CovarianceError(float(np.max(np.abs(emp - ref)) / np.max(np.abs(ref))), deficient)
