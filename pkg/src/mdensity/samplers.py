"""Underdamped Langevin integrators and walk-jump sampling.

Chains live in R^{Md} with unit mass and unit temperature:

    dy = v dt,    dv = g(y) dt - gamma v dt + sqrt(2 gamma) dW

where ``g`` is the GPS score. The friction enters each integrator only
through ``gamma_eff = gamma * delta``. States are batched: ``position`` and
``velocity`` have shape ``(n_chains, M, d)``, and every chain draws from its
own counter-based stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .core import NoiseModel, corrupt_array
from .gps import GpsScore
from .rng import ChainNoise


class ChainDiverged(RuntimeError):
    """A chain produced a non-finite position or velocity."""

    def __init__(self, step: int, chain_ids):
        self.step = int(step)
        self.chain_ids = [int(c) for c in np.atleast_1d(chain_ids)]
        super().__init__(f"chain(s) {self.chain_ids} diverged at step {self.step}")


@dataclass(frozen=True)
class ChainState:
    position: np.ndarray
    velocity: np.ndarray
    chain_ids: np.ndarray
    step: int = 0
    force: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_chains(self) -> int:
        return self.position.shape[0]

    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.position).all(axis=(1, 2)) & np.isfinite(self.velocity).all(axis=(1, 2))

    def subset(self, keep: np.ndarray) -> "ChainState":
        return ChainState(self.position[keep], self.velocity[keep], self.chain_ids[keep], self.step,
                          None if self.force is None else self.force[keep])


INTEGRATOR_NAMES = ("baoab", "underdamped_euler", "randomized_midpoint")


@dataclass(frozen=True)
class SamplerConfig:
    """Walk-jump settings. ``gamma = gamma_eff / delta`` is derived, never stored."""

    integrator: str = "baoab"
    delta: float = 0.5
    gamma_eff: float = 1.0
    n_steps: int = 1000
    steps_per_jump: int = 20
    n_chains: int = 1
    init: str = "noise"
    init_scale: float = 1.0
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.integrator not in INTEGRATOR_NAMES:
            raise ValueError(f"integrator must be one of {INTEGRATOR_NAMES}, got {self.integrator!r}")
        if not (self.delta > 0 and self.gamma_eff > 0):
            raise ValueError("delta and gamma_eff must be positive")
        if self.n_steps < 0 or self.steps_per_jump < 1 or self.n_steps % self.steps_per_jump:
            raise ValueError("steps_per_jump must divide n_steps")
        if self.n_chains < 1 or self.burn_in < 0:
            raise ValueError("n_chains >= 1 and burn_in >= 0 required")
        if self.init not in ("noise", "data_plus_noise"):
            raise ValueError(f"unknown init {self.init!r}")

    @property
    def gamma(self) -> float:
        return self.gamma_eff / self.delta

    @classmethod
    def default_for(cls, model: NoiseModel, **kw) -> "SamplerConfig":
        """Step size ``sigma / 2`` and ``gamma_eff = 1``."""
        kw.setdefault("delta", model.sigma / 2)
        kw.setdefault("gamma_eff", 1.0)
        return cls(**kw)


# --- stable exponential integrals -----------------------------------------------

_K = np.arange(2, 30)
_FACT = np.array([math.factorial(k) for k in _K], dtype=float)
_R_COEF = (-1.0) ** _K / _FACT
_Q_COEF = (-1.0) ** (_K + 1) * (2.0 ** (_K - 1) - 2) / _FACT


def _series(z, coef, direct):
    z = np.asarray(z, dtype=float)
    small = z < 1.0
    zs = np.where(small, z, 0.0)
    series = np.polynomial.polynomial.polyval(zs, np.concatenate([[0.0, 0.0], coef]))
    out = np.where(small, series, direct(np.where(small, 1.0, z)))
    return out if out.ndim else float(out)


def _e1(z):
    """``1 - exp(-z)``."""
    return -np.expm1(-np.asarray(z, dtype=float))


def _r(z):
    """``z - (1 - exp(-z))`` = integral of ``1 - exp(-u)`` on [0, z]."""
    return _series(z, _R_COEF, lambda x: x - _e1(x))


def _q(z):
    """Integral of ``(1 - exp(-u))^2`` on [0, z]."""
    return _series(z, _Q_COEF, lambda x: x - 2 * _e1(x) + 0.5 * _e1(2 * x))


def ou_coefficients(gamma_eff: float) -> tuple[float, float]:
    """Velocity contraction and noise scale of one exact OU substep."""
    return math.exp(-gamma_eff), math.sqrt(-math.expm1(-2 * gamma_eff))


def ou_moments(delta: float, gamma_eff: float):
    """Force-free underdamped transition over one step of length ``delta``.

    Returns ``(A, cov)``: the mean map ``(y, v) -> A (y, v)`` and the
    per-coordinate 2x2 covariance of the ``(y, v)`` increment.
    """
    g, h = gamma_eff, delta
    e1 = _e1(g)
    A = np.array([[1.0, h * e1 / g], [0.0, math.exp(-g)]])
    cov = np.array([[2 * h**2 * _q(g) / g**2, h * e1**2 / g],
                    [h * e1**2 / g, _e1(2 * g)]])
    return A, cov


def midpoint_moments(delta: float, gamma_eff: float, alpha):
    """Covariance entries of ``(W1, W2, W3)`` in the randomized midpoint step.

    ``W1`` is the position noise at the midpoint time ``alpha * delta``,
    ``W2``/``W3`` the position/velocity noise at the end of the step. Returns
    ``(V1, V2, V3, C12, C13, C23)``, each broadcast against ``alpha``.
    """
    g, h = gamma_eff, delta
    alpha = np.asarray(alpha, dtype=float)
    za = g * alpha
    decay = np.exp(-g * (1 - alpha))
    s = h**2 / g**2
    v1 = 2 * s * _q(za)
    v2 = np.full_like(alpha, 2 * s * _q(g))
    v3 = np.full_like(alpha, _e1(2 * g))
    e1a = _e1(za)
    c12 = 2 * s * (_r(za) - 0.5 * decay * e1a**2)
    c13 = h * decay * e1a**2 / g
    c23 = np.full_like(alpha, h * _e1(g) ** 2 / g)
    return v1, v2, v3, c12, c13, c23


# --- integrators -----------------------------------------------------------------

Score = Callable[[np.ndarray], np.ndarray]


def _force(state: ChainState, score: Score) -> np.ndarray:
    return state.force if state.force is not None else score(state.position)


def _checked(state: ChainState, check: bool) -> ChainState:
    if check:
        bad = ~state.finite_mask()
        if bad.any():
            raise ChainDiverged(state.step, state.chain_ids[bad])
    return state


def baoab_step(state: ChainState, score: Score, delta: float, gamma_eff: float, rng,
               check: bool = True) -> ChainState:
    """B-A-O-A-B splitting; the closing kick's force is cached for the next step."""
    y, v = state.position, state.velocity
    c, s = ou_coefficients(gamma_eff)
    v = v + 0.5 * delta * _force(state, score)
    y = y + 0.5 * delta * v
    v = c * v + s * rng.standard_normal(v.shape)
    y = y + 0.5 * delta * v
    f = score(y)
    v = v + 0.5 * delta * f
    return _checked(ChainState(y, v, state.chain_ids, state.step + 1, f), check)


def underdamped_euler_step(state: ChainState, score: Score, delta: float, gamma_eff: float, rng,
                           check: bool = True) -> ChainState:
    """Exact integration of the OU dynamics with the force frozen at the current position."""
    y, v = state.position, state.velocity
    f = _force(state, score)
    g, h = gamma_eff, delta
    e1 = _e1(g)
    y_new = y + (h * e1 / g) * v + (h**2 * _r(g) / g**2) * f
    v_new = math.exp(-g) * v + (h * e1 / g) * f
    _, cov = ou_moments(delta, gamma_eff)
    xi = rng.standard_normal((y.shape[0], 2) + y.shape[1:])
    sv = math.sqrt(cov[1, 1])
    l10 = cov[0, 1] / sv
    l11 = math.sqrt(max(cov[0, 0] - l10**2, 0.0))
    v_new = v_new + sv * xi[:, 0]
    y_new = y_new + l10 * xi[:, 0] + l11 * xi[:, 1]
    return _checked(ChainState(y_new, v_new, state.chain_ids, state.step + 1, score(y_new)), check)


def randomized_midpoint_step(state: ChainState, score: Score, delta: float, gamma_eff: float, rng,
                             check: bool = True) -> ChainState:
    """Randomized midpoint scheme: one uniform ``alpha`` per chain per step, two score calls."""
    y, v = state.position, state.velocity
    n = y.shape[0]
    f0 = _force(state, score)
    g, h = gamma_eff, delta
    alpha = rng.random(n)
    a = alpha[:, None, None]
    v1, v2, v3, c12, c13, c23 = (t[:, None, None] for t in midpoint_moments(h, g, alpha))
    xi = rng.standard_normal((n, 3) + y.shape[1:])
    # Cholesky in the order (W3, W2, W1); W1's conditional variance vanishes as alpha -> 0
    l00 = np.sqrt(v3)
    l10 = c23 / l00
    l11 = np.sqrt(np.maximum(v2 - l10**2, 0.0))
    l20 = c13 / l00
    l21 = np.where(l11 > 0, (c12 - l20 * l10) / np.where(l11 > 0, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(v1 - l20**2 - l21**2, 0.0))
    w3 = l00 * xi[:, 0]
    w2 = l10 * xi[:, 0] + l11 * xi[:, 1]
    w1 = l20 * xi[:, 0] + l21 * xi[:, 1] + l22 * xi[:, 2]

    ga = g * a
    y_mid = y + (h * _e1(ga) / g) * v + (h**2 * _r(ga) / g**2) * f0 + w1
    f_mid = score(y_mid)
    tail = g * (1 - a)
    y_new = y + (h * _e1(g) / g) * v + (h**2 * _e1(tail) / g) * f_mid + w2
    v_new = math.exp(-g) * v + h * np.exp(-tail) * f_mid + w3
    return _checked(ChainState(y_new, v_new, state.chain_ids, state.step + 1, None), check)


INTEGRATORS = {
    "baoab": baoab_step,
    "underdamped_euler": underdamped_euler_step,
    "randomized_midpoint": randomized_midpoint_step,
}


# --- walk-jump -------------------------------------------------------------------

def init_chain(cfg: SamplerConfig, model: NoiseModel, d: int, rng, x=None,
               chain_ids=None) -> ChainState:
    """Starting state for ``cfg.n_chains`` chains.

    ``noise``: rows i.i.d. ``N(0, init_scale^2 I)``. ``data_plus_noise``:
    rows ``x + N(0, sigma^2 I)`` for clean points ``x`` of shape ``(n_chains, d)``.
    Velocities are ``N(0, I)``, the stationary velocity law.
    """
    n = cfg.n_chains
    ids = np.arange(n) if chain_ids is None else np.asarray(chain_ids)
    shape = (n, model.m, d)
    if cfg.init == "noise":
        y = cfg.init_scale * rng.standard_normal(shape)
    else:
        if x is None:
            raise ValueError("data_plus_noise init needs clean points x")
        x = np.broadcast_to(np.asarray(x, dtype=float), (n, d))
        y = corrupt_array(x, model, rng)
    v = rng.standard_normal(shape)
    return ChainState(y, v, ids, 0, None)


@dataclass
class WalkJumpResult:
    """Jump emissions ordered by (step, chain id), plus the final walk state."""

    xhat: np.ndarray
    chain_id: np.ndarray
    step: np.ndarray
    final_state: ChainState
    divergences: list = field(default_factory=list)
    n_chains: int = 0
    walk: np.ndarray | None = None

    def __iter__(self) -> Iterator[tuple[np.ndarray, int, int]]:
        for x, c, s in zip(self.xhat, self.chain_id, self.step):
            yield x, int(c), int(s)

    def chain(self, c: int) -> np.ndarray:
        return self.xhat[self.chain_id == c]

    def by_chain(self) -> np.ndarray:
        """``(n_chains, n_jumps, d)`` array over the chains that never diverged."""
        alive = np.setdiff1d(np.arange(self.n_chains), [c for c, _ in self.divergences])
        return np.stack([self.chain(c) for c in alive])


def walk_jump(score: GpsScore, cfg: SamplerConfig, init_x=None, jump: bool = True,
              record_walk: bool = False) -> WalkJumpResult:
    """Langevin walk on the M-density with periodic posterior-mean jumps.

    A chain that turns non-finite is dropped and reported in
    ``divergences``; the others continue. If every chain diverges,
    :class:`ChainDiverged` is raised. The jumps only read the walk state.
    With ``record_walk`` the walk positions at every jump are kept in
    ``result.walk``, aligned with ``xhat``.
    """
    model, d = score.model, score.nu.d
    noise = ChainNoise(cfg.seed, np.arange(cfg.n_chains))
    state = init_chain(cfg, model, d, noise, x=init_x)
    step_fn = INTEGRATORS[cfg.integrator]
    xs, ids, steps, walk, divergences = [], [], [], [], []
    for k in range(1, cfg.n_steps + 1):
        state = step_fn(state, score, cfg.delta, cfg.gamma_eff, noise, check=False)
        ok = state.finite_mask()
        if not ok.all():
            divergences.extend((int(c), k) for c in state.chain_ids[~ok])
            if not ok.any():
                raise ChainDiverged(k, state.chain_ids)
            state = state.subset(ok)
            noise = noise.subset(ok)
        if jump and k % cfg.steps_per_jump == 0 and k > cfg.burn_in:
            xs.append(score.xhat(state.position))
            ids.append(state.chain_ids.copy())
            steps.append(np.full(state.n_chains, k))
            if record_walk:
                walk.append(state.position)
    if xs:
        xhat, chain_id, step = np.concatenate(xs), np.concatenate(ids), np.concatenate(steps)
    else:
        xhat, chain_id, step = np.empty((0, d)), np.empty(0, int), np.empty(0, int)
    walk = (np.concatenate(walk) if walk else np.empty((0, model.m, d))) if record_walk else None
    return WalkJumpResult(xhat, chain_id, step, state, divergences, cfg.n_chains, walk)
