"""Friction sweeps over class members: mixing and sample-quality metrics per cell."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DataSource, NoiseModel, class_members
from .diagnostics import energy_distance, iact
from .gps import GpsScore, NuField
from .rng import stream
from .samplers import ChainDiverged, SamplerConfig, walk_jump

METRICS = ("energy_distance", "iact", "ess")


@dataclass(frozen=True)
class SweepConfig:
    """One benchmark grid. ``nu_for(sigma_eff)`` supplies the field for every member."""

    sigma_eff: float = 0.25
    ms: tuple = (1, 16)
    gamma_effs: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    metrics: tuple = METRICS
    seeds: int = 5
    n_chains: int = 32
    n_steps: int = 2400
    steps_per_jump: int = 2
    burn_in: int = 400
    integrator: str = "baoab"
    init_scale: float = 1.0
    ed_samples: int = 4000
    base_seed: int = 0


def chain_iacts(traj: np.ndarray) -> np.ndarray:
    """Per-chain IACT of the jump series ``(n_chains, n_jumps, d)``, worst coordinate."""
    out = np.empty(len(traj))
    for c, chain in enumerate(traj):
        out[c] = max(iact(chain[:, j]) for j in range(chain.shape[1]))
    return out


def run_cell(score: GpsScore, cfg: SamplerConfig, reference: np.ndarray | None,
             metrics=METRICS, ed_samples: int = 4000) -> tuple[dict, int]:
    """Metrics for one (member, gamma_eff, seed); NaN everywhere if every chain diverged."""
    try:
        res = walk_jump(score, cfg)
    except ChainDiverged:
        return {k: math.nan for k in metrics}, cfg.n_chains
    n_div = len(res.divergences)
    out = {}
    traj = res.by_chain()
    if "iact" in metrics or "ess" in metrics:
        taus = chain_iacts(traj)
        if "iact" in metrics:
            out["iact"] = float(np.median(taus))
        if "ess" in metrics:
            out["ess"] = float(np.median(traj.shape[1] / np.maximum(taus, 1.0)))
    if "energy_distance" in metrics:
        flat = traj.reshape(-1, traj.shape[-1])
        rng = stream(cfg.seed, 1 << 32)
        pick = rng.choice(len(flat), size=min(ed_samples, len(flat)), replace=False)
        out["energy_distance"] = energy_distance(flat[np.sort(pick)], reference)
    return out, n_div


def sweep(sc: SweepConfig, data: DataSource, nu: NuField, members: list[NoiseModel] | None = None):
    """Rows ``{gamma_eff, m, sigma, metric_name, value, stderr, n_seeds, n_diverged}`` over the grid.

    Values are means over seeds (NaN seeds skipped); ``stderr`` is the
    standard error across seeds.
    """
    members = members if members is not None else class_members(sc.sigma_eff, sc.ms)
    refs = {}
    if "energy_distance" in sc.metrics:
        for s in range(sc.seeds):
            refs[s] = data.sample(sc.ed_samples, stream(sc.base_seed + s, 1 << 33))
    rows = []
    for model in members:
        score = GpsScore(nu, model)
        for ge in sc.gamma_effs:
            per_seed = {k: [] for k in sc.metrics}
            n_div = 0
            for s in range(sc.seeds):
                cfg = SamplerConfig.default_for(
                    model, gamma_eff=ge, integrator=sc.integrator, n_steps=sc.n_steps,
                    steps_per_jump=sc.steps_per_jump, n_chains=sc.n_chains, burn_in=sc.burn_in,
                    init_scale=sc.init_scale, seed=sc.base_seed + s)
                vals, nd = run_cell(score, cfg, refs.get(s), sc.metrics, sc.ed_samples)
                n_div += nd
                for k in sc.metrics:
                    per_seed[k].append(vals[k])
            for k in sc.metrics:
                v = np.asarray(per_seed[k], dtype=float)
                ok = v[np.isfinite(v)]
                mean = float(ok.mean()) if len(ok) else math.nan
                se = float(ok.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else (0.0 if len(ok) else math.nan)
                rows.append({"gamma_eff": ge, "m": model.m, "sigma": model.sigma, "metric_name": k,
                             "value": mean, "stderr": se, "n_seeds": len(ok), "n_diverged": n_div})
    return rows


def member_iacts(sc: SweepConfig, nu: NuField, members: list[NoiseModel]) -> dict[int, np.ndarray]:
    """Per-chain jump IACTs pooled over seeds, at the default step size, per member."""
    out = {}
    for model in members:
        score = GpsScore(nu, model)
        taus = []
        for s in range(sc.seeds):
            cfg = SamplerConfig.default_for(
                model, gamma_eff=sc.gamma_effs[0], integrator=sc.integrator, n_steps=sc.n_steps,
                steps_per_jump=sc.steps_per_jump, n_chains=sc.n_chains, burn_in=sc.burn_in,
                init_scale=sc.init_scale, seed=sc.base_seed + s)
            taus.append(chain_iacts(walk_jump(score, cfg).by_chain()))
        out[model.m] = np.concatenate(taus)
    return out
