import math

import numpy as np

from mdensity.benchmark import SweepConfig, chain_iacts, member_iacts, run_cell, sweep
from mdensity.core import DataSource, NoiseModel, class_members
from mdensity.gps import GpsScore
from mdensity.samplers import SamplerConfig


def small_grid(**kw):
    base = dict(seeds=2, n_chains=4, n_steps=400, steps_per_jump=2, burn_in=100, ed_samples=300)
    base.update(kw)
    return SweepConfig(**base)


def test_sweep_shape_and_stderr():
    src = DataSource.parse("builtin:gmm8")
    rows = sweep(small_grid(), src, src.analytic_nu(0.25))
    for metric in ("energy_distance", "iact", "ess"):
        sel = [r for r in rows if r["metric_name"] == metric]
        assert len(sel) == 10
        assert {(r["gamma_eff"], r["m"]) for r in sel} == {(g, m) for g in (0.25, 0.5, 1.0, 2.0, 4.0) for m in (1, 16)}
    assert all(r["stderr"] >= 0 and r["n_seeds"] == 2 for r in rows)


def test_diverged_cell_reports_nan():
    src = DataSource.gaussian(0.0, [1.0])
    model = NoiseModel(1.0, 1)
    # a huge step on a stiff field blows every chain up
    cfg = SamplerConfig(delta=50.0, gamma_eff=1e-3, n_steps=200, steps_per_jump=2, n_chains=3)
    with np.errstate(all="ignore"):
        vals, n_div = run_cell(GpsScore(src.analytic_nu(0.01), model), cfg, src.sample(50, np.random.default_rng(0)))
    assert n_div == 3 and all(math.isnan(v) for v in vals.values())


def test_chain_iacts_uses_worst_coordinate():
    gen = np.random.default_rng(0)
    white = gen.standard_normal((2, 5000, 1))
    slow = np.repeat(gen.standard_normal((2, 1250, 1)), 4, axis=1)
    got = chain_iacts(np.concatenate([white, slow], axis=2))
    assert np.all(got > 3)


def test_member_iacts_pool_seeds():
    src = DataSource.gaussian(0.0, [1.0])
    members = class_members(0.25, [1, 4])
    out = member_iacts(small_grid(gamma_effs=(1.0,)), src.analytic_nu(0.25), members)
    assert set(out) == {1, 4} and all(len(v) == 8 for v in out.values())
