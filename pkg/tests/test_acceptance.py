"""Acceptance gate: one PASS/FAIL line per criterion, at the agreed tolerances."""

import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from mdensity.benchmark import SweepConfig, member_iacts
from mdensity.core import DataSource, NoiseModel, class_members
from mdensity.diagnostics import covariance_error, energy_distance
from mdensity.gps import GpsScore, gps_score, permute_bundle
from mdensity.core import MeasurementBundle
from mdensity.nu_analytic import GaussianNu
from mdensity.nu_train import TrainConfig, gradient_check, loss_via_bundles, make_net, train
from mdensity.rng import stream
from mdensity.samplers import SamplerConfig, walk_jump
from mdensity.spectral import GaussianPrior, dense_covariance, spectrum_closed_form
from mdensity.universality import universality_report


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return emit


def test_criterion_1_spectrum_oracle(verdict):
    start = time.perf_counter()
    gen = np.random.default_rng(1)
    eig_err = kappa_err = formula_err = 0.0
    for sigma in (0.25, 0.5, 1.0, 2.0):
        for m in (1, 2, 4, 8):
            for d in (1, 2, 4):
                taus = gen.uniform(0.2, 2.0, d)
                rep = spectrum_closed_form(sigma, m, GaussianPrior(taus))
                prec = np.linalg.inv(dense_covariance(np.full(m, sigma), GaussianPrior(taus)))
                dense = np.linalg.eigvalsh(0.5 * (prec + prec.T))
                eig_err = max(eig_err, np.max(np.abs(dense - rep.eigenvalues())))
                # the textbook form of the per-coordinate eigenvalue
                textbook = sigma**-2 * (1 - m * rep.omegas_sq * sigma**-2)
                formula_err = max(formula_err, np.max(np.abs(textbook - rep.lambda_per_coord)))
                # M > 1: kappa = 1 + M tau_max^2 / sigma^2; M = 1 has no 1/sigma^2 family
                ref = 1 + m * taus.max() ** 2 / sigma**2 if m > 1 else dense.max() / dense.min()
                kappa_err = max(kappa_err, abs(rep.kappa - ref), abs(rep.kappa - dense.max() / dense.min()) / rep.kappa)
    elapsed = time.perf_counter() - start
    ok = eig_err <= 1e-9 and kappa_err <= 1e-9 and formula_err <= 1e-9 and elapsed < 10
    verdict(1, ok, f"max eigenvalue error {eig_err:.2e}, max kappa error {kappa_err:.2e}, "
                   f"textbook-form error {formula_err:.2e}, {elapsed:.2f}s")


def test_criterion_2_permutation_equivariance(verdict):
    gen = np.random.default_rng(2)
    ring = DataSource.parse("builtin:gmm8")
    scores = {m: GpsScore(ring.analytic_nu(0.25), NoiseModel(0.25 * math.sqrt(m), m)) for m in (2, 4, 8)}
    cases = []
    for k in range(1000):
        m = (2, 4, 8)[k % 3]
        cases.append((scores[m], MeasurementBundle(gen.standard_normal((m, 2)) * 3), gen.permutation(m)))
    start = time.perf_counter()
    bad = sum(not np.array_equal(gps_score(s, permute_bundle(y, pi)).rows, permute_bundle(gps_score(s, y), pi).rows)
              for s, y, pi in cases)
    elapsed = time.perf_counter() - start
    verdict(2, bad == 0 and elapsed < 1.0, f"{bad} of 1000 trials differ bitwise, {elapsed:.3f}s")


def test_criterion_3_universality(verdict):
    start = time.perf_counter()
    src = DataSource.parse("builtin:gaussian:1,0.5")
    members = class_members(0.25, [1, 16, 64, 256])
    rep = universality_report(src.analytic_nu(0.25), members, src, 100_000, seed=3)
    worst_coupled = max(p["coupled_delta"] for p in rep.pairs)
    worst_ratio = max(p["independent_delta"] / p["joint_stderr"] for p in rep.pairs)
    ring = DataSource.parse("builtin:gmm8")
    runs = []
    for mo in members:
        cfg = TrainConfig(sigma_eff=0.25, sigma=mo.sigma, m=mo.m, steps=300, hidden=(32, 32), eval_interval=100)
        runs.append(train(cfg, ring))
    identical = len({r.log_digest() for r in runs}) == 1 and all(
        np.array_equal(a, b) for r in runs[1:] for a, b in zip(runs[0].net.params, r.net.params))
    elapsed = time.perf_counter() - start
    ok = worst_coupled <= 1e-12 and worst_ratio <= 3.0 and identical and elapsed < 60
    verdict(3, ok, f"coupled max delta {worst_coupled:.1e}, independent max {worst_ratio:.2f} joint stderr, "
                   f"training bit-identical={identical}, {elapsed:.1f}s")


def test_criterion_4_bayes_estimator(verdict):
    lik = lambda x: stats.norm.pdf(x) * stats.norm.pdf(2.0 - x)
    quad = integrate.quad(lambda x: x * lik(x), -np.inf, np.inf)[0] / integrate.quad(lik, -np.inf, np.inf)[0]
    est = GpsScore(GaussianNu(0.0, [1.0], 1.0), NoiseModel(1.0, 1)).xhat(np.array([[2.0]]))[0]
    taus = np.array([1.0, 0.5])
    n = 100_000
    x = DataSource.gaussian(0.0, taus).sample(n, stream(4, 0))
    per = loss_via_bundles(GaussianNu(0.0, taus, 1.0), NoiseModel(2.0, 4), x, stream(4, 1), per_sample=True)
    target = float(np.sum(taus**2 / (taus**2 + 1.0)))
    z = abs(per.mean() - target) / (per.std(ddof=1) / math.sqrt(n))
    ok = abs(est - quad) <= 1e-6 and abs(est - 1.0) <= 1e-6 and z <= 3
    verdict(4, ok, f"xhat(2)={est:.12f} vs quadrature {quad:.12f}; MC loss {per.mean():.5f} vs {target:.5f} "
                   f"({z:.2f} stderr)")


def test_criterion_5_sampler_exactness(verdict):
    taus = np.array([1.0, 0.5])
    model = NoiseModel(1.0, 2)
    score = GpsScore(GaussianNu(0.0, taus, model.sigma_eff()), model)
    cov_y = dense_covariance(np.full(2, 1.0), GaussianPrior(taus))
    s2 = model.sigma_eff() ** 2
    cov_x = np.diag(taus**4 / (taus**2 + s2))
    start = time.perf_counter()
    parts = []
    for name in ("baoab", "underdamped_euler", "randomized_midpoint"):
        # 1000 chains x 1000 recorded steps = 1e6 chain-steps after burn-in
        cfg = SamplerConfig(integrator=name, delta=0.1, gamma_eff=0.2, n_steps=1300, steps_per_jump=1,
                            burn_in=300, n_chains=1000, seed=5)
        res = walk_jump(score, cfg, record_walk=True)
        ey = covariance_error(res.walk.reshape(len(res.walk), -1), cov_y).value
        ex = covariance_error(res.xhat, cov_x).value
        parts.append((name, ey, ex))
    elapsed = time.perf_counter() - start
    ok = all(ey <= 0.05 and ex <= 0.05 for _, ey, ex in parts) and elapsed < 300
    detail = ", ".join(f"{n}: y {ey:.1%} xhat {ex:.1%}" for n, ey, ex in parts)
    verdict(5, ok, f"{detail}; {elapsed:.0f}s")


def _null_split(data_src, n, repeats, seed):
    vals = []
    for r in range(repeats):
        x = data_src.sample(2 * n, stream(seed, 50 + r))
        vals.append(abs(energy_distance(x[:n], x[n:])))
    return float(np.mean(vals))


def test_criterion_6_generative_quality(verdict):
    ring = DataSource.parse("builtin:gmm8")
    net = train(TrainConfig(sigma_eff=0.25, steps=20_000, seed=6), ring).net
    n = 50_000
    held_out = ring.sample(n, stream(6, 10))
    null = _null_split(ring, n, 3, 6)
    results = []
    for sigma, m in ((0.25, 1), (1.0, 16)):
        model = NoiseModel(sigma, m)
        # 2500 chains x 20 jumps, 10 steps apart after 500 burn-in steps
        cfg = SamplerConfig.default_for(model, n_chains=2500, n_steps=700, steps_per_jump=10, burn_in=500, seed=6)
        gen = walk_jump(GpsScore(net, model), cfg).xhat[:n]
        results.append((sigma, m, energy_distance(gen, held_out)))
    # informational: posterior means of exactly smoothed data, exact nu, no sampler involved
    x = ring.sample(n, stream(6, 11))
    ybar = x + 0.25 * stream(6, 12).standard_normal(x.shape)
    floor = energy_distance(ybar - 0.0625 * ring.analytic_nu(0.25)(ybar), held_out)
    ok = all(ed <= 2 * null for *_, ed in results)
    detail = ", ".join(f"({s:g},{m}) ED {ed:.2e}" for s, m, ed in results)
    verdict(6, ok, f"{detail}; threshold 2 x null split {2 * null:.2e}; exact-posterior-mean floor {floor:.2e}")


def test_criterion_7_gradients(verdict):
    x = np.random.default_rng(7).standard_normal((32, 2))
    eps = 0.25 * np.random.default_rng(8).standard_normal((32, 2))
    worst = 0.0
    for sizes, implicit in (([2, 8, 2], False), ([2, 16, 16, 2], False), ([2, 8, 1], True), ([2, 16, 16, 1], True)):
        worst = max(worst, gradient_check(make_net(sizes, stream(7, len(sizes)), implicit=implicit), x, eps, 0.5))
    phi = make_net([2, 16, 16, 1], stream(7, 99), implicit=True)
    h = 1e-5
    fd = np.stack([(phi.potential(x + e) - phi.potential(x - e)) / (2 * h) for e in np.eye(2) * h], -1)
    field = phi(x)
    field_err = float(np.max(np.abs(field - fd) / (np.abs(fd) + 1e-8)))
    ok = worst <= 1e-4 and field_err <= 1e-5
    verdict(7, ok, f"backprop vs central differences {worst:.1e}; implicit field vs grad phi {field_err:.1e}")


def test_criterion_8_conditioning_vs_mixing(verdict):
    taus = np.array([1.0, 0.5])
    members = class_members(0.25, [1, 4, 16, 64])
    nu = GaussianNu(0.0, taus, 0.25)
    sc = SweepConfig(sigma_eff=0.25, gamma_effs=(1.0,), seeds=5, n_chains=32, n_steps=4000, steps_per_jump=2,
                     burn_in=400)
    iacts = member_iacts(sc, nu, members)
    kappas = [spectrum_closed_form(mo.sigma, mo.m, GaussianPrior(taus)).kappa for mo in members]
    medians = [float(np.median(iacts[mo.m])) for mo in members]
    rho = stats.spearmanr(kappas, medians).statistic
    detail = ", ".join(f"M={mo.m}: kappa {k:.3g} IACT {t:.1f}" for mo, k, t in zip(members, kappas, medians))
    verdict(8, bool(rho >= 0), f"Spearman {rho:.3f}; {detail}")
