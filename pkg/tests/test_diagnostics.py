import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdensity.core import NoiseModel, corrupt_array, mean_rows
from mdensity.diagnostics import (
    UndefinedAutocorrelationError,
    chain_stats,
    covariance_error,
    energy_distance,
    energy_distance_pairwise,
    energy_test,
    ess,
    iact,
)
from mdensity.rng import stream


def ar1(rho, n, seed):
    gen = np.random.default_rng(seed)
    e = gen.standard_normal(n) * np.sqrt(1 - rho**2)
    x = np.empty(n)
    x[0] = gen.standard_normal()
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


class TestIact:
    def test_white_noise(self):
        assert iact(np.random.default_rng(0).standard_normal(100_000)) == pytest.approx(1.0, abs=0.1)

    def test_ar1_closed_form(self):
        assert iact(ar1(0.9, 10**6, 1)) == pytest.approx(19.0, rel=0.1)

    def test_duplicated_series_doubles(self):
        x = ar1(0.5, 200_000, 2)
        assert iact(np.repeat(x, 2)) / iact(x) == pytest.approx(2.0, rel=0.05)

    def test_errors(self):
        with pytest.raises(ValueError):
            iact(np.arange(50.0))
        with pytest.raises(UndefinedAutocorrelationError):
            iact(np.ones(500))

    def test_ess_and_stats(self):
        x = np.random.default_rng(3).standard_normal((20_000, 2))
        assert ess(x[:, 0]) == pytest.approx(20_000, rel=0.1)
        st_ = chain_stats(x)
        assert st_.iact.shape == (2,) and st_.covariance.shape == (2, 2)
        assert st_.ess == pytest.approx(20_000 / st_.iact.max())


def brute_energy(a, b):
    a, b = np.atleast_2d(a.T).T, np.atleast_2d(b.T).T
    dist = lambda p, q: np.linalg.norm(p[:, None] - q[None], axis=-1)
    n, m = len(a), len(b)
    return 2 * dist(a, b).mean() - dist(a, a).sum() / (n * (n - 1)) - dist(b, b).sum() / (m * (m - 1))


class TestEnergyDistance:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_brute_force_oracle(self, d):
        gen = np.random.default_rng(d)
        a, b = gen.standard_normal((300, d)), gen.standard_normal((200, d)) + 0.3
        ref = brute_energy(a, b)
        assert energy_distance(a, b) == pytest.approx(ref, rel=1e-10, abs=1e-13)
        assert energy_distance_pairwise(a, b) == pytest.approx(ref, rel=1e-10, abs=1e-13)

    def test_sorted_and_pairwise_routes_agree_in_one_dimension(self):
        gen = np.random.default_rng(7)
        a, b = gen.standard_normal(3000), gen.standard_normal(2500) * 1.2
        assert energy_distance(a, b) == pytest.approx(energy_distance_pairwise(a, b), rel=1e-10)

    def test_null_split_is_near_zero(self):
        x = np.random.default_rng(4).standard_normal((4000, 2))
        assert abs(energy_distance(x[:2000], x[2000:])) < 0.01

    def test_separates_shifted_laws(self):
        gen = np.random.default_rng(5)
        x = gen.standard_normal(10_000)
        y = gen.standard_normal(10_000) + 3
        null = abs(energy_distance(x[:5000], x[5000:]))
        assert energy_distance(x, y) > 10 * null and energy_distance(x, y) > 0

    @given(st.randoms(use_true_random=False))
    def test_order_invariance_bitwise(self, r):
        gen = np.random.default_rng(6)
        a, b = gen.standard_normal((120, 2)), gen.standard_normal((90, 2))
        pa, pb = list(range(120)), list(range(90))
        r.shuffle(pa)
        r.shuffle(pb)
        assert energy_distance(a[pa], b[pb]) == energy_distance(a, b)
        assert energy_distance(a[:, 0][pa], b[:, 0][pb]) == energy_distance(a[:, 0], b[:, 0])

    def test_input_validation(self):
        with pytest.raises(ValueError):
            energy_distance(np.zeros((1, 2)), np.zeros((5, 2)))
        with pytest.raises(ValueError):
            energy_distance(np.zeros((5, 2)), np.zeros((5, 3)))

    def test_corrupted_mean_has_smoothed_law(self):
        # bundle mean of (sigma=2, M=16) measurements vs x + N(0, 0.5^2)
        n = 100_000
        x = stream(0).standard_normal((n, 1))
        ybar = mean_rows(corrupt_array(x, NoiseModel(2.0, 16), stream(1)))[:, 0]
        ref = stream(2).standard_normal(n) + 0.5 * stream(3).standard_normal(n)
        stat, p = energy_test(ybar, ref, n_permutations=99, rng=stream(4))
        assert p > 0.01, (stat, p)

    def test_energy_test_rejects_different_laws(self):
        gen = np.random.default_rng(8)
        _, p = energy_test(gen.standard_normal(2000), gen.standard_normal(2000) * 1.3, 99, gen)
        assert p <= 0.02


class TestCovarianceError:
    def test_exact_samples(self):
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        s = np.random.default_rng(0).multivariate_normal([0, 0], cov, size=10**6)
        assert covariance_error(s, cov).value <= 0.03

    def test_self_reference_is_zero(self):
        s = np.random.default_rng(1).standard_normal((100, 3))
        assert covariance_error(s, np.cov(s, rowvar=False)).value == pytest.approx(0.0, abs=1e-15)

    def test_scaled_samples(self):
        x = np.random.default_rng(2).standard_normal(1000)
        x = (x - x.mean()) / x.std(ddof=1)
        assert covariance_error(2 * x, [[1.0]]).value == pytest.approx(3.0, rel=1e-12)

    def test_rank_deficient_warns(self):
        s = np.random.default_rng(3).standard_normal((50, 1)) * np.array([1.0, 2.0])
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            res = covariance_error(s, np.eye(2))
        assert res.rank_deficient and rec

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            covariance_error(np.zeros((10, 2)), np.eye(3))
        with pytest.raises(ValueError):
            covariance_error(np.zeros((2, 2)), np.eye(2))
