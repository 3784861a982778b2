import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from mdensity.core import MeasurementBundle, NoiseModel
from mdensity.gps import (
    GpsScore,
    ZeroNu,
    bayes_estimate,
    bayes_estimate_channelwise,
    gps_score,
    permute_bundle,
)
from mdensity.nu_analytic import GaussianNu, GmmNu
from mdensity.spectral import GaussianPrior, precision_general

finite = st.floats(-100, 100, allow_nan=False)


def ring_nu(sigma_eff):
    ang = np.linspace(0, 2 * np.pi, 5)[:-1]
    return GmmNu(np.full(4, 0.25), 2 * np.stack([np.cos(ang), np.sin(ang)], 1), 0.4, sigma_eff)


def test_single_channel_score_is_minus_nu():
    nu = ring_nu(0.8)
    s = GpsScore(nu, NoiseModel(0.8, 1))
    y = np.random.default_rng(0).standard_normal((10, 1, 2))
    np.testing.assert_allclose(s(y)[:, 0], -nu(y[:, 0]), rtol=1e-14, atol=1e-15)


def test_zero_nu_example():
    s = GpsScore(ZeroNu(1), NoiseModel(1.0, 2))
    assert gps_score(s, MeasurementBundle([[0.0], [2.0]])).rows.tolist() == [[1.0], [-1.0]]


def test_gaussian_score_is_minus_precision_times_y():
    taus = np.array([0.5, 1.3])
    for sigma, m in [(1.0, 16), (0.6, 3), (0.25, 1)]:
        model = NoiseModel(sigma, m)
        s = GpsScore(GaussianNu(0.0, taus, model.sigma_eff()), model)
        bp = precision_general(np.full(m, sigma), GaussianPrior(taus))
        y = np.random.default_rng(m).standard_normal((20, m, 2))
        np.testing.assert_allclose(s(y), -bp.matvec(y), atol=1e-9)


def test_score_is_minus_energy_gradient():
    model = NoiseModel(1.2, 3)
    s = GpsScore(ring_nu(model.sigma_eff()), model)
    y = np.random.default_rng(1).standard_normal((3, 2))
    h = 1e-6
    fd = np.zeros_like(y)
    for idx in np.ndindex(y.shape):
        e = np.zeros_like(y)
        e[idx] = h
        fd[idx] = -(s.energy(y + e) - s.energy(y - e)) / (2 * h)
    np.testing.assert_allclose(s(y), fd, rtol=1e-6, atol=1e-8)


def test_score_shape_checked():
    s = GpsScore(ZeroNu(2), NoiseModel(1.0, 3))
    with pytest.raises(ValueError):
        s(np.zeros((2, 2)))


class TestBayesEstimate:
    def test_zero_nu_returns_mean(self):
        s = GpsScore(ZeroNu(2), NoiseModel(1.0, 2))
        assert bayes_estimate(s, MeasurementBundle([[0.0, 1.0], [2.0, 5.0]])).tolist() == [1.0, 3.0]

    def test_quadrature_oracle(self):
        # posterior mean of X ~ N(0,1) given Ybar = 2 with N(0,1) noise
        lik = lambda x: np.exp(-0.5 * x**2) * np.exp(-0.5 * (2.0 - x) ** 2)
        num = integrate.quad(lambda x: x * lik(x), -np.inf, np.inf, epsabs=1e-13)[0]
        den = integrate.quad(lik, -np.inf, np.inf, epsabs=1e-13)[0]
        s = GpsScore(GaussianNu(0.0, [1.0], 1.0), NoiseModel(1.0, 1))
        est = bayes_estimate(s, MeasurementBundle([[2.0]]))[0]
        assert abs(est - num / den) < 1e-6 and abs(est - 1.0) < 1e-12

    def test_fixed_point_at_mean(self):
        mu = np.array([0.3, -1.0])
        model = NoiseModel(2.0, 4)
        s = GpsScore(GaussianNu(mu, [1.0, 2.0], model.sigma_eff()), model)
        np.testing.assert_allclose(s.xhat(np.tile(mu, (4, 1))), mu, rtol=1e-15)

    def test_channelwise_agrees_for_every_row(self):
        model = NoiseModel(1.5, 5)
        s = GpsScore(ring_nu(model.sigma_eff()), model)
        y = MeasurementBundle(np.random.default_rng(4).standard_normal((5, 2)))
        ref = bayes_estimate(s, y)
        for m in range(1, 6):
            np.testing.assert_allclose(bayes_estimate_channelwise(s, y, m), ref, atol=1e-12)

    def test_channelwise_single_zero(self):
        s = GpsScore(ZeroNu(2), NoiseModel(1.0, 1))
        y = MeasurementBundle([[0.5, -0.25]])
        assert bayes_estimate_channelwise(s, y, 1).tolist() == [0.5, -0.25]

    def test_channelwise_index_range(self):
        s = GpsScore(ZeroNu(1), NoiseModel(1.0, 2))
        with pytest.raises(IndexError):
            bayes_estimate_channelwise(s, MeasurementBundle([[0.0], [1.0]]), 0)
        with pytest.raises(IndexError):
            bayes_estimate_channelwise(s, MeasurementBundle([[0.0], [1.0]]), 3)


class TestPermutation:
    y = MeasurementBundle([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])

    def test_identity(self):
        assert permute_bundle(self.y, [0, 1, 2]) == self.y

    def test_swap(self):
        b = MeasurementBundle([[1.0], [2.0]])
        assert permute_bundle(b, [1, 0]).rows.tolist() == [[2.0], [1.0]]

    def test_inverse(self):
        pi = np.array([2, 0, 1])
        assert permute_bundle(permute_bundle(self.y, pi), np.argsort(pi)) == self.y

    @pytest.mark.parametrize("pi", [[0, 0, 1], [0, 1], [0, 1, 3], [0.0, 1.0, 2.0]])
    def test_rejects_non_permutations(self, pi):
        with pytest.raises(ValueError):
            permute_bundle(self.y, pi)


@given(st.integers(1, 8).flatmap(lambda m: st.tuples(
    arrays(float, (m, 2), elements=finite), st.permutations(list(range(m))))),
    st.sampled_from([0.3, 1.0, 4.0]))
def test_permutation_equivariance_bitwise(case, sigma):
    rows, pi = case
    model = NoiseModel(sigma, len(rows))
    s = GpsScore(ring_nu(model.sigma_eff()), model)
    y = MeasurementBundle(rows)
    lhs = gps_score(s, permute_bundle(y, pi))
    rhs = permute_bundle(gps_score(s, y), pi)
    assert np.array_equal(lhs.rows, rhs.rows)
    assert np.array_equal(bayes_estimate(s, permute_bundle(y, pi)), bayes_estimate(s, y))
