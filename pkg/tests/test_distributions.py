import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from pseudoboost.distributions import (
    DistParams,
    MixtureModel,
    NoiseFamily,
    NoiseSpec,
    certify_params,
    certify_subexponential,
    marginal_density_1d,
    marginal_density_2d,
    marginal_tail,
    sample,
    sample_noise,
    sample_noise_2d_marginal,
)
from pseudoboost.exceptions import CertificationError, DimensionError, PreconditionError
from pseudoboost.numerics import RngStream, sample_unit_sphere

GAUSS = NoiseSpec(NoiseFamily.GAUSSIAN)
BALL = NoiseSpec(NoiseFamily.UNIFORM_BALL)
GAMMA = NoiseSpec(NoiseFamily.RADIAL_GAMMA)
ALL = (GAUSS, BALL, GAMMA)


def gen(i=0):
    return RngStream(1234, i).generator()


def test_noise_spec_parsing():
    assert NoiseSpec("uniform_ball").family is NoiseFamily.UNIFORM_BALL
    with pytest.raises(ValueError, match="unknown noise family"):
        NoiseSpec("cauchy")


def test_dist_params_positive():
    with pytest.raises(ValueError):
        DistParams(K=1.0, U=0.0, U_prime=1.0, R=1.0)


def test_model_basics():
    m = MixtureModel.build(4, 2.0, "gaussian", direction=[0, 0, 3, 4])
    np.testing.assert_allclose(m.mu, [0, 0, 1.2, 1.6])
    assert m.d == 4 and m.mu_norm == pytest.approx(2.0) and m.is_gaussian
    with pytest.raises(ValueError):
        m.mu[0] = 1.0
    with pytest.raises(DimensionError):
        MixtureModel.build(1, 1.0)
    with pytest.raises(DimensionError):
        MixtureModel.build(3, 1.0, direction=[1.0, 0.0])
    with pytest.raises(PreconditionError):
        MixtureModel.build(3, 0.0).mu_bar


def test_radial_variance_matches_isotropy():
    for noise in ALL:
        for d in (2, 7, 30):
            assert noise.radial_law(d).moment(2) == pytest.approx(d, rel=1e-10)


@pytest.mark.parametrize("noise", ALL, ids=lambda n: n.family.value)
def test_sampled_noise_is_isotropic(noise):
    Z = sample_noise(noise, 6, 200_000, gen())
    assert np.max(np.abs(Z.mean(axis=0))) < 0.02
    assert np.max(np.abs(Z.T @ Z / len(Z) - np.eye(6))) < 0.03


@pytest.mark.parametrize("noise", ALL, ids=lambda n: n.family.value)
def test_projection_law_is_direction_free(noise):
    d = 8
    Z = sample_noise(noise, d, 100_000, gen(1))
    v = sample_unit_sphere(d, gen(2))
    assert stats.ks_2samp(Z[:50_000, 0], Z[50_000:] @ v).pvalue > 1e-3


@pytest.mark.parametrize("noise", ALL, ids=lambda n: n.family.value)
def test_plane_sampler_matches_full_sampler(noise):
    d = 9
    W = sample_noise_2d_marginal(noise, d, 60_000, gen(3))
    Z = sample_noise(noise, d, 60_000, gen(4))
    assert stats.ks_2samp(W[:, 0], Z[:, 3]).pvalue > 1e-3
    assert stats.ks_2samp(np.hypot(W[:, 0], W[:, 1]), np.hypot(Z[:, 0], Z[:, 1])).pvalue > 1e-3


def test_uniform_ball_support():
    Z = sample_noise(BALL, 5, 10_000, gen())
    assert np.max(np.linalg.norm(Z, axis=1)) <= math.sqrt(7.0)


def test_sample_labels_and_means():
    m = MixtureModel.build(5, 1.5, "radial_gamma")
    X, y = sample(m, 100_000, gen())
    assert set(np.unique(y)) == {-1, 1}
    assert abs(y.mean()) < 0.02
    np.testing.assert_allclose((y[:, None] * X).mean(axis=0), m.mu, atol=0.02)


def test_sample_reproducible():
    m = MixtureModel.build(3, 1.0)
    X1, y1 = sample(m, 50, RngStream(5).generator())
    X2, y2 = sample(m, 50, RngStream(5).generator())
    np.testing.assert_array_equal(X1, X2)
    np.testing.assert_array_equal(y1, y2)


# --- marginals against independent closed forms ----------------------------


@pytest.mark.parametrize("d", [2, 3, 10, 40])
def test_gaussian_marginals_closed_form(d):
    for u in (0.0, 0.5, 1.7, 4.0):
        assert marginal_density_1d(GAUSS, d, u) == pytest.approx(stats.norm.pdf(u), rel=1e-8)
    for s in (0.05, 0.5, 1.0, 2.5):
        assert marginal_density_2d(GAUSS, d, s) == pytest.approx(
            math.exp(-s * s / 2) / (2 * math.pi), rel=1e-8)
    for t in (0.1, 1.0, 3.0, 6.0):
        assert marginal_tail(GAUSS, d, t) == pytest.approx(math.erfc(t / math.sqrt(2)), rel=1e-7)


@pytest.mark.parametrize("d", [3, 6, 15])
def test_uniform_ball_marginal_closed_form(d):
    # 1-D marginal of the uniform ball of radius a: c (a^2 - u^2)^((d-1)/2)
    a = math.sqrt(d + 2.0)
    c = math.exp(special.gammaln(d / 2 + 1) - special.gammaln((d + 1) / 2)) / (math.sqrt(math.pi) * a**d)
    for u in (0.0, 0.4, 1.3, a - 0.2):
        expected = c * (a * a - u * u) ** ((d - 1) / 2)
        assert marginal_density_1d(BALL, d, u) == pytest.approx(expected, rel=1e-7)
    assert marginal_density_1d(BALL, d, a + 0.1) == 0.0


def test_radial_gamma_marginal_in_three_dimensions():
    # in R^3 a coordinate of a uniform unit vector is uniform on [-1, 1],
    # so the 1-D marginal density is int_u^inf f_r(r) / (2 r) dr
    law = GAMMA.radial_law(3)
    for u in (0.05, 0.3, 1.0, 2.5):
        expected, _ = integrate.quad(lambda r: law.pdf(r) / (2 * r), u, np.inf, epsrel=1e-12)
        assert marginal_density_1d(GAMMA, 3, u) == pytest.approx(expected, rel=1e-7)


@pytest.mark.parametrize("noise", ALL, ids=lambda n: n.family.value)
def test_marginal_density_integrates_to_one(noise):
    d = 7
    hi = 12.0
    total, _ = integrate.quad(lambda u: marginal_density_1d(noise, d, u), 0, hi, limit=200)
    assert 2 * total == pytest.approx(1.0, abs=1e-6)
    assert marginal_tail(noise, d, 1.0) == pytest.approx(
        2 * integrate.quad(lambda u: marginal_density_1d(noise, d, u), 1.0, hi, limit=200)[0],
        abs=1e-6)


@pytest.mark.parametrize("noise", ALL, ids=lambda n: n.family.value)
def test_tail_matches_monte_carlo(noise):
    d = 5
    Z = sample_noise(noise, d, 200_000, gen(7))
    p = np.abs(Z[:, 0])
    for t in (0.5, 1.5, 2.5):
        emp = np.mean(p >= t)
        assert abs(emp - marginal_tail(noise, d, t)) <= 4 * math.sqrt(emp * (1 - emp) / len(p)) + 1e-4


def test_2d_density_requires_positive_radius():
    with pytest.raises(PreconditionError):
        marginal_density_2d(GAUSS, 3, 0.0)


# --- certification ------------------------------------------------------------


@pytest.mark.parametrize("d", [2, 5, 20])
def test_certified_gaussian_parameters(d):
    p = certify_params(GAUSS, d)
    assert p.U == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-9)
    assert p.U_prime == pytest.approx(2 * math.pi * math.exp(0.5), rel=1e-8)
    assert p.K == pytest.approx(1.2534, abs=1e-12)
    assert p.R == 1.0


def test_radial_gamma_certificate_from_mean_inverse_radius():
    # f_1(0) = E[1/r] / B(1/2, (d-1)/2) and E[1/r] = 1 / (s (d-1)) for a Gamma(d, s) radius;
    # the tail sup is attained as t -> 0, so K is 1 / (2U) rounded up to 1e-4
    d = 10
    U = 1.0 / special.beta(0.5, (d - 1) / 2) * math.sqrt(d + 1) / (d - 1)
    p = certify_params(GAMMA, d)
    assert p.U == pytest.approx(U, rel=1e-9)
    assert U == pytest.approx(0.4289887327623, rel=1e-12)
    assert p.K == pytest.approx(1.1656, abs=1e-12)


@pytest.mark.parametrize("noise", ALL, ids=lambda n: n.family.value)
def test_certified_tail_bound_holds(noise):
    d = 10
    K = certify_params(noise, d).K
    for t in np.linspace(0.01, 15.0, 80):
        assert marginal_tail(noise, d, t) <= math.exp(-t / K) * (1 + 1e-9)


@pytest.mark.parametrize("noise", ALL, ids=lambda n: n.family.value)
def test_certified_density_bounds_hold(noise):
    d = 10
    p = certify_params(noise, d)
    for u in np.linspace(0, 5, 41):
        assert marginal_density_1d(noise, d, u) <= p.U * (1 + 1e-9)
    for s in np.linspace(0.01, p.R, 40):
        assert marginal_density_2d(noise, d, s) >= (1 - 1e-9) / p.U_prime


def test_certification_rejects_heavy_tails():
    with pytest.raises(CertificationError):
        certify_subexponential(lambda t: 1.0 / (1.0 + t))
    with pytest.raises(CertificationError):
        certify_subexponential(lambda t: 1.0)


def test_certification_rounds_up_to_grid():
    K = certify_subexponential(lambda t: math.exp(-t / 0.73219))
    assert K == pytest.approx(0.7322, abs=1e-12)
