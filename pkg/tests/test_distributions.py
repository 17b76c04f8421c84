from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from artifact.distributions import (
    DeltaParam,
    RngStream,
    beta_prime_moment,
    beta_tilde_mean,
    beta_tilde_variance,
    gamma_from_wv,
    pearson4_abs_quantile,
    pearson4_cdf,
    pearson4_fourth_moment,
    pearson4_mean,
    pearson4_second_moment,
    sample_beta_prime,
    sample_beta_tilde,
    sample_pearson4,
    sample_theta,
    sample_theta_wz,
    theta_angle_cdf,
    w_moments,
    wv_from_gamma,
)
from artifact.errors import DomainError, PoleError
from conftest import within_4se


def _p4_density_moment(m, mu, k):
    f = lambda x: x**k * (1 + x * x) ** (-m) * np.exp(-mu * np.arctan(x))
    num = integrate.quad(f, -np.inf, np.inf, limit=400)[0]
    den = integrate.quad(lambda x: (1 + x * x) ** (-m) * np.exp(-mu * np.arctan(x)), -np.inf, np.inf, limit=400)[0]
    return num / den


# ---------------------------------------------------------------- parameters and streams


def test_delta_domain():
    with pytest.raises(DomainError, match="exceed -1/2"):
        DeltaParam(-0.5)
    assert DeltaParam.of(0.5 - 1j).value == 0.5 - 1j


def test_stream_reproducible_and_distinct():
    a = RngStream(7, 3).generator().random(5)
    b = RngStream(7, 3).generator().random(5)
    c = RngStream(7, 4).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stream_generators_offsets_compose():
    s = RngStream(9, 2)
    full = [g.random() for g in s.generators(6)]
    parts = [g.random() for g in s.generators(3)] + [g.random() for g in s.generators(3, offset=3)]
    assert full == parts


def test_stream_rejects_negative():
    with pytest.raises(DomainError):
        RngStream(-1)


# ---------------------------------------------------------------- beta tilde


def test_beta_tilde_symmetric_mean_zero():
    x = sample_beta_tilde(2.5, 2.5, RngStream(1, 1), 100_000)
    assert within_4se(x, 0.0)


def test_beta_tilde_uniform_case():
    x = sample_beta_tilde(1.0, 1.0, RngStream(1, 2), 100_000)
    assert beta_tilde_variance(1, 1) == pytest.approx(1 / 3)
    assert within_4se(x**2, 1 / 3)
    assert stats.kstest(x, stats.uniform(-1, 2).cdf).pvalue > 0.001


def test_beta_tilde_mean_matches_quadrature():
    dens = lambda x: (1 - x) ** (2 - 1) * (1 + x) ** (1 - 1)
    oracle = integrate.quad(lambda x: x * dens(x), -1, 1)[0] / integrate.quad(dens, -1, 1)[0]
    assert oracle == pytest.approx(-1 / 3)
    assert beta_tilde_mean(2, 1) == pytest.approx(oracle, abs=1e-12)
    assert within_4se(sample_beta_tilde(2.0, 1.0, RngStream(1, 3), 100_000), oracle)


@pytest.mark.parametrize("s,t", [(0.0, 1.0), (1.0, -2.0)])
def test_beta_tilde_domain(s, t):
    with pytest.raises(DomainError):
        sample_beta_tilde(s, t, RngStream(0), 3)


# ---------------------------------------------------------------- beta prime


def test_beta_prime_moment_value():
    assert beta_prime_moment(2, 3, 1) == pytest.approx(1.0)


def test_beta_prime_moment_guard():
    with pytest.raises(DomainError):
        beta_prime_moment(2, 3, 3)


def test_beta_prime_monte_carlo():
    y = sample_beta_prime(3.0, 5.0, RngStream(2, 1), 100_000)
    assert within_4se(y, beta_prime_moment(3, 5, 1))
    assert within_4se(y**2, beta_prime_moment(3, 5, 2))


def test_beta_prime_moment_matches_quadrature():
    s, t, k = 2.5, 4.0, 1.5
    f = lambda y: y ** (s - 1) * (1 + y) ** (-s - t)
    oracle = integrate.quad(lambda y: y**k * f(y), 0, np.inf)[0] / integrate.quad(f, 0, np.inf)[0]
    assert beta_prime_moment(s, t, k) == pytest.approx(oracle, rel=1e-8)


# ---------------------------------------------------------------- Pearson IV


def test_pearson4_domain():
    with pytest.raises(DomainError):
        sample_pearson4(0.5, 0.0, RngStream(0), 4)


def test_pearson4_second_moment_value():
    assert pearson4_second_moment(3, 0) == pytest.approx(1 / 3)


@pytest.mark.parametrize("m,mu", [(2.0, 1.0), (3.0, -1.5), (4.5, 2.0)])
def test_pearson4_closed_forms_match_quadrature(m, mu):
    assert pearson4_mean(m, mu) == pytest.approx(_p4_density_moment(m, mu, 1), rel=1e-7, abs=1e-10)
    assert pearson4_second_moment(m, mu) == pytest.approx(_p4_density_moment(m, mu, 2), rel=1e-7)


def test_pearson4_fourth_moment_matches_quadrature():
    assert pearson4_fourth_moment(5, 1.5) == pytest.approx(_p4_density_moment(5, 1.5, 4), rel=1e-7)


@pytest.mark.parametrize("m", [2.5, 2.0])
def test_pearson4_fourth_moment_guard(m):
    with pytest.raises(DomainError):
        pearson4_fourth_moment(m, 0.0)


def test_pearson4_mean_guard():
    with pytest.raises(DomainError):
        pearson4_mean(1.0, 0.3)


def test_pearson4_symmetric_has_no_skew():
    z = sample_pearson4(4.0, 0.0, RngStream(3, 1), 100_000)
    assert abs(stats.skew(z)) < 0.1
    assert within_4se(z, 0.0)


def test_pearson4_sampler_matches_cdf():
    m, mu = 1.7, -0.8
    z = sample_pearson4(m, mu, RngStream(3, 2), 20_000)
    assert stats.kstest(z, lambda x: pearson4_cdf(x, m, mu)).pvalue > 0.001


def test_pearson4_cdf_against_quadrature():
    m, mu = 2.2, 0.7
    dens = lambda x: (1 + x * x) ** (-m) * np.exp(-mu * np.arctan(x))
    total = integrate.quad(dens, -np.inf, np.inf)[0]
    for x in (-3.0, -0.2, 0.0, 1.5, 10.0):
        oracle = integrate.quad(dens, -np.inf, x)[0] / total
        assert pearson4_cdf(x, m, mu) == pytest.approx(oracle, abs=1e-9)


def test_pearson4_abs_quantile_cauchy():
    # m = 1, mu = 0 is the Cauchy law: P(|Z| <= q) = (2/pi) arctan q
    q = pearson4_abs_quantile(1.0, 0.0, 0.999)
    assert q == pytest.approx(np.tan(np.pi / 2 * 0.999), rel=1e-6)


# ---------------------------------------------------------------- (w, v) map


@pytest.mark.parametrize("w,v,gamma", [(0, 0, 0), (2, 0, 0.5), (-1, 0, -1)])
def test_gamma_from_wv_values(w, v, gamma):
    assert gamma_from_wv(w, v) == pytest.approx(gamma, abs=1e-15)


def test_gamma_from_wv_pole():
    with pytest.raises(PoleError):
        gamma_from_wv(-2.0, 0.0)


def test_roundtrip_bulk():
    g = RngStream(4).generator()
    r = np.sqrt(g.random(10_000)) * 0.999
    gam = r * np.exp(2j * np.pi * g.random(10_000))
    w, v = wv_from_gamma(gam)
    assert np.max(np.abs(gamma_from_wv(w, v) - gam)) < 1e-12


@given(st.floats(0, 0.999), st.floats(-np.pi, np.pi))
def test_roundtrip_property(r, phi):
    gam = r * np.exp(1j * phi)
    w, v = wv_from_gamma(gam)
    assert abs(gamma_from_wv(w, v) - gam) < 1e-12


# ---------------------------------------------------------------- Theta


def test_theta_support():
    g = sample_theta(3.0, 0.4 + 0.3j, RngStream(5, 1), 10_000)
    assert np.all(np.abs(g) < 1)
    g0 = sample_theta(0.0, 0.4 + 0.3j, RngStream(5, 2), 10_000)
    assert np.max(np.abs(np.abs(g0) - 1)) < 1e-12


def test_theta_domain():
    with pytest.raises(DomainError):
        sample_theta(-0.1, 0.0, RngStream(0), 2)


def test_theta_delta_zero_centred():
    g = sample_theta(2.0, 0.0, RngStream(5, 3), 100_000)
    assert within_4se(g.real, 0.0) and within_4se(g.imag, 0.0)


@pytest.mark.parametrize("a,delta", [(6.0, 0.7 + 0.2j), (12.0, 1.5 - 1j)])
def test_theta_w_mean(a, delta):
    w, _ = sample_theta_wz(a, delta, RngStream(5, 4), 100_000)
    d = DeltaParam.of(delta)
    assert w_moments(a, delta)[0] == pytest.approx(-4 * d.re / (a + 4 * d.re))
    assert within_4se(w, w_moments(a, delta)[0])


def test_theta_factors_uncorrelated():
    w, z = sample_theta_wz(4.0, 0.5 - 0.5j, RngStream(5, 5), 100_000)
    r = np.corrcoef(w, z)[0, 1]
    assert abs(r) * np.sqrt(w.size) < 4


@pytest.mark.parametrize("delta", [0.0, 0.5, 0.5 + 1j])
def test_theta_angle_cdf_matches_sampler(delta):
    g = sample_theta(0.0, delta, RngStream(6, 1), 10_000)
    assert stats.kstest(np.angle(g), lambda t: theta_angle_cdf(t, delta)).pvalue > 0.001


def test_theta_angle_cdf_endpoints():
    assert theta_angle_cdf(np.pi, 0.3) == pytest.approx(1.0)
    assert theta_angle_cdf(-np.pi + 1e-12, 0.3) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DomainError):
        theta_angle_cdf(4.0, 0.3)
