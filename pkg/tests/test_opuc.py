from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from artifact.distributions import RngStream
from artifact.errors import DomainError, PoleError, TagError
from artifact.harness import gram_schmidt_monic, random_measure, verblunsky_from_measure
from artifact.opuc import (
    CJ,
    RO,
    SupportPoints,
    VerblunskySeq,
    alpha_from_gamma,
    cj_verblunsky,
    cj_verblunsky_batch,
    gamma_from_alpha,
    jacobi_points,
    normalized_char_poly,
    ro_verblunsky,
    ro_verblunsky_batch,
    scaled_char_poly,
    scaled_char_poly_batch,
    support_points,
    szego_coefficients,
    szego_eval,
)


def _cj_weight(theta, delta):
    # |(1 - e^{-i t})^delta (1 - e^{i t})^conj(delta)| on the principal branch
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.exp(2 * np.real(np.conj(delta) * np.log(1 - np.exp(1j * theta))))


def _cj_rejection(n, beta, delta, size, g):
    """Direct rejection sampler for the n-point circular Jacobi density."""
    grid = np.linspace(-np.pi, np.pi, 20000)[1:-1]  # even count keeps 0 off the grid
    wmax = _cj_weight(grid, delta).max() * 1.05
    bound = 2.0 ** (beta * n * (n - 1) / 2) * wmax**n
    out = []
    while sum(len(o) for o in out) < size:
        th = g.uniform(-np.pi, np.pi, (50_000, n))
        f = np.prod(_cj_weight(th, delta), axis=1)
        for j in range(n):
            for k in range(j + 1, n):
                f *= np.abs(np.exp(1j * th[:, j]) - np.exp(1j * th[:, k])) ** beta
        out.append(np.sort(th[g.random(th.shape[0]) * bound < f], axis=1))
    return np.concatenate(out)[:size]


def _jacobi_rejection(beta, a, b, size, g):
    """Two-point Jacobi density sampler; valid when both edge exponents are >= 0."""
    p, q = beta * (a + 1) / 2 - 1, beta * (b + 1) / 2 - 1
    assert p >= 0 and q >= 0
    out = []
    while sum(len(o) for o in out) < size:
        x = g.random((50_000, 2))
        f = np.abs(x[:, 0] - x[:, 1]) ** beta * np.prod(x**p * (1 - x) ** q, axis=1)
        out.append(np.sort(x[g.random(x.shape[0]) < f], axis=1))
    return np.concatenate(out)[:size]


# ---------------------------------------------------------------- sequences


def test_cj_single_point_is_unimodular():
    seq = cj_verblunsky(1, 2.0, 0.3, RngStream(1).generator())
    assert abs(abs(seq.coefficients[0]) - 1) < 1e-14


def test_cj_interior_coefficients():
    seq = cj_verblunsky(16, 1.0, 0.5 + 0.5j, RngStream(1).generator())
    assert np.all(np.abs(seq.coefficients[:-1]) < 1)
    assert seq.ensemble == CJ


def test_ro_shape():
    seq = ro_verblunsky(5, 2.0, 0.5, 0.0, RngStream(2).generator())
    assert seq.n == 10
    assert seq.coefficients[-1] == -1
    assert np.all(seq.coefficients.imag == 0)


@pytest.mark.parametrize("args", [(0, 2.0), (3, 0.0), (2.5, 1.0)])
def test_cj_domain(args):
    with pytest.raises(DomainError):
        cj_verblunsky(*args, 0.0, RngStream(0).generator())


def test_ro_domain():
    with pytest.raises(DomainError, match="a must exceed -1"):
        ro_verblunsky(3, 2.0, -1.0, 0.0, RngStream(0).generator())


def test_batch_matches_law_of_single():
    b = cj_verblunsky_batch(4, 2.0, 0.5, RngStream(3).generator(), 20_000)
    s = np.array([cj_verblunsky(4, 2.0, 0.5, g).coefficients for g in RngStream(4).generators(2_000)])
    for k in range(4):
        assert stats.ks_2samp(b[:, k].real, s[:, k].real).pvalue > 0.001


def test_seq_validation():
    with pytest.raises(DomainError):
        VerblunskySeq([0.5, 0.5])
    with pytest.raises(DomainError):
        VerblunskySeq([1.0, -1.0])
    with pytest.raises(DomainError):
        VerblunskySeq([0.2, -1.0, 0.1, 1j], ensemble=RO)


def test_seq_json_roundtrip():
    seq = cj_verblunsky(6, 2.0, 0.5 - 1j, RngStream(5).generator())
    back = VerblunskySeq.from_json(seq.to_json())
    assert np.array_equal(back.coefficients, seq.coefficients)
    assert back.ensemble == seq.ensemble and back.params == seq.params


def test_seq_is_immutable():
    seq = cj_verblunsky(3, 2.0, 0.0, RngStream(5).generator())
    with pytest.raises(ValueError):
        seq.coefficients[0] = 0


# ---------------------------------------------------------------- conversions and recursions


def test_alpha_gamma_modulus_and_roundtrip():
    seq = cj_verblunsky(12, 2.0, 0.7 + 0.4j, RngStream(6).generator())
    a = seq.alphas
    assert np.allclose(np.abs(a), np.abs(seq.coefficients), atol=1e-14)
    assert np.allclose(gamma_from_alpha(a), seq.coefficients, atol=1e-13)


def test_alpha_from_gamma_pole():
    with pytest.raises(PoleError):
        alpha_from_gamma([1.0, -1.0])


def test_szego_boundary_steps():
    seq = cj_verblunsky(5, 2.0, 0.0, RngStream(7).generator())
    z = np.array([0.3 + 0.1j, -2.0])
    phi, phis = szego_eval(seq, z, upto=0)
    assert np.all(phi == 1) and np.all(phis == 1)
    phi, _ = szego_eval(seq, z, upto=1)
    assert np.allclose(phi, z - np.conj(seq.alphas[0]))
    with pytest.raises(DomainError):
        szego_eval(seq, z, upto=6)


@given(st.integers(0, 2**32 - 1))
def test_szego_reversed_modulus_on_circle(seed):
    g = np.random.Generator(np.random.Philox(seed))
    seq = cj_verblunsky(7, 1.5, 0.3 - 0.2j, g)
    z = np.exp(1j * g.uniform(-np.pi, np.pi, 5))
    for k in range(seq.n + 1):
        phi, phis = szego_eval(seq, z, upto=k)
        assert np.allclose(np.abs(phi), np.abs(phis), rtol=1e-10)


def test_szego_coefficients_are_monic():
    seq = cj_verblunsky(9, 2.0, 0.5, RngStream(8).generator())
    c = szego_coefficients(seq)
    assert c.size == 10 and c[-1] == 1
    z = 0.4 - 0.7j
    assert np.polyval(c[::-1], z) == pytest.approx(szego_eval(seq, z)[0], abs=1e-12)


def test_normalized_char_poly_values():
    seq = cj_verblunsky(8, 2.0, 0.5 + 1j, RngStream(9).generator())
    assert normalized_char_poly(seq, 1.0) == pytest.approx(1.0, abs=1e-12)
    one = VerblunskySeq([-1.0])
    for z in (0.0, 2.0, 1j):
        assert normalized_char_poly(one, z) == pytest.approx((z + 1) / 2)


def test_char_poly_product_formula():
    seq = cj_verblunsky(10, 2.0, 0.5 - 0.5j, RngStream(10).generator())
    roots = np.exp(1j * support_points(seq).angles)
    z = np.array([0.2 + 0.3j, -1.7, 3j])
    prod = np.prod((z[:, None] - roots) / (1 - roots), axis=1)
    assert np.allclose(normalized_char_poly(seq, z), prod, rtol=1e-9)


def test_scaled_char_poly_values():
    seq = cj_verblunsky(6, 2.0, 0.5, RngStream(11).generator())
    assert scaled_char_poly(seq, 0.0) == pytest.approx(1.0)
    one = VerblunskySeq([-1.0])
    z = np.linspace(-5, 5, 11) + 0.3j
    assert np.allclose(scaled_char_poly(one, z), np.cos(z / 2), atol=1e-14)


def test_scaled_char_poly_zeros_and_batch():
    seq = cj_verblunsky(12, 2.0, 0.5, RngStream(12).generator())
    lam = seq.n * support_points(seq).angles
    assert np.max(np.abs(scaled_char_poly(seq, lam))) < 1e-8
    z = np.array([0.5, 2.0 + 1j])
    assert np.allclose(scaled_char_poly_batch(seq.coefficients[None, :], z), scaled_char_poly(seq, z))


# ---------------------------------------------------------------- support points


def test_support_points_gram_schmidt_oracle():
    g = RngStream(13).generator()
    for _ in range(10):
        ang, w = random_measure(8, 2.0, g)
        seq = verblunsky_from_measure(ang, w)
        sp = support_points(seq)
        assert np.max(np.abs(np.sort(sp.angles) - np.sort(ang))) < 1e-8
        assert np.all(sp.residuals < 1e-8)


def test_gram_schmidt_polynomials_are_monic_and_orthogonal():
    g = RngStream(14).generator()
    ang, w = random_measure(6, 1.0, g)
    phis = gram_schmidt_monic(ang, w, 5)
    pts = np.exp(1j * ang)
    vals = [np.polyval(p[::-1], pts) for p in phis]
    for k, p in enumerate(phis):
        assert p.size == k + 1 and p[-1] == 1
        for j in range(k):
            assert abs(np.sum(w * vals[k] * np.conj(vals[j]))) < 1e-10


def test_ro_support_symmetric():
    seq = ro_verblunsky(6, 2.0, 0.5, 0.0, RngStream(15).generator())
    sp = support_points(seq)
    assert sp.n == 12
    assert np.allclose(np.sort(sp.angles), np.sort(-sp.angles), atol=0)


def test_jacobi_points_values():
    sp = SupportPoints(np.array([-np.pi / 2, np.pi / 2]), np.zeros(2), RO)
    assert jacobi_points(sp) == pytest.approx([0.5])
    sp = SupportPoints(np.array([-0.3, 0.3, np.pi]), np.zeros(3), RO)
    assert jacobi_points(sp)[-1] == pytest.approx(1.0)


def test_jacobi_points_tag():
    seq = cj_verblunsky(4, 2.0, 0.0, RngStream(16).generator())
    with pytest.raises(TagError):
        jacobi_points(support_points(seq))


# ---------------------------------------------------------------- laws against direct oracles


def test_cue_two_point_difference_law():
    # orientation-free statistic: psi = theta1 - theta2 has density (1 - cos psi)/(2 pi)
    gens = RngStream(17).generators(4000)
    c = np.array([np.cos(np.diff(support_points(cj_verblunsky(2, 2.0, 0.0, g)).angles)[0]) for g in gens])
    cdf = lambda x: 1 - (np.arccos(x) - np.sin(np.arccos(x))) / np.pi
    assert stats.kstest(c, cdf).pvalue > 0.001


def test_cj_one_point_law_by_quadrature():
    delta = 0.5 + 1j
    gens = RngStream(18).generators(4000)
    th = np.array([support_points(cj_verblunsky(1, 2.0, delta, g)).angles[0] for g in gens])
    total = integrate.quad(_cj_weight, -np.pi, np.pi, args=(delta,))[0]
    cdf = np.vectorize(lambda t: integrate.quad(_cj_weight, -np.pi, t, args=(delta,))[0] / total)
    assert stats.kstest(th, cdf).pvalue > 0.001


@pytest.mark.parametrize("beta,delta", [(1.0, 0.5 + 1j), (4.0, 0.0), (2.0, 1.0 - 0.5j)])
def test_cj_two_point_law_by_rejection(beta, delta):
    gens = RngStream(19, int(beta)).generators(3000)
    ours = np.array([support_points(cj_verblunsky(2, beta, delta, g)).angles for g in gens])
    ref = _cj_rejection(2, beta, delta, 3000, RngStream(20, int(beta)).generator())
    for j in range(2):
        assert stats.ks_2samp(ours[:, j], ref[:, j]).pvalue > 0.001


def test_ro_one_point_jacobi_law():
    beta, a, b = 2.0, 0.5, 1.0
    gens = RngStream(21).generators(4000)
    x = np.array([jacobi_points(support_points(ro_verblunsky(1, beta, a, b, g)))[0] for g in gens])
    assert stats.kstest(x, stats.beta(beta * (a + 1) / 2, beta * (b + 1) / 2).cdf).pvalue > 0.001


@pytest.mark.parametrize("beta,a,b", [(2.0, 0.5, 0.0), (1.0, 1.0, 2.0)])
def test_ro_two_point_jacobi_law_by_rejection(beta, a, b):
    batch = ro_verblunsky_batch(2, beta, a, b, RngStream(22).generator(), 3000)
    ours = np.array([jacobi_points(support_points(VerblunskySeq(row, RO))) for row in batch])
    ref = _jacobi_rejection(beta, a, b, 3000, RngStream(23).generator())
    for j in range(2):
        assert stats.ks_2samp(ours[:, j], ref[:, j]).pvalue > 0.001
