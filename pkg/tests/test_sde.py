from __future__ import annotations

import json
from math import factorial

import numpy as np
import pytest

from artifact.distributions import RngStream, pearson4_mean
from artifact.errors import DomainError, QualityError
from artifact.sde import (
    CountingRecord,
    SdeGrid,
    SecularSeries,
    alpha_counts,
    asymptote_exponent,
    bess_path,
    bess_secular_sde,
    bess_taylor,
    bess_taylor_from_path,
    circle_nodes,
    gap_linear_coefficient,
    gap_power,
    gap_probability,
    hard_edge_counts,
    hp_endpoints,
    hp_path,
    hp_secular_sde,
    hp_taylor,
    ks_counts,
    ks_points,
    rotate_by_limit,
    taylor_from_circle,
)
from conftest import within_4se


# ---------------------------------------------------------------- grid and records


def test_grid_validation():
    with pytest.raises(DomainError):
        SdeGrid(ds=0.0)
    with pytest.raises(DomainError):
        SdeGrid(per_octave=4)


def test_counting_times_respect_caps():
    grid = SdeGrid(ds=0.01, max_increment=0.1)
    dts = grid.counting_times(rate0=100.0, decay=0.5, horizon=5.0)
    t = np.concatenate([[0.0], np.cumsum(dts)[:-1]])
    assert np.all(dts <= 0.01 + 1e-15)
    assert np.all(dts * 100.0 * np.exp(-0.5 * t) <= 0.1 + 1e-12)
    assert dts.sum() >= 5.0


def test_secular_series_validation():
    with pytest.raises(DomainError):
        SecularSeries(np.array([2.0, 0.0]), "HP-Taylor")
    with pytest.raises(DomainError):
        SecularSeries(np.array([1.0, 0.5]), "Bess-Taylor")
    s = SecularSeries(np.array([1.0, 0.0, -0.125]), "Bess-Taylor")
    assert s(2.0) == pytest.approx(0.5)
    assert json.loads(json.dumps(s.to_json()))["coefficients"][2] == [-0.125, 0.0]


def test_counting_record_jsonl():
    rec = alpha_counts(2.0, 0.5, [0.0, 5.0], 3, rng=RngStream(1))
    lines = rec.jsonl(seed=1, stream_id=0)
    assert len(lines) == 3
    first = json.loads(lines[0])
    assert first["lambda"] == [0.0, 5.0] and first["N"][0] == 0 and first["seed"] == 1


# ---------------------------------------------------------------- paths


def test_hp_path_start_and_tail():
    p = hp_path(2.0, 0.5, rng=RngStream(2).generator())
    assert p.x[0] == 0.0 and p.y[0] == 1.0
    assert p.meta["tail_bound"] <= SdeGrid().tol
    assert np.all(np.diff(p.t) > 0) and p.t[-1] < 1


def test_hp_endpoint_mean():
    # Re delta = 1 gives the endpoint law a finite variance
    delta = 1.0 + 0.5j
    q = hp_endpoints(2.0, delta, 1500, SdeGrid(ds=0.01), RngStream(3))
    # the endpoint law is Pearson IV with m = Re delta + 1, mu = -2 Im delta
    assert within_4se(q, pearson4_mean(2.0, -1.0))


def test_bess_path_on_axis():
    p = bess_path(2.0, 0.5, rng=RngStream(4).generator())
    assert np.all(p.x == 0) and p.q == 0.0 and p.y[0] == 1.0


def test_paths_validate_parameters():
    with pytest.raises(DomainError):
        hp_path(2.0, -0.6, rng=0)
    with pytest.raises(DomainError):
        bess_path(2.0, -1.0, rng=0)
    with pytest.raises(DomainError):
        hp_path(0.0, 0.0, rng=0)


def test_rotate_by_limit():
    p = hp_path(2.0, 0.3 - 0.2j, rng=RngStream(5).generator())
    r = rotate_by_limit(p)
    assert r.x[0] == pytest.approx(0.0, abs=1e-15) and r.y[0] == pytest.approx(1.0)
    assert r.q == np.inf
    with pytest.raises(DomainError):
        rotate_by_limit(r)


# ---------------------------------------------------------------- counting


def test_alpha_counts_basic_properties():
    lam = [0.0, 2.0, 7.5, -3.0, 20.0]
    rec = alpha_counts(2.0, 0.5 + 0.5j, lam, 50, rng=RngStream(6))
    assert np.all(rec.counts[:, 0] == 0)
    assert rec.monotone()
    assert rec.undecided_fraction == 0.0
    again = alpha_counts(2.0, 0.5 + 0.5j, lam, 50, rng=RngStream(6))
    assert np.array_equal(rec.counts, again.counts)


def test_alpha_counts_replicate_independent_of_batch():
    a = alpha_counts(2.0, 0.5, [3.0, 9.0], 10, rng=RngStream(7))
    b = alpha_counts(2.0, 0.5, [3.0, 9.0], 1, rng=RngStream(7).generators(10)[4:5])
    assert np.array_equal(a.counts[4], b.counts[0])


@pytest.mark.parametrize("lam", [4 * np.pi, 8 * np.pi])
def test_alpha_intensity_at_delta_zero(lam):
    rec = alpha_counts(2.0, 0.0, [lam], 1000, rng=RngStream(8))
    assert within_4se(rec.counts[:, 0], lam / (2 * np.pi))


def test_ks_intensity_at_delta_zero():
    rec = ks_counts(2.0, 0.0, [0.0, 8 * np.pi], 400, rng=RngStream(9))
    assert np.all(rec.counts[:, 0] == 0)
    assert within_4se(rec.counts[:, 1], 4.0)


def test_ks_points_match_counts():
    for s in range(6):
        pts = ks_points(2.0, 0.5 - 0.25j, [0.0, 30.0], rng=RngStream(10, s))
        rec = ks_counts(2.0, 0.5 - 0.25j, [0.0, 30.0], 1, rng=RngStream(10, s))
        assert pts.size == rec.counts[0, 1]
        assert np.all((pts > 0) & (pts <= 30.0))


def test_hard_edge_counts_basic_properties():
    rec = hard_edge_counts(2.0, 0.5, [0.0, 3.0, 10.0, 25.0], 60, rng=RngStream(11))
    assert np.all(rec.counts[:, 0] == 0)
    assert rec.monotone()
    with pytest.raises(DomainError):
        hard_edge_counts(2.0, 0.5, [-1.0], 2, rng=RngStream(11))


# ---------------------------------------------------------------- secular functions


def test_hp_secular_at_zero():
    v = hp_secular_sde(2.0, 0.5, [0.0, 1.0], rng=RngStream(12).generator())
    assert v[0] == pytest.approx(1.0)


def test_hp_taylor_matches_circle_extraction():
    nodes = circle_nodes(64, 1.0)
    vals = hp_secular_sde(2.0, 0.5 - 0.5j, nodes, rng=RngStream(13).generator(), zmax=1.0)
    tay = hp_taylor(2.0, 0.5 - 0.5j, 8, rng=RngStream(13).generator(), zmax=1.0)
    assert tay.coefficients[0] == pytest.approx(1.0)
    assert np.max(np.abs(taylor_from_circle(vals, 1.0, 8) - tay.coefficients)) < 1e-10


def test_taylor_from_circle_on_polynomial():
    c = np.array([1.0, -2.0, 0.5j, 3.0])
    z = circle_nodes(16, 2.0)
    assert np.allclose(taylor_from_circle(np.polyval(c[::-1], z), 2.0, 3), c)


def test_bess_secular_even_and_normalized():
    z = np.array([0.0, 0.5, 2.0 + 1.0j, 3.0])
    v = bess_secular_sde(2.0, 0.5, z, rng=RngStream(14).generator(), zmax=3.0)
    w = bess_secular_sde(2.0, 0.5, -z, rng=RngStream(14).generator(), zmax=3.0)
    assert v[0] == pytest.approx(1.0)
    assert np.max(np.abs(v - w)) < 1e-12


def test_bess_taylor_structure_and_agreement():
    z = np.array([0.5, 1.0, 2.0, 1.5j, 3.0])
    for s in range(4):
        v = bess_secular_sde(2.0, 0.5, z, rng=RngStream(15, s).generator(), zmax=3.0)
        tay = bess_taylor(2.0, 0.5, 12, rng=RngStream(15, s).generator(), zmax=3.0)
        c = tay.coefficients
        assert np.all(c[1::2] == 0)
        assert c[2].real < 0
        assert np.max(np.abs(v - tay(z)) / np.abs(v)) < 1e-4


def test_bess_taylor_constant_path_fixture():
    # yhat = 1 gives iterated integrals t^j/j!, hence the series of cos(z/2)
    t = np.linspace(0.0, 1.0, 20001)
    c = bess_taylor_from_path(t, np.ones_like(t), 8).coefficients
    expected = np.zeros(9)
    expected[0::2] = [(-1) ** k / (4**k * factorial(2 * k)) for k in range(5)]
    assert np.allclose(c, expected, rtol=1e-6, atol=1e-12)


def test_taylor_order_guard():
    with pytest.raises(DomainError):
        hp_taylor(2.0, 0.0, 13, rng=0)
    with pytest.raises(DomainError):
        bess_taylor_from_path(np.array([0.0, 0.5]), np.array([1.0, -1.0]), 2)


# ---------------------------------------------------------------- gaps


def test_gap_probability_small_lambda():
    p, se = gap_probability(2.0, 0.0, [0.1, 1.0], 1000, rng=RngStream(16))
    assert p[0] > 0.95 and p[0] >= p[1]
    with pytest.raises(DomainError):
        gap_probability(2.0, 0.0, 0.0, 10, rng=RngStream(16))


def test_gap_probability_quality_guard():
    with pytest.raises(QualityError):
        gap_probability(2.0, 0.0, 5.0, 20, SdeGrid(t_max=0.01), RngStream(17))


@pytest.mark.parametrize("sign", [1, -1])
def test_gap_constants_at_beta_two(sign):
    delta = sign * 0.5j
    assert gap_power(2.0, delta) == pytest.approx(-1.0)
    assert gap_linear_coefficient(2.0, delta) == pytest.approx(sign * 0.25)
    lam = 3.0
    expected = -lam**2 / 32 + sign * 0.25 * lam - np.log(lam)
    assert asymptote_exponent(2.0, delta, lam) == pytest.approx(expected)
