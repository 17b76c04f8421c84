"""Exact samplers and closed-form moments for the coefficient laws.

The four families are

* ``B~(s, t)``: density proportional to (1-x)^(s-1) (1+x)^(t-1) on (-1, 1),
* ``B'(s, t)``: density proportional to y^(s-1) (1+y)^(-s-t) on (0, inf),
* ``P_IV(m, mu)``: density proportional to (1+x^2)^(-m) exp(-mu arctan x),
* ``Theta(a+1, delta)``: the law of a modified Verblunsky coefficient,
  sampled through its factorization into a beta prime and a Pearson IV part.

Every sampler accepts either an :class:`RngStream` or a ready
``numpy.random.Generator``.  Passing a stream always restarts it, so the same
(seed, stream_id) pair reproduces the same draws.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln, loggamma

from .errors import DomainError, PoleError

__all__ = [
    "DeltaParam",
    "RngStream",
    "as_generator",
    "sample_beta_tilde",
    "sample_beta_prime",
    "sample_pearson4",
    "gamma_from_wv",
    "wv_from_gamma",
    "sample_theta",
    "sample_theta_wz",
    "beta_tilde_mean",
    "beta_tilde_variance",
    "beta_prime_moment",
    "pearson4_mean",
    "pearson4_second_moment",
    "pearson4_fourth_moment",
    "w_moments",
    "v_moments",
    "theta_angle_density",
    "pearson4_logconst",
    "pearson4_cdf",
    "pearson4_abs_quantile",
    "theta_angle_cdf",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class DeltaParam:
    """Complex parameter delta = re + i*im with re > -1/2."""

    re: float
    im: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.re) or not np.isfinite(self.im):
            raise DomainError("delta must be finite")
        if not self.re > -0.5:
            raise DomainError(f"Re delta must exceed -1/2 (got {self.re})")

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)

    @classmethod
    def of(cls, delta) -> "DeltaParam":
        if isinstance(delta, DeltaParam):
            return delta
        d = complex(delta)
        return cls(d.real, d.imag)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Draws come from a Philox generator whose key is derived from the pair
    through ``numpy.random.SeedSequence``; distinct stream ids give
    statistically independent streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if int(self.seed) < 0 or int(self.stream_id) < 0:
            raise DomainError("seed and stream_id must be non-negative 64-bit integers")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.seed) & _MASK64, spawn_key=(int(self.stream_id) & _MASK64,))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def child(self, index: int) -> "RngStream":
        """Derived stream, used to fan replicates out to independent units."""
        mixed = np.random.SeedSequence([int(self.seed) & _MASK64, int(self.stream_id) & _MASK64, int(index)])
        return RngStream(int(mixed.generate_state(1, np.uint64)[0]), int(index))

    def generators(self, count: int, offset: int = 0) -> list[np.random.Generator]:
        """One independent generator per replicate ``offset .. offset+count-1``."""
        base = self.seed_sequence()
        children = [
            np.random.SeedSequence(base.entropy, spawn_key=base.spawn_key + (offset + i,))
            for i in range(count)
        ]
        return [np.random.Generator(np.random.Philox(s)) for s in children]


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return RngStream(0 if rng is None else int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise DomainError(f"{name} must be positive (got {value})")
    return value


# ---------------------------------------------------------------- samplers


def sample_beta_tilde(s: float, t: float, rng: RngLike, size=None):
    """Draw from B~(s, t) as (X2 - X1)/(X1 + X2) with X1 ~ Gamma(s), X2 ~ Gamma(t)."""
    s = _positive("s", s)
    t = _positive("t", t)
    g = as_generator(rng)
    x1 = g.standard_gamma(s, size)
    x2 = g.standard_gamma(t, size)
    return (x2 - x1) / (x1 + x2)


def sample_beta_prime(s: float, t: float, rng: RngLike, size=None):
    """Draw from B'(s, t) as the ratio X1/X2 of independent Gamma(s), Gamma(t)."""
    s = _positive("s", s)
    t = _positive("t", t)
    g = as_generator(rng)
    return g.standard_gamma(s, size) / g.standard_gamma(t, size)


def sample_pearson4(m: float, mu: float, rng: RngLike, size=None):
    """Draw from P_IV(m, mu) by rejection.

    The proposal is a Student t with 2m-1 degrees of freedom rescaled to
    density proportional to (1+x^2)^(-m), which has the same tail order as the
    target.  The likelihood ratio exp(-mu arctan x) is bounded by
    exp(|mu| pi/2), giving the acceptance probability
    exp(-mu arctan x - |mu| pi/2).
    """
    m = float(m)
    mu = float(mu)
    if not m > 0.5:
        raise DomainError(f"Pearson IV shape m must exceed 1/2 (got {m})")
    g = as_generator(rng)
    nu = 2.0 * m - 1.0
    scale = 1.0 / np.sqrt(nu)
    bound = abs(mu) * np.pi / 2.0
    total = 1 if size is None else int(np.prod(size))
    out = np.empty(total)
    filled = 0
    while filled < total:
        need = total - filled
        batch = max(64, int(need * np.exp(bound) * 1.2) + 16)
        batch = min(batch, 4_000_000)
        x = g.standard_t(nu, batch) * scale
        u = g.random(batch)
        keep = x[np.log(u) < -mu * np.arctan(x) - bound]
        take = min(keep.size, need)
        out[filled:filled + take] = keep[:take]
        filled += take
    if size is None:
        return float(out[0])
    return out.reshape(size)


def gamma_from_wv(w, v):
    """Invert 2*gamma/(1-gamma) = w - i v, i.e. gamma = (w - iv)/(2 + w - iv)."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    num = w - 1j * v
    den = 2.0 + num
    if np.any(den == 0):
        raise PoleError("(w, v) = (-2, 0) is the pole of the inverse map (gamma = infinity)")
    out = num / den
    return complex(out) if out.ndim == 0 else out


def wv_from_gamma(gamma):
    """Forward map: (w, v) with 2*gamma/(1-gamma) = w - i v."""
    gamma = np.asarray(gamma, dtype=complex)
    if np.any(gamma == 1):
        raise PoleError("gamma = 1 is the pole of 2*gamma/(1-gamma)")
    r = 2.0 * gamma / (1.0 - gamma)
    w, v = r.real, -r.imag
    if w.ndim == 0:
        return float(w), float(v)
    return w, v


def sample_theta_wz(a: float, delta, rng: RngLike, size=None):
    """Sample the factorized pair (w, z) of a Theta(a+1, delta) draw.

    1 + w ~ B'(a/2, a/2 + 2 Re delta + 1) and z = v/(2+w) ~
    P_IV(a/2 + Re delta + 1, -2 Im delta), independent; w = -1 when a = 0.
    """
    a = float(a)
    if not a >= 0 or not np.isfinite(a):
        raise DomainError(f"Theta shape a must be non-negative (got {a})")
    d = DeltaParam.of(delta)
    g = as_generator(rng)
    if a == 0:
        w = np.full(size if size is not None else (), -1.0)
    else:
        w = sample_beta_prime(a / 2.0, a / 2.0 + 2.0 * d.re + 1.0, g, size) - 1.0
    z = sample_pearson4(a / 2.0 + d.re + 1.0, -2.0 * d.im, g, size)
    if size is None:
        return float(w), float(z)
    return np.asarray(w, dtype=float), np.asarray(z, dtype=float)


def sample_theta(a: float, delta, rng: RngLike, size=None):
    """Draw gamma ~ Theta(a+1, delta); |gamma| < 1 for a > 0 and |gamma| = 1 for a = 0."""
    w, z = sample_theta_wz(a, delta, rng, size)
    v = np.asarray(z) * (2.0 + np.asarray(w))
    gamma = gamma_from_wv(w, v)
    if float(a) == 0:
        gamma = gamma / np.abs(gamma)
    return gamma


# ---------------------------------------------------------------- moments


def beta_tilde_mean(s: float, t: float) -> float:
    s = _positive("s", s)
    t = _positive("t", t)
    return (t - s) / (s + t)


def beta_tilde_variance(s: float, t: float) -> float:
    s = _positive("s", s)
    t = _positive("t", t)
    return 4.0 * s * t / ((s + t) ** 2 * (s + t + 1.0))


def beta_prime_moment(s: float, t: float, k: float) -> float:
    """E[Y^k] = Gamma(s+k) Gamma(t-k) / (Gamma(s) Gamma(t)) for -s < k < t."""
    s = _positive("s", s)
    t = _positive("t", t)
    if not -s < k < t:
        raise DomainError(f"beta prime moment of order k requires -s < k < t (got k={k}, s={s}, t={t})")
    return float(np.exp(gammaln(s + k) + gammaln(t - k) - gammaln(s) - gammaln(t)))


def pearson4_mean(m: float, mu: float) -> float:
    if not m > 1.0:
        raise DomainError(f"Pearson IV mean requires m > 1 (got {m})")
    return -mu / (2.0 * m - 2.0)


def pearson4_second_moment(m: float, mu: float) -> float:
    if not m > 1.5:
        raise DomainError(f"Pearson IV second moment requires m > 3/2 (got {m})")
    return (2.0 * m - 2.0 + mu**2) / ((2.0 * m - 2.0) * (2.0 * m - 3.0))


def pearson4_fourth_moment(m: float, mu: float) -> float:
    if not m > 2.5:
        raise DomainError(f"Pearson IV fourth moment requires m > 5/2 (got {m})")
    num = 12.0 * (m + (mu**2 - 3.0) / 2.0) ** 2 - 2.0 * mu**4 - 2.0 * mu**2 - 3.0
    den = (2.0 * m - 5.0) * (2.0 * m - 4.0) * (2.0 * m - 3.0) * (2.0 * m - 2.0)
    return num / den


def w_moments(a: float, delta) -> tuple[float, float]:
    """(E[w], E[w^2]) for the w-statistic of a Theta(a+1, delta) draw."""
    d = DeltaParam.of(delta)
    den = a + 4.0 * d.re
    if not den - 2.0 > 0:
        raise DomainError("w moments require a + 4 Re delta > 2")
    mean = -4.0 * d.re / den
    second = (4.0 * a - 8.0 * d.re + 16.0 * d.re**2) / ((den - 2.0) * den)
    return mean, second


def v_moments(a: float, delta) -> tuple[float, float]:
    """(E[v], E[v^2]) for the v-statistic of a Theta(a+1, delta) draw."""
    d = DeltaParam.of(delta)
    den = a + 4.0 * d.re
    if not den - 2.0 > 0:
        raise DomainError("v moments require a + 4 Re delta > 2")
    mean = 4.0 * d.im / den
    second = (4.0 * a + 8.0 * d.re + 16.0 * d.im**2) / ((den - 2.0) * den)
    return mean, second


def theta_angle_density(theta, delta):
    """Unnormalized density of arg(gamma) for gamma ~ Theta(1, delta), theta in (0, 2 pi)."""
    d = DeltaParam.of(delta)
    theta = np.asarray(theta, dtype=float)
    return (2.0 * np.sin(theta / 2.0)) ** (2.0 * d.re) * np.exp(d.im * (theta - np.pi))


def pearson4_logconst(m: float, mu: float) -> float:
    """log of 2^(2m-2) |Gamma(m + i mu/2)|^2 / (pi Gamma(2m-1))."""
    if not m > 0.5:
        raise DomainError(f"Pearson IV shape m must exceed 1/2 (got {m})")
    return float((2 * m - 2) * np.log(2.0) + 2 * loggamma(complex(m, mu / 2)).real - np.log(np.pi) - gammaln(2 * m - 1))


def _cumulative(phis, integrand, lower, logc):
    """exp(logc) * int_lower^phi integrand for sorted-order evaluation of many phi."""
    phis = np.asarray(phis, float)
    order = np.argsort(phis, axis=None)
    flat = phis.reshape(-1)[order]
    out = np.empty(flat.size)
    acc = 0.0
    prev = lower
    for i, phi in enumerate(flat):
        if phi > prev:
            acc += integrate.quad(integrand, prev, phi, limit=200)[0]
            prev = phi
        out[i] = acc
    res = np.empty(flat.size)
    res[order] = np.exp(logc) * out
    return res.reshape(phis.shape)


def pearson4_cdf(x, m: float, mu: float):
    """CDF of P_IV(m, mu); with x = tan(phi) the density becomes cos(phi)^(2m-2) exp(-mu phi)."""
    logc = pearson4_logconst(m, mu)
    phi = np.arctan(np.asarray(x, float))
    f = lambda p: np.cos(p) ** (2 * m - 2) * np.exp(-mu * p)
    out = np.clip(_cumulative(phi, f, -np.pi / 2, logc), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def pearson4_abs_quantile(m: float, mu: float, level: float = 0.999) -> float:
    """Smallest Q with P(|Z| <= Q) >= level for Z ~ P_IV(m, mu)."""
    g = lambda Q: pearson4_cdf(Q, m, mu) - pearson4_cdf(-Q, m, mu) - level
    hi = 1.0
    while g(hi) < 0:
        hi *= 4.0
    return float(optimize.brentq(g, 0.0, hi, xtol=1e-10))


def theta_angle_cdf(theta, delta):
    """CDF on (-pi, pi] of arg(gamma) for gamma ~ Theta(1, delta)."""
    d = DeltaParam.of(delta)
    # shift to (0, 2 pi), where the density has its closed form
    raw = np.asarray(theta, float)
    if np.any((raw <= -np.pi) | (raw > np.pi)):
        raise DomainError("angles must lie in (-pi, pi]")
    th = np.where(raw > 0, raw, raw + 2 * np.pi)
    f = lambda t: float(theta_angle_density(t, d))
    total = integrate.quad(f, 0.0, 2 * np.pi, limit=200)[0]
    F = _cumulative(th, f, 0.0, -np.log(total))
    # arg in (-pi, pi]: mass on (-pi, 0] is the mass on (pi, 2 pi]
    F_pi = integrate.quad(f, 0.0, np.pi, limit=200)[0] / total
    out = np.where(raw > 0, (1.0 - F_pi) + F, F - F_pi)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
