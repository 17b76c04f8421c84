"""Verblunsky coefficients, Szego recursions and characteristic polynomials."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    DeltaParam,
    as_generator,
    sample_beta_tilde,
    sample_theta,
)
from .errors import DomainError, NumericalFailure, PoleError, TagError

__all__ = [
    "VerblunskySeq",
    "SupportPoints",
    "cj_verblunsky",
    "cj_verblunsky_batch",
    "ro_verblunsky",
    "ro_verblunsky_batch",
    "alpha_from_gamma",
    "gamma_from_alpha",
    "szego_eval",
    "szego_coefficients",
    "normalized_char_poly",
    "char_poly_batch",
    "support_points",
    "scaled_char_poly",
    "scaled_char_poly_batch",
    "jacobi_points",
]

CJ = "CJ"
RO = "RO"
CUSTOM = "custom"

_UNIT_TOL = 1e-10


@dataclass(frozen=True)
class VerblunskySeq:
    """Modified Verblunsky coefficients gamma_0 .. gamma_{N-1}."""

    coefficients: np.ndarray
    ensemble: str = CUSTOM
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        if c.size == 0:
            raise DomainError("a Verblunsky sequence needs at least one coefficient")
        mod = np.abs(c)
        if np.any(mod[:-1] >= 1.0):
            raise DomainError("coefficients before the last must lie strictly inside the unit disk")
        if abs(mod[-1] - 1.0) > _UNIT_TOL:
            raise DomainError("the last coefficient must have modulus 1")
        if self.ensemble == RO:
            if np.any(np.abs(c.imag) > 0) or c.size % 2 or c[-1] != -1:
                raise DomainError("RO sequences are real, of even length, and end in -1")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def n(self) -> int:
        return int(self.coefficients.size)

    @property
    def alphas(self) -> np.ndarray:
        return alpha_from_gamma(self.coefficients)

    def to_json(self) -> dict:
        return {
            "ensemble": self.ensemble,
            "params": self.params,
            "re": self.coefficients.real.tolist(),
            "im": self.coefficients.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "VerblunskySeq":
        c = np.asarray(data["re"], float) + 1j * np.asarray(data["im"], float)
        return cls(c, data.get("ensemble", CUSTOM), dict(data.get("params", {})))


@dataclass(frozen=True)
class SupportPoints:
    """Eigenangles in (-pi, pi] with per-root Newton residuals."""

    angles: np.ndarray
    residuals: np.ndarray
    ensemble: str = CUSTOM

    @property
    def n(self) -> int:
        return int(self.angles.size)


# ---------------------------------------------------------------- sampling


def _check_common(n: int, beta: float):
    if int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1 (got {n})")
    if not beta > 0:
        raise DomainError(f"beta must be positive (got {beta})")


def cj_verblunsky(n: int, beta: float, delta, rng) -> VerblunskySeq:
    """gamma_k ~ Theta(beta(n-k-1)+1, delta), independent, k = 0..n-1."""
    _check_common(n, beta)
    d = DeltaParam.of(delta)
    g = as_generator(rng)
    coeffs = np.array([sample_theta(beta * (n - k - 1), d, g) for k in range(n)], dtype=complex)
    return VerblunskySeq(coeffs, CJ, {"n": int(n), "beta": float(beta), "delta_re": d.re, "delta_im": d.im})


def cj_verblunsky_batch(n: int, beta: float, delta, rng, reps: int) -> np.ndarray:
    """Array of shape (reps, n) of independent CJ coefficient sequences."""
    _check_common(n, beta)
    d = DeltaParam.of(delta)
    g = as_generator(rng)
    out = np.empty((reps, n), dtype=complex)
    for k in range(n):
        out[:, k] = sample_theta(beta * (n - k - 1), d, g, size=reps)
    return out


def _ro_shapes(n: int, beta: float, a: float, b: float, k: int) -> tuple[float, float]:
    if k % 2 == 0:
        return beta / 4.0 * (2 * n - k + 2 * a), beta / 4.0 * (2 * n - k + 2 * b)
    return beta / 4.0 * (2 * n - k + 2 * a + 2 * b + 1), beta / 4.0 * (2 * n - k - 1)


def _check_ro(n, beta, a, b):
    _check_common(n, beta)
    if not a > -1:
        raise DomainError(f"a must exceed -1 (got {a})")
    if not b > -1:
        raise DomainError(f"b must exceed -1 (got {b})")


def ro_verblunsky(n: int, beta: float, a: float, b: float, rng) -> VerblunskySeq:
    """2n real coefficients with B~ laws; the last one is exactly -1."""
    _check_ro(n, beta, a, b)
    g = as_generator(rng)
    coeffs = np.empty(2 * n)
    for k in range(2 * n - 1):
        coeffs[k] = sample_beta_tilde(*_ro_shapes(n, beta, a, b, k), g)
    coeffs[-1] = -1.0
    return VerblunskySeq(coeffs.astype(complex), RO, {"n": int(n), "beta": float(beta), "a": float(a), "b": float(b)})


def ro_verblunsky_batch(n: int, beta: float, a: float, b: float, rng, reps: int) -> np.ndarray:
    """Real array of shape (reps, 2n)."""
    _check_ro(n, beta, a, b)
    g = as_generator(rng)
    out = np.empty((reps, 2 * n))
    for k in range(2 * n - 1):
        out[:, k] = sample_beta_tilde(*_ro_shapes(n, beta, a, b, k), g, size=reps)
    out[:, -1] = -1.0
    return out


# ---------------------------------------------------------------- conversions


def alpha_from_gamma(gamma) -> np.ndarray:
    """Invert gamma_k = conj(alpha_k) prod_{j<k} (1 - conj(gamma_j))/(1 - gamma_j)."""
    gamma = np.asarray(gamma, dtype=complex)
    if np.any(gamma[:-1] == 1):
        raise PoleError("gamma_k = 1 makes the phase product singular")
    phase = np.ones(gamma.shape[:-1], dtype=complex)
    out = np.empty_like(gamma)
    for k in range(gamma.shape[-1]):
        out[..., k] = np.conj(gamma[..., k] / phase)
        if k + 1 < gamma.shape[-1]:
            phase = phase * (1 - np.conj(gamma[..., k])) / (1 - gamma[..., k])
    return out


def gamma_from_alpha(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=complex)
    phase = np.ones(alpha.shape[:-1], dtype=complex)
    out = np.empty_like(alpha)
    for k in range(alpha.shape[-1]):
        out[..., k] = np.conj(alpha[..., k]) * phase
        if k + 1 < alpha.shape[-1]:
            if np.any(out[..., k] == 1):
                raise PoleError("gamma_k = 1 makes the phase product singular")
            phase = phase * (1 - np.conj(out[..., k])) / (1 - out[..., k])
    return out


# ---------------------------------------------------------------- recursions


def szego_eval(seq: VerblunskySeq, z, upto: int | None = None):
    """(Phi_k(z), Phi*_k(z)) after ``upto`` steps of the Szego recursion."""
    n = seq.n
    upto = n if upto is None else upto
    if int(upto) != upto or not 0 <= upto <= n:
        raise DomainError(f"upto must lie in [0, {n}] (got {upto})")
    alpha = seq.alphas
    z = np.asarray(z, dtype=complex)
    phi = np.ones_like(z)
    phis = np.ones_like(z)
    for k in range(int(upto)):
        zphi = z * phi
        phi, phis = zphi - np.conj(alpha[k]) * phis, phis - alpha[k] * zphi
    return phi, phis


def szego_coefficients(seq: VerblunskySeq, upto: int | None = None) -> np.ndarray:
    """Monomial coefficients of Phi_upto in increasing degree order."""
    n = seq.n
    upto = n if upto is None else upto
    alpha = seq.alphas
    phi = np.zeros(upto + 1, dtype=complex)
    phis = np.zeros(upto + 1, dtype=complex)
    phi[0] = phis[0] = 1.0
    for k in range(upto):
        zphi = np.roll(phi, 1)
        zphi[0] = 0.0
        phi, phis = zphi - np.conj(alpha[k]) * phis, phis - alpha[k] * zphi
    return phi


def _psi_step(gamma, z, psi, psis):
    if np.any(gamma == 1):
        raise PoleError("gamma_k = 1 puts a support point at angle 0 (excluded by mu({1}) = 0)")
    zpsi = z * psi
    new = (zpsi - gamma * psis) / (1 - gamma)
    news = (psis - np.conj(gamma) * zpsi) / (1 - np.conj(gamma))
    return new, news


def normalized_char_poly(seq: VerblunskySeq, z):
    """p_mu(z) = Psi_N(z), normalized so that p_mu(1) = 1."""
    z = np.asarray(z, dtype=complex)
    psi = np.ones_like(z)
    psis = np.ones_like(z)
    for g in seq.coefficients:
        psi, psis = _psi_step(g, z, psi, psis)
    return psi[()] if psi.ndim == 0 else psi


def char_poly_batch(gammas, z):
    """Psi_N(z) for a (reps, N) coefficient array; z broadcasts against reps."""
    gammas = np.asarray(gammas, dtype=complex)
    z = np.asarray(z, dtype=complex)
    shape = np.broadcast_shapes(gammas.shape[:-1], z.shape)
    psi = np.ones(shape, dtype=complex)
    psis = np.ones(shape, dtype=complex)
    for k in range(gammas.shape[-1]):
        psi, psis = _psi_step(gammas[..., k], z, psi, psis)
    return psi


def scaled_char_poly(seq: VerblunskySeq, z):
    """p_mu(exp(i z/N)) exp(-i z/2) with N the sequence length."""
    z = np.asarray(z, dtype=complex)
    out = normalized_char_poly(seq, np.exp(1j * z / seq.n)) * np.exp(-0.5j * z)
    return out[()] if np.ndim(out) == 0 else out


def scaled_char_poly_batch(gammas, z):
    """Vectorized :func:`scaled_char_poly` over the rows of a (reps, N) array."""
    gammas = np.asarray(gammas, dtype=complex)
    n = gammas.shape[-1]
    z = np.asarray(z, dtype=complex)
    return char_poly_batch(gammas, np.exp(1j * z / n)) * np.exp(-0.5j * z)


# ---------------------------------------------------------------- roots


def _horner(coeffs_desc, z):
    p = np.zeros_like(z)
    dp = np.zeros_like(z)
    for c in coeffs_desc:
        dp = dp * z + p
        p = p * z + c
    return p, dp


def support_points(seq: VerblunskySeq, tol: float = 1e-8, max_newton: int = 50) -> SupportPoints:
    """Zeros of Phi_N as eigenangles.

    Starting values are the companion-matrix eigenvalues; each root is
    refined by Newton steps on Phi_N and projected to the unit circle.  The
    reported residual is the size of the final Newton correction, which
    estimates the root error.
    """
    n = seq.n
    if n > 2048:
        raise NumericalFailure("global root finding is limited to N <= 2048; use Prufer counting instead")
    coeffs = szego_coefficients(seq)
    desc = coeffs[::-1]
    roots = np.roots(desc).astype(complex) if n > 1 else np.array([-desc[1] / desc[0]], dtype=complex)
    roots = roots / np.abs(roots)
    step = np.full(n, np.inf)
    for _ in range(max_newton):
        p, dp = _horner(desc, roots)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.where(dp != 0, p / dp, 0.0)
        roots = roots - delta
        roots = roots / np.abs(roots)
        step = np.abs(delta)
        if np.all(step < tol * 1e-3):
            break
    p, dp = _horner(desc, roots)
    with np.errstate(divide="ignore", invalid="ignore"):
        residual = np.abs(np.where(dp != 0, p / dp, np.inf))
    if np.any(~(residual < tol)):
        raise NumericalFailure("root refinement did not reach tolerance", residual)
    angles = np.angle(roots)
    angles = np.where(angles <= -np.pi, angles + 2 * np.pi, angles)
    order = np.argsort(angles)
    angles, residual = angles[order], residual[order]
    if n > 1:
        gaps = np.diff(np.concatenate([angles, angles[:1] + 2 * np.pi]))
        if np.min(gaps) < 1e-10:
            raise NumericalFailure("eigenangle collision within 1e-10", gaps)
    if seq.ensemble == RO:
        angles = _symmetrize(angles)
    return SupportPoints(angles, residual, seq.ensemble)


def _symmetrize(angles: np.ndarray) -> np.ndarray:
    # pair theta with -theta and average out the rounding asymmetry
    s = np.sort(angles)
    return 0.5 * (s + np.sort(-s))


def jacobi_points(angles: SupportPoints) -> np.ndarray:
    """x_j = (1 - cos theta_j)/2 over the positive angles of an RO support."""
    if angles.ensemble != RO:
        raise TagError("jacobi_points needs an RO-tagged support")
    pos = angles.angles[angles.angles > 0]
    return np.sort((1.0 - np.cos(pos)) / 2.0)
