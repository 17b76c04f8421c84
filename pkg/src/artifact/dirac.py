"""Dirac operators built from hyperbolic-plane paths.

An operator is ``tau = R^{-1} J d/dt`` on [0, 1) with weight
``R = X^T X / (2 det X)``, ``X = [[1, -x], [0, y]]`` and boundary vectors
``u0``, ``u1`` normalized by ``u0^T J u1 = 1``.  Paths are piecewise constant
on the intervals between their knots, which makes every quantity below an
exact finite computation for the operators of the finite ensembles.

With ``Xh = X / sqrt(y)`` one has ``R = Xh^T Xh / 2`` and ``det Xh = 1``, so
``G = Xh H`` turns the eigenvalue equation ``J H' = z R H`` into a plain
rotation of ``G`` at angular speed ``z/2`` on every interval.  The Prufer
counter and the kernel formulas both lean on this.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import wv_from_gamma
from .errors import DomainError, NumericalFailure, RepresentationError, ResolutionError
from .opuc import SupportPoints, VerblunskySeq

__all__ = [
    "J",
    "DrivingPath",
    "DiracOperator",
    "SpectrumWindow",
    "path_from_gammas",
    "path_batch_from_gammas",
    "finite_operator",
    "weight_at",
    "resolvent_kernel",
    "integral_trace",
    "hs_distance",
    "expm_traceless",
    "transfer_secular",
    "prufer_count",
    "prufer_counts_batch",
    "lifted_spectrum",
    "secular_from_spectrum",
    "reverse_operator",
    "rotate_operator",
    "hyperbolic_rotation",
]

J = np.array([[0.0, -1.0], [1.0, 0.0]])
S = np.array([[1.0, 0.0], [0.0, -1.0]])

STEP = "step"
GRID = "grid"
FORWARD = "forward"
REVERSED = "reversed"


@dataclass(frozen=True)
class DrivingPath:
    """Piecewise-constant path x + i y with values on [t_i, t_{i+1}).

    ``kind`` is ``"step"`` for chains of a finite ensemble (knots i/N) and
    ``"grid"`` for a sampled diffusion.  ``domain`` is ``"reversed"`` for
    paths living on (0, 1] after a time reversal.

    ``increments`` optionally keeps ``[x_0 - p_0, x_1 - x_0, ..., p_1 - x_{N-1}]``
    at full relative precision, where ``p_0`` and ``p_1`` are the real points
    of the boundary rays (nan when the ray points at infinity).  Absolute
    ``x`` values cannot resolve increments of size ``v y`` once ``y`` is tiny.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    q: float
    kind: str = STEP
    domain: str = FORWARD
    meta: dict = field(default_factory=dict)
    increments: np.ndarray | None = None

    def __post_init__(self):
        if self.increments is not None:
            inc = np.asarray(self.increments, float)
            if inc.shape != (np.size(self.x) + 1,):
                raise DomainError("increments must have one entry more than the knots")
            inc.setflags(write=False)
            object.__setattr__(self, "increments", inc)
        t = np.asarray(self.t, float)
        x = np.asarray(self.x, float)
        y = np.asarray(self.y, float)
        if not (t.shape == x.shape == y.shape) or t.ndim != 1 or t.size == 0:
            raise DomainError("knots and values must be 1-d arrays of equal length")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or t[-1] >= 1.0:
            raise DomainError("knots must increase from 0 and stay below 1")
        if np.any(~(y > 0)) or np.any(~np.isfinite(x)):
            raise DomainError("path must satisfy y > 0 with finite x on [0, 1)")
        if self.kind == STEP and not np.allclose(t, np.arange(t.size) / t.size, rtol=0, atol=1e-14):
            raise DomainError("step paths have knots at i/N")
        for a in (t, x, y):
            a.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "q", float(self.q))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(np.append(self.t, 1.0))

    def index(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        if np.any((s < 0) | (s >= 1)):
            raise DomainError("path arguments must lie in [0, 1)")
        return np.searchsorted(self.t, s, side="right") - 1

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "domain": self.domain,
            "t": self.t.tolist(),
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "q": self.q,
            "meta": self.meta,
            "increments": None if self.increments is None
            else [None if np.isnan(v) else float(v) for v in self.increments],
        }

    @classmethod
    def from_json(cls, data: dict) -> "DrivingPath":
        return cls(
            np.asarray(data["t"], float),
            np.asarray(data["x"], float),
            np.asarray(data["y"], float),
            float(data["q"]),
            data.get("kind", STEP),
            data.get("domain", FORWARD),
            dict(data.get("meta", {})),
            None if data.get("increments") is None
            else np.array([np.nan if v is None else v for v in data["increments"]], float),
        )


@dataclass(frozen=True)
class DiracOperator:
    path: DrivingPath
    u0: np.ndarray
    u1: np.ndarray

    def __post_init__(self):
        u0 = np.asarray(self.u0, float).reshape(2)
        u1 = np.asarray(self.u1, float).reshape(2)
        pairing = u0 @ J @ u1
        if abs(pairing - 1.0) > 1e-12 * max(1.0, np.linalg.norm(u0) * np.linalg.norm(u1)):
            raise DomainError(f"boundary data must satisfy u0^T J u1 = 1 (got {pairing})")
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "u1", u1)

    @classmethod
    def from_path(cls, path: DrivingPath) -> "DiracOperator":
        return cls(path, np.array([1.0, 0.0]), np.array([-path.q, -1.0]))

    def to_json(self) -> dict:
        return {"path": self.path.to_json(), "u0": self.u0.tolist(), "u1": self.u1.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "DiracOperator":
        return cls(DrivingPath.from_json(data["path"]), np.asarray(data["u0"]), np.asarray(data["u1"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class SpectrumWindow:
    """Sorted eigenvalues in [-window, window]; ``zero_index`` points at lambda_0."""

    eigs: np.ndarray
    window: float
    period: float | None = None
    per_period: int | None = None

    @property
    def zero_index(self) -> int:
        return int(np.searchsorted(self.eigs, 0.0, side="right"))

    def labelled(self) -> dict[int, float]:
        z = self.zero_index
        return {i - z: float(v) for i, v in enumerate(self.eigs)}


# ---------------------------------------------------------------- construction


def path_from_gammas(seq: VerblunskySeq) -> DrivingPath:
    """Chain x_{k+1} = x_k + v_k y_k, y_{k+1} = y_k (1 + w_k) embedded at knots k/N."""
    x, y, q = _chain(seq.coefficients[None, :])
    n = seq.n
    meta = {"ensemble": seq.ensemble, **seq.params}
    w, v = wv_from_gamma(seq.coefficients)
    inc = np.concatenate([[np.nan], np.atleast_1d(v) * y[0]])
    return DrivingPath(np.arange(n) / n, x[0], y[0], float(q[0]), STEP, FORWARD, meta, inc)


def _chain(gammas):
    w, v = wv_from_gamma(np.asarray(gammas, complex))
    w = np.atleast_2d(w)
    v = np.atleast_2d(v)
    reps, n = w.shape
    x = np.zeros((reps, n + 1))
    y = np.ones((reps, n + 1))
    for k in range(n):
        x[:, k + 1] = x[:, k] + v[:, k] * y[:, k]
        y[:, k + 1] = y[:, k] * (1.0 + w[:, k])
    if np.any(y[:, 1:n] <= 0):
        raise DomainError("chain left the upper half-plane before the last step")
    if not np.allclose(y[:, n], 0.0, atol=1e-8 * np.max(np.abs(y), axis=1)):
        raise DomainError("the last coefficient must send y to 0")
    return x[:, :n], y[:, :n], x[:, n]


def path_batch_from_gammas(gammas):
    """(x, y, q) arrays for a (reps, N) array of coefficient sequences."""
    return _chain(gammas)


def finite_operator(seq: VerblunskySeq) -> DiracOperator:
    return DiracOperator.from_path(path_from_gammas(seq))


def weight_at(path: DrivingPath, t: float) -> np.ndarray:
    i = path.index(t)
    x, y = path.x[i], path.y[i]
    X = np.array([[1.0, -x], [0.0, y]])
    return X.T @ X / (2.0 * np.linalg.det(X))


def _offsets(op: DiracOperator) -> tuple[np.ndarray, np.ndarray]:
    """u[0] - x_k u[1] for both boundary vectors, summed from increments when possible."""
    p, u0, u1 = op.path, op.u0, op.u1
    e0 = u0[0] - p.x * u0[1]
    e1 = u1[0] - p.x * u1[1]
    inc = p.increments
    if inc is not None:
        if u0[1] != 0 and np.isfinite(inc[0]):
            e0 = -u0[1] * np.cumsum(inc[:-1])
        if u1[1] != 0 and np.isfinite(inc[-1]):
            e1 = u1[1] * np.cumsum(inc[:0:-1])[::-1]
    return e0, e1


def _ac(op: DiracOperator, idx):
    e0, e1 = _offsets(op)
    r = np.sqrt(op.path.y[idx])
    a = np.stack([e0[idx] / r, r * op.u0[1]], axis=-1)
    c = np.stack([e1[idx] / r, r * op.u1[1]], axis=-1)
    return a, c


def resolvent_kernel(op: DiracOperator, s: float, t: float) -> np.ndarray:
    """K(s,t) = (a(s) c(t)^T 1{s<t} + c(s) a(t)^T 1{s>=t}) / 2 with a = Xh u0, c = Xh u1."""
    i = op.path.index(s)
    j = op.path.index(t)
    a_s, c_s = _ac(op, i)
    a_t, c_t = _ac(op, j)
    if s < t:
        return 0.5 * np.outer(a_s, c_t)
    return 0.5 * np.outer(c_s, a_t)


def _diag_trace(op: DiracOperator) -> np.ndarray:
    a, c = _ac(op, np.arange(op.path.t.size))
    return 0.5 * np.sum(a * c, axis=-1)


def integral_trace(op: DiracOperator, quad_points: int | None = None) -> float:
    """Integral of u0^T R u1 over [0, 1).

    Without ``quad_points`` the integral is the exact sum over the constant
    pieces.  With ``quad_points`` a Gauss-Legendre rule of that order is used
    on every piece, evaluating the weight through :func:`weight_at`.
    """
    h = op.path.widths
    if quad_points is None:
        return float(np.sum(h * _diag_trace(op)))
    nodes, weights = np.polynomial.legendre.leggauss(int(quad_points))
    total = 0.0
    for left, width in zip(op.path.t, h):
        for node, wt in zip(nodes, weights):
            s = left + 0.5 * width * (node + 1.0)
            total += 0.5 * width * wt * (op.u0 @ weight_at(op.path, min(s, np.nextafter(1.0, 0))) @ op.u1)
    if not np.isfinite(total):
        raise NumericalFailure("integral trace quadrature diverged")
    return float(total)


# ---------------------------------------------------------------- HS distance


def _refined(op: DiracOperator, knots: np.ndarray):
    idx = op.path.index(knots)
    return _ac(op, idx)


def _hs_sq_common(ops1, ops2, knots):
    h = np.diff(np.append(knots, 1.0))
    a1, c1 = _refined(ops1, knots)
    if ops2 is None:
        a2 = c2 = np.zeros_like(a1)
    else:
        a2, c2 = _refined(ops2, knots)
    # |P1 - P2|_F^2 for P = u v^T outer products, cell (i, j)
    def frob(u1, v1, u2, v2):
        uu11 = u1 @ u1.T
        vv11 = v1 @ v1.T
        uu22 = u2 @ u2.T
        vv22 = v2 @ v2.T
        uu12 = u1 @ u2.T
        vv12 = v1 @ v2.T
        return np.diag(uu11)[:, None] * np.diag(vv11)[None, :] + np.diag(uu22)[:, None] * np.diag(vv22)[None, :] - 2.0 * uu12.diagonal()[:, None] * vv12.diagonal()[None, :]

    upper = frob(a1, c1, a2, c2)  # s < t: a(s) c(t)^T
    lower = frob(c1, a1, c2, a2)  # s >= t: c(s) a(t)^T
    m = knots.size
    iu = np.triu(np.ones((m, m), bool), 1)
    il = np.tril(np.ones((m, m), bool), -1)
    cell = np.outer(h, h)
    total = np.sum(cell[iu] * upper[iu]) + np.sum(cell[il] * lower[il])
    total += np.sum(0.5 * h * h * (np.diag(upper) + np.diag(lower)))
    return 0.25 * total


def hs_distance(op1: DiracOperator, op2: DiracOperator, quad_points: int | None = None, rtol: float = 0.05) -> float:
    """Hilbert-Schmidt distance of the two resolvent kernels.

    Exact on the common refinement of the knot sets.  For sampled diffusion
    paths the value is compared with the one on every other knot and a
    numerical failure is raised if they disagree by more than ``rtol``.
    """
    knots = np.union1d(op1.path.t, op2.path.t)
    val = _hs_sq_common(op1, op2, knots)
    if GRID in (op1.path.kind, op2.path.kind) and knots.size > 8:
        coarse = _hs_sq_common(op1, op2, knots[::2])
        if abs(coarse - val) > rtol * max(val, 1e-300):
            raise NumericalFailure("Hilbert-Schmidt quadrature did not settle under refinement", (val, coarse))
    return float(np.sqrt(max(val, 0.0)))


def hs_norm(op: DiracOperator) -> float:
    return float(np.sqrt(_hs_sq_common(op, None, op.path.t)))


# ---------------------------------------------------------------- transfer matrices


def expm_traceless(G):
    """exp(G) for traceless 2x2 matrices: cosh(s) I + sinh(s)/s G, s^2 = -det G.

    ``G`` has shape (..., 2, 2).  Both coefficient functions are even in s so
    the square-root branch is irrelevant; a series is used when |s| < 1e-4.
    """
    G = np.asarray(G, dtype=complex)
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    s2 = -det
    s = np.sqrt(s2)
    small = np.abs(s) < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        ch = np.where(small, 1 + s2 / 2 + s2 * s2 / 24, np.cosh(s))
        sh = np.where(small, 1 + s2 / 6 + s2 * s2 / 120, np.sinh(s) / np.where(small, 1.0, s))
    eye = np.eye(2)
    return ch[..., None, None] * eye + sh[..., None, None] * G


def _weights(path: DrivingPath) -> np.ndarray:
    x, y = path.x, path.y
    R = np.empty((x.size, 2, 2))
    R[:, 0, 0] = 1.0 / (2 * y)
    R[:, 0, 1] = R[:, 1, 0] = -x / (2 * y)
    R[:, 1, 1] = (x * x + y * y) / (2 * y)
    return R


def transfer_secular(op: DiracOperator, z):
    """Secular function H(1, z)^T J u1 with J H' = z R H and H(0) = u0.

    Evaluated in the coordinates G = Xh H, where every interval acts as the
    rotation exp(-z h J / 2) and consecutive intervals are joined by
    Xh_{k+1} Xh_k^{-1}.  This avoids the large cancelling entries of the
    per-interval exponentials when y is small.  For the operators of finite
    ensembles the result equals [1, -q] H(1, z).
    """
    if op.path.kind != STEP:
        raise RepresentationError("transfer_secular needs a step path; use the sde engines for limits")
    z = np.asarray(z, dtype=complex)
    flat = z.reshape(-1)
    x, y, h = op.path.x, op.path.y, op.path.widths
    inc = op.path.increments
    if inc is None:
        inc = np.concatenate([[np.nan], np.diff(x), [np.nan]])
    u0, u1 = op.u0, op.u1
    e0, e1 = _offsets(op)
    b1 = e0[0] / np.sqrt(y[0])
    g1 = np.full(flat.shape, b1, dtype=complex)
    g2 = np.full(flat.shape, np.sqrt(y[0]) * u0[1], dtype=complex)
    for k in range(x.size):
        c, sn = np.cos(flat * h[k] / 2), np.sin(flat * h[k] / 2)
        g1, g2 = c * g1 + sn * g2, c * g2 - sn * g1
        if k + 1 < x.size:
            r = np.sqrt(y[k] / y[k + 1])
            g1 = r * g1 - inc[k + 1] / np.sqrt(y[k] * y[k + 1]) * g2
            g2 = g2 / r
    c1 = e1[-1] / np.sqrt(y[-1])
    c2 = np.sqrt(y[-1]) * u1[1]
    out = g2 * c1 - g1 * c2
    return out.reshape(z.shape)[()] if z.ndim == 0 else out.reshape(z.shape)


# ---------------------------------------------------------------- Prufer counting


def _angle_diff_nonpos(h0a, h0b, h1a, h1b):
    d = np.arctan2(h0a * h1b - h0b * h1a, h0a * h1a + h0b * h1b)
    return np.where(d > np.pi / 2, d - 2 * np.pi, np.minimum(d, 0.0))


def _prufer_phase(x, y, h, u0, lam):
    """Lifted angle of H(1) for piecewise-constant paths.

    ``x``, ``y`` have shape (R, M); ``lam`` broadcasts to (R, L); ``u0`` is
    (2,) or (R, 2).  Returns the final angle (R, L) and the largest phase
    advance per interval.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    R, M = x.shape
    lam = np.broadcast_to(np.asarray(lam, float), (R,) + np.shape(lam)[-1:]) if np.ndim(lam) else np.full((R, 1), float(lam))
    lam = np.array(lam, float)
    u0 = np.broadcast_to(np.asarray(u0, float), (R, 2))
    h1 = np.repeat(u0[:, :1], lam.shape[1], axis=1).astype(float)
    h2 = np.repeat(u0[:, 1:], lam.shape[1], axis=1).astype(float)
    theta = np.arctan2(h2, h1)
    h = np.asarray(h, float)
    max_adv = 0.0
    for k in range(M):
        r = np.sqrt(y[:, k])[:, None]
        xk = x[:, k][:, None]
        g1 = (h1 - xk * h2) / r
        g2 = r * h2
        c = 0.5 * lam * h[k]
        max_adv = max(max_adv, float(np.max(np.abs(c))))
        cs, sn = np.cos(c), np.sin(c)
        n1 = cs * g1 + sn * g2
        n2 = -sn * g1 + cs * g2
        k1 = r * n1 + xk / r * n2
        k2 = n2 / r
        m = np.floor(c / np.pi)
        sign = np.where(m % 2 == 0, 1.0, -1.0)
        theta = theta - m * np.pi + _angle_diff_nonpos(h1, h2, sign * k1, sign * k2)
        norm = np.hypot(k1, k2)
        h1, h2 = k1 / norm, k2 / norm
    return theta, max_adv


def _count_from_phase(theta0, theta, phi1, lam):
    pos = np.ceil((theta0 - phi1) / np.pi) - np.ceil((theta - phi1) / np.pi)
    neg = np.floor((theta - phi1) / np.pi) - np.floor((theta0 - phi1) / np.pi)
    out = np.where(lam > 0, pos, np.where(lam < 0, neg, 0.0))
    return out.astype(np.int64)


def prufer_counts_batch(x, y, h, u0, u1, lam):
    """Eigenvalue counts in (0, lam] (or [lam, 0)) for many step paths at once."""
    x = np.atleast_2d(x)
    R = x.shape[0]
    lam_arr = np.asarray(lam, float)
    lam2 = np.broadcast_to(lam_arr if lam_arr.ndim == 2 else lam_arr.reshape(1, -1), (R, lam_arr.reshape(-1).size if lam_arr.ndim < 2 else lam_arr.shape[1]))
    theta, _ = _prufer_phase(x, y, h, u0, lam2)
    u0 = np.broadcast_to(np.asarray(u0, float), (R, 2))
    u1 = np.broadcast_to(np.asarray(u1, float), (R, 2))
    theta0 = np.arctan2(u0[:, 1], u0[:, 0])[:, None]
    phi1 = np.arctan2(u1[:, 1], u1[:, 0])[:, None]
    return _count_from_phase(theta0, theta, phi1, lam2)


def prufer_count(op: DiracOperator, lam: float, grid: int | None = None, max_grid: int = 1 << 16) -> int:
    """Number of eigenvalues in (0, lam] for lam > 0, or in [lam, 0) for lam < 0.

    Step paths use the exact propagator of each constant piece.  Sampled
    paths are resampled on ``grid`` uniform cells; the grid is doubled until
    two successive counts agree, and a resolution error is raised if a cell
    still advances the phase by more than pi at the finest grid.
    """
    lam = float(lam)
    if lam == 0:
        return 0
    p = op.path
    if p.kind == STEP:
        c = prufer_counts_batch(p.x[None], p.y[None], p.widths, op.u0, op.u1, [lam])
        return int(c[0, 0])
    cells = int(grid or 256)
    prev = None
    while True:
        t = np.arange(cells) / cells
        idx = p.index(t)
        if abs(lam) / (2 * cells) > np.pi and cells >= max_grid:
            raise ResolutionError("phase advance per cell exceeds pi at the finest grid")
        c = int(prufer_counts_batch(p.x[idx][None], p.y[idx][None], np.full(cells, 1.0 / cells), op.u0, op.u1, [lam])[0, 0])
        if prev is not None and c == prev and abs(lam) / (2 * cells) <= np.pi:
            return c
        if cells >= max_grid:
            raise ResolutionError("Prufer count did not stabilize under grid doubling")
        prev = c
        cells *= 2


# ---------------------------------------------------------------- spectra


def lifted_spectrum(angles: SupportPoints, window: float, scale: int | None = None) -> SpectrumWindow:
    """{N theta_k + 2 pi N j} intersected with [-window, window]."""
    if not window > 0:
        raise DomainError("window must be positive")
    n = int(scale or angles.n)
    period = 2 * np.pi * n
    base = n * np.asarray(angles.angles, float)
    pts = []
    for b in base:
        j0 = int(np.ceil((-window - b) / period))
        j1 = int(np.floor((window - b) / period))
        pts.extend(b + period * np.arange(j0, j1 + 1))
    eigs = np.sort(np.asarray(pts, float))
    if np.any(eigs == 0):
        raise NumericalFailure("an eigenvalue sits exactly at 0")
    return SpectrumWindow(eigs, float(window), period, angles.n)


def secular_from_spectrum(trace: float, eigs: SpectrumWindow, z, tail_cut: float):
    """Truncated product exp(-z t) prod (1 - z/l) exp(z/l) over |l| <= tail_cut.

    Returns ``(value, bound)`` where ``bound`` controls the omitted tail via
    |log((1-w) e^w)| <= |w|^2 for |w| <= 1/2.
    """
    z = np.asarray(z, dtype=complex)
    zmax = float(np.max(np.abs(z))) if z.size else 0.0
    if tail_cut < 10 * zmax:
        raise DomainError(f"tail_cut must be at least 10 max|z| = {10 * zmax}")
    if eigs.window < tail_cut:
        raise DomainError("the spectrum window does not cover [-tail_cut, tail_cut]")
    lam = eigs.eigs[np.abs(eigs.eigs) <= tail_cut]
    w = z[..., None] / lam
    val = np.exp(-z * trace) * np.prod((1 - w) * np.exp(w), axis=-1)
    if eigs.period is not None and eigs.per_period:
        tail = eigs.per_period * (2.0 / tail_cut**2 + 2.0 / (eigs.period * tail_cut))
    else:
        density = lam.size / (2 * tail_cut)
        tail = 2 * density / tail_cut + 2.0 / tail_cut**2
    bound = np.abs(val) * np.expm1(np.abs(z) ** 2 * tail)
    return val, bound


# ---------------------------------------------------------------- transforms


def reverse_operator(op: DiracOperator) -> DiracOperator:
    """Time reversal t -> 1 - t combined with the reflection x -> -x.

    Boundary data become (S u1, S u0) with S = diag(1, -1), i.e. the boundary
    points -q and infinity written as rays.
    """
    p = op.path
    h = p.widths[::-1]
    t = np.concatenate([[0.0], np.cumsum(h)[:-1]])
    if p.kind == STEP:
        t = np.arange(t.size) / t.size
    domain = REVERSED if p.domain == FORWARD else FORWARD
    inc = None if p.increments is None else p.increments[::-1].copy()
    path = DrivingPath(t, -p.x[::-1], p.y[::-1].copy(), -p.q, p.kind, domain, dict(p.meta), inc)
    return DiracOperator(path, S @ op.u1, S @ op.u0)


def _mobius(Q, z):
    return (Q[0, 0] * z + Q[0, 1]) / (Q[1, 0] * z + Q[1, 1])


def _mobius_diff(Q, z1, z2, dz):
    """M(z1) - M(z2) for det Q = 1 given dz = z1 - z2; None marks the point at infinity."""
    c, d = Q[1, 0], Q[1, 1]
    if z1 is None and z2 is None:
        return np.nan
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if z2 is None:
            out = -1.0 / (c * (c * z1 + d)) if c != 0 else np.nan
        elif z1 is None:
            out = 1.0 / (c * (c * z2 + d)) if c != 0 else np.nan
        else:
            out = dz / ((c * z1 + d) * (c * z2 + d))
    # a rotation this close to the identity leaves the image of infinity out of range
    return out if np.isfinite(out) else np.nan


def _rotated_increments(Q, p: DrivingPath, u0, u1):
    inc = p.increments
    z = p.x + 1j * p.y
    p0 = None if u0[1] == 0 or np.isnan(inc[0]) else u0[0] / u0[1]
    p1 = None if u1[1] == 0 or np.isnan(inc[-1]) else u1[0] / u1[1]
    out = np.empty(inc.size)
    out[0] = np.real(_mobius_diff(Q, z[0], p0, inc[0] + 1j * p.y[0]))
    dz = inc[1:-1] + 1j * np.diff(p.y)
    out[1:-1] = np.real(dz / ((Q[1, 0] * z[1:] + Q[1, 1]) * (Q[1, 0] * z[:-1] + Q[1, 1])))
    out[-1] = np.real(_mobius_diff(Q, p1, z[-1], inc[-1] - 1j * p.y[-1]))
    return out


def rotate_operator(op: DiracOperator, angle: float) -> DiracOperator:
    """Conjugate by the planar rotation Q; the path moves by the induced isometry."""
    c, s = np.cos(angle), np.sin(angle)
    Q = np.array([[c, -s], [s, c]])
    p = op.path
    zq = _mobius(Q, p.x + 1j * p.y)
    u0 = Q @ op.u0
    u1 = Q @ op.u1
    u1 = u1 / (u0 @ J @ u1)
    q = u1[0] / u1[1] if u1[1] != 0 else np.inf
    inc = None if p.increments is None else _rotated_increments(Q, p, op.u0, op.u1)
    path = replace(p, x=zq.real, y=zq.imag, q=float(q), increments=inc)
    return DiracOperator(path, u0, u1)


def hyperbolic_rotation(r: float, z):
    """T_r(z) = (r z + 1)/(r - z): rotation about i taking r to infinity."""
    z = np.asarray(z, dtype=complex)
    return (r * z + 1) / (r - z)
