"""Limit objects: driving diffusions, counting SDEs and secular-function engines.

Conventions
-----------
* Natural time ``s`` of the driving diffusions maps to operator time by
  ``t = 1 - exp(-beta s / 4)``; the secular systems run in ``u = (4/beta) log t``.
* Each replicate owns one Philox generator (``RngStream.generators``).  A
  replicate always draws its noise in the same order and on a time grid that
  depends only on the parameters, so bisection passes can regenerate the same
  Brownian path.
* Counting SDEs are integrated with Euler-Maruyama; ``y`` is always taken
  from its closed form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dirac import DrivingPath, GRID, hyperbolic_rotation
from .distributions import (
    DeltaParam,
    RngStream,
    pearson4_abs_quantile,
    sample_pearson4,
    sample_theta,
)
from .errors import DomainError, HorizonError, QualityError, ResolutionError

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

__all__ = [
    "SdeGrid",
    "CountingRecord",
    "SecularSeries",
    "hp_path",
    "hp_endpoints",
    "bess_path",
    "ks_counts",
    "ks_points",
    "alpha_counting",
    "alpha_counts",
    "hard_edge_counting",
    "hard_edge_counts",
    "hard_edge_first_point",
    "hp_secular_sde",
    "hp_taylor",
    "bess_secular_sde",
    "bess_taylor",
    "bess_taylor_from_path",
    "circle_nodes",
    "taylor_from_circle",
    "gap_probability",
    "asymptote_exponent",
    "gap_power",
    "gap_linear_coefficient",
    "hp_secular_batch",
    "rotate_by_limit",
]

TWO_PI = 2.0 * np.pi
BLOCK = 2048


@dataclass(frozen=True)
class SdeGrid:
    """Discretization controls shared by all engines.

    ``ds`` caps the natural-time step of the counting SDEs and paths;
    ``max_increment`` caps the deterministic drift per step.  ``t_max`` is
    the natural-time horizon (automatic when None).  ``t0`` and
    ``per_octave`` drive the geometric grid of the Killip-Stoiciu phase,
    ``du`` and ``u_min`` the secular systems.
    """

    ds: float = 0.0025
    max_increment: float = 0.1
    t_max: float | None = None
    margin: float = 40.0
    t0: float = 1e-4
    per_octave: int = 600
    max_halvings: int = 6
    du: float = 1e-3
    u_min: float | None = None
    tol: float = 1e-6
    lock_eps: float = 1e-3

    def __post_init__(self):
        for name in ("ds", "max_increment", "t0", "du", "tol", "lock_eps", "margin"):
            if not getattr(self, name) > 0:
                raise DomainError(f"grid control {name} must be positive")
        if self.per_octave < 8:
            raise DomainError("per_octave must be at least 8")

    def secular_u_min(self, beta: float, zmax: float) -> float:
        if self.u_min is not None:
            return float(self.u_min)
        zmax = max(float(zmax), 1.0)
        return -(4.0 / beta) * math.log(zmax * beta / (8.0 * self.tol))

    def counting_times(self, rate0: float, decay: float, horizon: float) -> np.ndarray:
        """Step sizes for a drift rate0*exp(-decay*t); each step moves the drift by <= max_increment."""
        dts = []
        t = 0.0
        while t < horizon:
            rate = rate0 * math.exp(-decay * t)
            dt = self.ds if rate <= 0 else min(self.ds, self.max_increment / rate)
            dts.append(dt)
            t += dt
        return np.asarray(dts)

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CountingRecord:
    """Counts N(lambda) per replicate (rows) and lambda (columns).

    ``status`` is 1 for locked values, 2 for values censored at a cap
    (``counts`` then holds the cap, a lower bound) and 0 for undecided.
    """

    lambdas: np.ndarray
    counts: np.ndarray
    status: np.ndarray
    distance: np.ndarray
    budget: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def undecided(self) -> np.ndarray:
        return self.status == 0

    @property
    def undecided_fraction(self) -> float:
        return float(np.mean(self.undecided)) if self.status.size else 0.0

    @property
    def reps(self) -> int:
        return self.counts.shape[0]

    def monotone(self) -> bool:
        order = np.argsort(self.lambdas)
        c = self.counts[:, order]
        lam = self.lambdas[order]
        pos = lam >= 0
        ok = np.all(np.diff(c[:, pos], axis=1) >= 0)
        ok &= np.all(np.diff(c[:, ~pos], axis=1) <= 0)
        return bool(ok)

    def jsonl(self, seed: int | None = None, stream_id: int | None = None) -> list[str]:
        lines = []
        for r in range(self.reps):
            rec = {
                "replicate": r,
                "seed": seed,
                "stream_id": stream_id,
                "lambda": self.lambdas.tolist(),
                "N": self.counts[r].tolist(),
                "status": self.status[r].tolist(),
                "lock_distance": self.distance[r].tolist(),
                "drift_budget": self.budget[r].tolist(),
                **{k: v for k, v in self.meta.items() if isinstance(v, (int, float, str))},
            }
            lines.append(json.dumps(rec, sort_keys=True))
        return lines


@dataclass(frozen=True)
class SecularSeries:
    coefficients: np.ndarray
    provenance: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.size == 0 or abs(c[0] - 1.0) > 1e-9:
            raise DomainError("secular series must start with c_0 = 1")
        if self.provenance.startswith("Bess") and c.size > 1 and np.max(np.abs(c[1::2])) > 1e-8:
            raise DomainError("Bess series must have vanishing odd coefficients")
        object.__setattr__(self, "coefficients", c)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return np.polynomial.polynomial.polyval(z, self.coefficients)

    def to_json(self) -> dict:
        return {
            "provenance": self.provenance,
            "coefficients": [[float(c.real), float(c.imag)] for c in self.coefficients],
            "meta": self.meta,
        }


def _replicate_generators(rng, reps: int) -> list[np.random.Generator]:
    if isinstance(rng, RngStream):
        return rng.generators(reps)
    if isinstance(rng, (list, tuple)):
        if len(rng) != reps:
            raise DomainError(f"expected {reps} generators, got {len(rng)}")
        return list(rng)
    if isinstance(rng, np.random.Generator):
        if reps == 1:
            return [rng]
        seeds = rng.integers(0, 2**63 - 1, size=reps)
        return [np.random.Generator(np.random.Philox(int(s))) for s in seeds]
    return RngStream(0 if rng is None else int(rng)).generators(reps)


def _check_beta(beta):
    beta = float(beta)
    if not beta > 0 or not np.isfinite(beta):
        raise DomainError(f"beta must be positive (got {beta})")
    return beta


def _check_a(a):
    a = float(a)
    if not a > -1:
        raise DomainError(f"a must exceed -1 (got {a})")
    return a


# ---------------------------------------------------------------- driving paths


def _hp_natural(g, d: DeltaParam, ds: float, n: int):
    """Exact y and Euler x on the natural-time grid k*ds, k = 0..n."""
    dB = g.standard_normal((2, n)) * math.sqrt(ds)
    s = ds * np.arange(n + 1)
    logy = np.concatenate([[0.0], np.cumsum(dB[1])]) - (d.re + 0.5) * s
    y = np.exp(logy)
    x = np.concatenate([[0.0], np.cumsum(y[:-1] * (dB[0] + d.im * ds))])
    return s, x, y


def _hp_tail(d: DeltaParam) -> float:
    return _abs_quantile(d.re + 1.0, -2.0 * d.im)


@lru_cache(maxsize=64)
def _abs_quantile(m: float, mu: float) -> float:
    return pearson4_abs_quantile(m, mu, 0.999)


def hp_path(beta, delta, grid: SdeGrid | None = None, rng=None, *, max_extend: int = 8) -> DrivingPath:
    """Hua-Pickrell driving path in operator time with endpoint q = x(T_max).

    The tail satisfies x(inf) - x(T) = y(T) q' with q' an independent copy of
    the endpoint law, so ``y(T) * Q`` (Q the 99.9% quantile of |q'|) is
    reported as the horizon bound.  The horizon is doubled up to
    ``max_extend`` times; a horizon error is raised if the bound is still
    above ``grid.tol``.
    """
    beta = _check_beta(beta)
    d = DeltaParam.of(delta)
    grid = grid or SdeGrid(ds=0.005)
    g = _replicate_generators(rng, 1)[0]
    T = grid.t_max or max(40.0, 20.0 / (d.re + 0.5))
    n = int(math.ceil(T / grid.ds))
    Q = _hp_tail(d)
    s, x, y = _hp_natural(g, d, grid.ds, n)
    for _ in range(max_extend):
        if y[-1] * Q <= grid.tol:
            break
        s2, x2, y2 = _hp_natural(g, d, grid.ds, n)
        s = np.concatenate([s, s[-1] + s2[1:]])
        x = np.concatenate([x, x[-1] + y[-1] * x2[1:]])
        y = np.concatenate([y, y[-1] * y2[1:]])
    bound = float(y[-1] * Q)
    if bound > grid.tol:
        raise HorizonError(f"tail bound {bound:.3g} exceeds tolerance {grid.tol:g}", {"bound": bound})
    t = -np.expm1(-beta * s[:-1] / 4.0)
    # beyond s ~ 150/beta the map to operator time rounds to 1; those pieces have no width
    keep = np.concatenate([[True], np.diff(t) > 0]) & (t < 1.0)
    meta = {"ensemble": "HP", "beta": beta, "delta": [d.re, d.im], "tail_bound": bound, "T_max": float(s[-1])}
    return DrivingPath(t[keep], x[:-1][keep], y[:-1][keep], float(x[-1]), GRID, meta=meta)


def hp_endpoints(beta, delta, reps: int, grid: SdeGrid | None = None, rng=None) -> np.ndarray:
    """Endpoints q of ``reps`` independent Hua-Pickrell paths."""
    out = np.empty(reps)
    for i, g in enumerate(_replicate_generators(rng, reps)):
        out[i] = hp_path(beta, delta, grid, g).q
    return out


def bess_path(beta, a, grid: SdeGrid | None = None, rng=None) -> DrivingPath:
    """Hard-edge path x = 0, y(s) = exp(-(beta/4)(2a+1)s - B(2s)) in operator time."""
    beta = _check_beta(beta)
    a = _check_a(a)
    grid = grid or SdeGrid(ds=0.005)
    g = _replicate_generators(rng, 1)[0]
    T = grid.t_max or 60.0
    n = int(math.ceil(T / grid.ds))
    s = grid.ds * np.arange(n)
    B2 = np.concatenate([[0.0], np.cumsum(g.standard_normal(n - 1) * math.sqrt(2 * grid.ds))])
    y = np.exp(-(beta / 4.0) * (2 * a + 1) * s - B2)
    t = -np.expm1(-beta * s / 4.0)
    keep = np.concatenate([[True], np.diff(t) > 0]) & (t < 1.0)
    meta = {"ensemble": "Bess", "beta": beta, "a": a}
    return DrivingPath(t[keep], np.zeros(keep.sum()), y[keep], 0.0, GRID, meta=meta)


def rotate_by_limit(path: DrivingPath) -> DrivingPath:
    """Apply T_q pointwise; the rotated path starts at i and runs off to infinity."""
    if not np.isfinite(path.q):
        raise DomainError("path has no finite endpoint q to rotate by")
    w = hyperbolic_rotation(path.q, path.x + 1j * path.y)
    meta = dict(path.meta, rotated_by=path.q, endpoint="infinity")
    return DrivingPath(path.t, w.real, w.imag, math.inf, path.kind, path.domain, meta)


# ---------------------------------------------------------------- counting kernels


@njit(cache=True)
def _alpha_block(alpha, lam, status, counts, dist, budget, t, dts, z, beta, dre, dim, eps, cap):
    L = alpha.shape[0]
    nsteps = dts.shape[0]
    for k in range(nsteps):
        dt = dts[k]
        sq = math.sqrt(dt)
        b1 = z[0, k] * sq
        b2 = z[1, k] * sq
        rate = 0.25 * beta * math.exp(-0.25 * beta * t)
        t += dt
        left = math.exp(-0.25 * beta * t)
        active = 0
        for l in range(L):
            if status[l] != 0:
                continue
            a = alpha[l]
            ca = math.cos(a)
            sa = math.sin(a)
            new = a + lam[l] * rate * dt + (ca - 1.0) * (b1 + dim * dt) + sa * (b2 - dre * dt)
            # lattice points are never crossed backwards
            if lam[l] > 0:
                fl = TWO_PI * math.floor(a / TWO_PI)
                if new < fl:
                    new = fl
            elif lam[l] < 0:
                ce = TWO_PI * math.ceil(a / TWO_PI)
                if new > ce:
                    new = ce
            alpha[l] = new
            j = math.floor(new / TWO_PI + 0.5)
            dd = abs(new - TWO_PI * j)
            bud = abs(lam[l]) * left
            dist[l] = dd
            budget[l] = bud
            if cap >= 0 and lam[l] > 0 and math.floor(new / TWO_PI) >= cap:
                status[l] = 2
                counts[l] = cap
            elif dd < eps and bud < eps:
                status[l] = 1
                counts[l] = j if lam[l] > 0 else -j
            else:
                active += 1
        if active == 0:
            return t, k + 1
    return t, nsteps


@njit(cache=True)
def _hard_block(psi, lam, status, counts, dist, budget, t, dts, z, beta, a, literal, eps, cap):
    L = psi.shape[0]
    nsteps = dts.shape[0]
    c_a = 0.5 * beta * (a + 0.5)
    for k in range(nsteps):
        dt = dts[k]
        db = z[0, k] * math.sqrt(dt)
        rate = 0.25 * beta * math.exp(-beta * t / 8.0)
        t += dt
        left = 2.0 * math.exp(-beta * t / 8.0)
        active = 0
        for l in range(L):
            if status[l] != 0:
                continue
            p = psi[l]
            sp = math.sin(0.5 * p)
            new = p + c_a * sp * dt + lam[l] * rate * dt + 2.0 * sp * db
            if literal:
                new += 0.5 * p * dt
            fl = TWO_PI * math.floor(p / TWO_PI)
            if lam[l] > 0 and new < fl:
                new = fl
            psi[l] = new
            j = math.floor(new / TWO_PI + 0.5)
            dd = abs(new - TWO_PI * j)
            bud = lam[l] * left
            dist[l] = dd
            budget[l] = bud
            m = math.floor(new / (2.0 * TWO_PI))
            if cap >= 0 and m >= cap:
                status[l] = 2
                counts[l] = cap
            elif dd < eps and bud < eps:
                status[l] = 1
                counts[l] = m
            else:
                active += 1
        if active == 0:
            return t, k + 1
    return t, nsteps


def _run_counting(kernel, args_fn, lam_rows, init, dts, gens, noise_dim, eps, cap):
    """Drive a block kernel over replicates; ``lam_rows`` is (R, L)."""
    R, L = lam_rows.shape
    counts = np.zeros((R, L), np.int64)
    status = np.zeros((R, L), np.int64)
    dist = np.full((R, L), np.nan)
    budget = np.full((R, L), np.nan)
    nblocks = int(math.ceil(dts.size / BLOCK))
    for r in range(R):
        lam = np.ascontiguousarray(lam_rows[r], dtype=float)
        state = np.full(L, init, float)
        st = status[r]
        st[lam == 0] = 1
        g = gens[r]
        t = 0.0
        for b in range(nblocks):
            z = g.standard_normal((noise_dim, BLOCK))
            if np.all(st != 0):
                break
            seg = dts[b * BLOCK:(b + 1) * BLOCK]
            t, _ = kernel(state, lam, st, counts[r], dist[r], budget[r], t, seg, z, *args_fn(), eps, cap)
        status[r] = st
    return counts, status, dist, budget


def _alpha_horizon(beta, d, lam_max, grid):
    if grid.t_max is not None:
        return grid.t_max
    lock = (4.0 / beta) * math.log(max(lam_max, grid.lock_eps) / grid.lock_eps)
    return max(lock, 0.0) + grid.margin / (d.re + 0.5)


def alpha_counts(beta, delta, lambdas, reps: int, grid: SdeGrid | None = None, rng=None,
                 *, cap: int = -1, lam_rows: np.ndarray | None = None, lam_max: float | None = None) -> CountingRecord:
    """Counting function of HP(beta, delta) from the phase SDE, for many replicates.

    All lambdas of one replicate share the same Brownian path.  ``cap`` stops
    a lambda once its count reaches the cap (used for gap probabilities).
    ``lam_rows`` supplies per-replicate lambda rows (bisection passes); the
    time grid then follows ``lam_max`` so that noise is reproduced exactly.
    """
    beta = _check_beta(beta)
    d = DeltaParam.of(delta)
    grid = grid or SdeGrid()
    lambdas = np.atleast_1d(np.asarray(lambdas, float))
    if lam_rows is None:
        lam_rows = np.tile(lambdas, (reps, 1))
    lm = float(lam_max if lam_max is not None else np.max(np.abs(lam_rows), initial=0.0))
    dts = grid.counting_times(lm * beta / 4.0, beta / 4.0, _alpha_horizon(beta, d, lm, grid))
    gens = _replicate_generators(rng, reps)
    counts, status, dist, budget = _run_counting(
        _alpha_block, lambda: (beta, d.re, d.im), lam_rows, 0.0, dts, gens, 2, grid.lock_eps, cap
    )
    meta = {"engine": "alpha", "beta": beta, "delta_re": d.re, "delta_im": d.im, "T_max": float(dts.sum())}
    return CountingRecord(lambdas if lam_rows.shape[1] == lambdas.size else lam_rows[0], counts, status, dist, budget, meta)


def alpha_counting(beta, delta, lambda_grid, grid: SdeGrid | None = None, rng=None) -> CountingRecord:
    """Single-replicate counting record on a lambda grid."""
    return alpha_counts(beta, delta, lambda_grid, 1, grid, rng)


def _hard_horizon(beta, lam_max, grid):
    if grid.t_max is not None:
        return grid.t_max
    lock = (8.0 / beta) * math.log(max(2.0 * lam_max, grid.lock_eps) / grid.lock_eps)
    return max(lock, 0.0) + 4.0 * grid.margin


def hard_edge_counts(beta, a, lambdas, reps: int, grid: SdeGrid | None = None, rng=None, *,
                     cap: int = -1, lam_rows=None, lam_max=None, literal_linear_term: bool = False) -> CountingRecord:
    """Counting function of Bess(beta, a) on (0, lambda] from the hard-edge phase SDE.

    The default omits a stand-alone ``psi/2 dt`` drift term, which would make
    psi grow exponentially; ``literal_linear_term`` adds it for comparison.
    """
    beta = _check_beta(beta)
    a = _check_a(a)
    grid = grid or SdeGrid()
    lambdas = np.atleast_1d(np.asarray(lambdas, float))
    if lam_rows is None:
        lam_rows = np.tile(lambdas, (reps, 1))
    if np.any(lam_rows < 0):
        raise DomainError("hard-edge counting is defined for lambda >= 0 (the spectrum is symmetric)")
    lm = float(lam_max if lam_max is not None else np.max(lam_rows, initial=0.0))
    dts = grid.counting_times(lm * beta / 4.0, beta / 8.0, _hard_horizon(beta, lm, grid))
    gens = _replicate_generators(rng, reps)
    counts, status, dist, budget = _run_counting(
        _hard_block, lambda: (beta, a, bool(literal_linear_term)), lam_rows, TWO_PI, dts, gens, 1, grid.lock_eps, cap
    )
    meta = {"engine": "hard-edge", "beta": beta, "a": a, "T_max": float(dts.sum())}
    return CountingRecord(lambdas if lam_rows.shape[1] == lambdas.size else lam_rows[0], counts, status, dist, budget, meta)


def hard_edge_counting(beta, a, lambda_grid, grid: SdeGrid | None = None, rng=None, **kw) -> CountingRecord:
    return hard_edge_counts(beta, a, lambda_grid, 1, grid, rng, **kw)


def _first_point(count_fn, reps, hi, rng, passes, width):
    """Per-replicate bisection for the first lambda with count >= 1, on fixed noise."""
    stream = rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng))
    lo_b = np.zeros(reps)
    hi_b = np.full(reps, float(hi))
    rec = count_fn(np.full((reps, 1), float(hi)), hi, stream)
    if np.any(rec.counts[:, 0] < 1):
        raise HorizonError("upper bracket contains no point for some replicate; raise hi")
    bad = rec.undecided[:, 0].copy()
    for _ in range(passes):
        frac = np.arange(1, width + 1) / (width + 1)
        rows = lo_b[:, None] + (hi_b - lo_b)[:, None] * frac[None, :]
        rec = count_fn(rows, hi, stream)
        hit = rec.counts >= 1
        bad |= rec.undecided.any(axis=1)
        first = np.where(hit.any(axis=1), hit.argmax(axis=1), width)
        idx = np.arange(reps)
        new_hi = np.where(first < width, rows[idx, np.minimum(first, width - 1)], hi_b)
        new_lo = np.where(first > 0, rows[idx, np.maximum(first - 1, 0)], lo_b)
        lo_b, hi_b = new_lo, new_hi
    return 0.5 * (lo_b + hi_b), bad


def hard_edge_first_point(beta, a, reps: int, grid: SdeGrid | None = None, rng=None, *,
                          hi: float = 60.0, passes: int = 4, width: int = 15):
    """Smallest positive Bess point per replicate; returns (points, undecided flags)."""
    grid = grid or SdeGrid()

    def fn(rows, lam_max, stream):
        return hard_edge_counts(beta, a, rows[0], rows.shape[0], grid, stream, cap=1, lam_rows=rows, lam_max=lam_max)

    return _first_point(fn, reps, hi, rng, passes, width)


# ---------------------------------------------------------------- Killip-Stoiciu phase


@njit(cache=True)
def _psi_run(psi, lam, tnodes, start, z, beta, dre, dim):
    L = psi.shape[0]
    for k in range(start, tnodes.shape[0] - 1):
        t = tnodes[k]
        dt = tnodes[k + 1] - t
        sq = math.sqrt(dt)
        amp = 2.0 / math.sqrt(beta * t)
        dfac = 4.0 * dt / (beta * t)
        r_ = amp * z[0, k] * sq + dim * dfac
        s_ = amp * z[1, k] * sq - dre * dfac
        for l in range(L):
            p = psi[l]
            psi[l] = p + lam[l] * dt + (math.cos(p) - 1.0) * r_ + math.sin(p) * s_


def _ks_nodes(grid: SdeGrid):
    M = grid.per_octave
    octaves = math.log2(1.0 / grid.t0) + grid.max_halvings
    J = int(math.ceil(octaves * M))
    j = np.arange(J + 1)
    return 2.0 ** ((j - J) / M), J


def _lattice_count(psi, theta):
    pos = np.floor((psi - theta) / TWO_PI) - np.floor(-theta / TWO_PI)
    neg = np.ceil(-theta / TWO_PI) - np.ceil((psi - theta) / TWO_PI)
    return np.where(psi >= 0, pos, neg).astype(np.int64)


def _ks_draw(g, d, J):
    theta = float(np.angle(sample_theta(0.0, d, g)))
    z = g.standard_normal((2, J))
    return theta, z


def _ks_psi(lam, tnodes, start, z, beta, d):
    psi = np.zeros(lam.size)
    _psi_run(psi, np.ascontiguousarray(lam, float), tnodes, start, z, beta, d.re, d.im)
    return psi


def ks_counts(beta, delta, lambdas, reps: int, grid: SdeGrid | None = None, rng=None) -> CountingRecord:
    """Counts #{Xi in [0, lambda]} from the Killip-Stoiciu phase at t = 1.

    The phase starts from 0 at ``t0``; ``t0`` is halved (on the same noise)
    until two successive starts give the same counts.  Replicates that never
    stabilize within ``max_halvings`` are reported as undecided.
    """
    beta = _check_beta(beta)
    d = DeltaParam.of(delta)
    grid = grid or SdeGrid()
    lambdas = np.atleast_1d(np.asarray(lambdas, float))
    tnodes, J = _ks_nodes(grid)
    M = grid.per_octave
    i0 = J - int(round(math.log2(1.0 / grid.t0) * M))
    L = lambdas.size
    counts = np.zeros((reps, L), np.int64)
    status = np.zeros((reps, L), np.int64)
    psis = np.zeros((reps, L))
    used_t0 = np.zeros(reps)
    for r, g in enumerate(_replicate_generators(rng, reps)):
        theta, z = _ks_draw(g, d, J)
        start = i0
        prev = _lattice_count(_ks_psi(lambdas, tnodes, start, z, beta, d), theta)
        ok = False
        for _ in range(grid.max_halvings):
            start -= M
            psi = _ks_psi(lambdas, tnodes, start, z, beta, d)
            cur = _lattice_count(psi, theta)
            if np.array_equal(cur, prev):
                ok = True
                break
            prev = cur
        counts[r] = cur
        psis[r] = psi
        status[r] = 1 if ok else 0
        used_t0[r] = tnodes[start]
    dist = np.abs(psis)
    meta = {"engine": "ks", "beta": beta, "delta_re": d.re, "delta_im": d.im, "t0": grid.t0}
    rec = CountingRecord(lambdas, counts, status, dist, np.zeros_like(dist), meta)
    rec.meta["start_times"] = used_t0.tolist()
    return rec


def ks_points(beta, delta, lambda_grid, grid: SdeGrid | None = None, rng=None, *, tol: float = 1e-8) -> np.ndarray:
    """Points of Xi inside the span of ``lambda_grid`` for one replicate.

    Each grid cell whose count increases is bisected on the fixed noise path
    (the phase at t = 1 is increasing in lambda) until its width is below ``tol``.
    """
    beta = _check_beta(beta)
    d = DeltaParam.of(delta)
    grid = grid or SdeGrid()
    lam = np.sort(np.atleast_1d(np.asarray(lambda_grid, float)))
    tnodes, J = _ks_nodes(grid)
    M = grid.per_octave
    g = _replicate_generators(rng, 1)[0]
    theta, z = _ks_draw(g, d, J)
    start = J - int(round(math.log2(1.0 / grid.t0) * M))
    # startup protocol on the grid itself
    prev = _lattice_count(_ks_psi(lam, tnodes, start, z, beta, d), theta)
    for _ in range(grid.max_halvings):
        start -= M
        cur = _lattice_count(_ks_psi(lam, tnodes, start, z, beta, d), theta)
        if np.array_equal(cur, prev):
            break
        prev = cur
    else:
        raise ResolutionError("Killip-Stoiciu startup did not stabilize")

    def count(v):
        return _lattice_count(_ks_psi(np.atleast_1d(v), tnodes, start, z, beta, d), theta)

    cells = [(lam[i], lam[i + 1], cur[i], cur[i + 1]) for i in range(lam.size - 1) if cur[i + 1] != cur[i]]
    points = []
    while cells:
        mids = np.array([0.5 * (c[0] + c[1]) for c in cells])
        cm = count(mids)
        nxt = []
        for (lo, hi, clo, chi), m, c in zip(cells, mids, cm):
            for piece in ((lo, m, clo, c), (m, hi, c, chi)):
                if piece[3] == piece[2]:
                    continue
                if piece[1] - piece[0] < tol:
                    points.extend([0.5 * (piece[0] + piece[1])] * int(abs(piece[3] - piece[2])))
                else:
                    nxt.append(piece)
        cells = nxt
    return np.sort(np.asarray(points))


# ---------------------------------------------------------------- secular engines


def _u_grid(grid: SdeGrid, beta: float, zmax: float):
    u_min = grid.secular_u_min(beta, zmax)
    n = max(int(math.ceil(-u_min / grid.du)), 1)
    u = np.linspace(u_min, 0.0, n + 1)
    return u, np.diff(u)


def _hp_noise(g, d: DeltaParam, n):
    q = sample_pearson4(d.re + 1.0, -2.0 * d.im, g)
    dB = g.standard_normal((2, n))
    return q, dB


@njit(cache=True)
def _hp_secular_kernel(z, u, du, dB1, dB2, beta, dre, dim):
    n = du.shape[0]
    A = np.ones(z.shape[0], np.complex128)
    b = np.zeros(z.shape[0], np.complex128)
    logY = 0.0
    for k in range(n):
        Y = math.exp(logY)
        c = 0.125 * beta * math.exp(0.25 * beta * u[k])
        h = du[k]
        sq = math.sqrt(h)
        w1 = dB1[k] * sq
        for j in range(z.shape[0]):
            a_old = A[j]
            A[j] = a_old + Y * b[j] * (-w1 + (z[j] * c - dim) * h)
            b[j] = b[j] - z[j] * c * a_old * h / Y
        logY += dB2[k] * sq - (dre + 0.5) * h
    return A, b, math.exp(logY)


def _hp_prepare(beta, delta, zmax, grid, rng):
    beta = _check_beta(beta)
    d = DeltaParam.of(delta)
    grid = grid or SdeGrid()
    u, du = _u_grid(grid, beta, zmax)
    g = _replicate_generators(rng, 1)[0]
    q, dB = _hp_noise(g, d, du.size)
    return beta, d, u, du, q, dB


def hp_secular_sde(beta, delta, z_list, grid: SdeGrid | None = None, rng=None, *, zmax: float | None = None):
    """One sample of the HP secular function at all ``z_list`` on shared noise.

    The second row is written as Y * b with Y = exp(W2 - (Re delta + 1/2) u)
    taken exactly; the coupled system is then integrated by Euler-Maruyama
    from u_min to 0, and [1, -q] H_0 is returned.
    """
    z = np.atleast_1d(np.asarray(z_list, dtype=complex))
    zm = float(zmax if zmax is not None else np.max(np.abs(z), initial=1.0))
    beta, d, u, du, q, dB = _hp_prepare(beta, delta, zm, grid, rng)
    A, b, Y = _hp_secular_kernel(z, u, du, dB[0], dB[1], beta, d.re, d.im)
    return A - q * Y * b


def hp_secular_batch(beta, delta, z_list, reps: int, grid: SdeGrid | None = None, rng=None, *, zmax=None) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z_list, dtype=complex))
    out = np.empty((reps, z.size), complex)
    for i, g in enumerate(_replicate_generators(rng, reps)):
        out[i] = hp_secular_sde(beta, delta, z, grid, g, zmax=zmax)
    return out


@njit(cache=True)
def _hp_taylor_kernel(K, u, du, dB1, dB2, beta, dre, dim):
    n = du.shape[0]
    A = np.zeros(K + 1)
    b = np.zeros(K + 1)
    A[0] = 1.0
    logY = 0.0
    for k in range(n):
        Y = math.exp(logY)
        c = 0.125 * beta * math.exp(0.25 * beta * u[k])
        h = du[k]
        sq = math.sqrt(h)
        w1 = dB1[k] * sq
        for m in range(K, 0, -1):
            a_m = A[m] + Y * b[m] * (-w1 - dim * h) + c * h * Y * b[m - 1]
            b[m] = b[m] - c * h * A[m - 1] / Y
            A[m] = a_m
        logY += dB2[k] * sq - (dre + 0.5) * h
    return A, b, math.exp(logY)


def hp_taylor(beta, delta, K: int, grid: SdeGrid | None = None, rng=None, *, zmax: float = 1.0) -> SecularSeries:
    """Taylor coefficients A^(n)_0 - q B^(n)_0, n <= K, of the same discretized system.

    Uses the same horizon rule and noise order as :func:`hp_secular_sde`, so
    the two agree coefficient by coefficient on a shared replicate.
    """
    K = int(K)
    if not 0 <= K <= 12:
        raise DomainError("K must lie in 0..12")
    beta, d, u, du, q, dB = _hp_prepare(beta, delta, zmax, grid, rng)
    A, b, Y = _hp_taylor_kernel(K, u, du, dB[0], dB[1], beta, d.re, d.im)
    return SecularSeries(A - q * Y * b, "HP-Taylor", {"beta": beta, "delta": [d.re, d.im], "q": q})


def _bess_logY(g, beta, a, u, du):
    W = np.concatenate([[0.0], np.cumsum(g.standard_normal(du.size) * np.sqrt(du))])
    return math.sqrt(2.0) * W - (beta / 4.0) * (2 * a + 1) * (u - u[0])


@njit(cache=True)
def _bess_heun(z, u, du, logY, beta):
    n = du.shape[0]
    A = np.ones(z.shape[0], np.complex128)
    b = np.zeros(z.shape[0], np.complex128)
    for k in range(n):
        h = du[k]
        c0 = 0.125 * beta * math.exp(0.25 * beta * u[k])
        c1 = 0.125 * beta * math.exp(0.25 * beta * u[k + 1])
        Y0 = math.exp(logY[k])
        Y1 = math.exp(logY[k + 1])
        for j in range(z.shape[0]):
            fa0 = z[j] * c0 * Y0 * b[j]
            fb0 = -z[j] * c0 * A[j] / Y0
            ap = A[j] + h * fa0
            bp = b[j] + h * fb0
            fa1 = z[j] * c1 * Y1 * bp
            fb1 = -z[j] * c1 * ap / Y1
            A[j] = A[j] + 0.5 * h * (fa0 + fa1)
            b[j] = b[j] + 0.5 * h * (fb0 + fb1)
    return A


def _bess_prepare(beta, a, zmax, grid, rng):
    beta = _check_beta(beta)
    a = _check_a(a)
    grid = grid or SdeGrid()
    u, du = _u_grid(grid, beta, zmax)
    g = _replicate_generators(rng, 1)[0]
    return beta, a, u, du, _bess_logY(g, beta, a, u, du)


def bess_secular_sde(beta, a, z_list, grid: SdeGrid | None = None, rng=None, *, zmax: float | None = None):
    """One sample of the Bess secular function [1, 0] H_0(z) on shared noise (Heun in u).

    The second row is Y * b with Y = exp(sqrt(2) W - (beta/4)(2a+1) u) exact,
    so the only discretization is of the linear z-coupling.  The scheme maps
    z -> -z to (A, b) -> (A, -b) exactly, so the output is even in z.
    """
    z = np.atleast_1d(np.asarray(z_list, dtype=complex))
    zm = float(zmax if zmax is not None else np.max(np.abs(z), initial=1.0))
    beta, a, u, du, logY = _bess_prepare(beta, a, zm, grid, rng)
    return _bess_heun(z, u, du, logY, beta)


def _iterated_integrals(weight_up, ds, K):
    """r_k = (-1)^k 4^-k I_2k with I_j = cumulative trapezoid of yhat^(+-1) I_{j-1}."""
    n = K // 2
    I = np.ones_like(weight_up)
    r = [1.0]
    for j in range(1, 2 * n + 1):
        f = (weight_up if j % 2 == 0 else 1.0 / weight_up) * I
        I = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * ds)])
        if j % 2 == 0:
            r.append((-1) ** (j // 2) * 4.0 ** (-(j // 2)) * I[-1])
    coeffs = np.zeros(K + 1)
    coeffs[0::2] = r[: K // 2 + 1]
    return coeffs


def bess_taylor(beta, a, K: int, grid: SdeGrid | None = None, rng=None, *, zmax: float = 1.0) -> SecularSeries:
    """Coefficients of z^0..z^K of the Bess secular function on one sampled path.

    Uses the same path (noise order, u-grid) as :func:`bess_secular_sde` with
    the same ``zmax``; the simplex integrals are iterated trapezoid integrals
    in t = exp(beta u / 4), starting at t_min = exp(beta u_min / 4).
    """
    K = int(K)
    if not 0 <= K <= 12:
        raise DomainError("K must lie in 0..12")
    beta, a, u, du, logY = _bess_prepare(beta, a, zmax, grid, rng)
    y = np.exp(logY - logY[-1])
    ds = 2.0 * 0.125 * beta * np.exp(0.25 * beta * u)
    ds = 0.5 * (ds[1:] + ds[:-1]) * du
    coeffs = _iterated_integrals(y, ds, K)
    if not np.all(np.isfinite(coeffs)):
        raise ResolutionError("iterated integrals overflowed near t = 0")
    return SecularSeries(coeffs, "Bess-Taylor", {"beta": beta, "a": a})


def bess_taylor_from_path(t, yhat, K: int) -> SecularSeries:
    """Same recursion for a user supplied yhat sampled at increasing t in [0, 1]."""
    t = np.asarray(t, float)
    yhat = np.asarray(yhat, float)
    if t.ndim != 1 or t.shape != yhat.shape or np.any(np.diff(t) <= 0) or np.any(yhat <= 0):
        raise DomainError("need increasing t with positive yhat of the same shape")
    return SecularSeries(_iterated_integrals(yhat, np.diff(t), int(K)), "Bess-Taylor", {"fixture": True})


def circle_nodes(M: int, radius: float = 1.0) -> np.ndarray:
    return radius * np.exp(2j * np.pi * np.arange(M) / M)


def taylor_from_circle(values, radius: float = 1.0, K: int | None = None) -> np.ndarray:
    """Taylor coefficients from samples at ``circle_nodes(M, radius)`` (discrete Cauchy formula)."""
    values = np.asarray(values, dtype=complex)
    M = values.size
    c = np.fft.fft(values) / M / radius ** np.arange(M)
    return c if K is None else c[: K + 1]


# ---------------------------------------------------------------- gaps


def gap_probability(beta, delta, lam, reps: int, grid: SdeGrid | None = None, rng=None, *, max_undecided: float = 0.01):
    """Monte Carlo P(no point in [0, lambda]) with binomial standard errors.

    ``lam`` may be a scalar or an array; all values share each replicate's
    noise, and a replicate stops for a given lambda as soon as its phase
    passes 2 pi (the crossing cannot be undone).
    """
    lam = np.atleast_1d(np.asarray(lam, float))
    if np.any(lam <= 0):
        raise DomainError("gap probabilities need lambda > 0")
    rec = alpha_counts(beta, delta, lam, reps, grid, rng, cap=1)
    und = rec.undecided
    frac = und.mean(axis=0)
    if np.any(frac > max_undecided):
        raise QualityError(f"undecided fraction {frac.max():.3g} above {max_undecided}")
    n_ok = (~und).sum(axis=0)
    hits = ((rec.counts == 0) & ~und).sum(axis=0)
    p = hits / n_ok
    se = np.sqrt(p * (1 - p) / n_ok)
    if p.size == 1:
        return float(p[0]), float(se[0])
    return p, se


def gap_power(beta, delta) -> float:
    """The power of lambda in the gap asymptotics."""
    beta = _check_beta(beta)
    d = DeltaParam.of(delta)
    dv = d.value
    return float(0.25 * (beta / 2 - 2 / beta - 3) - d.re + (2 / beta) * (dv + dv * dv).real)


def gap_linear_coefficient(beta, delta) -> float:
    return float(_check_beta(beta) / 8 - 0.25 + 0.5 * DeltaParam.of(delta).im)


def asymptote_exponent(beta, delta, lam):
    """-(beta/64) lam^2 + (beta/8 - 1/4 + Im delta/2) lam + gamma log lam."""
    lam = np.asarray(lam, float)
    return -(beta / 64) * lam**2 + gap_linear_coefficient(beta, delta) * lam + gap_power(beta, delta) * np.log(lam)
