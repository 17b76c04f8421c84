"""Statistical test kit and the prebuilt experiments behind the acceptance suites.

Every experiment takes a ``seed`` and derives its random streams as
``RngStream(seed, stream_id)`` with fixed stream ids, so each report can be
reproduced bit for bit.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, stats

from .dirac import (
    DiracOperator,
    finite_operator,
    hs_distance,
    integral_trace,
    lifted_spectrum,
    path_batch_from_gammas,
    prufer_counts_batch,
    reverse_operator,
    rotate_operator,
    transfer_secular,
)
from .distributions import (
    DeltaParam,
    RngStream,
    beta_prime_moment,
    beta_tilde_mean,
    beta_tilde_variance,
    pearson4_cdf,
    pearson4_fourth_moment,
    pearson4_mean,
    pearson4_second_moment,
    sample_beta_prime,
    sample_beta_tilde,
    sample_pearson4,
    sample_theta_wz,
    theta_angle_cdf,
    v_moments,
    w_moments,
)
from .errors import DomainError, QualityError
from .opuc import (
    VerblunskySeq,
    cj_verblunsky,
    cj_verblunsky_batch,
    gamma_from_alpha,
    ro_verblunsky_batch,
    scaled_char_poly,
    scaled_char_poly_batch,
    support_points,
    szego_eval,
)
from . import sde

__all__ = [
    "TestReport",
    "ks_two_sample",
    "ks_one_sample",
    "ecdf_distance",
    "within_se",
    "gram_schmidt_monic",
    "random_measure",
    "verblunsky_from_measure",
    "moment_suite",
    "finite_oracle_suite",
    "n1_law_suite",
    "endpoint_law",
    "characterization_agreement",
    "convergence_experiment",
    "hard_edge_crosscheck",
    "secular_convergence",
    "bess_structure",
    "clt_slope",
    "clt_suite",
    "sine_reduction",
    "gap_asymptote_fit",
    "hoffman_wielandt_check",
    "reports_to_json",
    "reports_to_csv",
]


@dataclass
class TestReport:
    name: str
    statistic: float
    passed: bool
    threshold: float
    pvalue: float | None = None
    margin: float | None = None
    reps: int | None = None
    seed: int | None = None
    details: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting the class

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        p = "" if self.pvalue is None else f" p={self.pvalue:.4g}"
        return f"[{tag}] {self.name}: statistic={self.statistic:.6g}{p} threshold={self.threshold:g}"

    def to_json(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def reports_to_json(reports: list[TestReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True)


def reports_to_csv(reports: list[TestReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "passed", "statistic", "pvalue", "margin", "threshold", "reps", "seed"])
    for r in reports:
        w.writerow([r.name, int(r.passed), repr(float(r.statistic)), "" if r.pvalue is None else repr(float(r.pvalue)),
                    "" if r.margin is None else repr(float(r.margin)), r.threshold, r.reps, r.seed])
    return buf.getvalue()


# ---------------------------------------------------------------- primitives


def _is_integer_valued(x: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(x)) and np.all(x == np.round(x)))


def ks_two_sample(a, b, *, name: str = "ks_two_sample", threshold: float = 0.01, jitter: bool | None = None,
                  rng=None, seed: int | None = None) -> TestReport:
    """Two-sample KS test with asymptotic p-value.

    The reported statistic is the exact ECDF distance of the raw samples.  For
    the p-value, integer data (or ``jitter=True``) get independent U(0, 1)
    jitter so that ties are broken at random and the null stays continuous.
    """
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    if a.size == 0 or b.size == 0:
        raise DomainError("both samples must be non-empty")
    if jitter is None:
        jitter = _is_integer_valued(a) and _is_integer_valued(b)
    raw = ecdf_distance(a, b)
    if jitter:
        g = (rng if isinstance(rng, np.random.Generator) else RngStream(0 if seed is None else seed, 9_999).generator())
        a = a + g.random(a.size)
        b = b + g.random(b.size)
    res = stats.ks_2samp(a, b, method="asymp")
    return TestReport(name, raw, bool(res.pvalue > threshold), threshold, float(res.pvalue),
                      reps=int(min(a.size, b.size)), seed=seed,
                      details={"jitter": bool(jitter), "jittered_statistic": float(res.statistic),
                               "n_a": a.size, "n_b": b.size})


def ecdf_distance(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| over the pooled sample (exact for discrete data)."""
    a = np.sort(np.asarray(a, float).ravel())
    b = np.sort(np.asarray(b, float).ravel())
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_one_sample(x, cdf, *, name: str, threshold: float = 0.01, seed: int | None = None) -> TestReport:
    x = np.asarray(x, float).ravel()
    if x.size == 0:
        raise DomainError("sample must be non-empty")
    res = stats.kstest(x, cdf, method="asymp")
    return TestReport(name, float(res.statistic), bool(res.pvalue > threshold), threshold, float(res.pvalue),
                      reps=x.size, seed=seed)


def within_se(name: str, sample, target: float, *, k: float = 4.0, seed=None) -> TestReport:
    """Monte Carlo mean of ``sample`` within k standard errors of ``target``."""
    sample = np.asarray(sample, float)
    mean = float(sample.mean())
    se = float(sample.std(ddof=1) / math.sqrt(sample.size))
    z = abs(mean - target) / se if se > 0 else (0.0 if mean == target else math.inf)
    return TestReport(name, z, bool(z < k), k, margin=k - z, reps=sample.size, seed=seed,
                      details={"mean": mean, "target": target, "se": se})


# ---------------------------------------------------------------- Gram-Schmidt oracle


def random_measure(n: int, beta: float, rng: np.random.Generator, min_gap: float = 0.05):
    """n distinct angles (uniform, separated by min_gap) with Dirichlet(beta/2) weights."""
    while True:
        ang = np.sort(rng.uniform(-np.pi, np.pi, n))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        if np.all(gaps > min_gap) and np.all(np.abs(ang) > min_gap):
            break
    w = rng.standard_gamma(beta / 2.0, n)
    return ang, w / w.sum()


def gram_schmidt_monic(angles, weights, kmax: int) -> list[np.ndarray]:
    """Monic orthogonal polynomials Phi_0..Phi_kmax of sum_j w_j delta_{exp(i angles_j)}.

    Inner products are plain weighted sums over the support; polynomials are
    returned as coefficient arrays in increasing degree.
    """
    pts = np.exp(1j * np.asarray(angles, float))
    w = np.asarray(weights, float)
    if kmax > pts.size:
        raise DomainError("at most n monic orthogonal polynomials exist for an n-point measure")
    basis: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for k in range(kmax + 1):
        coef = np.zeros(k + 1, complex)
        coef[k] = 1.0
        v = pts**k
        for _ in range(2):  # re-orthogonalize once
            for cj, vj in zip(basis, vals):
                denom = np.sum(w * np.abs(vj) ** 2)
                proj = np.sum(w * v * np.conj(vj)) / denom
                coef[: cj.size] -= proj * cj
                v = v - proj * vj
        basis.append(coef)
        vals.append(v)
    return basis


def verblunsky_from_measure(angles, weights) -> VerblunskySeq:
    """alpha_k = -conj(Phi_{k+1}(0)) from Gram-Schmidt, converted to modified coefficients."""
    n = len(angles)
    phis = gram_schmidt_monic(angles, weights, n)
    alpha = np.array([-np.conj(phis[k + 1][0]) for k in range(n)])
    alpha[-1] /= abs(alpha[-1])
    return VerblunskySeq(gamma_from_alpha(alpha))


# ---------------------------------------------------------------- suites


def moment_suite(reps: int = 100_000, seed: int = 1) -> list[TestReport]:
    """Closed-form moments against Monte Carlo at 4 standard errors."""
    out = []
    s = lambda i: RngStream(seed, i)
    y = sample_beta_prime(3.0, 5.0, s(1), reps)
    out.append(within_se("beta_prime(3,5) E[Y]", y, beta_prime_moment(3, 5, 1), seed=seed))
    out.append(within_se("beta_prime(3,5) E[Y^2]", y**2, beta_prime_moment(3, 5, 2), seed=seed))
    out.append(within_se("beta_prime(3,5) E[Y^-1]", 1 / y, beta_prime_moment(3, 5, -1), seed=seed))
    x = sample_beta_tilde(2.0, 1.0, s(2), reps)
    out.append(within_se("beta_tilde(2,1) mean", x, beta_tilde_mean(2, 1), seed=seed))
    m2 = beta_tilde_variance(2, 1) + beta_tilde_mean(2, 1) ** 2
    out.append(within_se("beta_tilde(2,1) second moment", x**2, m2, seed=seed))
    x = sample_beta_tilde(0.7, 2.5, s(3), reps)
    out.append(within_se("beta_tilde(0.7,2.5) mean", x, beta_tilde_mean(0.7, 2.5), seed=seed))
    z = sample_pearson4(3.0, -1.0, s(4), reps)
    out.append(within_se("pearson4(3,-1) mean", z, pearson4_mean(3, -1), seed=seed))
    out.append(within_se("pearson4(3,-1) second moment", z**2, pearson4_second_moment(3, -1), seed=seed))
    z = sample_pearson4(5.0, 1.5, s(5), reps)
    out.append(within_se("pearson4(5,1.5) fourth moment", z**4, pearson4_fourth_moment(5, 1.5), seed=seed))
    beta, n, k = 2.0, 10, 3
    a = beta * (n - k - 1)
    delta = DeltaParam(0.7, 0.3)
    w, zz = sample_theta_wz(a, delta, s(6), reps)
    v = zz * (2 + w)
    ew, ew2 = w_moments(a, delta)
    ev, ev2 = v_moments(a, delta)
    out.append(within_se("theta w mean", w, ew, seed=seed))
    out.append(within_se("theta w second moment", w**2, ew2, seed=seed))
    out.append(within_se("theta v mean", v, ev, seed=seed))
    out.append(within_se("theta v second moment", v**2, ev2, seed=seed))
    r = float(np.corrcoef(w, zz)[0, 1])
    zc = abs(r) * math.sqrt(reps)
    out.append(TestReport("theta w vs v/(2+w) correlation", zc, bool(zc < 4), 4.0, reps=reps, seed=seed,
                          details={"corr": r}))
    return out


def _grid25(radius: float = 5.0) -> np.ndarray:
    side = np.linspace(-radius / math.sqrt(2), radius / math.sqrt(2), 5)
    return (side[:, None] + 1j * side[None, :]).ravel()


def finite_oracle_suite(seed: int = 1, count: int = 20, tol: float = 1e-8) -> list[TestReport]:
    """Deterministic dual-oracle equalities on small finite operators."""
    g = RngStream(seed, 11).generator()
    zgrid = _grid25()
    worst_secular = worst_rev = worst_rot = worst_trace = 0.0
    for i in range(count):
        n = int(g.integers(1, 17))
        beta = float(g.uniform(0.5, 4.0))
        delta = complex(g.uniform(-0.3, 1.5), g.uniform(-1.5, 1.5))
        seq = cj_verblunsky(n, beta, delta, g)
        op = finite_operator(seq)
        ts = transfer_secular(op, zgrid)
        worst_secular = max(worst_secular, float(np.max(np.abs(ts - scaled_char_poly(seq, zgrid)))))
        zs = np.array([1, -1, 1j, -1j, 2 + 3j])
        ref = transfer_secular(op, zs)
        scale = np.maximum(1.0, np.abs(ref))
        rev = reverse_operator(op)
        worst_rev = max(worst_rev, float(np.max(np.abs(transfer_secular(rev, zs) - ref) / scale)))
        rot = rotate_operator(op, float(g.uniform(-np.pi, np.pi)))
        worst_rot = max(worst_rot, float(np.max(np.abs(transfer_secular(rot, zs) - ref) / scale)))
        tr = integral_trace(op)
        worst_trace = max(worst_trace, abs(integral_trace(rev) - tr), abs(integral_trace(rot) - tr))
    out = [
        TestReport("transfer_secular vs scaled_char_poly", worst_secular, worst_secular < tol, tol, seed=seed, reps=count),
        TestReport("reversal secular invariance", worst_rev, worst_rev < tol, tol, seed=seed, reps=count),
        TestReport("rotation secular invariance", worst_rot, worst_rot < tol, tol, seed=seed, reps=count),
        TestReport("reversal/rotation trace invariance", worst_trace, worst_trace < tol, tol, seed=seed, reps=count),
    ]
    worst_gs = worst_sp = 0.0
    for i in range(count):
        n = int(g.integers(1, 5))
        ang, w = random_measure(n, float(g.uniform(0.5, 4.0)), g)
        phis = gram_schmidt_monic(ang, w, n)
        seq = verblunsky_from_measure(ang, w)
        z = np.array([0.3 + 0.2j, -1.1, 0.7j, 1.5 - 0.5j])
        for k in range(n + 1):
            phi_k, _ = szego_eval(seq, z, k)
            worst_gs = max(worst_gs, float(np.max(np.abs(phi_k - np.polynomial.polynomial.polyval(z, phis[k])))))
        sp = support_points(seq)
        worst_sp = max(worst_sp, float(np.max(np.abs(np.sort(sp.angles) - np.sort(ang)))))
    out.append(TestReport("Gram-Schmidt vs Szego recursion (n<=4)", worst_gs, worst_gs < tol, tol, seed=seed, reps=count))
    out.append(TestReport("support recovered from Gram-Schmidt coefficients", worst_sp, worst_sp < tol, tol, seed=seed, reps=count))
    return out


def n1_law_suite(reps: int = 10_000, seed: int = 1, cases=((2.0, 0.0), (2.0, 0.5), (4.0, 0.5 + 1j))) -> list[TestReport]:
    """Eigenangle of the n = 1 ensemble against the Theta(1, delta) angle law."""
    out = []
    for i, (beta, delta) in enumerate(cases):
        gam = cj_verblunsky_batch(1, beta, delta, RngStream(seed, 20 + i), reps)[:, 0]
        angles = np.array([support_points(VerblunskySeq([c])).angles[0] for c in gam])
        out.append(ks_one_sample(angles, lambda t, d=delta: theta_angle_cdf(t, d),
                                 name=f"n=1 angle law beta={beta} delta={delta}", seed=seed))
    return out


def endpoint_law(beta: float = 2.0, delta=0.5 - 0.75j, reps: int = 10_000, seed: int = 1,
                 grid: sde.SdeGrid | None = None) -> TestReport:
    d = DeltaParam.of(delta)
    q = sde.hp_endpoints(beta, d, reps, grid or sde.SdeGrid(ds=0.005), RngStream(seed, 30))
    m, mu = d.re + 1.0, -2.0 * d.im
    rep = ks_one_sample(q, lambda x: pearson4_cdf(x, m, mu), name=f"HP endpoint law delta={d.value}", seed=seed)
    rep.details.update({"m": m, "mu": mu})
    return rep


def _decided(rec: sde.CountingRecord, col: int = 0) -> np.ndarray:
    keep = rec.status[:, col] == 1
    return rec.counts[keep, col]


def characterization_agreement(beta: float = 2.0, delta=0.5, lam: float = 6 * math.pi, reps: int = 2000,
                               seed: int = 1, grid: sde.SdeGrid | None = None) -> TestReport:
    """Killip-Stoiciu counts against phase-SDE counts at one lambda."""
    grid = grid or sde.SdeGrid()
    a = sde.ks_counts(beta, delta, [lam], reps, grid, RngStream(seed, 40))
    b = sde.alpha_counts(beta, delta, [lam], reps, grid, RngStream(seed, 41))
    rep = ks_two_sample(_decided(a), _decided(b), name=f"KS-phase vs alpha counts at lambda={lam:.4g}", seed=seed)
    rep.details.update({"mean_ks": float(_decided(a).mean()), "mean_alpha": float(_decided(b).mean()),
                        "undecided": [a.undecided_fraction, b.undecided_fraction]})
    return rep


def _cj_counts(n, beta, delta, lam, reps, stream):
    gam = cj_verblunsky_batch(n, beta, delta, stream, reps)
    x, y, q = path_batch_from_gammas(gam)
    u1 = np.stack([-q, -np.ones(reps)], axis=1)
    return prufer_counts_batch(x, y, np.full(n, 1.0 / n), np.array([1.0, 0.0]), u1, [lam])[:, 0]


def convergence_experiment(beta: float = 2.0, delta=0.5, n_list=(50, 200, 800), lam: float = 6 * math.pi,
                           reps: int = 2000, seed: int = 1, grid: sde.SdeGrid | None = None) -> list[TestReport]:
    """KS distance between n-scaled CJ counts in [0, lam] and HP counts, per n."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise DomainError("n_list must be increasing")
    hp = sde.alpha_counts(beta, delta, [lam], reps, grid or sde.SdeGrid(), RngStream(seed, 50))
    target = _decided(hp)
    out = []
    for i, n in enumerate(n_list):
        c = _cj_counts(n, beta, delta, lam, reps, RngStream(seed, 51 + i))
        rep = ks_two_sample(c, target, name=f"CJ n={n} vs HP counts", seed=seed)
        rep.details.update({"n": n, "mean_cj": float(c.mean()), "mean_hp": float(target.mean())})
        out.append(rep)
    d = [r.statistic for r in out]
    mono = all(b <= a for a, b in zip(d, d[1:]))
    out.append(TestReport("KS distance non-increasing in n", float(d[-1] - d[0]), mono, 0.0, reps=reps, seed=seed,
                          details={"distances": d, "n_list": n_list}))
    return out


def _ro_first_points(n, beta, a, b, reps, stream, hi=60.0, passes=4, width=15):
    gam = ro_verblunsky_batch(n, beta, a, b, stream, reps)
    x, y, q = path_batch_from_gammas(gam)
    N = 2 * n
    h = np.full(N, 1.0 / N)
    u0 = np.array([1.0, 0.0])
    u1 = np.stack([-q, -np.ones(reps)], axis=1)
    if np.any(prufer_counts_batch(x, y, h, u0, u1, [hi])[:, 0] < 1):
        raise DomainError("upper bracket contains no eigenvalue for some replicate")
    lo = np.zeros(reps)
    up = np.full(reps, hi)
    for _ in range(passes + 2):
        rows = lo[:, None] + (up - lo)[:, None] * (np.arange(1, width + 1) / (width + 1))[None, :]
        hit = prufer_counts_batch(x, y, h, u0, u1, rows) >= 1
        first = np.where(hit.any(axis=1), hit.argmax(axis=1), width)
        idx = np.arange(reps)
        new_up = np.where(first < width, rows[idx, np.minimum(first, width - 1)], up)
        new_lo = np.where(first > 0, rows[idx, np.maximum(first - 1, 0)], lo)
        lo, up = new_lo, new_up
    return 0.5 * (lo + up)


def hard_edge_crosscheck(beta: float = 2.0, a: float = 0.0, reps: int = 2000, seed: int = 1,
                         n_list=(50, 200, 800), b: float = 0.0, grid: sde.SdeGrid | None = None,
                         sym_lambda: float = 10.0) -> list[TestReport]:
    """Smallest positive Bess point: hard-edge SDE bisection against large-n RO operators."""
    pts, bad = sde.hard_edge_first_point(beta, a, reps, grid, RngStream(seed, 60))
    bess = (pts[~bad] ** 2) / 16.0
    hist, edges = np.histogram(bess, bins=20, range=(0.0, float(np.quantile(bess, 0.95))))
    out = []
    for i, n in enumerate(n_list):
        ro = _ro_first_points(n, beta, a, b, reps, RngStream(seed, 61 + i)) ** 2 / 16.0
        rep = ks_two_sample(ro, bess, name=f"RO n={n} vs hard-edge SDE, lambda_0^2/16", seed=seed)
        rep.details.update({"n": n, "median_ro": float(np.median(ro)), "median_sde": float(np.median(bess)),
                            "undecided_sde": int(bad.sum())})
        out.append(rep)
        last_ro = ro
    d = [r.statistic for r in out]
    out.append(TestReport("hard-edge KS distance non-increasing in n", float(d[-1] - d[0]),
                          all(y <= x for x, y in zip(d, d[1:])), 0.0, reps=reps, seed=seed,
                          details={"distances": d, "n_list": list(n_list), "histogram": hist, "bin_edges": edges, "sde_sample": bess,
                                   "ro_sample": last_ro}))
    # symmetry of the finite spectrum about 0
    n = n_list[-1]
    gam = ro_verblunsky_batch(n, beta, a, b, RngStream(seed, 69), reps)
    x, y, q = path_batch_from_gammas(gam)
    u1 = np.stack([-q, -np.ones(reps)], axis=1)
    c = prufer_counts_batch(x, y, np.full(2 * n, 1 / (2 * n)), np.array([1.0, 0.0]), u1, [sym_lambda, -sym_lambda])
    out.append(TestReport("RO counts in [0,L] and [-L,0] coincide", float(np.max(np.abs(c[:, 0] - c[:, 1]))),
                          bool(np.all(c[:, 0] == c[:, 1])), 0.0, reps=reps, seed=seed))
    return out


def _snap_rounding(v: np.ndarray, scale: np.ndarray, rtol: float = 1e-10) -> tuple[np.ndarray, int]:
    small = np.abs(v) <= rtol * np.maximum(1.0, scale)
    return np.where(small, 0.0, v), int(small.sum())


def secular_convergence(beta: float = 2.0, delta=0.5, z0: complex = 2.0, n: int = 400, reps: int = 2000,
                        seed: int = 1, grid: sde.SdeGrid | None = None, extra_z=(2.0 + 1.0j,)) -> list[TestReport]:
    """Real and imaginary parts of the scaled characteristic polynomial against the SDE secular function.

    At real z0 and real delta both sides are real; imaginary parts at rounding
    level are snapped to 0 so the test compares the point masses, not noise.
    ``extra_z`` adds the same comparison at further (complex) points.
    """
    out = []
    for j, z in enumerate([z0, *extra_z]):
        gam = cj_verblunsky_batch(n, beta, delta, RngStream(seed, 70 + 2 * j), reps)
        fin = scaled_char_poly_batch(gam, z)
        lim = sde.hp_secular_batch(beta, delta, [z], reps, grid, RngStream(seed, 71 + 2 * j))[:, 0]
        for part, f in (("real", np.real), ("imag", np.imag)):
            a, na = _snap_rounding(f(fin), np.abs(fin))
            b, nb = _snap_rounding(f(lim), np.abs(lim))
            rep = ks_two_sample(a, b, name=f"secular at z={z}: {part} part, n={n} vs SDE", seed=seed, jitter=False)
            rep.details.update({"z": z, "snapped": [na, nb]})
            out.append(rep)
    return out


def bess_structure(beta: float = 2.0, a: float = 0.5, seed: int = 1, paths: int = 5, K: int = 12,
                   tol: float = 1e-8, fixture_tol: float = 1e-6, grid: sde.SdeGrid | None = None) -> list[TestReport]:
    """Odd coefficients, pathwise evenness and the yhat = 1 fixture."""
    zs = np.array([0.5, 1.0 + 1.0j, 2.0, 3.0j, 4.0])
    odd = even = 0.0
    for i in range(paths):
        stream = RngStream(seed, 80 + i)
        vals = sde.bess_secular_sde(beta, a, np.concatenate([zs, -zs]), grid, stream, zmax=4.0)
        even = max(even, float(np.max(np.abs(vals[: zs.size] - vals[zs.size:]))))
        circ = sde.bess_secular_sde(beta, a, sde.circle_nodes(64), grid, stream, zmax=4.0)
        c = sde.taylor_from_circle(circ, 1.0, K)
        odd = max(odd, float(np.max(np.abs(c[1::2]))))
    t = np.linspace(0.0, 1.0, 20_001)
    fx = sde.bess_taylor_from_path(t, np.ones_like(t), K).coefficients.real
    exact = np.zeros(K + 1)
    exact[0::2] = [(-1) ** k * 4.0 ** (-k) / math.factorial(2 * k) for k in range(K // 2 + 1)]
    fix = float(np.max(np.abs(fx - exact)))
    return [
        TestReport("Bess odd Taylor coefficients", odd, odd < tol, tol, seed=seed, reps=paths),
        TestReport("Bess secular pathwise evenness", even, even < tol, tol, seed=seed, reps=paths),
        TestReport("yhat = 1 fixture reproduces cos(z/2)", fix, fix < fixture_tol, fixture_tol, seed=seed),
    ]


def _clt_counts(beta, delta, lam, reps, seed, grid, stream):
    rec = sde.alpha_counts(beta, delta, lam, reps, grid, RngStream(seed, stream))
    ok = ~rec.undecided.any(axis=1)
    if ok.mean() < 0.99:
        raise QualityError(f"{1 - ok.mean():.3g} of replicates undecided")
    return rec, rec.counts[ok].astype(float)


def clt_slope(beta: float = 2.0, delta=0.0, lambda_list=None, reps: int = 2000, seed: int = 1,
              rtol: float = 0.3, grid: sde.SdeGrid | None = None) -> TestReport:
    """Slope of Var N(lambda) against log lambda versus 2/(beta pi^2)."""
    return clt_suite(beta, delta, lambda_list, reps, seed, rtol, grid, transition=False)[0]


def clt_suite(beta: float = 2.0, delta=0.0, lambda_list=None, reps: int = 2000, seed: int = 1,
              rtol: float = 0.3, grid: sde.SdeGrid | None = None, *, transition: bool = True,
              shift: float = 400.0, window: float = 4 * math.pi, shift_delta=0.5) -> list[TestReport]:
    """Variance slope, centering and (optionally) the local Sine limit far from the origin.

    The transition check compares counts of the shifted process in
    [shift, shift + window] (at ``shift_delta``) with counts of the delta = 0
    process in [0, window]; the latter is translation invariant.
    """
    lam = np.asarray(lambda_list if lambda_list is not None else np.geomspace(50, 800, 6), float)
    if lam.min() <= 0 or lam.max() / lam.min() < 10:
        raise DomainError("lambda_list must be positive and span at least one decade")
    rec, c = _clt_counts(beta, delta, lam, reps, seed, grid, 90)
    var = c.var(axis=0, ddof=1)
    slope, intercept = np.polyfit(np.log(lam), var, 1)
    target = 2.0 / (beta * math.pi**2)
    rel = abs(slope - target) / target
    out = [TestReport("CLT variance slope", float(slope), bool(rel < rtol), rtol, margin=rtol - rel, reps=c.shape[0],
                      seed=seed, details={"target": target, "relative_error": rel, "lambdas": lam, "variances": var,
                                          "intercept": float(intercept), "monotone": rec.monotone()})]
    centred = c.mean(axis=0) - lam / (2 * math.pi)
    zc = np.abs(centred) / np.sqrt(var / c.shape[0])
    out.append(TestReport("CLT centering: mean N(lambda) - lambda/(2 pi) without drift", float(zc.max()),
                          bool(zc.max() < 4.0), 4.0, reps=c.shape[0], seed=seed,
                          details={"centred_means": centred, "z": zc, "lambdas": lam}))
    if transition:
        _, far = _clt_counts(beta, shift_delta, np.array([shift, shift + window]), reps, seed, grid, 91)
        _, near = _clt_counts(beta, 0.0, np.array([window]), reps, seed, grid, 92)
        rep = ks_two_sample(far[:, 1] - far[:, 0], near[:, 0],
                            name=f"shifted counts near lambda={shift:g} vs delta=0 counts", seed=seed)
        rep.details.update({"window": window, "shift_delta": shift_delta})
        out.append(rep)
    return out


def sine_reduction(beta: float = 2.0, lam: float = 6 * math.pi, reps: int = 2000, seed: int = 1,
                   grid: sde.SdeGrid | None = None) -> TestReport:
    """delta = 0 counts against an independent Sine_beta engine (the KS phase at delta = 0)."""
    a = sde.alpha_counts(beta, 0.0, [lam], reps, grid, RngStream(seed, 95))
    b = sde.ks_counts(beta, 0.0, [lam], reps, grid, RngStream(seed, 96))
    rep = ks_two_sample(_decided(a), _decided(b), name="delta=0 counts vs Sine_beta phase counts", seed=seed)
    rep.details.update({"mean": float(_decided(a).mean()), "lambda_over_2pi": lam / (2 * math.pi)})
    return rep


def _gap_fit(lam, p, se, reps, gamma_power, fix_c=None):
    if np.any(p * reps < 10):
        raise DomainError("some gap estimate has fewer than 10 successes; shrink the lambda range")
    ylog = np.log(p) - gamma_power * np.log(lam)
    sig = se / p
    if fix_c is None:
        X = np.stack([np.ones_like(lam), lam, lam**2], axis=1)
    else:
        ylog = ylog - fix_c * lam**2
        X = np.stack([np.ones_like(lam), lam], axis=1)
    W = 1.0 / sig
    coef, *_ = np.linalg.lstsq(X * W[:, None], ylog * W, rcond=None)
    return coef


def gap_asymptote_fit(beta: float = 2.0, delta=0.0, lambda_list=None, reps: int = 100_000, seed: int = 1,
                      rtol: float = 0.2, sign_lambdas=None, sign_reps: int | None = None,
                      grid: sde.SdeGrid | None = None) -> list[TestReport]:
    """Fit log GAP to a + b lam + c lam^2 + gamma log lam with gamma fixed."""
    lam = np.asarray(lambda_list if lambda_list is not None else np.linspace(8, 14, 7), float)
    p, se = sde.gap_probability(beta, delta, lam, reps, grid, RngStream(seed, 100))
    coef = _gap_fit(lam, p, se, reps, sde.gap_power(beta, delta))
    c = float(coef[2])
    target = -beta / 64.0
    rel = abs(c - target) / abs(target)
    out = [TestReport("gap quadratic coefficient", c, bool(rel < rtol), rtol, margin=rtol - rel, reps=reps, seed=seed,
                      details={"target": target, "relative_error": rel, "lambdas": lam, "gap": p, "se": se,
                               "linear": float(coef[1]),
                               "linear_theory": sde.gap_linear_coefficient(beta, delta)})]
    order = np.argsort(lam)
    steps = np.diff(p[order])
    out.append(TestReport("gap estimate non-increasing in lambda", float(steps.max()) if steps.size else 0.0,
                          bool(np.all(steps <= 0)), 0.0, reps=reps, seed=seed))
    # sign of the linear coefficient for Im delta = +-1/2 with c and gamma at their theoretical values
    sl = np.asarray(sign_lambdas if sign_lambdas is not None else np.linspace(5, 10, 6), float)
    sr = sign_reps or reps // 2
    bs = {}
    for i, im in enumerate((0.5, -0.5)):
        dd = complex(DeltaParam.of(delta).re, im)
        pp, ss = sde.gap_probability(beta, dd, sl, sr, grid, RngStream(seed, 101 + i))
        bs[im] = float(_gap_fit(sl, pp, ss, sr, sde.gap_power(beta, dd), fix_c=target)[1])
    theory = {im: sde.gap_linear_coefficient(beta, complex(DeltaParam.of(delta).re, im)) for im in (0.5, -0.5)}
    ok = bs[0.5] > bs[-0.5] and np.sign(bs[0.5] - bs[-0.5]) == np.sign(theory[0.5] - theory[-0.5])
    out.append(TestReport("gap linear coefficient follows sign of Im delta", bs[0.5] - bs[-0.5], bool(ok), 0.0,
                          reps=sr, seed=seed, details={"fitted": bs, "theory": theory, "lambdas": sl}))
    return out


def _perturb(seq: VerblunskySeq, eps: float, g: np.random.Generator) -> VerblunskySeq:
    c = np.array(seq.coefficients)
    inner = c[:-1] + eps * (g.standard_normal(c.size - 1) + 1j * g.standard_normal(c.size - 1))
    inner = np.where(np.abs(inner) < 0.999, inner, 0.999 * inner / np.abs(inner))
    last = c[-1] * np.exp(1j * eps * g.standard_normal())
    return VerblunskySeq(np.concatenate([inner, [last]]))


def hoffman_wielandt_check(pairs: int = 50, n: int = 8, seed: int = 1, window_factor: float = 40 * math.pi,
                           allowance: float = 1e-10) -> TestReport:
    """Truncated sum |1/l1_k - 1/l2_k|^2 against the squared HS distance of the inverses."""
    g = RngStream(seed, 110).generator()
    worst = -math.inf
    rows = []
    for _ in range(pairs):
        beta = float(g.uniform(1.0, 4.0))
        delta = complex(g.uniform(0.0, 1.0), g.uniform(-1.0, 1.0))
        s1 = cj_verblunsky(n, beta, delta, g)
        s2 = _perturb(s1, float(g.uniform(1e-3, 5e-2)), g)
        o1, o2 = finite_operator(s1), finite_operator(s2)
        W = window_factor * n
        e1 = lifted_spectrum(support_points(s1), W)
        e2 = lifted_spectrum(support_points(s2), W)
        l1, l2 = e1.labelled(), e2.labelled()
        common = sorted(set(l1) & set(l2))
        lhs = sum(abs(1 / l1[k] - 1 / l2[k]) ** 2 for k in common)
        rhs = hs_distance(o1, o2) ** 2
        worst = max(worst, lhs - rhs - allowance * max(rhs, 1.0))
        rows.append((lhs, rhs))
    rows = np.array(rows)
    return TestReport("Hoffman-Wielandt inequality", float(worst), bool(worst <= 0), 0.0, reps=pairs, seed=seed,
                      details={"max_ratio": float(np.max(rows[:, 0] / rows[:, 1]))})
