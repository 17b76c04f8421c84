"""Optional PNG figures for CLI runs (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .harness import TestReport


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    _pyplot().close(fig)
    return path


def report_summary(reports: list[TestReport], path: Path) -> Path:
    """Horizontal bar per report: green for pass, red for fail."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 0.35 * len(reports) + 1.2))
    y = np.arange(len(reports))
    colors = ["tab:green" if r.passed else "tab:red" for r in reports]
    ax.barh(y, np.ones(len(reports)), color=colors)
    ax.set_yticks(y, [r.name[:70] for r in reports], fontsize=7)
    ax.set_xticks([])
    ax.invert_yaxis()
    ax.set_title("verification reports")
    return _save(fig, path)


def _find(reports, key):
    return [r for r in reports if key in r.details]


def suite_figures(suite: str, reports: list[TestReport], stem: Path) -> list[Path]:
    plt = _pyplot()
    out = [report_summary(reports, stem.with_name(stem.name + "_summary.png"))]
    for r in _find(reports, "distances"):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        xs = r.details.get("n_list", list(range(len(r.details["distances"]))))
        ax.plot(xs, r.details["distances"], "o-")
        ax.set_xscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("KS distance")
        ax.set_title(r.name)
        out.append(_save(fig, stem.with_name(stem.name + f"_distances_{len(out)}.png")))
    for r in _find(reports, "variances"):
        lam = np.asarray(r.details["lambdas"], float)
        var = np.asarray(r.details["variances"], float)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(np.log(lam), var, "o", label="sample variance")
        ax.plot(np.log(lam), r.details["intercept"] + r.statistic * np.log(lam), "-", label="fit")
        ax.set_xlabel("log lambda")
        ax.set_ylabel("Var N(lambda)")
        ax.legend()
        out.append(_save(fig, stem.with_name(stem.name + "_clt.png")))
    for r in _find(reports, "gap"):
        lam = np.asarray(r.details["lambdas"], float)
        p = np.asarray(r.details["gap"], float)
        se = np.asarray(r.details["se"], float)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar(lam, np.log(p), yerr=se / p, fmt="o")
        ax.set_xlabel("lambda")
        ax.set_ylabel("log GAP")
        out.append(_save(fig, stem.with_name(stem.name + "_gap.png")))
    for r in _find(reports, "sde_sample"):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        hi = r.details["bin_edges"][-1]
        ax.hist(r.details["sde_sample"], bins=40, range=(0, hi), density=True, alpha=0.6, label="SDE")
        ax.hist(r.details["ro_sample"], bins=40, range=(0, hi), density=True, alpha=0.6, label="RO")
        ax.set_xlabel("lambda_0^2 / 16")
        ax.legend()
        out.append(_save(fig, stem.with_name(stem.name + "_hard_edge.png")))
    return out


def counts_figure(lambdas, counts, path: Path) -> Path:
    plt = _pyplot()
    lambdas = np.asarray(lambdas, float)
    counts = np.asarray(counts, float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(lambdas, counts.mean(axis=0), "o-", label="mean N(lambda)")
    ax.fill_between(lambdas, *np.quantile(counts, [0.1, 0.9], axis=0), alpha=0.3, label="10-90%")
    ax.plot(lambdas, lambdas / (2 * np.pi), "k--", lw=0.8, label="lambda/(2 pi)")
    ax.set_xlabel("lambda")
    ax.legend()
    return _save(fig, path)


def secular_figure(z, values: dict, path: Path) -> Path:
    plt = _pyplot()
    z = np.asarray(z)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = z.real if np.allclose(z.imag, 0) else np.arange(z.size)
    for label, v in values.items():
        ax.plot(x, np.abs(np.asarray(v)), ".-", label=label)
    ax.set_yscale("log")
    ax.set_xlabel("Re z" if np.allclose(z.imag, 0) else "grid index")
    ax.set_ylabel("|secular|")
    ax.legend()
    return _save(fig, path)


def angles_figure(angles: list[np.ndarray], path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(np.concatenate(angles), bins=60, range=(-np.pi, np.pi), density=True)
    ax.set_xlabel("eigenangle")
    return _save(fig, path)
