"""Command-line entry points: ``artifact sample | secular | count | verify``.

Exit status: 0 success, 1 usage, 2 domain, 3 numerical failure, 4 statistical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, harness, sde
from .dirac import finite_operator, path_batch_from_gammas, prufer_counts_batch, transfer_secular
from .distributions import DeltaParam, RngStream
from .errors import ArtifactError, DomainError, RepresentationError
from .opuc import VerblunskySeq, cj_verblunsky, ro_verblunsky, scaled_char_poly, support_points

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERICAL, EXIT_STATISTICAL = 0, 1, 2, 3, 4
SEED_ENV = "ARTIFACT_SEED"

# stream ids reserved per subcommand
SAMPLE_STREAM, SECULAR_STREAM, COUNT_STREAM = 1, 2, 3

SUITES = ("moments", "finite-oracles", "n1-law", "endpoint", "characterizations", "convergence",
          "secular", "bess", "clt", "gap", "hard-edge", "hoffman-wielandt", "all")
COMMANDS = ("sample", "secular", "count", "verify")
HEADER_EXCLUDE = {"output", "figures", "workers", "config", "handler"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- parsing


def _complex_list(text: str) -> list[complex]:
    try:
        return [complex(tok.replace(" ", "")) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse complex list {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse number list {text!r}") from exc


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file mirroring the long flags")
    p.add_argument("--seed", type=_nonneg_int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--output", "-o", default="-", help="output file ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--workers", type=_pos_int, default=1, help="worker processes for replicate fan-out")
    p.add_argument("--figures", action="store_true", help="also write PNG figures next to the output")
    p.add_argument("--reps", type=_pos_int, default=None)


def _ensemble(p: argparse.ArgumentParser, required: bool = False):
    p.add_argument("--ensemble", choices=("cj", "ro"), default=None, required=required)
    p.add_argument("--n", type=_pos_int, default=None)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--delta-re", type=float, default=0.0)
    p.add_argument("--delta-im", type=float, default=0.0)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.0)


def _grid_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("grid controls")
    g.add_argument("--ds", type=float, default=None, help="natural-time step cap")
    g.add_argument("--steps", type=int, default=None, help="grid nodes per octave of the phase SDE")
    g.add_argument("--t0", type=float, default=None, help="start time of the phase SDE")
    g.add_argument("--t-max", type=float, default=None, help="natural-time horizon")
    g.add_argument("--u-min", type=float, default=None, help="start of the secular log-time grid")
    g.add_argument("--du", type=float, default=None, help="secular log-time step")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="artifact", description="Circular beta-ensembles, Dirac operators and their limits.")
    parser.add_argument("--version", action="version", version=f"artifact {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="coefficient sequences and eigenangles")
    _common(p)
    _ensemble(p, required=True)
    p.add_argument("--what", choices=("coefficients", "angles", "both"), default="both")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("secular", help="secular functions and Taylor coefficients")
    _common(p)
    _ensemble(p)
    _grid_flags(p)
    p.add_argument("--engine", required=True,
                   choices=("finite", "transfer", "dual", "hp", "bess", "hp-taylor", "bess-taylor"))
    p.add_argument("--z", type=_complex_list, default=None, help="comma-separated complex points")
    p.add_argument("--terms", type=_pos_int, default=8, help="Taylor coefficients for *-taylor engines")
    p.add_argument("--tol", type=float, default=1e-8, help="coefficients below this are not emitted (bess-taylor)")
    p.set_defaults(handler=cmd_secular)

    p = sub.add_parser("count", help="counting functions N(lambda)")
    _common(p)
    _ensemble(p)
    _grid_flags(p)
    p.add_argument("--engine", required=True, choices=("alpha", "ks", "hard-edge", "prufer"))
    p.add_argument("--lambdas", type=_float_list, required=True, help="comma-separated lambda grid")
    p.add_argument("--max-undecided", type=float, default=0.01)
    p.set_defaults(handler=cmd_count)

    p = sub.add_parser("verify", help="run an acceptance suite")
    _common(p)
    p.add_argument("--suite", required=True, choices=SUITES)
    p.set_defaults(handler=cmd_verify)
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-")] = value
    return out


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _config_flags(parser: argparse.ArgumentParser, command: str, cfg: dict[str, str]) -> list[str]:
    sub = parser._subparsers._group_actions[0].choices[command]
    known = {a.dest: a for a in sub._actions}
    extra = []
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        action = known[dest]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                extra.append(action.option_strings[0])
        else:
            extra.append(f"{action.option_strings[0]}={value}")
    return extra


def parse_args(argv: list[str]) -> argparse.Namespace:
    """Parse flags; values from ``--config`` sit before the command line so explicit flags win."""
    parser = build_parser()
    path = _config_path(argv)
    if path is not None and argv and argv[0] in COMMANDS:
        extra = _config_flags(parser, argv[0], _read_config(path))
        argv = [argv[0], *extra, *argv[1:]]
    args = parser.parse_args(argv)
    if args.seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            args.seed = int(env) if env not in (None, "") else 0
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer") from exc
        if args.seed < 0:
            raise UsageError(f"{SEED_ENV} must be non-negative")
    if args.figures and args.output == "-":
        raise UsageError("--figures needs --output so figures can be written next to it")
    return args


# ---------------------------------------------------------------- output


@dataclass
class Output:
    args: argparse.Namespace
    fmt: str

    def header(self, extra: dict | None = None) -> dict:
        cfg = {k: v for k, v in vars(self.args).items() if k not in HEADER_EXCLUDE}
        cfg = harness._jsonable(cfg)
        head = {"version": __version__, "config": cfg, "seed": self.args.seed}
        if extra:
            head["summary"] = harness._jsonable(extra)
        return head

    def write(self, rows: list[dict] | None = None, columns: list[str] | None = None,
              lines: list[str] | None = None, extra: dict | None = None):
        head = self.header(extra)
        buf = io.StringIO()
        if self.fmt == "jsonl":
            buf.write(json.dumps({"header": head}, sort_keys=True) + "\n")
            if lines is None:
                lines = [json.dumps(harness._jsonable(r), sort_keys=True) for r in rows or []]
            for ln in lines:
                buf.write(ln + "\n")
        else:
            buf.write(f"# artifact {head['version']}\n")
            buf.write(f"# seed: {head['seed']}\n")
            buf.write("# config: " + json.dumps(head["config"], sort_keys=True) + "\n")
            if extra:
                buf.write("# summary: " + json.dumps(head["summary"], sort_keys=True) + "\n")
            w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
            w.writeheader()
            for r in rows or []:
                w.writerow({k: _cell(v) for k, v in r.items()})
        text = buf.getvalue()
        if self.args.output == "-":
            sys.stdout.write(text)
        else:
            Path(self.args.output).write_text(text)

    def figure_stem(self) -> Path:
        p = Path(self.args.output)
        return p.with_suffix("") if p.suffix else p


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _delta(args) -> DeltaParam:
    return DeltaParam(args.delta_re, args.delta_im)


def _grid(args) -> sde.SdeGrid:
    kw = {}
    for flag, name in (("ds", "ds"), ("steps", "per_octave"), ("t0", "t0"), ("t_max", "t_max"),
                       ("u_min", "u_min"), ("du", "du")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[name] = v
    return sde.SdeGrid(**kw)


def _chunks(reps: int, workers: int) -> list[tuple[int, int]]:
    size = -(-reps // workers)
    return [(o, min(size, reps - o)) for o in range(0, reps, size)]


def _run_chunks(fn, args, reps: int, *extra):
    """Fan replicate chunks out; each chunk rebuilds its generators from (seed, stream, offset)."""
    chunks = _chunks(reps, args.workers)
    if args.workers == 1 or len(chunks) == 1:
        return [fn(off, cnt, *extra) for off, cnt in chunks]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        futs = [pool.submit(fn, off, cnt, *extra) for off, cnt in chunks]
        return [f.result() for f in futs]


# ---------------------------------------------------------------- sample


def _sequence(ensemble: str, n: int, beta: float, delta, a: float, b: float, g) -> VerblunskySeq:
    if ensemble == "cj":
        return cj_verblunsky(n, beta, delta, g)
    return ro_verblunsky(n, beta, a, b, g)


def _sample_chunk(offset, count, seed, ensemble, n, beta, delta, a, b, what):
    out = []
    for i, g in enumerate(RngStream(seed, SAMPLE_STREAM).generators(count, offset)):
        seq = _sequence(ensemble, n, beta, delta, a, b, g)
        rec = {"replicate": offset + i}
        if what in ("coefficients", "both"):
            rec["coefficients"] = seq.coefficients
        if what in ("angles", "both"):
            sp = support_points(seq)
            rec["angles"] = sp.angles
            rec["max_residual"] = float(np.max(sp.residuals))
        out.append(rec)
    return out


def _need_n(args):
    if args.n is None:
        raise UsageError("--n is required for finite ensembles")


def cmd_sample(args) -> int:
    _need_n(args)
    delta = _delta(args)
    reps = args.reps or 1
    recs = [r for chunk in _run_chunks(_sample_chunk, args, reps, args.seed, args.ensemble, args.n, args.beta,
                                       delta.value, args.a, args.b, args.what) for r in chunk]
    out = Output(args, args.format or "csv")
    if out.fmt == "jsonl":
        out.write(rows=recs)
    else:
        rows = []
        for r in recs:
            for k, c in enumerate(r.get("coefficients", [])):
                rows.append({"replicate": r["replicate"], "kind": "gamma", "index": k, "re": c.real, "im": c.imag})
            for k, t in enumerate(r.get("angles", [])):
                rows.append({"replicate": r["replicate"], "kind": "angle", "index": k, "re": t, "im": 0.0})
        out.write(rows, ["replicate", "kind", "index", "re", "im"])
    if args.figures and args.what != "coefficients":
        from .figures import angles_figure

        angles_figure([r["angles"] for r in recs], out.figure_stem().with_name(out.figure_stem().name + "_angles.png"))
    return EXIT_OK


# ---------------------------------------------------------------- secular


def _secular_chunk(offset, count, seed, engine, ens, n, beta, delta, a, b, z, grid, terms):
    gens = RngStream(seed, SECULAR_STREAM).generators(count, offset)
    zmax = max(1.0, float(np.max(np.abs(z)))) if len(z) else 1.0
    out = []
    for i, g in enumerate(gens):
        rep = offset + i
        if engine in ("finite", "transfer", "dual"):
            seq = _sequence(ens, n, beta, delta, a, b, g)
            vals = {}
            if engine in ("finite", "dual"):
                vals["finite"] = scaled_char_poly(seq, z)
            if engine in ("transfer", "dual"):
                vals["transfer"] = transfer_secular(finite_operator(seq), z)
            out.append((rep, vals))
        elif engine == "hp":
            out.append((rep, {"hp": sde.hp_secular_sde(beta, delta, z, grid, g, zmax=zmax)}))
        elif engine == "bess":
            out.append((rep, {"bess": sde.bess_secular_sde(beta, a, z, grid, g, zmax=zmax)}))
        elif engine == "hp-taylor":
            out.append((rep, sde.hp_taylor(beta, delta, terms, grid, g)))
        else:
            out.append((rep, sde.bess_taylor(beta, a, terms, grid, g)))
    return out


def cmd_secular(args) -> int:
    engine = args.engine
    if engine in ("finite", "transfer", "dual"):
        if args.ensemble is None:
            raise UsageError(f"--ensemble is required for the {engine} engine")
        _need_n(args)
    elif engine.startswith("hp") and args.ensemble == "ro":
        raise RepresentationError("the hp engines describe the limit of the cj ensemble, not ro")
    elif engine.startswith("bess") and args.ensemble == "cj":
        raise RepresentationError("the bess engines describe the limit of the ro ensemble, not cj")
    if engine.endswith("taylor") and args.terms > 12:
        raise DomainError("at most 12 Taylor coefficients are supported")
    delta = _delta(args)
    z = np.asarray(args.z if args.z is not None else np.linspace(0.0, 10.0, 21), complex)
    reps = args.reps or 1
    results = [r for chunk in _run_chunks(_secular_chunk, args, reps, args.seed, engine, args.ensemble, args.n,
                                          args.beta, delta.value, args.a, args.b, z, _grid(args), args.terms)
               for r in chunk]
    out = Output(args, args.format or "csv")
    extra = None
    if engine.endswith("taylor"):
        rows = []
        for rep, series in results:
            for k, c in enumerate(series.coefficients):
                if engine == "bess-taylor" and (k % 2 or abs(c) < args.tol) and k:
                    continue
                rows.append({"replicate": rep, "k": k, "re": c.real, "im": c.imag, "provenance": series.provenance})
        cols = ["replicate", "k", "re", "im", "provenance"]
    else:
        names = list(results[0][1])
        rows = []
        diffs = []
        for rep, vals in results:
            for j, zz in enumerate(z):
                row = {"replicate": rep, "z_re": zz.real, "z_im": zz.imag}
                for nm in names:
                    row[f"{nm}_re"] = vals[nm][j].real
                    row[f"{nm}_im"] = vals[nm][j].imag
                if engine == "dual":
                    d = abs(vals["finite"][j] - vals["transfer"][j])
                    row["abs_diff"] = d
                    diffs.append(d)
                rows.append(row)
        cols = ["replicate", "z_re", "z_im"] + [f"{nm}_{p}" for nm in names for p in ("re", "im")]
        if engine == "dual":
            cols.append("abs_diff")
            extra = {"max_abs_difference": max(diffs) if diffs else 0.0}
    out.write(rows, cols, extra=extra)
    if args.figures and not engine.endswith("taylor"):
        from .figures import secular_figure

        vals = results[0][1]
        secular_figure(z, vals, out.figure_stem().with_name(out.figure_stem().name + "_secular.png"))
    return EXIT_OK


# ---------------------------------------------------------------- count


def _count_chunk(offset, count, seed, engine, ens, n, beta, delta, a, b, lambdas, grid, lam_max):
    gens = RngStream(seed, COUNT_STREAM).generators(count, offset)
    if engine == "alpha":
        return sde.alpha_counts(beta, delta, lambdas, count, grid, gens, lam_max=lam_max)
    if engine == "hard-edge":
        return sde.hard_edge_counts(beta, a, lambdas, count, grid, gens, lam_max=lam_max)
    if engine == "ks":
        return sde.ks_counts(beta, delta, lambdas, count, grid, gens)
    seqs = [_sequence(ens, n, beta, delta, a, b, g).coefficients for g in gens]
    x, y, q = path_batch_from_gammas(np.array(seqs))
    N = x.shape[1]
    u1 = np.stack([-q, -np.ones(count)], axis=1)
    counts = prufer_counts_batch(x, y, np.full(N, 1.0 / N), np.array([1.0, 0.0]), u1, lambdas)
    ones = np.ones_like(counts)
    return sde.CountingRecord(np.asarray(lambdas, float), counts, ones, np.zeros(counts.shape), np.zeros(counts.shape),
                              {"engine": "prufer", "ensemble": ens, "n": n})


def cmd_count(args) -> int:
    engine = args.engine
    if engine == "prufer":
        if args.ensemble is None:
            raise UsageError("--ensemble is required for the prufer engine")
        _need_n(args)
    delta = _delta(args)
    lambdas = np.asarray(args.lambdas, float)
    reps = args.reps or 100
    lam_max = float(np.max(np.abs(lambdas))) if lambdas.size else 0.0
    recs = _run_chunks(_count_chunk, args, reps, args.seed, engine, args.ensemble, args.n, args.beta, delta.value,
                       args.a, args.b, lambdas, _grid(args), lam_max)
    counts = np.concatenate([r.counts for r in recs])
    status = np.concatenate([r.status for r in recs])
    undecided = float(np.mean(status == 0)) if status.size else 0.0
    extra = {"undecided_fraction": undecided, "reps": reps, "engine": engine}
    out = Output(args, args.format or "jsonl")
    if out.fmt == "jsonl":
        lines = []
        offset = 0
        for r in recs:
            for ln in r.jsonl(args.seed, COUNT_STREAM):
                d = json.loads(ln)
                d["replicate"] += offset
                lines.append(json.dumps(d, sort_keys=True))
            offset += r.reps
        out.write(lines=lines, extra=extra)
    else:
        rows = [{"replicate": i, "lambda": lam, "N": int(counts[i, j]), "status": int(status[i, j])}
                for i in range(counts.shape[0]) for j, lam in enumerate(lambdas)]
        out.write(rows, ["replicate", "lambda", "N", "status"], extra=extra)
    if args.figures:
        from .figures import counts_figure

        order = np.argsort(lambdas)
        counts_figure(lambdas[order], counts[:, order], out.figure_stem().with_name(out.figure_stem().name + "_counts.png"))
    if undecided > args.max_undecided:
        print(f"warning: undecided fraction {undecided:.3g} exceeds {args.max_undecided:g}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- verify


def _suite(name: str, reps: int | None, seed: int) -> list[harness.TestReport]:
    kw = lambda default: {"reps": reps or default, "seed": seed}
    if name == "moments":
        return harness.moment_suite(**kw(100_000))
    if name == "finite-oracles":
        return harness.finite_oracle_suite(seed=seed, count=reps or 20)
    if name == "n1-law":
        return harness.n1_law_suite(**kw(10_000))
    if name == "endpoint":
        return [harness.endpoint_law(**kw(10_000))]
    if name == "characterizations":
        return [harness.characterization_agreement(**kw(2000)), harness.sine_reduction(**kw(2000))]
    if name == "convergence":
        return harness.convergence_experiment(**kw(2000))
    if name == "secular":
        return harness.secular_convergence(**kw(2000))
    if name == "bess":
        return harness.bess_structure(seed=seed, paths=reps or 5)
    if name == "clt":
        return harness.clt_suite(**kw(2000))
    if name == "gap":
        return harness.gap_asymptote_fit(**kw(100_000))
    if name == "hard-edge":
        return harness.hard_edge_crosscheck(**kw(2000))
    if name == "hoffman-wielandt":
        return [harness.hoffman_wielandt_check(pairs=reps or 50, seed=seed)]
    return [r for s in SUITES[:-1] for r in _suite(s, reps, seed)]


def cmd_verify(args) -> int:
    reports = _suite(args.suite, args.reps, args.seed)
    for r in reports:
        print(r.line(), file=sys.stderr)
    out = Output(args, args.format or "jsonl")
    passed = all(r.passed for r in reports)
    extra = {"passed": passed, "reports": len(reports), "failed": sum(not r.passed for r in reports)}
    if out.fmt == "jsonl":
        out.write(lines=[json.dumps(r.to_json(), sort_keys=True) for r in reports], extra=extra)
    else:
        rows = [{"name": r.name, "passed": int(r.passed), "statistic": r.statistic,
                 "pvalue": "" if r.pvalue is None else r.pvalue, "margin": "" if r.margin is None else r.margin,
                 "threshold": r.threshold, "reps": r.reps, "seed": r.seed} for r in reports]
        out.write(rows, ["name", "passed", "statistic", "pvalue", "margin", "threshold", "reps", "seed"], extra=extra)
    if args.figures:
        from .figures import suite_figures

        suite_figures(args.suite, reports, out.figure_stem())
    return EXIT_OK if passed else EXIT_STATISTICAL


# ---------------------------------------------------------------- main


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(f"artifact: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArtifactError as exc:
        print(f"artifact: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
