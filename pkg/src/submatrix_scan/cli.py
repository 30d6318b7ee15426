"""Command-line interface.

Subcommands: ``detect`` (test a matrix from a CSV file), ``sweep`` (run a
simulation study), ``table`` (build or inspect rank null tables) and
``theory`` (thresholds and regime diagnostics).

Exit status is 0 whenever the command ran, whatever the test decision; 2
for invalid input or configuration; 1 for other failures.  Row and column
indices are printed 0-based.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import Estimator, oracle_pvalue_mc, permutation_pvalue_mc
from .errors import ConfigError, EnumerationTooLargeError, MatrixParseError, ParameterDomainError
from .harness import METHODS, PROFILES, config_from_mapping, export_sweep, format_summary, read_config_file, run_sweep
from .model import Family, read_matrix_csv
from .ranks import CACHE_ENV, build_null_table, load_null_table, rank_test
from .rng import DEFAULT_SEED
from .scan import DEFAULT_RESTARTS, HILLCLIMB, scan_grid_bonferroni
from .theory import rank_threshold, regime_report, theta_crit, upsilon

log = logging.getLogger("submatrix_scan")

DETECT_METHODS = ("oracle", "perm-uni", "perm-bi", "rank-uni", "rank-bi")


def _parse_grid(text):
    sizes = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        try:
            m, n = (int(v) for v in item.split("x"))
        except ValueError:
            raise ConfigError(f"bad grid entry {item!r}; expected MxN, e.g. 4x4") from None
        sizes.append((m, n))
    if not sizes:
        raise ConfigError("empty size grid")
    return sizes


def _estimator(text):
    return Estimator.parse({"plain": "mc_plain", "add-one": "mc_add_one"}.get(text, text))


def _write_csv(rows, out):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerows(rows)


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def _run_one(X, m, n, args):
    M, N = X.shape
    estimator = _estimator(args.estimator)
    if args.method == "oracle":
        return oracle_pvalue_mc(X, m, n, args.family, args.B, args.seed, estimator=estimator,
                                method=args.scan, restarts=args.restarts)
    scheme = args.method.split("-")[1]
    if args.method.startswith("perm"):
        return permutation_pvalue_mc(X, m, n, scheme, args.B, args.seed, estimator=estimator,
                                     method=args.scan, restarts=args.restarts)
    table = build_null_table(M, N, m, n, scheme, args.B, args.scan, args.restarts, args.seed,
                             cache_dir=args.cache_dir)
    return rank_test(X, m, n, scheme, table, args.seed, estimator)


def cmd_detect(args, out=sys.stdout) -> int:
    if (args.grid is None) == (args.m is None or args.n is None):
        raise ConfigError("give either both --m and --n, or --grid")
    if args.grid is not None and (args.m is not None or args.n is not None):
        raise ConfigError("--grid cannot be combined with --m/--n")
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    if args.B < 1 or args.restarts < 1:
        raise ConfigError("--B and --restarts must be at least 1")
    Family.parse(args.family)
    _estimator(args.estimator)
    sizes = _parse_grid(args.grid) if args.grid is not None else [(args.m, args.n)]
    X = read_matrix_csv(args.input)
    M, N = X.shape
    for m, n in sizes:
        if not (1 <= m <= M and 1 <= n <= N):
            raise ConfigError(f"submatrix size {m}x{n} infeasible for a {M}x{N} matrix")

    outcomes = {}
    for m, n in sizes:
        outcomes[(m, n)] = _run_one(X, m, n, args)
    if len(sizes) == 1:
        best = sizes[0]
        p_value = outcomes[best].p_value
    else:
        p_value = scan_grid_bonferroni(sizes, lambda m, n: outcomes[(m, n)].p_value)
        best = min(sizes, key=lambda s: outcomes[s].p_value)
    res = outcomes[best]
    decision = p_value <= args.alpha

    if args.csv:
        rows = [("method", "m", "n", "statistic", "p_value", "rows", "cols", "alpha", "decision")]
        for (m, n), o in outcomes.items():
            rows.append((args.method, m, n, _fmt(o.statistic), _fmt(o.p_value),
                         " ".join(map(str, o.argmax.rows)), " ".join(map(str, o.argmax.cols)),
                         _fmt(args.alpha), int(o.p_value <= args.alpha)))
        if len(sizes) > 1:
            rows.append((args.method, "bonferroni", "bonferroni", _fmt(res.statistic), _fmt(p_value),
                         " ".join(map(str, res.argmax.rows)), " ".join(map(str, res.argmax.cols)),
                         _fmt(args.alpha), int(decision)))
        _write_csv(rows, out)
        return 0

    print(f"method:     {args.method} ({res.estimator.value}, B={res.B}, seed={args.seed})", file=out)
    if len(sizes) > 1:
        for (m, n), o in outcomes.items():
            print(f"  size {m}x{n}: statistic {o.statistic:.6g}, p-value {o.p_value:.6g}", file=out)
        print(f"p-value:    {p_value:.6g} (Bonferroni over {len(sizes)} sizes; best size {best[0]}x{best[1]})",
              file=out)
    else:
        print(f"size:       {best[0]}x{best[1]}", file=out)
        print(f"statistic:  {res.statistic:.6g}", file=out)
        print(f"p-value:    {p_value:.6g}", file=out)
    label = "rank argmax" if args.method.startswith("rank") else "argmax"
    print(f"{label + ':':<12}rows {list(res.argmax.rows)}", file=out)
    print(f"{'':<12}cols {list(res.argmax.cols)}", file=out)
    print(f"decision:   {'detect' if decision else 'no detection'} at alpha={args.alpha:g}", file=out)
    return 0


_SWEEP_FLAGS = ("M", "N", "m", "n", "family", "replicates", "B", "restarts", "seed", "estimator",
                "methods", "multipliers", "alpha", "threads", "cache_dir")


def _sweep_config(args):
    if args.config is not None:
        if args.profile is not None:
            raise ConfigError("--profile cannot be combined with --config (use a 'profile' key)")
        cfg = read_config_file(args.config)
    else:
        profile = args.profile or "desk"
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        cfg = PROFILES[profile]
    overrides = {}
    for flag in _SWEEP_FLAGS:
        value = getattr(args, f"sweep_{flag}")
        if value is None:
            continue
        key = {"seed": "master_seed", "multipliers": "theta_multipliers"}.get(flag, flag)
        if key == "estimator":
            value = _estimator(value).value
        overrides[key] = value
    if args.timing:
        overrides["timing"] = "true"
    cfg = config_from_mapping({k: str(v) for k, v in overrides.items()}, cfg)
    if cfg.cache_dir is None and os.environ.get(CACHE_ENV):
        cfg = replace(cfg, cache_dir=os.environ[CACHE_ENV])
    return cfg.validate()


def cmd_sweep(args, out=sys.stdout) -> int:
    cfg = _sweep_config(args)
    path = Path(args.out)
    if not path.parent.exists():
        raise ConfigError(f"output directory {path.parent} does not exist")

    def progress(done, total):
        if not args.quiet:
            print(f"\r{done}/{total} cells", end="" if done < total else "\n", file=sys.stderr, flush=True)

    result = run_sweep(cfg, progress)
    records, summary = export_sweep(result, path)
    print(format_summary(result), file=out)
    print(f"records: {records}\nsummary: {summary}", file=out)
    return 0


def cmd_table(args, out=sys.stdout) -> int:
    if args.action == "show":
        table = load_null_table(args.path)
    else:
        if args.M is None or args.N is None or args.m is None or args.n is None:
            raise ConfigError("table build needs --M, --N, --m and --n")
        table = build_null_table(args.M, args.N, args.m, args.n, args.scheme, args.B, args.scan,
                                 args.restarts, args.seed, cache_dir=args.cache_dir)
    key = table.key
    qs = (0.5, 0.9, 0.95, 0.99)
    quant = np.quantile(table.values, qs)
    if args.csv:
        header = list(key.as_dict()) + ["min", "max"] + [f"q{q:g}" for q in qs]
        row = [str(v) for v in key.as_dict().values()] + [_fmt(float(table.values[0])),
                                                           _fmt(float(table.values[-1]))]
        row += [_fmt(float(v)) for v in quant]
        _write_csv([header, row], out)
        return 0
    print(f"null table {key.filename()}", file=out)
    for name, value in key.as_dict().items():
        print(f"  {name:<9}{value}", file=out)
    print(f"  range    [{table.values[0]:g}, {table.values[-1]:g}]", file=out)
    for q, v in zip(qs, quant):
        print(f"  q{q:<8g}{v:g}", file=out)
    return 0


def cmd_theory(args, out=sys.stdout) -> int:
    tc = theta_crit(args.M, args.N, args.m, args.n)
    ups = upsilon(args.family, args.K, args.seed)
    thr = rank_threshold(ups.exact if ups.exact is not None else ups.estimate)
    rep = regime_report(args.M, args.N, args.m, args.n)
    rows = [
        ("quantity", "value"),
        ("M", args.M), ("N", args.N), ("m", args.m), ("n", args.n),
        ("family", Family.parse(args.family).value),
        ("theta_crit", _fmt(tc)),
        ("upsilon_mc", _fmt(ups.estimate)),
        ("upsilon_mc_se", _fmt(ups.std_error)),
        ("upsilon_exact", _fmt(ups.exact) if ups.exact is not None else ""),
        ("rank_threshold", _fmt(thr)),
        ("rank_theta", _fmt(thr * tc)),
        ("row_fraction", _fmt(rep.row_fraction)),
        ("col_fraction", _fmt(rep.col_fraction)),
        ("log_ratio", _fmt(rep.log_ratio)),
        ("log3_ratio", _fmt(rep.log3_ratio)),
    ] + [(f"warn_{k}", int(v)) for k, v in rep.flags.items()]
    if args.csv:
        _write_csv(rows, out)
        return 0
    print(f"(M, N, m, n) = ({args.M}, {args.N}, {args.m}, {args.n}), family {rows[5][1]}", file=out)
    print(f"theta_crit                 {tc:.6f}", file=out)
    print(f"upsilon (Monte Carlo, K={ups.samples})  {ups.estimate:.6f} +/- {ups.std_error:.1e}", file=out)
    if ups.exact is not None:
        print(f"upsilon (exact)            {ups.exact:.6f}", file=out)
    print(f"rank threshold factor      {thr:.6f}  (rank scan needs theta > {thr * tc:.6f})", file=out)
    print("regime diagnostics (asymptotic conditions; warnings are advisory)", file=out)
    print(f"  m/M, n/N                 {rep.row_fraction:.4f}, {rep.col_fraction:.4f}"
          f"{'  WARN' if rep.flags['fractions'] else ''}", file=out)
    print(f"  log(M v N)/(m ^ n)       {rep.log_ratio:.4f}{'  WARN' if rep.flags['log_ratio'] else ''}", file=out)
    print(f"  log^3(M v N)/(m ^ n)     {rep.log3_ratio:.4f}{'  WARN' if rep.flags['log3_ratio'] else ''}",
          file=out)
    return 0


def _add_common(p):
    p.add_argument("--B", type=int, default=500, help="Monte Carlo draws (default: 500)")
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS,
                   help=f"hill-climb restarts (default: {DEFAULT_RESTARTS})")
    p.add_argument("--scan", choices=("hillclimb", "exact"), default=HILLCLIMB,
                   help="scan computation (default: hillclimb)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default: {DEFAULT_SEED})")
    p.add_argument("--csv", action="store_true", help="machine-readable CSV output")
    p.add_argument("--cache-dir", default=None,
                   help=f"null table cache directory (default: ${CACHE_ENV}, else no cache)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="submatrix-scan",
                                     description="Distribution-free detection of an elevated submatrix.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="test a matrix for an elevated submatrix")
    p.add_argument("--input", required=True, help="matrix CSV, one row per line, no header")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--grid", help="comma-separated sizes such as 2x2,4x4 (Bonferroni-combined)")
    p.add_argument("--method", choices=DETECT_METHODS, default="perm-bi")
    p.add_argument("--family", default="normal", help="null family for --method oracle")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--estimator", choices=("plain", "add-one"), default="add-one")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", help="simulation study over the signal strength")
    p.add_argument("--profile", choices=sorted(PROFILES), default=None)
    p.add_argument("--config", help="key = value file (keys as in SweepConfig)")
    p.add_argument("--out", default="sweep.csv", help="record CSV path; the summary goes alongside")
    for flag, typ in (("M", int), ("N", int), ("m", int), ("n", int), ("replicates", int),
                      ("B", int), ("restarts", int), ("seed", int), ("alpha", float), ("threads", int)):
        p.add_argument(f"--{flag}", dest=f"sweep_{flag}", type=typ)
    p.add_argument("--family", dest="sweep_family")
    p.add_argument("--estimator", dest="sweep_estimator", choices=("plain", "add-one"))
    p.add_argument("--methods", dest="sweep_methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--multipliers", dest="sweep_multipliers", help="comma-separated theta multipliers")
    p.add_argument("--cache-dir", dest="sweep_cache_dir")
    p.add_argument("--timing", action="store_true", help="record wall time per test (breaks byte-reproducibility)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("table", help="build or inspect a rank null table")
    p.add_argument("action", choices=("build", "show"))
    p.add_argument("path", nargs="?", help="table file for 'show'")
    for flag in ("M", "N", "m", "n"):
        p.add_argument(f"--{flag}", type=int)
    p.add_argument("--scheme", choices=("uni", "bi"), default="bi")
    _add_common(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("theory", help="critical values and regime diagnostics")
    for flag in ("M", "N", "m", "n"):
        p.add_argument(f"--{flag}", type=int, required=True)
    p.add_argument("--family", default="normal")
    p.add_argument("--K", type=int, default=10**6, help="Monte Carlo pairs for upsilon (default: 10^6)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_theory)
    return parser


def main(argv=None, out=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = out or sys.stdout
    threads = getattr(args, "threads", None) or getattr(args, "sweep_threads", None)
    if threads is not None and threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    if args.command == "table" and args.action == "show" and not args.path:
        parser.error("table show needs a PATH")
    try:
        return args.func(args, out)
    except (ConfigError, MatrixParseError, ParameterDomainError, EnumerationTooLargeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
