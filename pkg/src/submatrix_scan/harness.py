"""Simulation sweeps over the signal strength.

For each multiplier ``kappa`` and replicate a matrix with a planted
``[m] x [n]`` block of strength ``kappa * theta_crit`` is generated, and
every requested method is run on that same matrix.  Random streams are
sub-streams of the master seed keyed by ``(role, kappa index, replicate)``,
so records do not depend on execution order or thread count.

Exports
-------
``<name>.csv``
    ``method,theta_multiplier,replicate,p_value,statistic,seconds``; one row
    per record.  ``seconds`` is empty unless timing was requested, which
    keeps exports byte-reproducible.
``<name>_summary.csv``
    ``method,theta_multiplier,replicates,mean_p,median_p,q1_p,q3_p,power``
    where ``power`` is the rejection rate at the configured ``alpha``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .calibration import Estimator, oracle_pvalue_mc, permutation_pvalue_mc
from .errors import ConfigError
from .model import AnomalySpec, Family, generate_matrix
from .ranks import build_null_table, rank_test
from .rng import DEFAULT_SEED, subseed, substream
from .scan import DEFAULT_RESTARTS
from .theory import theta_crit

log = logging.getLogger(__name__)

METHODS = ("oracle", "perm_uni", "perm_bi", "rank_uni", "rank_bi")
_METHOD_KEY = {name: i + 1 for i, name in enumerate(METHODS)}
_MATRIX_KEY = 0
_TABLE_KEY = 9

RECORD_HEADER = ("method", "theta_multiplier", "replicate", "p_value", "statistic", "seconds")
SUMMARY_HEADER = ("method", "theta_multiplier", "replicates", "mean_p", "median_p", "q1_p", "q3_p", "power")

DEFAULT_MULTIPLIERS = tuple(0.5 + 0.125 * k for k in range(9))

# sweeps use more restarts than the library default: with 10 the per-row rank
# scan misses the planted block often enough to lose a third of its power
PROFILE_RESTARTS = 50


@dataclass(frozen=True)
class SweepConfig:
    M: int = 60
    N: int = 40
    m: int = 8
    n: int = 6
    family: str = "normal"
    theta_multipliers: tuple = DEFAULT_MULTIPLIERS
    replicates: int = 50
    B: int = 199
    restarts: int = DEFAULT_RESTARTS
    methods: tuple = METHODS
    master_seed: int = DEFAULT_SEED
    estimator: str = "mc_add_one"
    alpha: float = 0.05
    threads: int = 1
    timing: bool = False
    cache_dir: str | None = None

    def validate(self) -> "SweepConfig":
        for name in ("M", "N", "m", "n", "replicates", "B", "restarts", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.m > self.M or self.n > self.N:
            raise ConfigError(f"anomaly {self.m}x{self.n} does not fit in {self.M}x{self.N}")
        if self.m == self.M and self.n == self.N:
            raise ConfigError("the anomaly cannot be the whole matrix")
        Family.parse(self.family)
        Estimator.parse(self.estimator)
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        kappas = list(self.theta_multipliers)
        if not kappas:
            raise ConfigError("at least one theta multiplier is required")
        if any(k < 0 for k in kappas) or kappas != sorted(kappas) or len(set(kappas)) != len(kappas):
            raise ConfigError("theta multipliers must be non-negative, distinct and sorted")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        return self


PROFILES = {
    "desk": SweepConfig(restarts=PROFILE_RESTARTS),
    "paper-normal-1": SweepConfig(M=200, N=100, m=10, n=15, replicates=200, B=500, restarts=PROFILE_RESTARTS),
    "paper-normal-2": SweepConfig(M=200, N=100, m=30, n=10, replicates=200, B=500, restarts=PROFILE_RESTARTS),
    "paper-poisson-1": SweepConfig(M=200, N=100, m=10, n=15, replicates=200, B=500, family="poisson",
                                   restarts=PROFILE_RESTARTS),
    "paper-poisson-2": SweepConfig(M=200, N=100, m=30, n=10, replicates=200, B=500, family="poisson",
                                   restarts=PROFILE_RESTARTS),
}


def _coerce(name, text, current):
    text = text.strip()
    if name in ("theta_multipliers", "methods"):
        items = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(float(t) for t in items) if name == "theta_multipliers" else tuple(items)
    if name == "cache_dir":
        return text or None
    if name == "timing":
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


def config_from_mapping(values: dict, base: SweepConfig | None = None) -> SweepConfig:
    """Apply string ``key -> value`` overrides to ``base`` (default: the desk profile)."""
    base = base or PROFILES["desk"]
    known = {f.name for f in fields(SweepConfig)}
    changes = {}
    for key, text in values.items():
        key = key.strip()
        if key == "profile":
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            changes[key] = _coerce(key, str(text), getattr(base, key))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return replace(base, **changes)


def read_config_file(path) -> SweepConfig:
    """Parse a flat ``key = value`` file; ``#`` starts a comment.

    A ``profile`` key selects the base profile the other keys override.
    """
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    profile = values.get("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    return config_from_mapping(values, PROFILES[profile])


@dataclass(frozen=True)
class Record:
    method: str
    theta_multiplier: float
    replicate: int
    p_value: float
    statistic: float
    seconds: float | None = None
    matrix_hash: str = ""


@dataclass
class SweepResult:
    config: SweepConfig
    records: list
    summary: list = field(default_factory=list)


def matrix_hash(X) -> str:
    return hashlib.sha256(np.ascontiguousarray(X, dtype=np.float64).tobytes()).hexdigest()[:16]


def _run_cell(cfg, tables, k_index, kappa, replicate, theta_star):
    family = Family.parse(cfg.family)
    theta = kappa * theta_star
    anomaly = AnomalySpec.leading_block(cfg.m, cfg.n, theta) if theta > 0 else None
    X = generate_matrix(cfg.M, cfg.N, anomaly, family, substream(cfg.master_seed, _MATRIX_KEY, k_index, replicate))
    digest = matrix_hash(X)
    out = []
    for method in cfg.methods:
        seed = subseed(cfg.master_seed, _METHOD_KEY[method], k_index, replicate)
        start = time.perf_counter()
        if method == "oracle":
            res = oracle_pvalue_mc(X, cfg.m, cfg.n, family, cfg.B, seed, estimator=cfg.estimator,
                                   restarts=cfg.restarts)
        elif method.startswith("perm_"):
            res = permutation_pvalue_mc(X, cfg.m, cfg.n, method[5:], cfg.B, seed,
                                        estimator=cfg.estimator, restarts=cfg.restarts)
        else:
            scheme = method[5:]
            res = rank_test(X, cfg.m, cfg.n, scheme, tables[scheme], seed, cfg.estimator)
        seconds = time.perf_counter() - start if cfg.timing else None
        out.append(Record(method, float(kappa), replicate, res.p_value, res.statistic, seconds, digest))
    return out


def run_sweep(cfg: SweepConfig, progress=None) -> SweepResult:
    """Run every method on every ``(multiplier, replicate)`` cell.

    ``progress``, if given, is called with ``(done, total)`` after each cell.
    """
    cfg.validate()
    theta_star = theta_crit(cfg.M, cfg.N, cfg.m, cfg.n)
    tables = {}
    for scheme in ("uni", "bi"):
        if f"rank_{scheme}" in cfg.methods:
            tables[scheme] = build_null_table(
                cfg.M, cfg.N, cfg.m, cfg.n, scheme, cfg.B, restarts=cfg.restarts,
                seed=subseed(cfg.master_seed, _TABLE_KEY, _METHOD_KEY[f"rank_{scheme}"]),
                cache_dir=cfg.cache_dir,
            )
    cells = [(k, kappa, r) for k, kappa in enumerate(cfg.theta_multipliers) for r in range(cfg.replicates)]
    results = [None] * len(cells)
    done = 0

    def work(index):
        k, kappa, r = cells[index]
        return index, _run_cell(cfg, tables, k, kappa, r, theta_star)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            for index, recs in pool.map(work, range(len(cells))):
                results[index] = recs
                done += 1
                if progress:
                    progress(done, len(cells))
    else:
        for index in range(len(cells)):
            _, results[index] = work(index)
            done += 1
            if progress:
                progress(done, len(cells))
    # method-major order: method, multiplier, replicate
    records = [rec for recs in results for rec in recs]
    order = {m: i for i, m in enumerate(cfg.methods)}
    records.sort(key=lambda r: (order[r.method], r.theta_multiplier, r.replicate))
    result = SweepResult(cfg, records)
    result.summary = summarize(records, cfg.alpha)
    return result


def summarize(records, alpha: float = 0.05) -> list:
    """Per ``(method, multiplier)`` p-value quartiles and rejection rate at ``alpha``."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.method, rec.theta_multiplier), []).append(rec.p_value)
    rows = []
    for (method, kappa), pvals in groups.items():
        p = np.asarray(pvals)
        q1, med, q3 = np.quantile(p, [0.25, 0.5, 0.75])
        rows.append({
            "method": method,
            "theta_multiplier": kappa,
            "replicates": int(p.size),
            "mean_p": float(p.mean()),
            "median_p": float(med),
            "q1_p": float(q1),
            "q3_p": float(q3),
            "power": float(np.mean(p <= alpha)),
        })
    return rows


def power_table(result: SweepResult) -> dict:
    """``{method: {multiplier: power}}`` from the summary."""
    table = {}
    for row in result.summary:
        table.setdefault(row["method"], {})[row["theta_multiplier"]] = row["power"]
    return table


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summary_path(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_summary{path.suffix or '.csv'}")


def export_sweep(result: SweepResult, path) -> tuple:
    """Write the record CSV at ``path`` and the summary CSV next to it.

    Returns both paths.
    """
    if not result.config.methods or not result.records:
        raise ConfigError("nothing to export: the sweep has no methods or records")
    path = Path(path)
    spath = summary_path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RECORD_HEADER)
            for rec in result.records:
                writer.writerow([_fmt(getattr(rec, name)) for name in RECORD_HEADER])
        with open(spath, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_HEADER)
            for row in result.summary:
                writer.writerow([_fmt(row[name]) for name in SUMMARY_HEADER])
    except OSError as exc:
        raise OSError(f"cannot write sweep export to {exc.filename or path}: {exc.strerror}") from exc
    return path, spath


def read_sweep_csv(path) -> list:
    """Read records written by :func:`export_sweep`."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_HEADER:
            raise ConfigError(f"{path} does not have the sweep record header")
        return [
            Record(row["method"], float(row["theta_multiplier"]), int(row["replicate"]),
                   float(row["p_value"]), float(row["statistic"]),
                   float(row["seconds"]) if row["seconds"] else None)
            for row in reader
        ]


def format_summary(result: SweepResult) -> str:
    """Plain-text power table: one row per multiplier, one column per method."""
    table = power_table(result)
    methods = list(result.config.methods)
    kappas = sorted({row["theta_multiplier"] for row in result.summary})
    width = max(9, *(len(m) for m in methods))
    lines = [f"power at alpha={result.config.alpha:g} "
             f"(M,N,m,n)=({result.config.M},{result.config.N},{result.config.m},{result.config.n}), "
             f"{result.config.family}, {result.config.replicates} replicates, B={result.config.B}",
             "kappa".rjust(7) + "".join(m.rjust(width + 1) for m in methods)]
    for kappa in kappas:
        lines.append(f"{kappa:7.3f}" + "".join(f"{table[m][kappa]:{width + 1}.3f}" for m in methods))
    return "\n".join(lines)
