"""Rank transforms, the rank scan and reusable null tables.

Ranks increase with the data (the largest entry gets the largest rank), so
an elevated submatrix inflates the rank scan.  Ties are broken uniformly at
random.  Under an i.i.d. null the rank matrix is a uniformly random element
of the permutation group, so its scan distribution depends only on
``(M, N, m, n)`` and the scheme.  It is tabulated once by simulation and
reused across datasets.

Null tables are cached as ``.npy`` files named by :meth:`NullTableKey.filename`
in the directory given by ``cache_dir`` or the ``SUBMATRIX_SCAN_CACHE``
environment variable.  Caching never changes results.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .calibration import CHUNK, Estimator, Scheme, TestOutcome, mc_pvalue
from .errors import ConfigError
from .model import as_matrix
from .rng import DEFAULT_SEED, as_generator, substream
from .scan import DEFAULT_RESTARTS, EXACT, HILLCLIMB, ScanResult, _check_size, scan, scan_batch

log = logging.getLogger(__name__)

CACHE_ENV = "SUBMATRIX_SCAN_CACHE"


@dataclass(frozen=True)
class RankMatrix:
    ranks: np.ndarray
    scheme: Scheme

    @property
    def shape(self):
        return self.ranks.shape


def _check_scheme(scheme) -> Scheme:
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.ORACLE:
        raise ConfigError("ranks are defined for the 'uni' and 'bi' schemes only")
    return scheme


def rank_transform(X, scheme="bi", seed=DEFAULT_SEED) -> RankMatrix:
    """Rank entries within rows (``uni``, ranks 1..N) or globally (``bi``, ranks 1..MN)."""
    X = as_matrix(X)
    scheme = _check_scheme(scheme)
    rng = as_generator(seed)
    M, N = X.shape
    jitter = rng.random(X.shape)
    if scheme is Scheme.UNI:
        # primary key X, secondary key jitter
        order = np.lexsort((jitter, X), axis=1)
        ranks = np.empty((M, N), dtype=np.int64)
        np.put_along_axis(ranks, order, np.arange(1, N + 1, dtype=np.int64)[None, :].repeat(M, 0), axis=1)
    else:
        order = np.lexsort((jitter.ravel(), X.ravel()))
        ranks = np.empty(M * N, dtype=np.int64)
        ranks[order] = np.arange(1, M * N + 1, dtype=np.int64)
        ranks = ranks.reshape(M, N)
    return RankMatrix(ranks, scheme)


def rank_scan(R: RankMatrix, m: int, n: int, method: str = HILLCLIMB,
              restarts: int = DEFAULT_RESTARTS, seed=DEFAULT_SEED) -> ScanResult:
    """Scan statistic of the rank matrix."""
    return scan(R.ranks.astype(np.float64), m, n, method, restarts, seed)


def random_rank_stack(scheme, M: int, N: int, size: int, rng) -> np.ndarray:
    """Rank matrices of ``size`` i.i.d. continuous null matrices, as floats."""
    scheme = _check_scheme(scheme)
    if scheme is Scheme.UNI:
        base = np.broadcast_to(np.arange(1, N + 1, dtype=np.float64), (size, M, N))
        return rng.permuted(base, axis=2)
    base = np.broadcast_to(np.arange(1, M * N + 1, dtype=np.float64), (size, M * N))
    return rng.permuted(base, axis=1).reshape(size, M, N)


@dataclass(frozen=True)
class NullTableKey:
    M: int
    N: int
    m: int
    n: int
    scheme: Scheme
    B: int
    method: str = HILLCLIMB
    restarts: int = DEFAULT_RESTARTS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "scheme", _check_scheme(self.scheme))
        _check_size(self.M, self.N, self.m, self.n)
        if self.B < 1:
            raise ConfigError("B must be at least 1")
        if self.method not in (EXACT, HILLCLIMB):
            raise ConfigError(f"unknown scan method {self.method!r}")
        if self.method == EXACT:
            object.__setattr__(self, "restarts", 0)

    def stat_descriptor(self) -> str:
        return EXACT if self.method == EXACT else f"{HILLCLIMB}{self.restarts}"

    def filename(self) -> str:
        return (f"ranknull_M{self.M}_N{self.N}_m{self.m}_n{self.n}_{self.scheme.value}"
                f"_B{self.B}_{self.stat_descriptor()}_s{self.seed}.npy")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d


@dataclass(frozen=True)
class NullTable:
    key: NullTableKey
    values: np.ndarray

    def count_at_least(self, observed: float) -> int:
        return int(self.values.size - np.searchsorted(self.values, observed, side="left"))


def _cache_dir(cache_dir):
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV) or None
    return Path(cache_dir) if cache_dir is not None else None


def _compute_table(key: NullTableKey) -> np.ndarray:
    draw_rng = substream(key.seed, 1)
    stat_rng = substream(key.seed, 2)
    out = []
    done = 0
    while done < key.B:
        size = min(CHUNK, key.B - done)
        Rs = random_rank_stack(key.scheme, key.M, key.N, size, draw_rng)
        if key.method == HILLCLIMB:
            out.append(scan_batch(Rs, key.m, key.n, key.restarts, stat_rng))
        else:
            out.append(np.array([scan(r, key.m, key.n, EXACT).value for r in Rs]))
        done += size
    return np.sort(np.concatenate(out))


def build_null_table(M: int, N: int, m: int, n: int, scheme="bi", B: int = 500,
                     method: str = HILLCLIMB, restarts: int = DEFAULT_RESTARTS,
                     seed: int = DEFAULT_SEED, cache_dir=None) -> NullTable:
    """Simulate ``B`` null rank scans and return them sorted.

    A cached table with the same key is loaded instead of recomputed.  A
    failure to write the cache is reported as a warning and the computed
    table is still returned.
    """
    key = NullTableKey(M, N, m, n, scheme, B, method, restarts, seed)
    directory = _cache_dir(cache_dir)
    path = directory / key.filename() if directory is not None else None
    if path is not None and path.exists():
        try:
            values = np.load(path)
            if values.shape == (B,):
                log.debug("loaded null table %s", path)
                return NullTable(key, values)
        except (OSError, ValueError) as exc:
            log.warning("ignoring unreadable null table %s: %s", path, exc)
    values = _compute_table(key)
    if path is not None:
        try:
            directory.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp.npy")
            np.save(tmp, values)
            os.replace(tmp, path)
        except OSError as exc:
            warnings.warn(f"could not write null table cache {path}: {exc}", RuntimeWarning, stacklevel=2)
    return NullTable(key, values)


def load_null_table(path) -> NullTable:
    """Load a cached table, recovering the key from its file name."""
    path = Path(path)
    parts = path.name[len("ranknull_"):-len(".npy")].split("_")
    try:
        fields = {p[0]: p[1:] for p in parts[:4]}
        scheme = parts[4]
        B = int(parts[5][1:])
        desc = parts[6]
        seed = int(parts[7][1:])
        method = EXACT if desc == EXACT else HILLCLIMB
        restarts = 0 if method == EXACT else int(desc[len(HILLCLIMB):])
        key = NullTableKey(int(fields["M"]), int(fields["N"]), int(fields["m"]), int(fields["n"]),
                           scheme, B, method, restarts, seed)
    except (IndexError, KeyError, ValueError) as exc:
        raise ConfigError(f"{path.name} is not a null table file name") from exc
    return NullTable(key, np.load(path))


def rank_test(X, m: int, n: int, scheme, table: NullTable, seed: int = DEFAULT_SEED,
              estimator=Estimator.ADD_ONE) -> TestOutcome:
    """Rank scan test calibrated by a precomputed null table.

    The observed rank scan uses the table's scan method and restart budget.
    Tie-breaking and hill-climb starts use sub-streams of ``seed``.
    """
    X = as_matrix(X)
    scheme = _check_scheme(scheme)
    M, N = X.shape
    k = table.key
    if (k.M, k.N, k.m, k.n, k.scheme) != (M, N, m, n, scheme):
        raise ConfigError(
            f"null table key {(k.M, k.N, k.m, k.n, k.scheme.value)} does not match "
            f"{(M, N, m, n, scheme.value)}"
        )
    estimator = Estimator.parse(estimator)
    R = rank_transform(X, scheme, substream(seed, 0))
    res = rank_scan(R, m, n, k.method, max(k.restarts, 1), substream(seed, 1))
    count = table.count_at_least(res.value)
    return TestOutcome(res.value, mc_pvalue(count, k.B, estimator), scheme, k.B, seed,
                       estimator, count, res.argmax)
