"""Permutation and parametric Monte Carlo calibration of scan statistics.

Two permutation groups act on an ``M x N`` matrix:

* ``uni`` permutes entries within each row, independently across rows;
* ``bi`` permutes all ``M * N`` entries jointly.

A permutation is represented as a flat index array ``perm`` of length
``M * N`` with ``X_perm.ravel() == X.ravel()[perm]``.

Monte Carlo p-values compare the observed statistic with ``B`` statistics
computed on random permutations (or on fresh null matrices for the oracle).
With ``C`` the number of draws at least as large as the observed value,
the ``mc_plain`` estimator is ``C / (B + 1)`` and ``mc_add_one`` is
``(C + 1) / (B + 1)``.  Only the latter is guaranteed to be a valid p-value.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, EnumerationTooLargeError
from .model import Family, FamilySpec, as_matrix
from .rng import DEFAULT_SEED, substream
from .scan import DEFAULT_RESTARTS, EXACT, HILLCLIMB, SubmatrixIndex, scan, scan_batch

GROUP_CAP = 10**6
# permuted matrices are drawn and scanned in fixed-size chunks, so the
# random stream does not depend on memory settings
CHUNK = 64


class Scheme(str, Enum):
    UNI = "uni"
    BI = "bi"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "unidimensional": "uni", "perm-uni": "uni", "rank-uni": "uni", "pi1": "uni",
            "bidimensional": "bi", "perm-bi": "bi", "rank-bi": "bi", "pi2": "bi",
            "parametric": "oracle",
        }
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown permutation scheme {value!r}") from None


class Estimator(str, Enum):
    EXACT_ENUM = "paper_exact_enum"
    PLAIN = "mc_plain"
    ADD_ONE = "mc_add_one"

    @classmethod
    def parse(cls, value) -> "Estimator":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"plain": "mc_plain", "add_one": "mc_add_one", "exact": "paper_exact_enum"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown p-value estimator {value!r}") from None


@dataclass(frozen=True)
class TestOutcome:
    """Result of a calibrated test.

    ``count`` is the number of calibration draws whose statistic is at least
    the observed one; ``B`` is the number of draws (the group order for exact
    enumeration).
    """

    statistic: float
    p_value: float
    scheme: Scheme
    B: int
    seed: int | None
    estimator: Estimator
    count: int
    argmax: SubmatrixIndex | None = None

    __test__ = False


def mc_pvalue(count: int, B: int, estimator=Estimator.ADD_ONE) -> float:
    """Monte Carlo p-value from ``count`` exceedances among ``B`` draws."""
    estimator = Estimator.parse(estimator)
    if B < 1 or not 0 <= count <= B:
        raise ConfigError(f"invalid exceedance count {count} of {B}")
    if estimator is Estimator.PLAIN:
        return count / (B + 1)
    if estimator is Estimator.ADD_ONE:
        return (count + 1) / (B + 1)
    raise ConfigError("exact enumeration is not a Monte Carlo estimator")


class ScanStatistic:
    """The scan statistic as a callable ``stat(X, rng) -> float``.

    Permuted and null matrices are scanned with the same method and restart
    budget as the observed matrix.  With ``center_rows`` each row is
    centered before scanning.
    """

    def __init__(self, m: int, n: int, method: str = HILLCLIMB,
                 restarts: int = DEFAULT_RESTARTS, center_rows: bool = False):
        if method not in (EXACT, HILLCLIMB):
            raise ConfigError(f"unknown scan method {method!r}")
        self.m, self.n = m, n
        self.method = method
        self.restarts = restarts
        self.center_rows = center_rows
        self.last_argmax = None

    def _prepare(self, X):
        if self.center_rows:
            return X - X.mean(axis=-1, keepdims=True)
        return X

    def __call__(self, X, rng=None) -> float:
        res = scan(self._prepare(X), self.m, self.n, self.method, self.restarts, rng)
        self.last_argmax = res.argmax
        return res.value

    def batch(self, Xs, rng) -> np.ndarray:
        Xs = self._prepare(Xs)
        if self.method == HILLCLIMB:
            return scan_batch(Xs, self.m, self.n, self.restarts, rng)
        return np.array([scan(x, self.m, self.n, EXACT).value for x in Xs])


def _evaluate_stack(stat, Xs, rng) -> np.ndarray:
    if hasattr(stat, "batch"):
        return np.asarray(stat.batch(Xs, rng), dtype=np.float64)
    return np.array([float(stat(x, rng)) for x in Xs])


# --- permutations -------------------------------------------------------------


def sample_permutation(scheme, M: int, N: int, rng) -> np.ndarray:
    """One uniform draw from the permutation group, as a flat index array."""
    return sample_permutations(scheme, M, N, 1, rng)[0]


def sample_permutations(scheme, M: int, N: int, size: int, rng) -> np.ndarray:
    """``size`` i.i.d. uniform draws, shape ``(size, M * N)``."""
    scheme = Scheme.parse(scheme)
    if M < 1 or N < 1:
        raise ConfigError(f"invalid dimensions {M}x{N}")
    if scheme is Scheme.BI:
        base = np.broadcast_to(np.arange(M * N, dtype=np.int64), (size, M * N))
        return rng.permuted(base, axis=1)
    if scheme is Scheme.UNI:
        base = np.broadcast_to(np.arange(M * N, dtype=np.int64).reshape(M, N), (size, M, N))
        return rng.permuted(base, axis=2).reshape(size, M * N)
    raise ConfigError("the oracle scheme has no permutation group")


def apply_permutation(X, perm) -> np.ndarray:
    X = np.asarray(X)
    return X.ravel()[np.asarray(perm)].reshape(X.shape)


def compose(p, q) -> np.ndarray:
    """Flat index array of applying ``q`` and then ``p``."""
    return np.asarray(q)[np.asarray(p)]


def permuted_stack(X, scheme, size: int, rng) -> np.ndarray:
    """``size`` independently permuted copies of ``X``, shape ``(size, M, N)``."""
    scheme = Scheme.parse(scheme)
    M, N = X.shape
    if scheme is Scheme.BI:
        return rng.permuted(np.broadcast_to(X.ravel(), (size, M * N)), axis=1).reshape(size, M, N)
    if scheme is Scheme.UNI:
        return rng.permuted(np.broadcast_to(X, (size, M, N)), axis=2)
    raise ConfigError("the oracle scheme has no permutation group")


def group_order(scheme, M: int, N: int) -> int:
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.UNI:
        return math.factorial(N) ** M
    return math.factorial(M * N)


def enumerate_group(scheme, M: int, N: int):
    """Iterate over every element of the group as flat index arrays."""
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.BI:
        for p in itertools.permutations(range(M * N)):
            yield np.array(p, dtype=np.int64)
        return
    row_perms = [[tuple(i * N + j for j in p) for p in itertools.permutations(range(N))] for i in range(M)]
    for combo in itertools.product(*row_perms):
        yield np.fromiter(itertools.chain.from_iterable(combo), dtype=np.int64, count=M * N)


# --- p-values -------------------------------------------------------------------


def _default_stat(m, n, stat, method, restarts):
    if stat is not None:
        return stat
    return ScanStatistic(m, n, method, restarts)


def permutation_pvalue_exact(X, m: int, n: int, scheme="bi", stat=None, cap: int = GROUP_CAP) -> TestOutcome:
    """Permutation p-value by enumerating the whole group (identity included).

    The default statistic is the exact scan.  ``stat`` may be any callable
    ``stat(X, rng) -> float``; it is called with ``rng=None``.
    """
    X = as_matrix(X)
    M, N = X.shape
    scheme = Scheme.parse(scheme)
    order = group_order(scheme, M, N)
    if order > cap:
        raise EnumerationTooLargeError(
            f"group of order {order} exceeds cap {cap}; use the Monte Carlo p-value"
        )
    stat = _default_stat(m, n, stat, EXACT, 1)
    observed = float(stat(X, None))
    argmax = getattr(stat, "last_argmax", None)
    count = 0
    for perm in enumerate_group(scheme, M, N):
        if stat(apply_permutation(X, perm), None) >= observed:
            count += 1
    return TestOutcome(observed, count / order, scheme, order, None, Estimator.EXACT_ENUM, count, argmax)


def _mc_outcome(X, stat, draw_stack, B, seed, estimator, scheme):
    estimator = Estimator.parse(estimator)
    if B < 1:
        raise ConfigError("B must be at least 1")
    observed = float(stat(X, substream(seed, 0)))
    argmax = getattr(stat, "last_argmax", None)
    draw_rng = substream(seed, 1)
    stat_rng = substream(seed, 2)
    count = 0
    done = 0
    while done < B:
        size = min(CHUNK, B - done)
        values = _evaluate_stack(stat, draw_stack(size, draw_rng), stat_rng)
        count += int(np.count_nonzero(values >= observed))
        done += size
    return TestOutcome(observed, mc_pvalue(count, B, estimator), scheme, B, seed, estimator, count, argmax)


def permutation_pvalue_mc(X, m: int, n: int, scheme="bi", B: int = 500, seed: int = DEFAULT_SEED,
                          stat=None, estimator=Estimator.ADD_ONE, method: str = HILLCLIMB,
                          restarts: int = DEFAULT_RESTARTS) -> TestOutcome:
    """Monte Carlo permutation p-value.

    Parameters
    ----------
    X : array_like
        Data matrix.
    m, n : int
        Submatrix size for the default scan statistic.
    scheme : {"uni", "bi"}
        Permutation group.
    B : int
        Number of random permutations.
    seed : int
        Master seed; the observed scan, the permutations and the scans of
        permuted matrices use separate sub-streams.
    stat : callable, optional
        ``stat(X, rng) -> float``.  Defaults to the scan computed with
        ``method`` and ``restarts``.  Objects with a ``batch(Xs, rng)``
        method are evaluated on stacks of matrices.
    estimator : {"mc_add_one", "mc_plain"}

    Returns
    -------
    TestOutcome
    """
    X = as_matrix(X)
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.ORACLE:
        raise ConfigError("use oracle_pvalue_mc for parametric calibration")
    stat = _default_stat(m, n, stat, method, restarts)
    return _mc_outcome(X, stat, lambda size, rng: permuted_stack(X, scheme, size, rng),
                       B, seed, estimator, scheme)


def oracle_pvalue_mc(X, m: int, n: int, family="normal", B: int = 500, seed: int = DEFAULT_SEED,
                     stat=None, estimator=Estimator.ADD_ONE, method: str = HILLCLIMB,
                     restarts: int = DEFAULT_RESTARTS) -> TestOutcome:
    """Parametric Monte Carlo p-value using fresh null matrices drawn from ``f_0``."""
    X = as_matrix(X)
    if isinstance(family, FamilySpec):
        if family.theta != 0:
            raise ConfigError("the oracle calibrates against the null member theta = 0")
        null = family
    else:
        null = FamilySpec(Family.parse(family), 0.0)
    M, N = X.shape
    stat = _default_stat(m, n, stat, method, restarts)
    return _mc_outcome(X, stat, lambda size, rng: null.sample((size, M, N), rng),
                       B, seed, estimator, Scheme.ORACLE)
