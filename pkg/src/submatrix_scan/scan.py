"""Sum and scan statistics over ``m x n`` submatrices.

The scan statistic is the largest sum of entries over any choice of ``m``
rows and ``n`` columns (the rows and columns need not be contiguous).  It is
computed exactly by enumeration on small problems and approximately by
multi-restart alternating maximization otherwise:

    fix the columns J, take the m rows with the largest sums over J;
    fix the rows I, take the n columns with the largest sums over I;
    repeat until (I, J) no longer changes.

Each half step can only increase the block sum, and there are finitely many
states, so every restart terminates at a local maximum.  Ties in the top-k
selections go to the smaller index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError, ConvergenceError, EnumerationTooLargeError
from .model import as_matrix
from .rng import as_generator

ENUMERATION_CAP = 10**8
DEFAULT_RESTARTS = 10
MAX_ITER = 1000

EXACT = "exact"
HILLCLIMB = "hillclimb"


@dataclass(frozen=True)
class SubmatrixIndex:
    """Sorted row and column index sets of a submatrix."""

    rows: tuple
    cols: tuple

    def __post_init__(self):
        rows = tuple(int(i) for i in self.rows)
        cols = tuple(int(j) for j in self.cols)
        if not rows or not cols:
            raise ConfigError("index sets must be non-empty")
        if any(b <= a for a, b in zip(rows, rows[1:])) or any(b <= a for a, b in zip(cols, cols[1:])):
            raise ConfigError("index sets must be strictly increasing")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @property
    def shape(self):
        return len(self.rows), len(self.cols)

    def check_bounds(self, M: int, N: int) -> None:
        if self.rows[0] < 0 or self.cols[0] < 0 or self.rows[-1] >= M or self.cols[-1] >= N:
            raise IndexError(f"submatrix {self} does not fit in a {M}x{N} matrix")

    def block_sum(self, X) -> float:
        X = np.asarray(X, dtype=np.float64)
        self.check_bounds(*X.shape)
        return float(_block_sum(X, np.asarray(self.rows, np.int64), np.asarray(self.cols, np.int64)))


@dataclass(frozen=True)
class ScanResult:
    """Outcome of a scan: the achieved block sum and the block achieving it.

    ``iterations`` holds the number of alternation sweeps per restart (empty
    for the exact method).
    """

    value: float
    argmax: SubmatrixIndex
    method: str
    restarts_used: int = 0
    iterations: tuple = field(default_factory=tuple)


def sum_statistic(X) -> float:
    """Total of all entries."""
    return float(np.sum(as_matrix(X)))


def _check_size(M, N, m, n):
    if not (isinstance(m, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise ConfigError("submatrix sizes must be integers")
    if not (1 <= m <= M and 1 <= n <= N):
        raise ConfigError(f"submatrix size {m}x{n} infeasible for a {M}x{N} matrix")


# --- compiled kernels -------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _block_sum(X, rows, cols):
    # sequential row-major accumulation; the canonical value of a block sum
    total = 0.0
    for i in rows:
        for j in cols:
            total += X[i, j]
    return total


@numba.njit(cache=True, nogil=True)
def _top_k(values, k):
    # stable sort on the negated values: ties keep index order
    order = np.argsort(-values, kind="mergesort")
    return np.sort(order[:k])


@numba.njit(cache=True, nogil=True)
def _select_top(values, k, best_idx, best_val, out):
    """Write the sorted indices of the ``k`` largest ``values`` into ``out``.

    Ties go to the smaller index.  ``best_idx`` and ``best_val`` are scratch
    buffers of length ``k``.  Returns the sum of the selected values.
    """
    filled = 0
    for i in range(values.shape[0]):
        v = values[i]
        if filled == k and not v > best_val[k - 1]:
            continue
        # insertion point: after every kept value >= v
        pos = filled if filled < k else k - 1
        while pos > 0 and best_val[pos - 1] < v:
            best_val[pos] = best_val[pos - 1]
            best_idx[pos] = best_idx[pos - 1]
            pos -= 1
        best_val[pos] = v
        best_idx[pos] = i
        if filled < k:
            filled += 1
    total = 0.0
    for a in range(k):
        total += best_val[a]
        out[a] = best_idx[a]
    # insertion sort of the selected indices
    for a in range(1, k):
        x = out[a]
        b = a - 1
        while b >= 0 and out[b] > x:
            out[b + 1] = out[b]
            b -= 1
        out[b + 1] = x
    return total


@numba.njit(cache=True, nogil=True)
def _climb_into(X, m, n, cols0, max_iter, trace, I, J, J_new, rowsum, colsum, sidx, sval):
    """One restart from the column set ``cols0``, using caller-owned buffers.

    Returns ``(cols, sweeps, n_trace)``; the final rows are left in ``I`` and
    ``cols`` is whichever of ``J``/``J_new`` holds the final columns.
    ``sweeps`` is -1 if no fixed point was reached.  If ``trace`` is
    non-empty the objective after every half step is written to it.
    """
    M, N = X.shape
    J[:] = np.sort(cols0)
    record = trace.shape[0] > 0
    t = 0
    for sweep in range(1, max_iter + 1):
        for i in range(M):
            s = 0.0
            for j in J:
                s += X[i, j]
            rowsum[i] = s
        v = _select_top(rowsum, m, sidx, sval, I)
        if record and t < trace.shape[0]:
            trace[t] = v
            t += 1
        for j in range(N):
            colsum[j] = 0.0
        for i in I:
            for j in range(N):
                colsum[j] += X[i, j]
        v = _select_top(colsum, n, sidx, sval, J_new)
        if record and t < trace.shape[0]:
            trace[t] = v
            t += 1
        same = True
        for k in range(n):
            if J_new[k] != J[k]:
                same = False
                break
        J, J_new = J_new, J
        if same:
            return J, sweep, t
    return J, -1, t


@numba.njit(cache=True, nogil=True)
def _climb(X, m, n, cols0, max_iter, trace):
    """One restart from ``cols0``; returns ``(rows, cols, sweeps, n_trace)``."""
    M, N = X.shape
    k = max(m, n)
    I = np.empty(m, np.int64)
    J, sweeps, t = _climb_into(X, m, n, cols0, max_iter, trace, I, np.empty(n, np.int64),
                               np.empty(n, np.int64), np.empty(M), np.empty(N),
                               np.empty(k, np.int64), np.empty(k))
    return I, J, sweeps, t


@numba.njit(cache=True, nogil=True)
def _climb_restarts(X, m, n, inits, max_iter):
    M, N = X.shape
    R = inits.shape[0]
    k = max(m, n)
    no_trace = np.empty(0)
    I = np.empty(m, np.int64)
    J_a = np.empty(n, np.int64)
    J_b = np.empty(n, np.int64)
    rowsum = np.empty(M)
    colsum = np.empty(N)
    sidx = np.empty(k, np.int64)
    sval = np.empty(k)
    best_val = -np.inf
    best_I = np.zeros(m, np.int64)
    best_J = np.zeros(n, np.int64)
    sweeps = np.zeros(R, np.int64)
    for r in range(R):
        J, it, _ = _climb_into(X, m, n, inits[r], max_iter, no_trace, I, J_a, J_b,
                               rowsum, colsum, sidx, sval)
        sweeps[r] = it
        if it < 0:
            return best_val, best_I, best_J, sweeps
        v = _block_sum(X, I, J)
        # strict: the lower restart index wins ties
        if v > best_val:
            best_val = v
            best_I[:] = I
            best_J[:] = J
    return best_val, best_I, best_J, sweeps


@numba.njit(cache=True, nogil=True)
def _scan_batch(Xs, m, n, inits, max_iter):
    """Hill-climb scan value of each matrix ``Xs[b]`` with restarts ``inits[b]``.

    Returns the values and the index of the first matrix that failed to
    converge (-1 if none).
    """
    B = Xs.shape[0]
    values = np.empty(B)
    for b in range(B):
        v, _, _, sweeps = _climb_restarts(Xs[b], m, n, inits[b], max_iter)
        for s in sweeps:
            if s < 0:
                return values, b
        values[b] = v
    return values, -1


# --- public scans -------------------------------------------------------------


def random_column_starts(rng, count: int, N: int, n: int) -> np.ndarray:
    """``count`` uniformly random ``n``-subsets of ``range(N)``, one per row."""
    base = np.broadcast_to(np.arange(N, dtype=np.int64), (count, N))
    return np.ascontiguousarray(rng.permuted(base, axis=1)[:, :n])


def scan_hillclimb(X, m: int, n: int, restarts: int = DEFAULT_RESTARTS, seed=0,
                   start: str = "cols", max_iter: int = MAX_ITER) -> ScanResult:
    """Approximate scan by alternating maximization from random starts.

    Parameters
    ----------
    X : array_like
        Data matrix.
    m, n : int
        Submatrix size.
    restarts : int
        Number of random initializations; the best local maximum is returned.
    seed : int or numpy.random.Generator
        Source of the random starting sets.
    start : {"cols", "rows"}
        Which side is drawn at random.  With ``"cols"`` a random ``n``-subset
        of columns is drawn and the rows are optimized first.
    max_iter : int
        Safety cap on sweeps per restart.

    Returns
    -------
    ScanResult
    """
    X = as_matrix(X)
    M, N = X.shape
    _check_size(M, N, m, n)
    if restarts < 1:
        raise ConfigError("restarts must be at least 1")
    if start == "rows":
        res = scan_hillclimb(X.T, n, m, restarts, seed, "cols", max_iter)
        return ScanResult(res.value, SubmatrixIndex(res.argmax.cols, res.argmax.rows),
                          res.method, res.restarts_used, res.iterations)
    if start != "cols":
        raise ConfigError(f"start must be 'cols' or 'rows', got {start!r}")
    rng = as_generator(seed)
    inits = random_column_starts(rng, restarts, N, n)
    value, I, J, sweeps = _climb_restarts(X, m, n, inits, max_iter)
    if np.any(sweeps < 0):
        raise ConvergenceError(f"hill-climb did not reach a fixed point in {max_iter} sweeps")
    return ScanResult(float(value), SubmatrixIndex(I.tolist(), J.tolist()), HILLCLIMB,
                      restarts, tuple(int(s) for s in sweeps))


def hillclimb_trace(X, m: int, n: int, cols0, max_iter: int = MAX_ITER) -> np.ndarray:
    """Objective value after every half step of one restart from ``cols0``."""
    X = as_matrix(X)
    _check_size(*X.shape, m, n)
    trace = np.full(2 * max_iter, np.nan)
    _, _, sweeps, t = _climb(X, m, n, np.asarray(cols0, np.int64), max_iter, trace)
    if sweeps < 0:
        raise ConvergenceError(f"hill-climb did not reach a fixed point in {max_iter} sweeps")
    return trace[:t]


def scan_batch(Xs, m: int, n: int, restarts: int, rng, max_iter: int = MAX_ITER) -> np.ndarray:
    """Hill-climb scan values of a stack of matrices of shape ``(B, M, N)``."""
    Xs = np.ascontiguousarray(Xs, dtype=np.float64)
    B, M, N = Xs.shape
    _check_size(M, N, m, n)
    inits = random_column_starts(rng, B * restarts, N, n).reshape(B, restarts, n)
    values, failed = _scan_batch(Xs, m, n, inits, max_iter)
    if failed >= 0:
        raise ConvergenceError(f"hill-climb did not reach a fixed point in {max_iter} sweeps")
    return values


def enumeration_size(M: int, N: int, m: int, n: int) -> int:
    return math.comb(M, m) * math.comb(N, n)


def scan_exact(X, m: int, n: int, cap: int = ENUMERATION_CAP) -> ScanResult:
    """Exact scan by enumerating all row subsets.

    For each ``m``-subset of rows the best column set is the top ``n``
    column sums, so only ``C(M, m)`` subsets are visited.  Ties between
    maximizers go to the lexicographically smallest ``(rows, cols)``.

    Raises
    ------
    EnumerationTooLargeError
        If ``C(M, m) * C(N, n)`` exceeds ``cap``.
    """
    X = as_matrix(X)
    M, N = X.shape
    _check_size(M, N, m, n)
    size = enumeration_size(M, N, m, n)
    if size > cap:
        raise EnumerationTooLargeError(
            f"exact scan needs {size:.3g} subsets (cap {cap:.3g}); use the hill-climb method"
        )
    chunk = max(1, 4_000_000 // (m * N))
    combos = itertools.combinations(range(M), m)
    best_val = -np.inf
    best_rows = None
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, chunk)),
                            dtype=np.int64)
        if block.size == 0:
            break
        rows = block.reshape(-1, m)
        colsums = X[rows].sum(axis=1)
        top = -np.sort(-colsums, axis=1)[:, :n].sum(axis=1)
        k = int(np.argmax(top))
        if top[k] > best_val:
            best_val = top[k]
            best_rows = rows[k]
    J = _top_k(X[best_rows].sum(axis=0), n)
    value = _block_sum(X, best_rows, J)
    return ScanResult(float(value), SubmatrixIndex(best_rows.tolist(), J.tolist()), EXACT)


def scan(X, m: int, n: int, method: str = HILLCLIMB, restarts: int = DEFAULT_RESTARTS, seed=0) -> ScanResult:
    if method == EXACT:
        return scan_exact(X, m, n)
    if method == HILLCLIMB:
        return scan_hillclimb(X, m, n, restarts, seed)
    raise ConfigError(f"unknown scan method {method!r}")


def scan_grid_bonferroni(sizes, per_size_pvalue) -> float:
    """Bonferroni combination over a grid of submatrix sizes.

    Returns ``min(1, len(sizes) * min p)`` where ``p = per_size_pvalue(m, n)``.
    """
    sizes = list(sizes)
    if not sizes:
        raise ConfigError("size grid must be non-empty")
    pvals = []
    for m, n in sizes:
        p = float(per_size_pvalue(m, n))
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"p-value {p} for size {m}x{n} outside [0, 1]")
        pvals.append(p)
    return min(1.0, len(sizes) * min(pvals))
