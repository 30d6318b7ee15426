"""Data matrices, standardized exponential families and planted-anomaly generation.

Each family is a one-parameter exponential tilt of a base measure with mean 0
and variance 1:

* ``normal``: base N(0, 1); the tilt ``theta`` gives N(theta, 1).
* ``poisson``: base Poisson(1) - 1; the tilt gives Poisson(exp(theta)) - 1.
* ``rademacher``: base uniform on {-1, +1}; the tilt gives
  P(+1) = exp(theta) / (exp(theta) + exp(-theta)).

All three have an unbounded natural-parameter range (``theta_star = inf``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, MatrixParseError, ParameterDomainError
from .rng import as_generator


class Family(str, Enum):
    NORMAL = "normal"
    POISSON = "poisson"
    RADEMACHER = "rademacher"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"poissonshifted": "poisson", "gaussian": "normal"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise ConfigError(f"unknown family {value!r}; expected one of {choices}") from None

    @property
    def theta_star(self) -> float:
        return math.inf

    @property
    def is_discrete(self) -> bool:
        return self is not Family.NORMAL


@dataclass(frozen=True)
class FamilySpec:
    """A member ``f_theta`` of one of the supported families."""

    family: Family
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        theta = float(self.theta)
        if not math.isfinite(theta) or theta < 0 or theta >= self.family.theta_star:
            raise ParameterDomainError(
                f"theta={self.theta!r} outside [0, {self.family.theta_star}) for {self.family.value}"
            )
        object.__setattr__(self, "theta", theta)

    def mean(self) -> float:
        t = self.theta
        if self.family is Family.NORMAL:
            return t
        if self.family is Family.POISSON:
            return math.exp(t) - 1.0
        return math.tanh(t)

    def variance(self) -> float:
        t = self.theta
        if self.family is Family.NORMAL:
            return 1.0
        if self.family is Family.POISSON:
            return math.exp(t)
        return 1.0 - math.tanh(t) ** 2

    def sample(self, size=None, rng=None):
        """Draw from ``f_theta``; returns a float or an array of shape ``size``."""
        rng = as_generator(rng)
        t = self.theta
        if self.family is Family.NORMAL:
            out = rng.normal(t, 1.0, size)
        elif self.family is Family.POISSON:
            out = rng.poisson(math.exp(t), size) - 1.0
        else:
            p_plus = 1.0 / (1.0 + math.exp(-2.0 * t))
            out = np.where(rng.random(size) < p_plus, 1.0, -1.0)
        if size is None:
            return float(out)
        return np.asarray(out, dtype=np.float64)


def sample_entry(spec: FamilySpec, rng=None) -> float:
    """One draw from ``spec``."""
    return spec.sample(None, rng)


@dataclass(frozen=True)
class AnomalySpec:
    """Planted submatrix ``rows x cols`` with entries drawn from ``f_theta``."""

    rows: tuple
    cols: tuple
    theta: float

    def __post_init__(self):
        rows = tuple(sorted(int(i) for i in self.rows))
        cols = tuple(sorted(int(j) for j in self.cols))
        if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
            raise ConfigError("anomaly index sets must not contain duplicates")
        if not rows or not cols:
            raise ConfigError("anomaly index sets must be non-empty")
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ParameterDomainError("anomaly strength must be a positive finite number")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "theta", float(self.theta))

    @classmethod
    def leading_block(cls, m: int, n: int, theta: float) -> "AnomalySpec":
        """The block ``[m] x [n]`` in the upper-left corner."""
        return cls(tuple(range(m)), tuple(range(n)), theta)

    @property
    def shape(self):
        return len(self.rows), len(self.cols)


def generate_matrix(M: int, N: int, anomaly: AnomalySpec | None = None, family="normal", seed=0):
    """Draw an ``M x N`` matrix with i.i.d. ``f_0`` entries and an optional planted block.

    Entries in ``anomaly.rows x anomaly.cols`` are drawn from ``f_theta``
    instead.  The result is a deterministic function of the arguments.
    """
    if M < 1 or N < 1:
        raise ConfigError(f"matrix dimensions must be positive, got {M}x{N}")
    family = Family.parse(family)
    if anomaly is not None:
        if anomaly.rows[-1] >= M or anomaly.cols[-1] >= N or anomaly.rows[0] < 0 or anomaly.cols[0] < 0:
            raise IndexError(f"anomaly indices do not fit in a {M}x{N} matrix")
    rng = as_generator(seed)
    X = FamilySpec(family, 0.0).sample((M, N), rng)
    if anomaly is not None:
        m, n = anomaly.shape
        block = FamilySpec(family, anomaly.theta).sample((m, n), rng)
        X[np.ix_(anomaly.rows, anomaly.cols)] = block
    return X


def as_matrix(X) -> np.ndarray:
    """Validate and convert to a C-contiguous float64 ``M x N`` array."""
    A = np.ascontiguousarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise ConfigError(f"expected a 2-d matrix, got {A.ndim} dimension(s)")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ConfigError("matrix must have at least one row and one column")
    if not np.all(np.isfinite(A)):
        raise ConfigError("matrix contains non-finite values")
    return A


def read_matrix_csv(path) -> np.ndarray:
    """Read a header-less CSV of reals, one matrix row per line."""
    path = Path(path)
    rows = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise MatrixParseError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise MatrixParseError(f"non-numeric entry in {path}", lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise MatrixParseError(f"non-finite entry in {path}", lineno)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise MatrixParseError(
                    f"ragged row in {path}: {len(values)} fields, expected {width}", lineno
                )
            rows.append(values)
    if not rows:
        raise MatrixParseError(f"{path} contains no data")
    return np.array(rows, dtype=np.float64)


def write_matrix_csv(X, path) -> None:
    X = as_matrix(X)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in X:
            writer.writerow([repr(float(v)) for v in row])
