"""Detection thresholds and regime diagnostics.

``theta_crit`` is the signal strength at which the scan test (calibrated
parametrically or by permutation) starts to have asymptotic power one.
Rank scans need a multiple ``1 / (2 sqrt(3) upsilon)`` of it, where

    upsilon = E[Z 1{Z > Y}] + E[Z 1{Z = Y}] / 2,   Y, Z i.i.d. from the null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError
from .model import Family, FamilySpec
from .rng import DEFAULT_SEED, as_generator

# warn levels for the asymptotic conditions; conventions, not theory
FRACTION_WARN = 0.5
LOG_RATIO_WARN = 1.0
LOG3_RATIO_WARN = 1.0

_MASS_CUTOFF = 1.0 - 1e-12


def _check_dims(M, N, m, n):
    if not all(isinstance(v, (int, np.integer)) for v in (M, N, m, n)):
        raise ConfigError("dimensions must be integers")
    if not (1 <= m <= M and 1 <= n <= N):
        raise ConfigError(f"need 1 <= m <= M and 1 <= n <= N, got {(M, N, m, n)}")


def _entropy_term(M, N, m, n) -> float:
    return m * math.log(M / m) + n * math.log(N / n)


def theta_crit(M: int, N: int, m: int, n: int) -> float:
    """Critical signal strength ``sqrt(2 (m log(M/m) + n log(N/n)) / (m n))``."""
    _check_dims(M, N, m, n)
    return math.sqrt(2.0 * _entropy_term(M, N, m, n) / (m * n))


def scan_condition_lhs(theta: float, M: int, N: int, m: int, n: int) -> float:
    """Signal strength in units of ``theta_crit``."""
    _check_dims(M, N, m, n)
    if theta < 0:
        raise ConfigError("theta must be non-negative")
    denom = math.sqrt(2.0 * _entropy_term(M, N, m, n))
    if denom == 0.0:
        raise ConfigError("the full matrix (m=M, n=N) has no scan threshold")
    return theta * math.sqrt(m * n) / denom


def sum_condition_ratio(theta: float, M: int, N: int, m: int, n: int) -> float:
    """``theta m n / sqrt(M N)``, which must diverge for the sum test to have power."""
    _check_dims(M, N, m, n)
    return theta * m * n / math.sqrt(M * N)


def _discrete_support(family: Family):
    if family is Family.RADEMACHER:
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    if family is Family.POISSON:
        k_max = int(stats.poisson.ppf(_MASS_CUTOFF, 1.0)) + 1
        k = np.arange(k_max + 1)
        return k - 1.0, stats.poisson.pmf(k, 1.0)
    raise ConfigError(f"{family.value} is not discrete")


def upsilon_exact(family) -> float:
    """Closed form (normal) or support enumeration (discrete families)."""
    family = Family.parse(family)
    if family is Family.NORMAL:
        return 1.0 / (2.0 * math.sqrt(math.pi))
    z, p = _discrete_support(family)
    greater = (z[:, None] > z[None, :]).astype(float)
    weights = p[:, None] * p[None, :] * (greater + 0.5 * (z[:, None] == z[None, :]))
    return float(np.sum(z[:, None] * weights))


def _tie_term(family: Family) -> float:
    if not family.is_discrete:
        return 0.0
    z, p = _discrete_support(family)
    return 0.5 * float(np.sum(z * p * p))


@dataclass(frozen=True)
class UpsilonEstimate:
    estimate: float
    std_error: float
    samples: int
    exact: float | None = None


def upsilon(family="normal", K: int = 10**6, seed=DEFAULT_SEED) -> UpsilonEstimate:
    """Monte Carlo estimate of upsilon with its standard error.

    The strict part ``E[Z 1{Z > Y}]`` is simulated from ``K`` pairs; the tie
    part is computed exactly (it vanishes for the normal family).
    """
    family = Family.parse(family)
    if K < 10**4:
        raise ConfigError("upsilon needs at least 10^4 samples")
    rng = as_generator(seed)
    null = FamilySpec(family, 0.0)
    total = 0.0
    total_sq = 0.0
    chunk = 10**6
    done = 0
    while done < K:
        size = min(chunk, K - done)
        y = null.sample(size, rng)
        z = null.sample(size, rng)
        w = np.where(z > y, z, 0.0)
        total += float(w.sum())
        total_sq += float(np.dot(w, w))
        done += size
    mean = total / K
    var = max(total_sq / K - mean * mean, 0.0) * K / (K - 1)
    return UpsilonEstimate(mean + _tie_term(family), math.sqrt(var / K), K, upsilon_exact(family))


def rank_threshold(ups: float) -> float:
    """Rank-scan detection threshold in units of ``theta_crit``."""
    if ups <= 0:
        raise ConfigError("upsilon must be positive")
    return 1.0 / (2.0 * math.sqrt(3.0) * ups)


@dataclass(frozen=True)
class RegimeReport:
    """How far ``(M, N, m, n)`` is from the asymptotic regime.

    A flag is True when the corresponding quantity exceeds its warn level.
    """

    row_fraction: float
    col_fraction: float
    log_ratio: float
    log3_ratio: float
    flags: dict = field(default_factory=dict)

    @property
    def any_warning(self) -> bool:
        return any(self.flags.values())


def regime_report(M: int, N: int, m: int, n: int, fraction_warn: float = FRACTION_WARN,
                  log_ratio_warn: float = LOG_RATIO_WARN,
                  log3_ratio_warn: float = LOG3_RATIO_WARN) -> RegimeReport:
    _check_dims(M, N, m, n)
    log_mn = math.log(max(M, N))
    small = min(m, n)
    row_fraction, col_fraction = m / M, n / N
    log_ratio = log_mn / small
    log3_ratio = log_mn**3 / small
    flags = {
        "fractions": max(row_fraction, col_fraction) > fraction_warn,
        "log_ratio": log_ratio > log_ratio_warn,
        "log3_ratio": log3_ratio > log3_ratio_warn,
    }
    return RegimeReport(row_fraction, col_fraction, log_ratio, log3_ratio, flags)
