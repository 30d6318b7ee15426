import math

import mpmath as mp
import pytest

from submatrix_scan.errors import ConfigError
from submatrix_scan.model import FamilySpec
from submatrix_scan.rng import substream
from submatrix_scan.theory import (
    rank_threshold,
    regime_report,
    scan_condition_lhs,
    sum_condition_ratio,
    theta_crit,
    upsilon,
    upsilon_exact,
)

mp.mp.dps = 40


def theta_crit_mp(M, N, m, n):
    M, N = mp.mpf(M), mp.mpf(N)
    return mp.sqrt(2 * (m * mp.log(M / m) + n * mp.log(N / n)) / (m * n))


@pytest.mark.parametrize(
    "dims, frozen",
    [((200, 100, 10, 15), 0.8825276011459217), ((200, 100, 30, 10), 0.7300203215277270)],
)
def test_theta_crit_examples(dims, frozen):
    assert theta_crit(*dims) == pytest.approx(float(theta_crit_mp(*dims)), abs=1e-12)
    assert theta_crit(*dims) == pytest.approx(frozen, abs=1e-12)


def test_theta_crit_rounded_value():
    assert abs(theta_crit(200, 100, 10, 15) - 0.8825) <= 1e-4


def test_theta_crit_full_matrix_is_zero():
    assert theta_crit(7, 5, 7, 5) == 0.0


@pytest.mark.parametrize("dims", [(5, 5, 0, 1), (5, 5, 6, 1), (5, 5, 1, 6), (5.0, 5, 1, 1)])
def test_theta_crit_invalid(dims):
    with pytest.raises(ConfigError):
        theta_crit(*dims)


def test_theta_crit_symmetric():
    for M, N, m, n in [(200, 100, 10, 15), (60, 40, 8, 6), (9, 31, 2, 5)]:
        assert theta_crit(M, N, m, n) == pytest.approx(theta_crit(N, M, n, m), rel=1e-14)


def test_theta_crit_decreasing_in_sizes():
    M, N = 80, 50
    for m in range(1, M):
        for n in range(1, N, 7):
            assert theta_crit(M, N, m + 1, n) < theta_crit(M, N, m, n)
    for n in range(1, N):
        for m in range(1, M, 9):
            assert theta_crit(M, N, m, n + 1) < theta_crit(M, N, m, n)


def test_scan_condition_lhs():
    dims = (200, 100, 10, 15)
    tc = theta_crit(*dims)
    assert scan_condition_lhs(tc, *dims) == pytest.approx(1.0, rel=1e-14)
    assert scan_condition_lhs(1.5 * tc, *dims) == pytest.approx(1.5, rel=1e-14)
    assert scan_condition_lhs(0.0, *dims) == 0.0
    with pytest.raises(ConfigError):
        scan_condition_lhs(1.0, 5, 5, 5, 5)
    with pytest.raises(ConfigError):
        scan_condition_lhs(-1.0, *dims)


def test_sum_condition_ratio():
    assert sum_condition_ratio(2.0, 100, 25, 5, 5) == pytest.approx(2.0 * 25 / 50)


def test_upsilon_normal_closed_form():
    integral = mp.quad(lambda z: z * mp.npdf(z) * mp.ncdf(z), [-mp.inf, mp.inf])
    assert upsilon_exact("normal") == pytest.approx(float(integral), abs=1e-15)
    assert upsilon_exact("normal") == pytest.approx(0.28209479177387814, abs=1e-15)


def test_upsilon_normal_monte_carlo():
    est = upsilon("normal", K=10**6, seed=1)
    assert abs(est.estimate - est.exact) <= 4 * est.std_error
    assert est.samples == 10**6


def test_upsilon_rademacher():
    assert upsilon_exact("rademacher") == 0.25
    est = upsilon("rademacher", K=10**5, seed=2)
    assert abs(est.estimate - 0.25) <= 4 * est.std_error


def test_upsilon_poisson_against_direct_simulation():
    exact = upsilon_exact("poisson")
    rng = substream(3)
    null = FamilySpec("poisson", 0.0)
    K = 10**6
    y, z = null.sample(K, rng), null.sample(K, rng)
    w = z * ((z > y) + 0.5 * (z == y))
    assert abs(w.mean() - exact) <= 4 * w.std() / math.sqrt(K)
    est = upsilon("poisson", K=10**6, seed=4)
    assert abs(est.estimate - exact) <= 4 * est.std_error


def test_upsilon_needs_enough_samples():
    with pytest.raises(ConfigError):
        upsilon("normal", K=9999)


def test_rank_threshold():
    assert rank_threshold(upsilon_exact("normal")) == pytest.approx(float(mp.sqrt(mp.pi / 3)), abs=1e-14)
    assert round(rank_threshold(upsilon_exact("normal")), 3) == 1.023
    with pytest.raises(ConfigError):
        rank_threshold(0.0)


def test_regime_report_examples():
    rep = regime_report(200, 100, 10, 15)
    assert rep.log_ratio == pytest.approx(0.5298317366548036, abs=1e-12)
    assert not rep.flags["log_ratio"] and not rep.flags["fractions"]
    full = regime_report(10, 10, 10, 10)
    assert full.row_fraction == 1.0 and full.flags["fractions"] and full.any_warning
    tiny = regime_report(200, 100, 2, 2)
    assert tiny.log3_ratio == pytest.approx(74.36762474559945, rel=1e-12)
    assert tiny.flags["log3_ratio"]


def test_regime_report_thresholds_configurable():
    rep = regime_report(200, 100, 10, 15, log_ratio_warn=0.5)
    assert rep.flags["log_ratio"]
    rep = regime_report(200, 100, 10, 15, log3_ratio_warn=100.0)
    assert not rep.any_warning
    for value in (rep.row_fraction, rep.col_fraction, rep.log_ratio, rep.log3_ratio):
        assert math.isfinite(value)
    assert 0 < rep.row_fraction <= 1 and 0 < rep.col_fraction <= 1
