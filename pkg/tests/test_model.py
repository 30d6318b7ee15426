import math

import numpy as np
import pytest

from submatrix_scan.errors import ConfigError, MatrixParseError, ParameterDomainError
from submatrix_scan.model import (
    AnomalySpec,
    Family,
    FamilySpec,
    generate_matrix,
    read_matrix_csv,
    sample_entry,
    write_matrix_csv,
)
from submatrix_scan.rng import substream

K = 10**6


@pytest.mark.parametrize("family", list(Family))
def test_null_member_is_standardized(family):
    x = FamilySpec(family, 0.0).sample(K, substream(1, family is Family.POISSON))
    mean, var = x.mean(), x.var(ddof=1)
    assert abs(mean) <= 4 * math.sqrt(var / K)
    # SE of the sample variance: sqrt((mu4 - sigma^4) / K)
    mu4 = np.mean((x - mean) ** 4)
    assert abs(var - 1.0) <= 4 * math.sqrt((mu4 - var**2) / K)


def test_documented_examples_at_zero():
    assert abs(FamilySpec("normal").sample(K, substream(2)).mean()) <= 0.004
    assert abs(FamilySpec("poisson").sample(K, substream(3)).var() - 1.0) <= 0.01
    assert abs(np.mean(FamilySpec("rademacher").sample(K, substream(4)) == 1.0) - 0.5) <= 0.002


@pytest.mark.parametrize("family", list(Family))
def test_mean_increases_with_theta(family):
    thetas = [0.0, 0.25, 0.5, 1.0]
    means = [FamilySpec(family, t).sample(200_000, substream(5, i)).mean() for i, t in enumerate(thetas)]
    assert all(a < b for a, b in zip(means, means[1:]))
    for t, mu in zip(thetas, means):
        assert mu >= t - 0.02 or family is Family.RADEMACHER


@pytest.mark.parametrize("family", list(Family))
def test_theoretical_moments_match(family):
    spec = FamilySpec(family, 0.7)
    x = spec.sample(400_000, substream(6))
    assert x.mean() == pytest.approx(spec.mean(), abs=5 * math.sqrt(spec.variance() / x.size))
    assert x.var() == pytest.approx(spec.variance(), rel=0.02)


def test_rademacher_tilt_probability():
    t = 0.4
    x = FamilySpec("rademacher", t).sample(K, substream(7))
    p = math.exp(t) / (math.exp(t) + math.exp(-t))
    assert np.mean(x == 1) == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / K))
    assert set(np.unique(x)) == {-1.0, 1.0}


def test_poisson_support_is_shifted_integers():
    x = FamilySpec("poisson", 0.3).sample(10_000, substream(8))
    assert x.min() >= -1
    assert np.all(x == np.round(x))


@pytest.mark.parametrize("theta", [-0.1, math.inf, math.nan])
def test_invalid_theta(theta):
    with pytest.raises(ParameterDomainError):
        FamilySpec("normal", theta)


def test_unknown_family():
    with pytest.raises(ConfigError):
        Family.parse("cauchy")


def test_sample_entry_scalar():
    v = sample_entry(FamilySpec("normal", 1.0), substream(9))
    assert isinstance(v, float)


def test_generate_is_deterministic():
    a = AnomalySpec.leading_block(3, 4, 1.0)
    X1 = generate_matrix(20, 10, a, "normal", seed=42)
    X2 = generate_matrix(20, 10, a, "normal", seed=42)
    assert X1.tobytes() == X2.tobytes()
    assert not np.array_equal(X1, generate_matrix(20, 10, a, "normal", seed=43))


def test_null_column_means():
    reps = 100_000
    means = np.mean([generate_matrix(3, 3, seed=s) for s in range(reps)], axis=0).mean(axis=0)
    assert np.all(np.abs(means) <= 0.02)


def test_planted_block_is_elevated():
    a = AnomalySpec.leading_block(10, 15, 1.0)
    hits = 0
    for s in range(20):
        X = generate_matrix(200, 100, a, "normal", seed=s)
        mask = np.zeros_like(X, dtype=bool)
        mask[:10, :15] = True
        hits += X[mask].mean() > X[~mask].mean()
    assert hits == 20


def test_anomaly_out_of_range():
    with pytest.raises(IndexError):
        generate_matrix(5, 5, AnomalySpec((0, 5), (1,), 1.0), seed=0)


def test_anomaly_validation():
    with pytest.raises(ConfigError):
        AnomalySpec((1, 1), (0,), 1.0)
    with pytest.raises(ParameterDomainError):
        AnomalySpec((1,), (0,), 0.0)


def test_csv_round_trip(tmp_path):
    X = generate_matrix(4, 3, seed=1)
    path = tmp_path / "x.csv"
    write_matrix_csv(X, path)
    assert np.array_equal(read_matrix_csv(path), X)


@pytest.mark.parametrize(
    "text, line",
    [("1,2\n3\n", 2), ("1,2\n3,nan\n", 2), ("1,a\n", 1), ("1,inf\n", 1)],
)
def test_csv_rejects_bad_input(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(MatrixParseError) as info:
        read_matrix_csv(path)
    assert info.value.line == line


def test_csv_missing_file(tmp_path):
    with pytest.raises(MatrixParseError):
        read_matrix_csv(tmp_path / "absent.csv")
