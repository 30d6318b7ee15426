import csv
import io

import numpy as np
import pytest

from submatrix_scan import cli
from submatrix_scan.harness import PROFILES
from submatrix_scan.model import AnomalySpec, generate_matrix, write_matrix_csv
from submatrix_scan.ranks import CACHE_ENV
from submatrix_scan.theory import theta_crit


def run(argv):
    out = io.StringIO()
    code = cli.main(argv, out)
    return code, out.getvalue()


def csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def planted(tmp_path):
    X = generate_matrix(20, 15, AnomalySpec.leading_block(3, 3, 3.0), seed=1)
    path = tmp_path / "planted.csv"
    write_matrix_csv(X, path)
    return path


@pytest.mark.parametrize("method", cli.DETECT_METHODS)
def test_constant_matrix_no_detection(tmp_path, method):
    path = tmp_path / "const.csv"
    write_matrix_csv(np.full((8, 6), 1.0), path)
    code, text = run(["detect", "--input", str(path), "--m", "2", "--n", "2", "--method", method, "--B", "99"])
    assert code == 0
    assert "decision:   no detection at alpha=0.05" in text
    if method.startswith("perm"):
        assert "p-value:    1\n" in text


@pytest.mark.parametrize("method", ["rank-uni", "rank-bi"])
def test_constant_matrix_rank_pvalue_is_valid(tmp_path, method):
    # random tie-breaking turns a constant matrix into a random null ranking,
    # so the rank p-value is not close to one but still super-uniform
    path = tmp_path / "const.csv"
    write_matrix_csv(np.full((8, 6), 1.0), path)
    p = []
    for seed in range(200):
        _, text = run(["detect", "--input", str(path), "--m", "2", "--n", "2", "--method", method, "--B", "99",
                       "--seed", str(seed), "--csv"])
        p.append(float(csv_rows(text)[0]["p_value"]))
    p = np.array(p)
    for alpha in (0.05, 0.1, 0.5):
        assert np.mean(p <= alpha) <= alpha + 3 * np.sqrt(alpha * (1 - alpha) / p.size)
    assert p.min() < 0.9


def test_detect_text_report(planted):
    code, text = run(["detect", "--input", str(planted), "--m", "3", "--n", "3", "--B", "99", "--seed", "4"])
    assert code == 0
    assert "rows [0, 1, 2]" in text and "cols [0, 1, 2]" in text
    assert "decision:   detect at alpha=0.05" in text
    assert "p-value:    0.01" in text


def test_detect_csv_is_byte_stable(planted):
    argv = ["detect", "--input", str(planted), "--m", "3", "--n", "3", "--B", "49", "--csv", "--method", "rank-bi"]
    first, second = run(argv), run(argv)
    assert first == second
    rows = csv_rows(first[1])
    assert len(rows) == 1 and rows[0]["rows"] == "0 1 2" and rows[0]["decision"] == "1"


def test_detect_grid_is_bonferroni(planted):
    code, text = run(["detect", "--input", str(planted), "--grid", "2x2,3x3", "--B", "99", "--csv",
                      "--estimator", "plain"])
    assert code == 0
    rows = csv_rows(text)
    assert [r["m"] for r in rows] == ["2", "3", "bonferroni"]
    p = [float(r["p_value"]) for r in rows]
    assert p[2] == min(1.0, 2 * min(p[:2]))
    code, text = run(["detect", "--input", str(planted), "--grid", "2x2,3x3", "--B", "99"])
    assert "Bonferroni over 2 sizes" in text


@pytest.mark.parametrize(
    "extra",
    [["--m", "30", "--n", "2"], ["--m", "2"], ["--grid", "2x2", "--m", "2", "--n", "2"], ["--grid", "2by2"],
     ["--m", "2", "--n", "2", "--alpha", "1.5"], ["--m", "2", "--n", "2", "--B", "0"],
     ["--m", "2", "--n", "2", "--method", "oracle", "--family", "cauchy"]],
)
def test_detect_config_errors(planted, extra, capsys):
    code, text = run(["detect", "--input", str(planted)] + extra)
    assert code == 2 and text == ""
    assert "error:" in capsys.readouterr().err


def test_detect_parse_error_has_line(tmp_path, capsys):
    path = tmp_path / "ragged.csv"
    path.write_text("1,2,3\n4,5,6\n7,8\n")
    code, _ = run(["detect", "--input", str(path), "--m", "1", "--n", "1"])
    assert code == 2
    assert "line 3" in capsys.readouterr().err


def test_detect_infeasible_exact(tmp_path):
    path = tmp_path / "big.csv"
    write_matrix_csv(generate_matrix(40, 40, seed=0), path)
    code, _ = run(["detect", "--input", str(path), "--m", "10", "--n", "10", "--scan", "exact", "--B", "1"])
    assert code == 2


def test_detect_power_at_twice_threshold(tmp_path):
    M, N, m, n = 60, 40, 8, 6
    anomaly = AnomalySpec.leading_block(m, n, 2 * theta_crit(M, N, m, n))
    path = tmp_path / "x.csv"
    hits = 0
    for r in range(100):
        write_matrix_csv(generate_matrix(M, N, anomaly, seed=1000 + r), path)
        code, text = run(["detect", "--input", str(path), "--m", str(m), "--n", str(n), "--method", "perm-bi",
                          "--B", "500", "--seed", str(r), "--csv"])
        assert code == 0
        hits += csv_rows(text)[0]["decision"] == "1"
    assert hits >= 95


def test_theory_report():
    code, text = run(["theory", "--M", "200", "--N", "100", "--m", "10", "--n", "15", "--K", "10000"])
    assert code == 0
    assert "theta_crit                 0.882528" in text
    assert "rank threshold factor      1.023327" in text
    code, text = run(["theory", "--M", "200", "--N", "100", "--m", "10", "--n", "15", "--K", "10000", "--csv"])
    values = dict(row for row in csv.reader(io.StringIO(text)))
    assert float(values["theta_crit"]) == pytest.approx(0.8825276, abs=1e-7)
    assert values["warn_log_ratio"] == "0" and values["warn_log3_ratio"] == "1"
    assert run(["theory", "--M", "200", "--N", "100", "--m", "10", "--n", "15", "--K", "10000", "--csv"])[1] == text


def test_theory_invalid_dims():
    assert run(["theory", "--M", "5", "--N", "5", "--m", "6", "--n", "1"])[0] == 2
    assert run(["theory", "--M", "5", "--N", "5", "--m", "1", "--n", "1", "--K", "10"])[0] == 2


def test_table_build_and_show(tmp_path):
    code, text = run(["table", "build", "--M", "10", "--N", "8", "--m", "2", "--n", "2", "--B", "40",
                      "--scheme", "uni", "--cache-dir", str(tmp_path)])
    assert code == 0 and "ranknull_M10_N8_m2_n2_uni_B40" in text
    files = list(tmp_path.glob("ranknull_*.npy"))
    assert len(files) == 1
    code, shown = run(["table", "show", str(files[0]), "--csv"])
    assert code == 0
    row = csv_rows(shown)[0]
    assert row["M"] == "10" and row["scheme"] == "uni" and row["B"] == "40"


def test_table_errors(tmp_path):
    assert run(["table", "build", "--M", "10"])[0] == 2
    assert run(["table", "show", str(tmp_path / "ranknull_nothing.npy")])[0] in (1, 2)


def test_sweep_small(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path / "cache"))
    out = tmp_path / "s.csv"
    argv = ["sweep", "--M", "20", "--N", "15", "--m", "3", "--n", "3", "--replicates", "3", "--B", "19",
            "--restarts", "3", "--multipliers", "0.5,1.5", "--methods", "perm_uni,rank_bi", "--out", str(out),
            "--quiet"]
    code, text = run(argv)
    assert code == 0 and "kappa" in text
    assert len(out.read_text().splitlines()) == 1 + 2 * 2 * 3
    assert (tmp_path / "s_summary.csv").exists()
    assert any((tmp_path / "cache").glob("ranknull_*.npy"))
    first = out.read_bytes()
    run(argv)
    assert out.read_bytes() == first


def test_sweep_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("M = 20\nN = 15\nm = 3\nn = 3\nreplicates = 2\nB = 9\nrestarts = 2\n"
                   "theta_multipliers = 1.0\nmethods = oracle\n")
    out = tmp_path / "r.csv"
    code, _ = run(["sweep", "--config", str(cfg), "--out", str(out), "--quiet", "--replicates", "4"])
    assert code == 0 and len(out.read_text().splitlines()) == 1 + 4


@pytest.mark.parametrize(
    "extra",
    [["--m", "99"], ["--methods", "oracle,nope"], ["--multipliers", "1.0,0.5"], ["--profile", "desk", "--config", "x"]],
)
def test_sweep_config_error_creates_no_file(tmp_path, extra):
    out = tmp_path / "never.csv"
    code, _ = run(["sweep", "--out", str(out), "--quiet"] + extra)
    assert code == 2
    assert not out.exists() and not (tmp_path / "never_summary.csv").exists()


def test_sweep_missing_output_dir(tmp_path):
    assert run(["sweep", "--out", str(tmp_path / "no" / "x.csv"), "--quiet", "--replicates", "1"])[0] == 2


def test_full_scale_profiles_map_to_sizes():
    parser = cli.build_parser()
    for profile, dims in (("paper-normal-1", (200, 100, 10, 15)), ("paper-normal-2", (200, 100, 30, 10))):
        cfg = cli._sweep_config(parser.parse_args(["sweep", "--profile", profile]))
        assert (cfg.M, cfg.N, cfg.m, cfg.n) == dims
        assert cfg == PROFILES[profile]
        assert (cfg.replicates, cfg.B) == (200, 500)


def test_threads_flag_validated():
    assert run(["sweep", "--threads", "0", "--quiet"])[0] == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0
    assert "submatrix-scan" in capsys.readouterr().out
