import csv
import shutil
import subprocess
import sys

import pytest

from volterra_figures.cli import (main_moments, main_rate,
                                  main_trajectories)
from volterra_figures.io import SchemaError, load_rows
from volterra_figures.plots import FigureJob, render

RATE_HEADER = ["eps", "p", "lp_error", "lp_error_pth_root", "std_error",
               "paths", "steps", "exact", "slope", "intercept", "r_squared"]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def synthetic_rate_csv(path, slope=0.5):
    eps = [0.25, 0.125, 0.0625, 0.03125, 0.015625]
    rows = []
    for e in eps:
        err = e ** slope
        rows.append([repr(e), "2.0", repr(err ** 2), repr(err), "0.0",
                     "100", "64", "False", repr(slope), "0.0", "1.0"])
    write_csv(path, RATE_HEADER, rows)


def synthetic_moments_csv(path):
    rows = []
    for j in range(1, 33):
        t = j / 32.0
        rows.append([repr(t), "2.0", repr(t), repr(0.01 * t),
                     "NormalizedZeps", "0.25"])
    write_csv(path, ["t", "p", "estimate", "std_error", "label", "eps"], rows)


class TestRateFigure:
    def test_half_slope_annotation(self, tmp_path):
        src = tmp_path / "rate.csv"
        synthetic_rate_csv(src, slope=0.5)
        out = tmp_path / "rate.png"
        summary = render(FigureJob((str(src),), "rate", str(out)))
        assert summary["slope"][2.0] == pytest.approx(0.5, abs=1e-12)
        assert out.exists() and out.stat().st_size > 0

    def test_exact_rows_excluded(self, tmp_path):
        src = tmp_path / "rate.csv"
        rows = [["0.25", "2.0", "0.25", "0.5", "0.0", "10", "8", "False",
                 "0.5", "0.0", "1.0"],
                ["0.125", "2.0", "0.125", "0.35355339059327373", "0.0", "10",
                 "8", "False", "0.5", "0.0", "1.0"],
                ["0.0625", "2.0", "0.0625", "0.25", "0.0", "10", "8", "False",
                 "0.5", "0.0", "1.0"],
                ["0.03125", "2.0", "0.0", "0.0", "0.0", "10", "8", "True",
                 "0.5", "0.0", "1.0"]]
        write_csv(src, RATE_HEADER, rows)
        summary = render(FigureJob((str(src),), "rate",
                                   str(tmp_path / "rate.png")))
        assert summary["slope"][2.0] == pytest.approx(0.5, abs=1e-6)

    def test_slope_mismatch_fails_loudly(self, tmp_path):
        src = tmp_path / "rate.csv"
        synthetic_rate_csv(src, slope=0.5)
        rows = load_rows(src, "rate")
        for r in rows:
            r["slope"] = "0.75"  # stored slope no longer matches the data
        write_csv(src, RATE_HEADER, [[r[c] for c in RATE_HEADER]
                                     for r in rows])
        with pytest.raises(SchemaError, match="disagrees"):
            render(FigureJob((str(src),), "rate", str(tmp_path / "x.png")))

    def test_missing_column_exit_code(self, tmp_path, capsys):
        src = tmp_path / "rate.csv"
        write_csv(src, ["eps", "p"], [["0.25", "2.0"]])
        code = main_rate(["--in", str(src), "--out",
                          str(tmp_path / "x.png")])
        assert code == 1
        err = capsys.readouterr().err
        assert "missing column" in err
        assert "lp_error" in err

    def test_empty_input_exit_code(self, tmp_path, capsys):
        src = tmp_path / "rate.csv"
        write_csv(src, RATE_HEADER, [])
        assert main_rate(["--in", str(src), "--out",
                          str(tmp_path / "x.png")]) == 1
        assert "no rows" in capsys.readouterr().err

    def test_deterministic_bytes(self, tmp_path):
        src = tmp_path / "rate.csv"
        synthetic_rate_csv(src)
        out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
        assert main_rate(["--in", str(src), "--out", str(out1),
                          "--title", "rate"]) == 0
        assert main_rate(["--in", str(src), "--out", str(out2),
                          "--title", "rate"]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestMomentsFigure:
    def test_linear_variance_slope_annotation(self, tmp_path):
        src = tmp_path / "moments.csv"
        synthetic_moments_csv(src)
        summary = render(FigureJob((str(src),), "moments",
                                   str(tmp_path / "m.png")))
        slopes = list(summary["slope_vs_t"].values())
        assert slopes and 0.9 <= slopes[0] <= 1.1

    def test_cli(self, tmp_path):
        src = tmp_path / "moments.csv"
        synthetic_moments_csv(src)
        assert main_moments(["--in", str(src), "--out",
                             str(tmp_path / "m.png")]) == 0


class TestTrajectoriesFigure:
    def test_fan(self, tmp_path):
        files = []
        for k in range(3):
            f = tmp_path / f"trajectory_LimitZ_epsna_path{k}.csv"
            write_csv(f, ["t", "v_1"],
                      [[repr(j / 8.0), repr(0.1 * k + j / 10.0)]
                       for j in range(9)])
            files.append(str(f))
        summary = render(FigureJob(tuple(files), "trajectories",
                                   str(tmp_path / "fan.png")))
        assert summary["curves"] == 3

    def test_schema(self, tmp_path, capsys):
        f = tmp_path / "bad.csv"
        write_csv(f, ["time", "value"], [["0", "1"]])
        assert main_trajectories(["--in", str(f), "--out",
                                  str(tmp_path / "x.png")]) == 1


class TestCovarianceFigure:
    def test_heatmap(self, tmp_path):
        src = tmp_path / "covariance.csv"
        rows = []
        for s in (0.5, 1.0):
            for t in (0.5, 1.0):
                target = s ** 1.4 + t ** 1.4 - abs(t - s) ** 1.4
                rows.append([repr(s), repr(t), repr(0.5 * target),
                             repr(target), "0.5"])
        write_csv(src, ["s", "t", "reconstructed", "target", "ratio"], rows)
        summary = render(FigureJob((str(src),), "covariance",
                                   str(tmp_path / "c.png")))
        assert summary["fitted_constant"] == pytest.approx(0.5)
        assert summary["max_residual"] == pytest.approx(0.0, abs=1e-12)


@pytest.fixture(scope="module")
def pipeline_rate_csv(tmp_path_factory):
    # Rate CSV produced by the simulation package through its command-line
    # surface: the headline experiment at a reduced path count.
    exe = shutil.which("volterra-clt")
    cmd = [exe] if exe else [sys.executable, "-m", "volterra_clt.cli"]
    tmp = tmp_path_factory.mktemp("pipeline")
    cfg = tmp / "cfg.ini"
    cfg.write_text("""
[experiment]
kind = clt-rate
T = 1.0
steps = 512
paths = 400
eps_ladder = 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625
p_values = 2
x0_set = 1.0
master_seed = 12345
out_dir = {out}

[model]
name = sin-drift
params = 1.0

[kernel_k1]
kind = rl
H = 0.7

[kernel_k2]
kind = rl
H = 0.7
""".format(out=tmp / "out"))
    proc = subprocess.run(cmd + ["--config", str(cfg)], capture_output=True,
                          text=True)
    if proc.returncode != 0:
        pytest.skip(f"simulation CLI unavailable: {proc.stderr[:200]}")
    return tmp / "out" / "rate.csv"


class TestPipelineRendering:
    def test_annotated_slope_matches_csv(self, pipeline_rate_csv, tmp_path):
        rows = load_rows(pipeline_rate_csv, "rate")
        stored = float(rows[0]["slope"])
        summary = render(FigureJob((str(pipeline_rate_csv),), "rate",
                                   str(tmp_path / "rate.png")))
        assert abs(summary["slope"][2.0] - stored) <= 1e-9

    def test_deterministic_across_invocations(self, pipeline_rate_csv,
                                              tmp_path):
        out1, out2 = tmp_path / "r1.png", tmp_path / "r2.png"
        assert main_rate(["--in", str(pipeline_rate_csv), "--out",
                          str(out1)]) == 0
        assert main_rate(["--in", str(pipeline_rate_csv), "--out",
                          str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
