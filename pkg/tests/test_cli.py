import csv
import hashlib
import json

import numpy as np

from volterra_clt.cli import main
from volterra_clt.config import config_to_text, validate

MINIMAL = """
[experiment]
kind = kernel-check
out_dir = {out}

[kernel_k1]
kind = rl
H = 0.75

[kernel_k2]
kind = rl
H = 0.75
"""

CLT_SMALL = """
[experiment]
kind = clt-rate
T = 1.0
steps = 64
paths = 40
eps_ladder = 0.25, 0.0625, 0.015625
p_values = 2
x0_set = 1.0
master_seed = 777
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
"""


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestValidate:
    def test_minimal_defaults(self):
        cfg, errors = validate("[experiment]\nkind = moments\n")
        assert errors == []
        assert cfg.steps == 512
        assert cfg.paths == 1000
        assert cfg.p_values == (2.0,)
        assert cfg.eps_ladder[0] == 0.25
        assert len(cfg.eps_ladder) == 7

    def test_bad_hurst_names_field(self):
        cfg, errors = validate(
            "[experiment]\nkind = moments\n[kernel_k1]\nkind = rl\nH = 1.5\n")
        assert cfg is None
        assert any("kernel_k1.H" in e for e in errors)

    def test_collects_multiple_errors(self):
        text = ("[experiment]\nkind = bogus\nT = -1\n"
                "[kernel_k1]\nkind = rl\nH = 1.5\n")
        cfg, errors = validate(text)
        assert cfg is None
        assert len(errors) >= 3

    def test_increasing_ladder_rejected(self):
        text = "[experiment]\nkind = moments\neps_ladder = 0.1, 0.2\n"
        cfg, errors = validate(text)
        assert cfg is None
        assert any("eps_ladder" in e for e in errors)

    def test_steps_power_of_two(self):
        cfg, errors = validate("[experiment]\nkind = moments\nsteps = 100\n")
        assert cfg is None
        assert any("steps" in e for e in errors)

    def test_auto_initial_grid(self):
        text = "[experiment]\nkind = moments\nx0_set = auto\nR = 2.0\n"
        cfg, errors = validate(text)
        assert errors == []
        assert len(cfg.x0_set) == 5
        assert cfg.x0_set[0] == (-2.0,)
        assert cfg.x0_set[-1] == (2.0,)

    def test_round_trip_through_text(self):
        cfg, errors = validate(CLT_SMALL.format(out="somewhere"))
        assert errors == []
        cfg2, errors2 = validate(config_to_text(cfg))
        assert errors2 == []
        assert cfg2 == cfg


class TestCliRuns:
    def test_missing_config_file(self, capsys):
        assert main(["--config", "/nonexistent.ini"]) == 1

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[experiment]\nkind = moments\neps_ladder = 0.1, 0.2\n")
        assert main(["--config", str(bad)]) == 1
        assert "eps_ladder" in capsys.readouterr().err

    def test_kernel_check_outputs(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(MINIMAL.format(out=tmp_path / "out"))
        assert main(["--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "hypcheck.csv")
        assert any(r["name"] == "HK1" and r["passed"] == "True" for r in rows)
        assert any(r["name"] == "HK2" for r in rows)
        manifest = json.loads((tmp_path / "out" / "run_manifest.json")
                              .read_text())
        assert manifest["master_seed"] == 12345
        assert "hypcheck.csv" in manifest["outputs"]

    def test_zero_model_rate_rows_exact(self, tmp_path):
        cfg_text = CLT_SMALL.format(out=tmp_path / "out").replace(
            "name = sin-drift\nparams = 1.0", "name = zero\n")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(cfg_text)
        assert main(["--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "rate.csv")
        assert rows
        assert all(r["exact"] == "True" for r in rows)
        assert all(r["slope"] == "" for r in rows)

    def test_clt_rate_csv_schema(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(CLT_SMALL.format(out=tmp_path / "out"))
        assert main(["--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "rate.csv")
        assert len(rows) == 3
        for col in ("eps", "p", "lp_error", "lp_error_pth_root", "std_error",
                    "paths", "steps", "exact", "slope", "intercept",
                    "r_squared"):
            assert col in rows[0]
        assert float(rows[0]["slope"]) == float(rows[1]["slope"])

    def test_seed_and_out_overrides(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(CLT_SMALL.format(out=tmp_path / "ignored"))
        out = tmp_path / "forced"
        assert main(["--config", str(cfg), "--out", str(out),
                     "--seed", "99"]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["master_seed"] == 99
        assert not (tmp_path / "ignored").exists()

    def test_idempotent_reproduction(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(CLT_SMALL.format(out=tmp_path / "a"))
        assert main(["--config", str(cfg)]) == 0
        manifest = json.loads((tmp_path / "a" / "run_manifest.json")
                              .read_text())
        # Re-run from the manifest's configuration echo.
        echo = tmp_path / "echo.ini"
        echo.write_text(manifest["config_text"])
        assert main(["--config", str(echo), "--out", str(tmp_path / "b")]) == 0
        for name, digest in manifest["outputs"].items():
            reproduced = hashlib.sha256(
                (tmp_path / "b" / name).read_bytes()).hexdigest()
            assert reproduced == digest

    def test_thread_count_does_not_change_output(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(CLT_SMALL.format(out=tmp_path / "t1"))
        assert main(["--config", str(cfg), "--threads", "1"]) == 0
        assert main(["--config", str(cfg), "--out", str(tmp_path / "t8"),
                     "--threads", "8"]) == 0
        a = (tmp_path / "t1" / "rate.csv").read_bytes()
        b = (tmp_path / "t8" / "rate.csv").read_bytes()
        assert a == b

    def test_dump_trajectories(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(CLT_SMALL.format(out=tmp_path / "out")
                       + "dump_paths = 2\n")
        assert main(["--config", str(cfg), "--dump-trajectories"]) == 0
        dumped = sorted(p.name for p in (tmp_path / "out").glob("trajectory_*"))
        assert any("DeterministicX0" in n for n in dumped)
        assert any("LimitZ" in n for n in dumped)
        assert any("PerturbedX" in n for n in dumped)
        assert any("NormalizedZeps" in n for n in dumped)
        sample = read_csv(tmp_path / "out" / dumped[0])
        assert "t" in sample[0] and "v_1" in sample[0]

    def test_all_outputs_inside_out_dir(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        out = tmp_path / "out"
        cfg.write_text(CLT_SMALL.format(out=out))
        before = {p for p in tmp_path.rglob("*") if p.is_file()}
        assert main(["--config", str(cfg)]) == 0
        after = {p for p in tmp_path.rglob("*") if p.is_file()}
        new = after - before
        assert new
        assert all(out in p.parents for p in new)

    def test_moments_experiment(self, tmp_path):
        text = CLT_SMALL.format(out=tmp_path / "out").replace(
            "kind = clt-rate", "kind = moments")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(text)
        assert main(["--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "moments.csv")
        labels = {r["label"] for r in rows}
        assert labels == {"NormalizedZeps", "LimitZ"}
        assert len([r for r in rows if r["label"] == "LimitZ"]) == 65

    def test_fbm_cov_experiment(self, tmp_path):
        text = """
[experiment]
kind = fbm-cov
out_dir = {out}

[kernel_k2]
kind = fbm
H = 0.7
""".format(out=tmp_path / "out")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(text)
        assert main(["--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "covariance.csv")
        assert len(rows) == 25
        ratios = np.asarray([float(r["ratio"]) for r in rows])
        assert ratios.max() / ratios.min() - 1.0 < 0.02

    def test_fbm_cov_requires_fbm_kernel(self, tmp_path, capsys):
        text = """
[experiment]
kind = fbm-cov
out_dir = {out}

[kernel_k2]
kind = rl
H = 0.7
""".format(out=tmp_path / "out")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(text)
        assert main(["--config", str(cfg)]) == 1

    def test_model_check_strict(self, tmp_path):
        text = """
[experiment]
kind = model-check
out_dir = {out}

[model]
name = tanh-mixed
params = 1.5
""".format(out=tmp_path / "out")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(text)
        assert main(["--config", str(cfg), "--strict"]) == 0
        rows = read_csv(tmp_path / "out" / "hypcheck.csv")
        assert all(r["passed"] == "True" for r in rows)

    def test_divergence_exit_code(self, tmp_path, capsys):
        text = CLT_SMALL.format(out=tmp_path / "out").replace(
            "name = sin-drift\nparams = 1.0",
            "name = linear-additive\nparams = 5000.0, 0.0")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(text)
        assert main(["--config", str(cfg)]) == 2
        assert "divergence" in capsys.readouterr().err

    def test_strict_failed_hypothesis_exit_code(self, tmp_path):
        text = """
[experiment]
kind = kernel-check
out_dir = {out}

[kernel_k1]
kind = rl
H = 0.25

[kernel_k2]
kind = rl
H = 0.25

[hypotheses]
beta = 2.5
""".format(out=tmp_path / "out")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(text)
        assert main(["--config", str(cfg), "--strict"]) == 3
        assert main(["--config", str(cfg)]) == 0  # non-strict still reports

    def test_threads_env_fallback(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(CLT_SMALL.format(out=tmp_path / "a"))
        monkeypatch.setenv("VOLTERRA_CLT_THREADS", "2")
        assert main(["--config", str(cfg)]) == 0
        monkeypatch.setenv("VOLTERRA_CLT_THREADS", "junk")
        assert main(["--config", str(cfg), "--out", str(tmp_path / "b")]) == 1

    def test_holder_experiment(self, tmp_path):
        text = """
[experiment]
kind = holder
steps = 256
paths = 200
p_values = 2
x0_set = 0.0
holder_lags = 4, 8, 16, 32
out_dir = {out}

[model]
name = linear-additive
params = 0.0, 1.0

[kernel_k1]
kind = constant
value = 1.0

[kernel_k2]
kind = constant
value = 1.0
""".format(out=tmp_path / "out")
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(text)
        assert main(["--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "holder.csv")
        assert rows
        theta = float(rows[0]["theta"])
        assert abs(theta - 0.5) < 0.1
