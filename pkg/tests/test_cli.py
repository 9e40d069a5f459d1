import csv
import json
import math
import re
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from bregflow import cli
from bregflow.config import ConfigError, RunConfig, dumps, load, loads

NUMBER = re.compile(r"^-?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?$|^(nan|inf|-inf)$")


def write_config(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text), encoding="utf-8")
    return p


FLOW_CFG = """
    experiment: flow
    seed: 3
    target: {name: gaussian, mean: [2.0], cov: [[1.0]]}
    flow: {metric: wfr, gamma: 0.05, n_steps: 8, n_particles: 100}
    output: {plot: false}
"""


def assert_csv_grammar(path, header):
    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n") and "\r" not in text
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == header
    for row in rows[1:]:
        assert len(row) == len(header)
        for cell in row:
            assert cell == "" or NUMBER.match(cell), cell
    return rows


class TestFlow:
    def test_outputs_and_grammar(self, tmp_path):
        cfg = write_config(tmp_path, FLOW_CFG)
        assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"]) == 0
        rows = assert_csv_grammar(
            tmp_path / "a" / "trajectory.csv", ["step", "time", "ess", "mean_0", "var_0"]
        )
        assert len(rows) == 1 + 9
        assert [int(r[0]) for r in rows[1:]] == list(range(9))
        assert_csv_grammar(tmp_path / "a" / "final_particles.csv", ["x_0", "log_weight"])
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        for key in ("version", "experiment", "seed", "target_scale", "final", "wall_time_s", "config"):
            assert key in summary
        assert summary["seed"] == 3
        assert summary["final"]["step"] == 8

    def test_byte_identical_replay(self, tmp_path):
        cfg = write_config(tmp_path, FLOW_CFG)
        for d in ("a", "b"):
            assert cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / d), "--quiet"]) == 0
        for f in ("trajectory.csv", "final_particles.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_override_changes_run(self, tmp_path):
        cfg = write_config(tmp_path, FLOW_CFG)
        cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
        cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4", "--quiet"])
        assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 4
        a = (tmp_path / "a" / "final_particles.csv").read_bytes()
        assert a != (tmp_path / "b" / "final_particles.csv").read_bytes()

    def test_zero_steps_reports_initial_moments(self, tmp_path):
        cfg = loads(FLOW_CFG.replace("n_steps: 8", "n_steps: 0"))
        summary = cli.run_flow(cfg, tmp_path, log=lambda *a: None)
        _, data = cli.read_csv(tmp_path / "final_particles.csv")
        w = np.exp(data[:, 1])
        mean = w @ data[:, 0]
        assert summary["final"]["step"] == 0
        assert summary["final"]["mean"][0] == pytest.approx(mean, rel=1e-12)
        assert summary["final"]["var"][0] == pytest.approx(w @ (data[:, 0] - mean) ** 2, rel=1e-10)

    def test_acceptance_column_only_with_metropolis(self, tmp_path):
        cfg = loads(FLOW_CFG.replace("metric: wfr", "metric: wasserstein, metropolis: true"))
        cli.run_flow(cfg, tmp_path, log=lambda *a: None)
        rows = assert_csv_grammar(
            tmp_path / "trajectory.csv", ["step", "time", "ess", "mean_0", "var_0", "acceptance_rate"]
        )
        assert rows[1][-1] == ""
        assert 0.0 <= float(rows[-1][-1]) <= 1.0

    def test_svg_written(self, tmp_path):
        cfg = loads(FLOW_CFG.replace("plot: false", "plot: true"))
        cli.run_flow(cfg, tmp_path, log=lambda *a: None)
        svg = (tmp_path / "moments.svg").read_text()
        assert svg.startswith("<svg") and "polyline" in svg

    @pytest.mark.parametrize("metric", ["wasserstein", "fisher_rao", "wfr", "stein"])
    def test_paired_diff_kl_is_zero(self, tmp_path, metric):
        base = FLOW_CFG.replace("metric: wfr", f"metric: {metric}")
        scaled = base.replace("cov: [[1.0]]}", "cov: [[1.0]], scale: 10.0}")
        cli.run_flow(loads(base), tmp_path / "a", log=lambda *a: None)
        cli.run_flow(loads(scaled), tmp_path / "b", log=lambda *a: None)
        s = json.loads((tmp_path / "b" / "summary.json").read_text())
        assert s["target_scale"] == 10.0
        diff = cli.paired_diff(tmp_path / "a", tmp_path / "b")
        assert diff["max_abs_position_diff"] == 0.0
        assert diff["max_abs_log_weight_diff"] <= 1e-12

    def test_paired_diff_beta_two_is_not_zero(self, tmp_path):
        base = FLOW_CFG.replace("metric: wfr", "metric: fisher_rao, beta: 2.0")
        scaled = base.replace("cov: [[1.0]]}", "cov: [[1.0]], scale: 10.0}")
        cli.run_flow(loads(base), tmp_path / "a", log=lambda *a: None)
        cli.run_flow(loads(scaled), tmp_path / "b", log=lambda *a: None)
        assert cli.paired_diff(tmp_path / "a", tmp_path / "b")["max_abs_log_weight_diff"] > 1e-3


class TestConfig:
    def test_defaults(self):
        cfg = loads("")
        assert cfg == RunConfig()
        assert cfg.flow_config().seed == 0

    def test_echo_round_trip(self, tmp_path):
        cfg = write_config(tmp_path, FLOW_CFG)
        cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
        summary_path = tmp_path / "a" / "summary.json"
        assert load(summary_path) == load(cfg)
        assert loads(dumps(load(cfg))) == load(cfg)

    def test_float_precision_in_json(self, tmp_path):
        cfg = write_config(tmp_path, FLOW_CFG)
        cli.main(["flow", "--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        _, traj = cli.read_csv(tmp_path / "a" / "trajectory.csv")
        # shortest round-trip repr: the JSON value is the exact double
        assert summary["final"]["mean"][0] == traj[-1, 3]

    @pytest.mark.parametrize(
        "text, line, fragment",
        [
            ("seed: 1\nflow:\n  metric: wfr\n  gamm: 0.1\n", 4, "unknown key 'gamm'"),
            ("seed: 1\nflow:\n  metric: bogus\n", 3, "metric"),
            ("target:\n  name: gaussian\n  scale: -2\n", 3, "scale"),
            ("seed: -5\n", 1, "seed"),
            ("experiment: flow\ntarget:\n  name: banana\n", 3, "banana"),
            ("flow:\n  n_steps: 3\n  gamma: -1\n", 3, "gamma"),
            ("a: [1, 2\n", 2, "YAML"),
        ],
    )
    def test_line_precise_errors(self, tmp_path, text, line, fragment):
        p = write_config(tmp_path, text)
        with pytest.raises(ConfigError) as info:
            load(p)
        assert info.value.line == line
        assert fragment in str(info.value)
        assert str(info.value).startswith(f"{p}:{line}: ")

    def test_oracle_rejects_mixture(self):
        text = """
            experiment: oracle-compare
            target:
              name: mixture
              weights: [0.5, 0.5]
              components: [{mean: [-1.0], cov: [[1.0]]}, {mean: [1.0], cov: [[1.0]]}]
        """
        with pytest.raises(ConfigError, match="gaussian"):
            loads(textwrap.dedent(text))


class TestExitCodes:
    def test_config_error_exit_one(self, tmp_path, capsys):
        p = write_config(tmp_path, "flow:\n  bogus: 1\n")
        assert cli.main(["flow", "--config", str(p), "--out", str(tmp_path)]) == 1
        assert f"{p}:2:" in capsys.readouterr().err

    def test_missing_config_exit_one(self, tmp_path):
        assert cli.main(["flow", "--config", str(tmp_path / "nope.yaml")]) == 1

    def test_numerical_error_exit_two(self, tmp_path, capsys):
        text = """
            target: {name: gaussian, mean: [0.0], cov: [[1.0]]}
            init: {mean: [0.0], cov: [[0.25]]}
            flow: {metric: wasserstein, beta: 0.0, gamma: 0.01, n_steps: 20, n_particles: 300}
            seed: 5
            output: {plot: false}
        """
        p = write_config(tmp_path, text)
        with np.errstate(all="ignore"), pytest.warns(RuntimeWarning):
            code = cli.main(["flow", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"])
        assert code == 2
        assert "non-finite" in capsys.readouterr().err

    def test_module_entry_point(self, tmp_path):
        p = write_config(tmp_path, FLOW_CFG)
        proc = subprocess.run(
            [sys.executable, "-m", "bregflow", "flow", "--config", str(p), "--out", str(tmp_path / "o")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "flow: wfr" in proc.stdout


class TestInvariance:
    def test_table(self, tmp_path):
        text = """
            experiment: invariance
            invariance:
              betas: [0.0, 1.0, 2.0]
              cs: [0.5, 2.0]
              grid: {lo: -5.0, hi: 5.0, n: 1001}
        """
        p = write_config(tmp_path, text)
        assert cli.main(["invariance", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 0
        rows = assert_csv_grammar(tmp_path / "o" / "invariance.csv", cli.INVARIANCE_COLUMNS)
        body = [[float(v) for v in r] for r in rows[1:]]
        assert [(r[0], r[1]) for r in body] == [
            (0.0, 0.5), (0.0, 2.0), (1.0, 0.5), (1.0, 2.0), (2.0, 0.5), (2.0, 2.0)
        ]
        kl = [r for r in body if r[0] == 1.0]
        for r in kl:
            assert r[2] <= 1e-10
            assert r[3] == pytest.approx(-math.log(r[1]), abs=1e-12)
        assert body[-1][2] == pytest.approx(0.398941, abs=1e-6)

    def test_subcommand_sets_experiment(self, tmp_path):
        # a flow config run through the invariance subcommand uses invariance defaults
        p = write_config(tmp_path, "seed: 2\n")
        assert cli.main(["invariance", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 0
        s = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert s["experiment"] == "invariance"
        assert len(s["reports"]) == 15


class TestOracleCompare:
    def test_log_two_oracle_columns(self, tmp_path):
        text = f"""
            experiment: oracle-compare
            target: {{name: gaussian, mean: [2.0], cov: [[1.0]]}}
            flow: {{gamma: {math.log(2.0) / 10!r}, n_particles: 200}}
            oracle: {{times: [0.0, {math.log(2.0)!r}, 20.0]}}
            output: {{plot: false}}
        """
        p = write_config(tmp_path, text)
        assert cli.main(["oracle-compare", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 0
        rows = assert_csv_grammar(tmp_path / "o" / "oracle_compare.csv", cli.ORACLE_COLUMNS)
        t0, tlog2, tbig = ([float(v) for v in r] for r in rows[1:])
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        # t = 0: the only error is the Monte Carlo error of the initial sample
        assert t0[5] == pytest.approx(summary["initial_mc_error"]["mean"], abs=1e-15)
        assert t0[6] == pytest.approx(summary["initial_mc_error"]["var"], abs=1e-15)
        assert (t0[3], t0[4]) == (0.0, 1.0)
        assert tlog2[3] == pytest.approx(1.0, abs=1e-12)
        assert tlog2[4] == pytest.approx(1.0, abs=1e-12)
        assert tbig[3] == pytest.approx(2.0, abs=1e-8)
        assert tbig[4] == pytest.approx(1.0, abs=1e-8)

    def test_ignores_flow_metric(self, tmp_path):
        text = """
            experiment: oracle-compare
            target: {name: gaussian, mean: [2.0], cov: [[1.0]]}
            flow: {metric: stein, gamma: 0.1, n_particles: 100}
            oracle: {times: [0.0, 0.5]}
            output: {plot: false}
        """
        summary = cli.run_oracle_compare(loads(textwrap.dedent(text)), tmp_path, log=lambda *a: None)
        assert len(summary["rows"]) == 2


def test_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 12 and "FAIL" not in out
