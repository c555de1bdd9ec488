import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from oam_bench.config import get_settings
from oam_bench.exceptions import ConfigError
from oam_bench.main import main
from oam_bench.models.devices import DeviceKind
from oam_bench.models.mode_space import Polarization
from oam_bench.schemas.metrics import MetricsReport
from oam_bench.schemas.scenario import Scenario
from oam_bench.schemas.sweeps import SweepVariable
from oam_bench.services.scenario import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    apply_overrides,
    parse_config,
    run_scenario,
    serialize_config,
)
from oam_bench.services.serialization import load_operator

FULL_SCENARIO = """\
# every section at once
[scenario]
scenario = polarization
seed = 42
device = pbs
input_port = 2
input_pol = v

[space]
oam_range = 2

[tbs]
theta2 = 17.5
place_hwp1 = true
sr_th = 0.5, 0.2

[sagnac]
loop_phase = 0.25

[imperfections]
pbs_extinction_db = 25
coating_phase_rad = 3.0
loss_6_h = 0.98
loss_6_v = 0.97   ; per polarization
sigma_hwp_angle_error_deg = 0.1

[sweep]
start = 0
stop = 90
step = 0.5
repeats = 7

[circuit]
hwp theta=22.5 ports=[3,4]
"""

IMPERFECTION_SWEEP = """\
scenario = polarization
oam_range = 0
[tbs]
sr_th = 0.5
[sweep]
variable = imperfection
imperfection = pbs_extinction_db
start = 20
stop = 40
step = 10
"""


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config("scenario = tuning\n")
        assert cfg.scenario == Scenario.TUNING
        assert cfg.grid_bounds() == (0.0, 180.0, 0.1)
        assert math.isinf(cfg.pbs_extinction_db)
        assert cfg.oam_range == get_settings().oam_range
        assert cfg.resolved_repeats() == 1

    def test_full_file(self):
        cfg = parse_config(FULL_SCENARIO)
        assert cfg.seed == 42
        assert cfg.device == DeviceKind.PBS
        assert cfg.input_pol == Polarization.V
        assert cfg.place_hwp1 is True
        assert cfg.sr_th == (0.5, 0.2)
        assert cfg.port_loss == {(6, Polarization.H): 0.98, (6, Polarization.V): 0.97}
        assert cfg.imp_sigma == {"hwp_angle_error_deg": 0.1}
        assert cfg.circuit == ["hwp theta=22.5 ports=[3,4]"]
        assert cfg.imperfections().transmittance(6, Polarization.V) == 0.97

        spec = cfg.sweep_spec()
        assert (spec.start, spec.stop, spec.step, spec.repeats) == (0.0, 90.0, 0.5, 7)
        assert spec.is_monte_carlo

    def test_round_trip(self):
        cfg = parse_config(FULL_SCENARIO)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_sigma_without_repeats_uses_the_configured_count(self):
        cfg = parse_config("scenario = polarization\nsigma_pbs_extinction_db = 1\n")
        assert cfg.resolved_repeats() == get_settings().mc_repeats

    def test_keys_before_any_section(self):
        cfg = parse_config("scenario = sagnac\ntheta2_step = 0.5\npbs_extinction_db = inf\n")
        assert cfg.theta2_step == 0.5
        assert cfg.grid_bounds() == (0.0, 90.0, 0.1)

    def test_device_none_is_a_device(self):
        cfg = parse_config("scenario = tomography\ndevice = none\n")
        assert cfg.device == DeviceKind.NONE
        assert parse_config(serialize_config(cfg)) == cfg
        assert parse_config("seed = none\n").seed is None

    def test_imperfection_sweep_keys(self):
        cfg = parse_config(IMPERFECTION_SWEEP)
        assert cfg.variable == SweepVariable.IMPERFECTION
        assert cfg.imperfection == "pbs_extinction_db"
        assert cfg.sweep_spec().variable == SweepVariable.IMPERFECTION
        assert parse_config(serialize_config(cfg)) == cfg

    def test_grid_is_checked_at_parse_time(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[sweep]\nstep = 0\n")
        assert "step must be > 0" in info.value.message

    @pytest.mark.parametrize("text, line, key, message", [
        ("pbs_extinction_db = -3\n", 1, "pbs_extinction_db", "extinction must be ≥ 0"),
        ("scenario = tuning\ncolour = red\n", 2, "colour", "unknown key"),
        ("[tbs]\npbs_extinction_db = 20\n", 2, "pbs_extinction_db", "unknown key in [tbs]"),
        ("theta2 = 1\ntheta2 = 2\n", 2, "theta2", "duplicate key"),
        ("theta2 = abc\n", 1, "theta2", "number"),
        ("[imperfections]\nloss_6_h = 1.5\n", 2, "loss_6_h", "transmittance"),
        ("sigma_laser_power = 1\n", 1, "sigma_laser_power", "no imperfection field"),
        ("\n\nsr_th = 0.5, 0.7\n", 3, "sr_th", "(0, 0.5]"),
        ("input_port = 3\n", 1, "input_port", "Port 1 or Port 2"),
        ("scenario = tuning\nvariable = imperfection\n", 2, "variable", "do not apply to the tuning scenario"),
        ("scenario = polarization\nvariable = imperfection\n[sweep]\nstart = 20\nstop = 40\nstep = 10\n", 2, "variable", "need an imperfection key"),
        ("scenario = polarization\nimperfection = pbs_extinction_db\nvariable = imperfection\n", 3, "variable", "need start, stop and step"),
        ("imperfection = laser_power\n", 1, "imperfection", "no imperfection field"),
    ])
    def test_errors_name_the_line(self, text, line, key, message):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.line == line
        assert info.value.key == key
        assert message in info.value.message
        assert str(info.value).startswith(f"line {line}: {key}: ")

    @pytest.mark.parametrize("text, line", [
        ("[lasers]\n", 1),
        ("[tbs\n", 1),
        ("scenario = tuning\njust words\n", 2),
        ("scenario = warp\n", 1),
        ("[circuit]\nlaser power=1\n", 2),
        ("[circuit]\npbs in=[1,2] out=[2,3]\n", 2),
    ])
    def test_structural_errors(self, text, line):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.line == line


class TestOverrides:
    BASE = "scenario = tuning\n[tbs]\ntheta2 = 10\n"

    def test_replace_existing_key(self):
        cfg = parse_config(apply_overrides(self.BASE, ["theta2=30"]))
        assert cfg.theta2 == 30.0

    def test_add_missing_keys(self):
        cfg = parse_config(apply_overrides(self.BASE, ["tbs.theta1=20", "seed=4", "loss_5_h=0.5"]))
        assert cfg.theta1 == 20.0
        assert cfg.seed == 4
        assert cfg.port_loss == {(5, Polarization.H): 0.5}

    @pytest.mark.parametrize("override", ["imperfections.theta2=1", "nonsense", "colour=red"])
    def test_bad_overrides(self, override):
        with pytest.raises(ConfigError):
            apply_overrides(self.BASE, [override])


def _read_csv(path, **kwargs) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", **kwargs)


class TestRunScenario:
    def test_tuning(self, tmp_path):
        cfg = parse_config("scenario = tuning\noam_range = 0\n[sweep]\nstep = 0.5\n")
        run = run_scenario(cfg, str(tmp_path))
        assert run.exit_code == EXIT_OK
        assert "(guard)" in run.headline
        assert run.headline.endswith("crossing angles = 22.50, 67.50, 112.50, 157.50")
        assert run.report.guard_hit

        lines = (tmp_path / "tuning.csv").read_text().splitlines()
        assert lines[0] == "# oam-bench tuning"
        assert "output_dir" not in "\n".join(lines)
        table = _read_csv(tmp_path / "tuning.csv")
        assert list(table.columns) == ["theta2", "i5", "i6"]
        assert len(table) == 361
        np.testing.assert_allclose(table["i5"], np.cos(np.radians(2 * table["theta2"])) ** 2, atol=1e-11)

        summary = (tmp_path / "summary.txt").read_text()
        assert "scenario = tuning" in summary
        assert "warning = " in summary
        assert "artifacts = tuning.csv, metrics.csv, summary.txt" in summary

        metrics = _read_csv(tmp_path / "metrics.csv")
        assert list(metrics.columns) == MetricsReport.csv_header().split(",")
        assert len(metrics) == 1
        assert metrics["er_db"][0] == pytest.approx(120.0)
        assert bool(metrics["guard_hit"][0])
        assert metrics["provenance"][0] == "tuning port 1"

    def test_polarization_is_reproducible(self, tmp_path):
        text = (
            "scenario = polarization\nseed = 3\noam_range = 0\n"
            "[tbs]\nsr_th = 0.5, 0.1\n"
            "[imperfections]\npbs_extinction_db = 25\nloss_6_h = 0.98\nloss_6_v = 0.98\n"
            "sigma_hwp_angle_error_deg = 0.1\n"
            "[sweep]\nstep = 1\nrepeats = 3\n"
        )
        first = run_scenario(parse_config(text), str(tmp_path / "a"))
        second = run_scenario(parse_config(text), str(tmp_path / "b"))
        assert first.exit_code == second.exit_code == EXIT_OK
        for name in ("pd.csv", "summary.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

        table = _read_csv(tmp_path / "a" / "pd.csv")
        assert list(table.columns) == ["sr_th", "theta0", "sr"]
        assert len(table) == 2 * 181
        assert first.report.pd_std is not None
        assert first.headline.startswith("PD = 0.5: ")
        assert "pd_rises_as_sr_falls = yes" in (tmp_path / "a" / "summary.txt").read_text()

    def test_ideal_tomography(self, tmp_path):
        cfg = parse_config("scenario = tomography\ndevice = tbs\noam_range = 2\n")
        run = run_scenario(cfg, str(tmp_path))
        assert run.exit_code == EXIT_OK
        assert run.headline == "all rows ER_OAM > 120 dB (guard)"
        matrix = _read_csv(tmp_path / "tomo.csv", index_col=0)
        np.testing.assert_allclose(matrix.to_numpy(), np.eye(5), atol=1e-11)

    def test_tomography_with_crosstalk(self, tmp_path):
        cfg = parse_config("scenario = tomography\ndevice = none\nslm_crosstalk_db = 25\n")
        run = run_scenario(cfg, str(tmp_path))
        assert run.headline.startswith("min ER_OAM = 21.9")
        assert run.headline.endswith("all rows above 20 dB: yes")
        assert any("leaking past" in w for w in run.warnings)

    def test_imperfection_sweep(self, tmp_path):
        run = run_scenario(parse_config(IMPERFECTION_SWEEP), str(tmp_path))
        assert run.exit_code == EXIT_OK
        assert run.headline.startswith("max PD over pbs_extinction_db = 0.5: ")
        table = _read_csv(tmp_path / "pd_imperfection.csv")
        assert list(table.columns) == ["sr_th", "pbs_extinction_db", "pd"]
        assert list(table["pbs_extinction_db"]) == [20.0, 30.0, 40.0]
        assert table["pd"].is_monotonic_decreasing
        assert run.report.pd == pytest.approx(table["pd"].iloc[0])
        metrics = _read_csv(tmp_path / "metrics.csv")
        assert metrics["pd"].iloc[0] == pytest.approx(table["pd"].iloc[0])
        assert not (tmp_path / "pd.csv").exists()

    def test_dark_prepared_mode(self, tmp_path):
        cfg = parse_config("scenario = tomography\ndevice = cubic_pbs\ninput_pol = V\noam_range = 1\n")
        run = run_scenario(cfg, str(tmp_path))
        assert run.exit_code == EXIT_OK
        assert run.headline == "min ER_OAM = -inf dB, all rows above 20 dB: no"

    def test_ideal_sagnac(self, tmp_path):
        cfg = parse_config("scenario = sagnac\noam_range = 0\ntheta2_step = 0.5\n[sweep]\nstep = 30\n")
        run = run_scenario(cfg, str(tmp_path))
        assert run.exit_code == EXIT_OK
        assert run.headline == "mean V = 1.000000"
        table = _read_csv(tmp_path / "sagnac.csv")
        assert list(table["theta0"]) == [0.0, 30.0, 60.0, 90.0]

    def test_dump_with_sign_report(self, tmp_path):
        run = run_scenario(parse_config("scenario = dump\noam_range = 0\n"), str(tmp_path))
        assert run.exit_code == EXIT_OK
        assert (tmp_path / "operator.txt").read_text().startswith("modespace 6 0\n")
        report = (tmp_path / "sign_report.md").read_text()
        assert "| v,5 | v,1 |" in report
        assert "Conclusion: composition matches the output law" in report

    def test_dump_circuit(self, tmp_path):
        text = (
            "[scenario]\nscenario = dump\n[space]\noam_range = 1\n"
            "[circuit]\npbs coating=right in=[1,2] out=[3,4]\nhwp theta=22.5 ports=[3, 4]\n"
        )
        run = run_scenario(parse_config(text), str(tmp_path))
        assert run.exit_code == EXIT_OK
        op = load_operator((tmp_path / "operator.txt").read_text())
        assert op.input_ports == {1, 2}
        assert op.output_ports == {3, 4}
        assert not (tmp_path / "sign_report.md").exists()
        assert "isometry_on_inputs = yes" in (tmp_path / "summary.txt").read_text()

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        run = run_scenario(parse_config("scenario = dump\noam_range = 0\n"), str(blocker))
        assert run.exit_code == EXIT_RUNTIME

    def test_runtime_error(self, tmp_path):
        run = run_scenario(parse_config("scenario = tuning\nports = 1, 2, 3, 4, 5\n"), str(tmp_path))
        assert run.exit_code == EXIT_RUNTIME


class TestCli:
    def test_success(self, tmp_path, capsys):
        scenario = tmp_path / "tuning.ini"
        scenario.write_text("scenario = tuning\n[tbs]\ntheta2 = 0\n")
        out = tmp_path / "out"
        code = main([str(scenario), "--out", str(out), "--set", "oam_range=0", "--set", "sweep.step=1", "--seed", "5"])
        assert code == EXIT_OK
        assert "crossing angles" in capsys.readouterr().out
        header = (out / "tuning.csv").read_text()
        assert "# seed = 5" in header
        assert "# step = 1.0" in header

    def test_config_error(self, tmp_path):
        scenario = tmp_path / "bad.ini"
        scenario.write_text("pbs_extinction_db = -3\n")
        assert main([str(scenario), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_device_none_from_a_file(self, tmp_path):
        scenario = tmp_path / "tomo.ini"
        scenario.write_text("scenario = tomography\ndevice = none\noam_range = 1\n")
        assert main([str(scenario), "--out", str(tmp_path / "out")]) == EXIT_OK
        assert (tmp_path / "out" / "tomo.csv").exists()
        assert (tmp_path / "out" / "metrics.csv").exists()

    def test_missing_file(self, tmp_path):
        assert main([str(tmp_path / "missing.ini")]) == EXIT_RUNTIME


SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.mark.parametrize("name", ["tuning", "polarization", "tomography", "sagnac", "dump"])
def test_example_scenarios_parse(name):
    cfg = parse_config((SCENARIO_DIR / f"{name}.ini").read_text(encoding="utf-8"))
    assert cfg.scenario.value == name
