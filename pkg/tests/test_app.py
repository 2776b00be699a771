import json

import pytest

from qkdsim.app import (
    EXIT_CALIBRATION, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, parse_values, run_application
)
from qkdsim.errors import ConfigError
from qkdsim.persistence import read_results


@pytest.fixture
def b2b_scenario(scenario_path):
    return json.loads(scenario_path("ase_b2b_ob").read_text(encoding="utf-8"))


def test_parse_values():
    assert parse_values("0, 5,10.5") == [0.0, 5.0, 10.5]
    with pytest.raises(ConfigError):
        parse_values("a,b")
    with pytest.raises(ConfigError):
        parse_values(" , ")


def test_parser_accepts_axis_aliases():
    args = build_parser().parse_args(["sweep", "--config", "c.json", "--axis", "dlambda",
                                      "--values", "1,2", "--out", "o.csv"])
    assert args.axis == "dlambda"


def test_run_writes_one_row(scenario_path, tmp_path):
    out = tmp_path / "run.csv"
    config = str(scenario_path("ase_b2b_ob"))
    assert run_application(["run", "--config", config, "--out", str(out)]) == EXIT_OK
    comments, rows = read_results(out)
    assert comments[0].endswith("seed=1")
    assert len(rows) == 1
    assert rows[0]["mode"] == "analytic"
    assert "wall_seconds" not in rows[0]


def test_seed_override_lands_in_the_header(scenario_path, tmp_path):
    out = tmp_path / "run.csv"
    run_application(["run", "--config", str(scenario_path("ase_b2b_ob")), "--seed", "99", "--timing",
                     "--out", str(out)])
    comments, rows = read_results(out)
    assert comments[0].endswith("seed=99")
    assert float(rows[0]["wall_seconds"]) >= 0.0


def test_montecarlo_output_is_byte_identical(b2b_scenario, write_json, tmp_path):
    b2b_scenario.update(mode="mc", n_symbols=500_000)
    config = write_json("mc.json", b2b_scenario)
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert run_application(["run", "--config", str(config), "--out", str(out)]) == EXIT_OK
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_export_dir_holds_every_session(b2b_scenario, write_json, tmp_path):
    b2b_scenario.update(n_symbols=500_000)
    config = write_json("mc.json", b2b_scenario)
    export = tmp_path / "sessions"
    code = run_application(["run", "--config", str(config), "--mode", "mc", "--out", str(tmp_path / "r.csv"),
                            "--export-dir", str(export)])
    assert code == EXIT_OK
    for i in (0, 1):
        assert (export / f"session{i}.tags").is_file()
        assert (export / f"session{i}.key").is_file()


def test_sweep_writes_a_row_per_value(scenario_path, tmp_path):
    out = tmp_path / "sweep.csv"
    code = run_application(["sweep", "--config", str(scenario_path("ase_b2b_ob")), "--axis", "ob",
                            "--values", "0,10,20", "--out", str(out)])
    assert code == EXIT_OK
    _, rows = read_results(out)
    assert [float(r["axis_value"]) for r in rows] == [0.0, 10.0, 20.0]


def test_failed_sweep_points_do_not_fail_the_run(scenario_path, tmp_path):
    out = tmp_path / "sweep.csv"
    code = run_application(["sweep", "--config", str(scenario_path("ase_b2b_ob")), "--axis", "delta_lambda",
                            "--values", "2,-1", "--out", str(out)])
    assert code == EXIT_OK
    _, rows = read_results(out)
    assert rows[0]["error"] == ""
    assert rows[1]["error"].startswith("InvalidArgumentError")


def test_eye_and_polarimeter_commands(scenario_path, b2b_scenario, write_json, tmp_path):
    eye = tmp_path / "eye.csv"
    assert run_application(["eye", "--config", str(scenario_path("ase_b2b_ob")), "--traces", "20",
                            "--basis", "circular", "--out", str(eye)]) == EXIT_OK
    comments, rows = read_results(eye)
    assert comments[1].startswith("mid_symbol_levels=")
    assert len(rows) == 20 * 16

    b2b_scenario.update(fiber={"length_km": 0.5, "pmd_ps_per_sqrt_km": 0.5},
                 polarimeter={"slice_nm": 4.0, "min_nm": 1569.0, "max_nm": 1585.0, "steps": 2})
    pol = tmp_path / "pol.csv"
    assert run_application(["polarimeter", "--config", str(write_json("p.json", b2b_scenario)),
                            "--out", str(pol)]) == EXIT_OK
    _, rows = read_results(pol)
    assert len(rows) == 2 * 5


def test_calibrate_command(scenario_path, b2b_scenario, write_json, tmp_path):
    targets = write_json("targets.json", {
        "scenario": b2b_scenario,
        "targets": [{"delta_lambda_nm": 2.0, "length_km": 0.256, "qber": 0.11}],
        "search": {"lo": 1.0, "hi": 5.0, "points": 3, "seeds": 1},
    })
    out, fiber = tmp_path / "cal.csv", tmp_path / "fiber.json"
    code = run_application(["calibrate", "--targets", str(targets), "--out", str(out),
                            "--fiber-out", str(fiber)])
    assert code == EXIT_OK
    comments, rows = read_results(out)
    assert comments[1].startswith("pmd_coefficient_ps_per_sqrt_km=")
    assert len(rows) == 1
    assert json.loads(fiber.read_text(encoding="utf-8"))["pmd_ps_per_sqrt_km"] in (1.0, 3.0, 5.0)


@pytest.mark.parametrize("argv", [
    ["run", "--config", "missing.json", "--out", "x.csv"],
    ["run", "--out", "x.csv"],
    ["sweep", "--config", "c.json", "--axis", "power", "--values", "1", "--out", "x.csv"],
])
def test_config_and_usage_errors_exit_2(tmp_path, argv):
    argv = [str(tmp_path / a) if a.endswith((".json", ".csv")) else a for a in argv]
    assert run_application(argv) == EXIT_CONFIG


def test_unknown_key_exits_2(write_json, tmp_path):
    config = write_json("bad.json", {"fiber": {"pmd": 1.0}})
    assert run_application(["run", "--config", str(config), "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG


def test_bad_sweep_values_exit_2(scenario_path, tmp_path):
    code = run_application(["sweep", "--config", str(scenario_path("ase_b2b_ob")), "--axis", "ob",
                            "--values", "1,two", "--out", str(tmp_path / "x.csv")])
    assert code == EXIT_CONFIG


def test_runtime_failures_exit_3(b2b_scenario, write_json, tmp_path):
    b2b_scenario["filter"] = {"width_nm": 2.0, "center_nm": 1400.0}
    config = write_json("dark.json", b2b_scenario)
    assert run_application(["run", "--config", str(config), "--out", str(tmp_path / "x.csv")]) == EXIT_RUNTIME


def test_unwritable_output_exits_3(scenario_path, tmp_path):
    out = tmp_path / "no" / "such" / "dir" / "x.csv"
    config = str(scenario_path("ase_b2b_ob"))
    assert run_application(["run", "--config", config, "--out", str(out)]) == EXIT_RUNTIME


def test_calibration_failure_exits_4(b2b_scenario, write_json, tmp_path):
    targets = write_json("targets.json", {
        "scenario": b2b_scenario,
        "targets": [{"delta_lambda_nm": 2.0, "length_km": 0.256, "qber": 0.11}],
        "search": {"lo": 0.0, "hi": 5.0, "points": 3},
    })
    code = run_application(["calibrate", "--targets", str(targets), "--out", str(tmp_path / "c.csv")])
    assert code == EXIT_CALIBRATION


def test_version_flag(capsys):
    assert run_application(["--version"]) == EXIT_OK
    assert "qkdsim" in capsys.readouterr().out
