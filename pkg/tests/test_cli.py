import csv
import json
import subprocess
import sys

import pytest

from fndp import cli

from conftest import tiny_doc


def scenario_file(tmp_path, **kw):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(tiny_doc(**kw)))
    return str(path)


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = cli.main([*args, "--out", str(out)])
    return code, out


def rows(path):
    return list(csv.reader(open(path)))


def test_simulate_zero_demand(tmp_path):
    code, out = run(tmp_path, "simulate", scenario_file(tmp_path, demand=0.0), "--p", "0.5")
    assert code == cli.EXIT_OK
    summary = json.loads((out / "simulate.json").read_text())
    assert summary["tstt_veh_s"] == 0.0
    assert rows(out / "curves.csv") == [["lane", "class", "destination", "t_s", "z_in_veh", "z_out_veh"]]
    assert rows(out / "link_travel_times.csv")[0] == ["link", "av_lanes", "lv_travel_time_s",
                                                      "av_travel_time_s"]
    assert rows(out / "od_travel_times.csv")[0] == ["od", "av_share", "lv_travel_time_s",
                                                    "av_travel_time_s"]


def test_simulate_reports_residuals(tmp_path, capsys):
    code, out = run(tmp_path, "simulate", scenario_file(tmp_path, second_link=True),
                    "--design", "10", "--share", "s->t=0.7")
    assert code == cli.EXIT_OK
    summary = json.loads((out / "simulate.json").read_text())
    assert max(summary["max_residuals"].values()) <= 1e-6
    assert summary["shares"] == {"s->t": 0.7}
    assert summary["design"] == {"A2": 1, "B2": 0}
    assert "TSTT" in capsys.readouterr().out


def test_simulate_infeasible_exit_code(tmp_path):
    path = scenario_file(tmp_path, demand=200.0, horizon=270.0, loading=(0, 1, 2), second_link=True)
    code, out = run(tmp_path, "simulate", path, "--p", "0.8")
    assert code == cli.EXIT_INFEASIBLE
    assert json.loads((out / "simulate.json").read_text())["status"] == "infeasible"


@pytest.mark.parametrize("args", [
    ["simulate", "nope"],
    ["simulate", "single_od", "--design", "1"],
    ["simulate", "single_od", "--design", "11", "--av-lanes", "2d"],
    ["simulate", "single_od", "--av-lanes", "2a"],
    ["simulate", "single_od", "--p", "1.5"],
    ["simulate", "single_od", "--share", "1->9=0.5"],
    ["simulate", "single_od", "--share", "oops"],
    ["fixed-point", "single_od", "--epsilon-msa", "0"],
    ["optimize", "single_od", "--demand-scale", "-1"],
    ["sweep", "multi_od"],
    ["sweep", "single_od", "--p-min", "0.9", "--p-max", "0.5"],
])
def test_invalid_input_exit_code(tmp_path, args, capsys):
    code, _ = run(tmp_path, *args)
    assert code == cli.EXIT_INVALID
    assert capsys.readouterr().err.startswith("error:")


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as err:
        cli.main(["simulate"])
    assert err.value.code == 2


def test_fixed_point_limit_exit_code(tmp_path):
    code, out = run(tmp_path, "fixed-point", scenario_file(tmp_path, second_link=True, demand=300.0,
                                                           horizon=900.0, loading=(0, 1, 2)),
                    "--max-fp", "1", "--p", "0.01")
    assert code == cli.EXIT_LIMIT
    summary = json.loads((out / "fixed_point.json").read_text())
    assert summary["converged"] is False and summary["iterations"] == 1
    assert len(rows(out / "trace.csv")) == 2


def test_fixed_point_converges(tmp_path):
    code, out = run(tmp_path, "fixed-point", scenario_file(tmp_path))
    assert code == cli.EXIT_OK
    assert json.loads((out / "fixed_point.json").read_text())["converged"] is True


def test_sweep_default_grid(tmp_path):
    code, out = run(tmp_path, "sweep", "single_od", "--beta-av", "0.0018")
    assert code == cli.EXIT_OK
    table = rows(out / "sweep.csv")
    assert len(table) == 51
    assert table[0][:3] == ["beta_av_per_s", "p", "p_logit"]
    assert float(table[1][1]) == 0.5 and float(table[-1][1]) == 0.99
    assert "0.0018" in json.loads((out / "sweep.json").read_text())


def test_sweep_custom_grid(tmp_path):
    code, out = run(tmp_path, "sweep", scenario_file(tmp_path), "--p-min", "0.6", "--p-max", "0.8",
                    "--p-step", "0.1", "--beta-av", "0.0", "0.0018")
    assert code == cli.EXIT_OK
    assert [float(r[1]) for r in rows(out / "sweep.csv")[1:]] == [0.6, 0.7, 0.8] * 2


def test_optimize_enumerate_compare(tmp_path, capsys):
    path = scenario_file(tmp_path, demand=300.0, horizon=900.0, loading=(0, 1, 2), second_link=True)
    code, out = run(tmp_path, "optimize", path, "-v")
    assert code == cli.EXIT_OK
    res = json.loads((out / "design_result.json").read_text())
    assert res["status"] == "optimal"
    assert (out / "benders_log.csv").exists() and (out / "cuts.json").exists()
    assert "m=1" in capsys.readouterr().err
    code, out = run(tmp_path, "enumerate", path)
    assert code == cli.EXIT_OK
    assert json.loads((out / "enumeration.json").read_text())["designs"] == 4
    code, out = run(tmp_path, "compare", path)
    assert code == cli.EXIT_OK
    assert json.loads((out / "compare.json").read_text())["verdict"] == "Match"
    assert "Match" in capsys.readouterr().out


def test_optimize_limit_exit_code(tmp_path):
    path = scenario_file(tmp_path, demand=300.0, horizon=900.0, loading=(0, 1, 2), second_link=True)
    code, _ = run(tmp_path, "optimize", path, "--max-benders", "1", "--no-baseline")
    assert code == cli.EXIT_LIMIT


def test_optimize_infeasible_exit_code(tmp_path):
    path = scenario_file(tmp_path, demand=400.0, horizon=270.0, loading=(0, 1, 2), second_link=True)
    code, _ = run(tmp_path, "optimize", path, "--no-baseline")
    assert code == cli.EXIT_INFEASIBLE


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "fndp.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("fndp ")
