import csv
import json

import pytest

from bdris_rsma.cli import _parse_arms, _parse_values, main


def desk_config(tmp_path, **overrides):
    lines = ["preset = desk"]
    lines += [f"{key} = {value}" for key, value in overrides.items()]
    path = tmp_path / "scenario.cfg"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_parse_values():
    assert _parse_values("0.1,0.5,1") == [0.1, 0.5, 1.0]
    assert _parse_values(" 2 , 4 ") == [2.0, 4.0]
    with pytest.raises(ValueError):
        _parse_values("1,two")
    with pytest.raises(ValueError):
        _parse_values("")


def test_parse_arms():
    assert _parse_arms("opt-bdris,diag-ris") == ("opt-bdris", "diag-ris")
    with pytest.raises(ValueError, match="unknown benchmark arm"):
        _parse_arms("opt-bdris,psychic")


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_run_writes_outputs(tmp_path, capsys):
    code = main(["run", "--config", desk_config(tmp_path), "--seed", "1",
                 "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 0
    assert "sum_rate=" in captured.out
    assert "converged=" in captured.out
    with open(tmp_path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["param"] == "single"
    assert float(rows[0]["sum_rate"]) > 0.0
    meta = json.loads((tmp_path / "run_meta.json").read_text())
    assert meta["config"]["n_ris"] == 8
    assert meta["seed"] == 1


def test_run_without_out_prints_only(tmp_path, capsys):
    code = main(["run", "--config", desk_config(tmp_path), "--seed", "0"])
    assert code == 0
    assert "sum_rate=" in capsys.readouterr().out
    assert not list(tmp_path.glob("*.csv"))


def test_run_default_scenario_is_infeasible(capsys):
    # stock geometry cannot meet the harvest target; exit code must say so
    code = main(["run", "--seed", "0"])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.err.startswith("infeasible:")
    assert "harvest" in captured.err


def test_run_missing_config_file(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "absent.cfg")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error:")


def test_run_bad_config_value(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("preset = desk\nn_ris = eight\n")
    code = main(["run", "--config", str(path)])
    assert code == 1
    assert "cannot parse" in capsys.readouterr().err


def test_sweep_writes_grid(tmp_path, capsys):
    code = main(["sweep", "--param", "P_max", "--values", "1.0",
                 "--seeds", "2", "--arms", "all-random",
                 "--config", desk_config(tmp_path), "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 0
    assert "wrote 2 rows (2 feasible)" in captured.out
    with open(tmp_path / "sweep_results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["seed"] for r in rows] == ["0", "1"]
    assert all(r["param"] == "P_max" for r in rows)
    meta = json.loads((tmp_path / "sweep_meta.json").read_text())
    assert meta["param"] == "P_max"
    assert meta["values"] == [1.0]


def test_sweep_unknown_param(tmp_path, capsys):
    code = main(["sweep", "--param", "bogus", "--values", "1", "--seeds", "1",
                 "--config", desk_config(tmp_path)])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_sweep_bad_values(tmp_path, capsys):
    code = main(["sweep", "--param", "P_max", "--values", "1,x", "--seeds", "1",
                 "--config", desk_config(tmp_path)])
    assert code == 1


def test_bench_writes_rows(tmp_path, capsys):
    code = main(["bench", "--arms", "all-random,random-beta",
                 "--config", desk_config(tmp_path), "--seed", "4",
                 "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 0
    with open(tmp_path / "bench_results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert sorted(r["arm"] for r in rows) == ["all-random", "random-beta"]
    assert all(r["seed"] == "4" for r in rows)
    assert (tmp_path / "bench_meta.json").exists()
    assert "all-random" in captured.out


def test_bench_unknown_arm(tmp_path, capsys):
    code = main(["bench", "--arms", "psychic", "--config",
                 desk_config(tmp_path)])
    assert code == 1
    assert "unknown benchmark arm" in capsys.readouterr().err


def test_selftest_passes(capsys):
    code = main(["selftest"])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out.count("PASS") == 7
    assert "FAIL" not in captured.out
