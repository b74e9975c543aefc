import json

import pytest

from stochcls import harness
from stochcls.cli import main

from test_harness import CLIMATE, base_config


@pytest.fixture
def config(tmp_path):
    (tmp_path / "climate.csv").write_text(CLIMATE)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(base_config()))
    return path


def test_run_and_compare(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out), "--seed", "3", "--maxtime", "3"]) == 0
    assert (out / "trajectory.csv").exists() and (out / "metadata.json").exists()
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["seed"] == 3 and meta["maxtime"] == 3
    traps = tmp_path / "traps.csv"
    traps.write_text("day,count\n0,4\n2,9\n3,1\n")
    cmp = tmp_path / "cmp.csv"
    assert main(["compare", "--summary", str(out / "summary.csv"), "--traps", str(traps),
                 "--out", str(cmp)]) == 0
    assert cmp.read_text().splitlines()[0] == "day,simulated_mean_adults,trap_count"
    assert "pearson_r" in capsys.readouterr().out


def test_compare_out_of_range_fails(config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", str(config), "--out", str(out), "--maxtime", "2"])
    code = main(["compare", "--summary", str(out / "summary.csv"), "--out", str(tmp_path / "c.csv")])
    assert code == 2
    assert "outside the simulated range" in capsys.readouterr().err


def test_validate(config, capsys):
    assert main(["validate", "--config", str(config), "--maxtime", "10"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info == {"rules": 29, "containers": 2, "events": info["events"], "samples_per_replicate": 11}


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    assert main(["validate", "--config", str(path)]) == 2
    assert capsys.readouterr().err.startswith("error:")
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_bad_override(config):
    assert main(["run", "--config", str(config), "--replicates", "0"]) == 2


def test_selftest_selection(capsys):
    assert main(["selftest", "selection"]) == 0
    assert "selection: PASS" in capsys.readouterr().out


def test_unknown_suite():
    with pytest.raises(SystemExit):
        main(["selftest", "nope"])


def test_bundled_example_validates(capsys):
    assert main(["validate", "--config", str(harness.data_path("example_config.json"))]) == 0
