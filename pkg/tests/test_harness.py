import csv
import json
import math

import pytest

from stochcls import harness
from stochcls.errors import ConfigError

CLIMATE = "day,temp_c,rain_mm\n0,20.0,0\n1,21.5,3.0\n2,19.0,0\n3,18.8,22.0\n4,22.0,0\n5,23.0,0.5\n"


def base_config(**changes) -> dict:
    raw = json.loads(harness.data_path("example_config.json").read_text())
    raw.update(
        model="builtin:aedes.cls",
        climate="climate.csv",
        containers=raw["containers"][:2],
        replicates=2,
        maxtime=4,
        sample_interval=1,
    )
    raw.pop("output", None)
    raw.update(changes)
    return raw


@pytest.fixture
def cfg_dir(tmp_path):
    (tmp_path / "climate.csv").write_text(CLIMATE)
    return tmp_path


def write_config(d, raw) -> str:
    path = d / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


def test_example_config_loads():
    cfg = harness.load_config(harness.data_path("example_config.json"))
    assert len(cfg.containers) == 11 and cfg.tables.mtd == 8.8
    assert all(4.5 <= c.dtime <= 9.0 for c in cfg.containers)
    assert cfg.replicates >= 20 and cfg.maxtime == 190
    info = harness.validate(cfg)
    assert info["rules"] == 29 and info["samples_per_replicate"] == 191


def test_climate_ingestion(cfg_dir):
    climate = harness.ingest_climate(cfg_dir / "climate.csv", 1.0, 15.0, 0.25, 0.8)
    events = climate.events(8.8)
    temps = {(e.value, e.time) for e in events if e.name == "Temp"}
    assert (10, 3.0) in temps
    rains = sorted((e.time, e.value) for e in events if e.name == "Rain")
    assert rains == [(1.5, "light"), (3.5, "heavy")]
    lights = [e for e in events if e.name == "Light" and int(e.time) == 2]
    assert sorted((e.value, e.time) for e in lights) == [("sunrise", 2.25), ("sunset", 2.8)]


@pytest.mark.parametrize("text, message", [
    ("day,temp_c\n0,1\n", "columns"),
    ("day,temp_c,rain_mm\n0,abc,0\n", "row 2"),
    ("day,temp_c,rain_mm\n0,10,0\n1,10,-2\n", "row 3"),
    ("day,temp_c,rain_mm\n0,10,0\n2,10,0\n", "row 3 jumps from day 0 to 2"),
])
def test_climate_errors(tmp_path, text, message):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ConfigError, match=message):
        harness.ingest_climate(path, 1.0, 15.0, 0.25, 0.8)


@pytest.mark.parametrize("change", [
    {"replicates": 0},
    {"sample_interval": 0},
    {"seed": -1},
    {"schema_version": 2},
    {"sunrise": 0.9},
    {"rain_thresholds_mm": {"light": 20, "heavy": 10}},
    {"surprise": 1},
])
def test_config_errors(cfg_dir, change):
    with pytest.raises(ConfigError):
        harness.load_config(write_config(cfg_dir, base_config(**change)))


def test_missing_key(cfg_dir):
    raw = base_config()
    del raw["seed"]
    with pytest.raises(ConfigError, match="seed"):
        harness.load_config(write_config(cfg_dir, raw))


def test_replicate_seeds():
    assert [harness.replicate_seed(7, r) for r in range(3)] == [7, 8, 9]


def test_run_is_deterministic(cfg_dir):
    cfg = harness.load_config(write_config(cfg_dir, base_config()))
    a = harness.run_ensemble(cfg, cfg_dir / "a")
    b = harness.run_ensemble(cfg, cfg_dir / "b")
    for kind in ("trajectory", "summary"):
        assert a[kind].read_bytes() == b[kind].read_bytes()
    meta = json.loads(a["metadata"].read_text())
    assert meta["rng"] and meta["seed"] == cfg.seed and meta["config_sha256"] == cfg.digest
    assert "wall_time_s" in meta


def test_output_schema(cfg_dir):
    cfg = harness.load_config(write_config(cfg_dir, base_config()))
    paths = harness.run_ensemble(cfg, cfg_dir / "out")
    with open(paths["trajectory"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["replicate", "time", "eggs", "larva1", "larva2", "larva3", "larva4", "pupae",
                       *[f"adult_c{j}" for j in range(1, 9)], "adults", "vol_1", "vol_2", "temp", "daylight"]
    assert len(rows) == 1 + 2 * 5
    assert [r[0] for r in rows[1:]] == ["0"] * 5 + ["1"] * 5
    assert rows[1][1] == "0" and rows[1][16] == "4"
    summary = paths["summary"].read_text().splitlines()
    assert summary[0] == "time,adults_mean,adults_min,adults_max,adults_sd"
    assert summary[1] == "0,4,4,4,0"


def test_maxtime_zero_single_sample(cfg_dir):
    cfg = harness.load_config(write_config(cfg_dir, base_config(maxtime=0, replicates=1)))
    [traj] = harness.run_replicates(cfg)
    assert [r["time"] for r in traj] == [0]


def test_parallel_matches_serial(cfg_dir):
    cfg = harness.load_config(write_config(cfg_dir, base_config(maxtime=2)))
    assert harness.run_replicates(cfg, workers=2) == harness.run_replicates(cfg, workers=1)


def test_bundled_traps():
    traps = harness.read_traps(harness.data_path("traps.csv"))
    assert len(traps) == 13 and sum(c for _, c in traps) == 3535
    assert traps[0] == (0, 4) and traps[-1] == (159, 398)


def test_compare_traps():
    summary = {float(t): 10.0 + t for t in range(191)}
    traps = harness.read_traps(harness.data_path("traps.csv"))
    rows, r = harness.compare_traps(summary, traps)
    assert len(rows) == 13 and sum(row["trap_count"] for row in rows) == 3535
    assert rows[1]["simulated_mean_adults"] == 17.0
    assert -1 <= r <= 1
    assert summary == {float(t): 10.0 + t for t in range(191)}  # inputs untouched


def test_compare_empty_and_out_of_range(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    rows, r = harness.compare_traps({0.0: 1.0}, harness.read_traps(empty))
    assert rows == [] and math.isnan(r)
    out = tmp_path / "cmp.csv"
    harness.write_comparison(out, rows)
    assert out.read_text() == "day,simulated_mean_adults,trap_count\n"
    with pytest.raises(ConfigError, match="outside"):
        harness.compare_traps({0.0: 1.0, 1.0: 2.0}, [(5.0, 3)])
