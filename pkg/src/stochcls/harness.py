"""Run configuration, climate ingestion, ensemble runs and trap comparison.

A configuration is one JSON object with ``schema_version`` 1.  Relative
paths inside it are resolved against the directory of the file; ``builtin:``
names refer to files shipped in the package's ``data`` directory.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .aedes import (
    ClimateSchedule,
    ContainerSpec,
    InitialPopulation,
    build_ecosystem,
    observe,
)
from .biology import MosquitoPhase, StageTables
from .dsl import ParseError, parse_model
from .errors import ConfigError, StochCLSError
from .ssa import RNG_ALGORITHM, run, sample_grid

SCHEMA_VERSION = 1
REQUIRED_KEYS = (
    "schema_version", "model", "climate", "rain_thresholds_mm", "sunrise", "sunset",
    "stage_tables", "containers", "initial_population", "seed", "replicates",
    "maxtime", "sample_interval",
)
OPTIONAL_KEYS = ("output", "notes")
RAIN_TIME = 0.5  # rainfalls are placed at midday

COUNT_COLUMNS = (
    ["eggs", "larva1", "larva2", "larva3", "larva4", "pupae"]
    + [f"adult_c{j}" for j in range(1, 9)]
    + ["adults"]
)
SUMMARY_COLUMNS = ["time", "adults_mean", "adults_min", "adults_max", "adults_sd"]
COMPARISON_COLUMNS = ["day", "simulated_mean_adults", "trap_count"]


def data_path(name: str) -> Path:
    """Path of a file bundled in the package ``data`` directory."""
    return Path(str(resources.files("stochcls").joinpath("data", name)))


def _resolve(ref: str, base: Path) -> Path:
    if ref.startswith("builtin:"):
        return data_path(ref[len("builtin:"):])
    path = Path(ref)
    return path if path.is_absolute() else base / path


def format_number(x) -> str:
    """Shortest text for a number, dropping float noise beyond 1e-9."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = round(float(x), 9)
    return str(int(x)) if x.is_integer() else repr(x)


# -- configuration ------------------------------------------------------------

@dataclass
class RunConfig:
    model_path: Path
    climate_path: Path
    light_mm: float
    heavy_mm: float
    sunrise: float
    sunset: float
    tables: StageTables
    containers: list
    population: InitialPopulation
    seed: int
    replicates: int
    maxtime: float
    sample_interval: float
    output: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def with_overrides(self, **changes) -> RunConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        cfg = replace(self, **changes)
        _check_run_fields(cfg)
        raw = dict(self.raw)
        for key in ("seed", "replicates", "maxtime", "sample_interval"):
            raw[key] = getattr(cfg, key)
        cfg.raw = raw
        return cfg

    @property
    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the configuration."""
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing key {key!r}")
    return obj[key]


def _phase(entry: dict, where: str) -> tuple[MosquitoPhase, int]:
    try:
        ph = MosquitoPhase(entry["phase"], int(entry.get("number", 0)), int(entry.get("blood", 0)))
        count = int(entry["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad population entry {entry!r}: {exc}") from None
    return ph, count


def _check_run_fields(cfg: RunConfig):
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2**64)")
    if isinstance(cfg.replicates, bool) or not isinstance(cfg.replicates, int) or cfg.replicates < 1:
        raise ConfigError("replicates must be a positive integer")
    if not (cfg.maxtime >= 0 and math.isfinite(cfg.maxtime)):
        raise ConfigError("maxtime must be a nonnegative number")
    if not (cfg.sample_interval > 0 and math.isfinite(cfg.sample_interval)):
        raise ConfigError("sample_interval must be positive")


def parse_config(raw: dict, base: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    for key in REQUIRED_KEYS:
        _need(raw, key, "config")
    unknown = set(raw) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw['schema_version']!r}")

    st = raw["stage_tables"]
    try:
        tables = StageTables(
            degree_days=_need(st, "degree_days", "stage_tables"),
            base_death=_need(st, "base_death", "stage_tables"),
            durations=_need(st, "durations", "stage_tables"),
            blood_threshold=_need(st, "blood_threshold", "stage_tables"),
            mtd=_need(st, "mtd", "stage_tables"),
        )
        containers = [
            ContainerSpec(
                ind=_need(c, "ind", "container"), p1=_need(c, "p1", "container"),
                p2=_need(c, "p2", "container"), p3=_need(c, "p3", "container"),
                dtime=float(_need(c, "dtime", "container")),
                initial_vol=c.get("initial_vol", "half-full"),
                initial_temp=float(c.get("initial_temp", 0.0)),
            )
            for c in raw["containers"]
        ]
        pop = raw["initial_population"]
        population = InitialPopulation(
            adults=tuple(_phase(e, "adults") for e in _need(pop, "adults", "initial_population")),
            per_container=tuple(
                _phase(e, "per_container") for e in _need(pop, "per_container", "initial_population")
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    thresholds = raw["rain_thresholds_mm"]
    light = float(_need(thresholds, "light", "rain_thresholds_mm"))
    heavy = float(_need(thresholds, "heavy", "rain_thresholds_mm"))
    if not 0 < light <= heavy:
        raise ConfigError("rain thresholds need 0 < light <= heavy")
    sunrise, sunset = float(raw["sunrise"]), float(raw["sunset"])
    if not 0 <= sunrise < sunset < 1:
        raise ConfigError("need 0 <= sunrise < sunset < 1")

    output = raw.get("output")
    cfg = RunConfig(
        model_path=_resolve(str(raw["model"]), base),
        climate_path=_resolve(str(raw["climate"]), base),
        light_mm=light, heavy_mm=heavy, sunrise=sunrise, sunset=sunset,
        tables=tables, containers=containers, population=population,
        seed=raw["seed"], replicates=raw["replicates"],
        maxtime=float(raw["maxtime"]), sample_interval=float(raw["sample_interval"]),
        output=None if output is None else _resolve(str(output), base),
        raw=dict(raw),
    )
    _check_run_fields(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw, path.parent)


# -- climate ------------------------------------------------------------------

def ingest_climate(path, light_mm: float, heavy_mm: float,
                   sunrise: float = 0.25, sunset: float = 0.75) -> ClimateSchedule:
    """Read a ``day,temp_c,rain_mm`` CSV into a climate schedule.

    Rainfall below ``light_mm`` is ignored, at or above ``heavy_mm`` it is a
    heavy rain and otherwise a light one; rains happen at midday.
    """
    temps: dict[int, float] = {}
    rains = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"day", "temp_c", "rain_mm"} <= set(reader.fieldnames):
                raise ConfigError(f"{path}: expected columns day, temp_c, rain_mm")
            previous = None
            for row_no, row in enumerate(reader, start=2):
                try:
                    day = int(row["day"])
                    temp = float(row["temp_c"])
                    rain = float(row["rain_mm"])
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}: malformed row {row_no}") from None
                if not (math.isfinite(temp) and math.isfinite(rain)) or rain < 0 or day < 0:
                    raise ConfigError(f"{path}: invalid values in row {row_no}")
                if previous is not None and day != previous + 1:
                    raise ConfigError(f"{path}: row {row_no} jumps from day {previous} to {day}")
                previous = day
                temps[day] = temp
                if rain >= heavy_mm:
                    rains.append((day + RAIN_TIME, "heavy"))
                elif rain >= light_mm:
                    rains.append((day + RAIN_TIME, "light"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return ClimateSchedule(temps, tuple(rains), sunrise, sunset)


# -- ensemble -----------------------------------------------------------------

def replicate_seed(seed: int, replicate: int) -> int:
    """Seed of one replicate: the ensemble seed plus the replicate index."""
    return (seed + replicate) % 2**64


def build_model(cfg: RunConfig):
    try:
        rules = parse_model(cfg.model_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read model {cfg.model_path}: {exc}") from None
    climate = ingest_climate(cfg.climate_path, cfg.light_mm, cfg.heavy_mm, cfg.sunrise, cfg.sunset)
    return build_ecosystem(cfg.containers, cfg.tables, climate, cfg.population, rules=rules)


def _observation(t, term):
    return observe(term)


def simulate_replicate(cfg: RunConfig, replicate: int, eco=None) -> list[dict]:
    """One trajectory as a list of rows (dicts) on the sample grid."""
    eco = eco if eco is not None else build_model(cfg)
    samples = run(eco, cfg.maxtime, sampler=_observation, sample_interval=cfg.sample_interval,
                  seed=replicate_seed(cfg.seed, replicate))
    return [{"replicate": replicate, "time": t, **obs} for t, obs in samples]


_WORKER_STATE: dict = {}


def _worker(args):
    cfg, replicate = args
    key = id(cfg)
    if _WORKER_STATE.get("key") != key:
        _WORKER_STATE.update(key=key, eco=build_model(cfg))
    return simulate_replicate(cfg, replicate, _WORKER_STATE["eco"])


def run_replicates(cfg: RunConfig, workers: int = 1) -> list[list[dict]]:
    """All replicate trajectories, in replicate order."""
    if workers <= 1 or cfg.replicates == 1:
        eco = build_model(cfg)
        return [simulate_replicate(cfg, r, eco) for r in range(cfg.replicates)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker, [(cfg, r) for r in range(cfg.replicates)]))


def trajectory_columns(rows: list[dict]) -> list[str]:
    vols = sorted((k for k in rows[0] if k.startswith("vol_")), key=lambda k: int(k[4:])) if rows else []
    return ["replicate", "time", *COUNT_COLUMNS, *vols, "temp", "daylight"]


def summarize(trajectories: list[list[dict]]) -> list[dict]:
    """Per-time mean, min, max and standard deviation of the adult count."""
    out = []
    for rows in zip(*trajectories):
        adults = [r["adults"] for r in rows]
        out.append({
            "time": rows[0]["time"],
            "adults_mean": statistics.fmean(adults),
            "adults_min": min(adults),
            "adults_max": max(adults),
            "adults_sd": statistics.stdev(adults) if len(adults) > 1 else 0.0,
        })
    return out


def write_csv(path, columns: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_number(row[c]) if not isinstance(row[c], str) else row[c]
                             for c in columns])


def run_ensemble(cfg: RunConfig, out_dir=None, workers: int = 1) -> dict:
    """Simulate all replicates and write trajectory, summary and metadata files.

    Returns the paths written, keyed by ``trajectory``, ``summary`` and
    ``metadata``.
    """
    out_dir = Path(out_dir if out_dir is not None else (cfg.output or "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    trajectories = run_replicates(cfg, workers)
    wall = time.perf_counter() - start

    paths = {
        "trajectory": out_dir / "trajectory.csv",
        "summary": out_dir / "summary.csv",
        "metadata": out_dir / "metadata.json",
    }
    rows = [row for traj in trajectories for row in traj]
    write_csv(paths["trajectory"], trajectory_columns(rows), rows)
    write_csv(paths["summary"], SUMMARY_COLUMNS, summarize(trajectories))
    from . import __version__

    metadata = {
        "seed": cfg.seed,
        "replicate_seeds": [replicate_seed(cfg.seed, r) for r in range(cfg.replicates)],
        "rng": RNG_ALGORITHM,
        "config_sha256": cfg.digest,
        "config": cfg.raw,
        "model_sha256": hashlib.sha256(cfg.model_path.read_bytes()).hexdigest(),
        "climate_sha256": hashlib.sha256(cfg.climate_path.read_bytes()).hexdigest(),
        "replicates": cfg.replicates,
        "maxtime": cfg.maxtime,
        "sample_interval": cfg.sample_interval,
        "wall_time_s": round(wall, 3),
        "package_version": __version__,
        "python": platform.python_version(),
    }
    paths["metadata"].write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# -- trap comparison ----------------------------------------------------------

def read_traps(path) -> list[tuple[float, int]]:
    """``(day offset, count)`` pairs from a CSV with ``day`` and ``count`` columns."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return out
        if not {"day", "count"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns day and count")
        for row_no, row in enumerate(reader, start=2):
            try:
                out.append((float(row["day"]), int(row["count"])))
            except (TypeError, ValueError):
                raise ConfigError(f"{path}: malformed row {row_no}") from None
    return out


def read_summary(path) -> dict[float, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {float(r["time"]): float(r["adults_mean"]) for r in csv.DictReader(fh)}


def compare_traps(summary: dict[float, float], traps: list[tuple[float, int]]):
    """Join simulated mean adults with trap counts on the trap days.

    Returns the comparison rows and the Pearson correlation of the two
    series (``nan`` when it is undefined).
    """
    times = sorted(summary)
    rows = []
    for day, count in traps:
        if not times or day < times[0] or day > times[-1]:
            raise ConfigError(f"trap day {format_number(day)} is outside the simulated range")
        key = min(times, key=lambda t: abs(t - day))
        if abs(key - day) > 1e-9:
            raise ConfigError(f"trap day {format_number(day)} is not on the sample grid")
        rows.append({"day": day, "simulated_mean_adults": summary[key], "trap_count": count})
    try:
        r = statistics.correlation([row["simulated_mean_adults"] for row in rows],
                                   [row["trap_count"] for row in rows])
    except statistics.StatisticsError:
        r = math.nan
    return rows, r


def write_comparison(path, rows) -> None:
    write_csv(path, COMPARISON_COLUMNS, rows)


def validate(cfg: RunConfig) -> dict:
    """Load every input of ``cfg`` and report what a run would simulate."""
    try:
        eco = build_model(cfg)
    except ParseError as exc:
        raise ConfigError(f"{cfg.model_path}: {exc}") from None
    except StochCLSError as exc:
        raise ConfigError(str(exc)) from None
    return {
        "rules": len(eco.rules),
        "containers": len(cfg.containers),
        "events": len(eco.events),
        "samples_per_replicate": len(sample_grid(cfg.maxtime, cfg.sample_interval)),
    }
