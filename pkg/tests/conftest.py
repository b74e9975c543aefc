import math

import pytest

from stochcls.aedes import ClimateSchedule, ContainerSpec, build_ecosystem
from stochcls.biology import StageTables

# acceptance lines collected during the session, printed at the end
ACCEPTANCE_LINES: dict[int, str] = {}


def make_tables(**changes) -> StageTables:
    data = dict(
        degree_days=(60, 25, 25, 30, 40, 30),
        base_death=(0.4,) * 6 + (0.3,) * 8,
        durations={7: 0.5, **{i: 4.5 for i in range(8, 16)}},
        blood_threshold=1,
        mtd=8.8,
    )
    data.update(changes)
    return StageTables(**data)


def make_specs(n: int = 11, vol: str = "half-full") -> list[ContainerSpec]:
    return [ContainerSpec(i, 100, 250, 300, 4.5 + 0.45 * (i - 1), vol) for i in range(1, n + 1)]


def warm_climate(days: int = 60, rain_every: int = 6) -> ClimateSchedule:
    temps = {d: 22 + 4 * math.sin(d / 9) for d in range(days)}
    rains = [(d + 0.5, "heavy" if d % 18 == 0 else "light") for d in range(0, days, rain_every)]
    return ClimateSchedule(temps, rains, 0.25, 0.8)


@pytest.fixture
def tables():
    return make_tables()


@pytest.fixture
def small_ecosystem(tables):
    return build_ecosystem(make_specs(3), tables, warm_climate(30))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
