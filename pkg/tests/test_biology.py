import pytest

from conftest import make_tables
from stochcls.biology import MosquitoPhase, adult_rate, death_rate, density_class, eggs, immature_rate
from stochcls.errors import InvalidSpecError

T = (100, 250, 300)


def test_eggs_table():
    assert [eggs(j) for j in range(1, 9)] == [40, 37, 35, 32, 30, 27, 25, 22]
    for bad in (0, 9):
        with pytest.raises(ValueError):
            eggs(bad)


@pytest.mark.parametrize("n, vol, expected", [
    (0, "empty", 1.0), (500, "empty", 1.0),
    (50, "full", 0.8 * 0.1), (99, "full", 0.8 * 0.1),
    (100, "full", 0.1), (249, "full", 0.1),
    (250, "full", 1.2 * 0.1), (260, "full", 1.2 * 0.1), (299, "full", 1.2 * 0.1),
    (300, "full", 1.0), (1000, "full", 1.0),
    # half-full behaves as full with twice the individuals
    (49, "half-full", 0.8 * 0.1), (50, "half-full", 0.1), (130, "half-full", 1.2 * 0.1),
    (150, "half-full", 1.0),
])
def test_death_rate_branches(n, vol, expected):
    assert death_rate(0.1, n, vol, *T) == expected


def test_half_full_doubles():
    for n in range(0, 200):
        assert death_rate(0.1, n, "half-full", *T) == death_rate(0.1, 2 * n, "full", *T)
    assert density_class(130, "half-full", *T) == "crowded"


def info(vol, temp=10):
    return {"Temp": temp, "Vol": vol, "p1": 100, "p2": 250, "p3": 300}


def test_immature_rate_examples():
    tables = make_tables(degree_days=(4, 25, 25, 30, 40, 30), base_death=(0.1,) * 14)
    assert immature_rate(1, info("full"), 120, tables) == pytest.approx(2.25)
    assert immature_rate(1, info("empty"), 5, tables) == 0.0
    assert immature_rate(16, info("empty"), 5, tables) == 10 / 4


def test_immature_rates_conserve_speed_and_scale_with_temp():
    tables = make_tables()
    for stage in range(1, 7):
        for vol in ("empty", "half-full", "full"):
            for n in (0, 60, 140, 400):
                total = immature_rate(stage, info(vol), n, tables) + immature_rate(stage + 15, info(vol), n, tables)
                assert total == pytest.approx(10 / tables.dd(stage))
                doubled = immature_rate(stage, info(vol, 20), n, tables)
                assert doubled == pytest.approx(2 * immature_rate(stage, info(vol), n, tables))


def test_immature_rate_rejects_other_rules():
    with pytest.raises(ValueError):
        immature_rate(7, info("full"), 1, make_tables())


def test_adult_rates():
    tables = make_tables(base_death=(0.4,) * 6 + (0.05,) * 8,
                         durations={7: 0.5, **{i: 4 for i in range(8, 16)}})
    assert adult_rate(7, tables) == 2.0
    assert adult_rate(8, tables) == pytest.approx(0.2375)
    assert adult_rate(22, tables) == pytest.approx(0.0125)
    for i in range(8, 16):
        assert adult_rate(i, tables) + adult_rate(i + 14, tables) == pytest.approx(1 / tables.duration(i))
    with pytest.raises(ValueError):
        adult_rate(16, tables)


def test_stage_tables_validation():
    with pytest.raises(InvalidSpecError):
        make_tables(degree_days=(1, 2, 3))
    with pytest.raises(InvalidSpecError):
        make_tables(base_death=(0.9,) * 14)  # crowded rate would exceed 1
    with pytest.raises(InvalidSpecError):
        make_tables(durations={7: 1})


def test_phase_round_trip():
    for ph in [MosquitoPhase("Egg"), MosquitoPhase("Larva", 3), MosquitoPhase("Pupa"),
               MosquitoPhase("Adult", 8, blood=2)]:
        assert MosquitoPhase.from_content(ph.content()) == ph
    assert MosquitoPhase("Larva", 2).stage == 3 and MosquitoPhase("Adult", 1).stage == 7
    with pytest.raises(ValueError):
        MosquitoPhase("Larva", 5)
