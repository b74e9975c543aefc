"""Regenerate ``src/stochcls/data/synthetic_climate.csv``.

Day 0 is 8 May.  Daily temperatures interpolate typical monthly means of a
Tyrrhenian coastal town (warmest in late July and August) plus seeded noise;
rain is frequent in spring and autumn and comes as rarer, heavier storms in
July and August.  The series is synthetic.
"""

import csv
import random
import sys
from pathlib import Path

DAYS = 200
SEED = 20080508
OUT = Path(__file__).resolve().parents[1] / "src" / "stochcls" / "data" / "synthetic_climate.csv"


# (day, mean temperature in C) at mid-month, day 0 being 8 May
MONTHLY_MEANS = ((-22, 14.0), (7, 17.0), (38, 21.0), (68, 24.0), (99, 24.0),
                 (130, 20.5), (160, 16.5), (191, 12.0), (221, 8.5))


def seasonal_temp(day: float) -> float:
    for (d0, t0), (d1, t1) in zip(MONTHLY_MEANS, MONTHLY_MEANS[1:]):
        if d0 <= day <= d1:
            return t0 + (t1 - t0) * (day - d0) / (d1 - d0)
    raise ValueError(f"day {day} outside the seasonal table")


def rain_profile(day: int) -> tuple[float, float]:
    """(probability of rain, mean rainfall in mm) for ``day``."""
    if day < 54:  # May, June
        return 0.30, 9.0
    if day < 116:  # July, August
        return 0.20, 16.0
    if day < 146:  # September
        return 0.25, 10.0
    return 0.35, 12.0


def main(out=OUT):
    rng = random.Random(SEED)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["day", "temp_c", "rain_mm"])
        for day in range(DAYS):
            temp = seasonal_temp(day) + rng.gauss(0.0, 1.2)
            p, mean = rain_profile(day)
            rain = rng.expovariate(1 / mean) if rng.random() < p else 0.0
            writer.writerow([day, f"{temp:.1f}", f"{rain:.1f}"])


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else OUT)
