"""Life-cycle formulas for the Aedes albopictus model.

Stages are numbered 1 (egg), 2-5 (larval instars 1-4), 6 (pupa) and 7-14
(gonotrophic cycles 1-8).  Rule indices follow the 29-rule model: 1-6 are
immature transitions, 7 is blood feeding, 8-15 oviposition, 16-21 immature
deaths and 22-29 adult deaths.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .errors import InvalidSpecError
from .terms import Loop, Seq, Term

EGGS_PER_CYCLE = (40, 37, 35, 32, 30, 27, 25, 22)
VOLUMES = ("empty", "half-full", "full")
IMMATURE = frozenset({"Egg", "Larva", "Pupa"})
# Crowded containers raise the baseline death rate by this factor, sparse
# ones lower it by the reciprocal offset.
CROWDED_FACTOR = 1.2
SPARSE_FACTOR = 0.8


def eggs(cycle: int) -> int:
    """Eggs laid at the end of gonotrophic cycle ``cycle`` (1-8)."""
    if not 1 <= cycle <= 8:
        raise ValueError(f"gonotrophic cycle out of range: {cycle}")
    return EGGS_PER_CYCLE[cycle - 1]


@dataclass(frozen=True)
class StageTables:
    """Per-stage parameters of the life cycle.

    Parameters
    ----------
    degree_days : sequence of 6 floats
        Development time of stages 1-6 in degree-days above the minimum
        development temperature.
    base_death : sequence of 14 floats
        Baseline death fraction for stages 1-14.
    durations : mapping
        Days spent in adult activity per rule index: 7 (blood feeding) and
        8-15 (gonotrophic cycles 1-8).
    blood_threshold : int
        Blood meals needed before a female can lay eggs.
    mtd : float
        Minimum temperature for development, in degrees Celsius.
    """

    degree_days: tuple
    base_death: tuple
    durations: Mapping = field(default_factory=dict)
    blood_threshold: int = 1
    mtd: float = 8.8

    def __post_init__(self):
        dd = tuple(float(x) for x in self.degree_days)
        bdr = tuple(float(x) for x in self.base_death)
        dur = {int(k): float(v) for k, v in dict(self.durations).items()}
        object.__setattr__(self, "degree_days", dd)
        object.__setattr__(self, "base_death", bdr)
        object.__setattr__(self, "durations", dur)
        if len(dd) != 6 or not all(x > 0 and math.isfinite(x) for x in dd):
            raise InvalidSpecError("degree_days needs 6 positive values")
        if len(bdr) != 14 or not all(0 <= x < 1 for x in bdr):
            raise InvalidSpecError("base_death needs 14 values in [0, 1)")
        if any(CROWDED_FACTOR * x > 1 for x in bdr[:6]):
            raise InvalidSpecError(
                "immature base_death must stay at or below 1/1.2 so crowded death rates stay below 1"
            )
        if sorted(dur) != list(range(7, 16)) or not all(v > 0 and math.isfinite(v) for v in dur.values()):
            raise InvalidSpecError("durations needs positive values for rule indices 7-15")
        if isinstance(self.blood_threshold, bool) or int(self.blood_threshold) != self.blood_threshold \
                or self.blood_threshold < 0:
            raise InvalidSpecError("blood_threshold must be a nonnegative integer")
        object.__setattr__(self, "blood_threshold", int(self.blood_threshold))
        if not math.isfinite(float(self.mtd)):
            raise InvalidSpecError("mtd must be finite")

    def dd(self, stage: int) -> float:
        if not 1 <= stage <= 6:
            raise ValueError(f"no degree-days for stage {stage}")
        return self.degree_days[stage - 1]

    def bdr(self, stage: int) -> float:
        if not 1 <= stage <= 14:
            raise ValueError(f"no base death rate for stage {stage}")
        return self.base_death[stage - 1]

    def duration(self, rule_index: int) -> float:
        try:
            return self.durations[rule_index]
        except KeyError:
            raise ValueError(f"no duration for rule {rule_index}") from None

    def scaled(self, **changes) -> StageTables:
        data = {
            "degree_days": self.degree_days, "base_death": self.base_death,
            "durations": self.durations, "blood_threshold": self.blood_threshold,
            "mtd": self.mtd,
        }
        data.update(changes)
        return StageTables(**data)


DENSITY_FACTORS = {"sparse": SPARSE_FACTOR, "normal": 1.0, "crowded": CROWDED_FACTOR}


def density_class(n: int, volume: str, p1: int, p2: int, p3: int) -> str:
    """``dry``, ``sparse``, ``normal``, ``crowded`` or ``overcrowded``.

    A half-full container behaves like a full one holding twice as many
    individuals.
    """
    if volume == "empty":
        return "dry"
    if volume == "half-full":
        n = 2 * n
    elif volume != "full":
        raise ValueError(f"unknown water volume {volume!r}")
    if n >= p3:
        return "overcrowded"
    if n >= p2:
        return "crowded"
    if n >= p1:
        return "normal"
    return "sparse"


def death_rate(bdr: float, n: int, volume: str, p1: int, p2: int, p3: int) -> float:
    """Density-dependent death fraction of an immature stage.

    ``bdr`` is the stage's baseline rate and ``n`` the number of immature
    individuals sharing the container.
    """
    factor = DENSITY_FACTORS.get(density_class(n, volume, p1, p2, p3))
    return 1.0 if factor is None else factor * bdr


def immature_rate(i: int, info: Mapping, n: int, tables: StageTables) -> float:
    """Per-individual rate of immature rule ``i`` in a container.

    Rules 1-6 move an individual to the next stage and rules 16-21 kill it;
    together they split the stage's development speed ``Temp / DD``.
    ``info`` is the container info (``Temp``, ``Vol``, ``p1``-``p3``).
    """
    if 1 <= i <= 6:
        stage, dying = i, False
    elif 16 <= i <= 21:
        stage, dying = i - 15, True
    else:
        raise ValueError(f"rule {i} is not an immature rule")
    temp = info["Temp"]
    if temp < 0:
        raise ValueError(f"temperature offset must be nonnegative, got {temp}")
    dr = death_rate(tables.bdr(stage), n, info["Vol"], info["p1"], info["p2"], info["p3"])
    speed = temp / tables.dd(stage)
    return speed * dr if dying else speed * (1.0 - dr)


def adult_rate(i: int, tables: StageTables) -> float:
    """Per-individual rate of adult rule ``i``.

    Oviposition (8-15) and death (22-29) rules of the same gonotrophic cycle
    share one duration and one baseline death rate, so their rates add up to
    ``1 / duration``.
    """
    if i == 7:
        return 1.0 / tables.duration(7)
    if 8 <= i <= 15:
        return (1.0 - tables.bdr(i - 1)) / tables.duration(i)
    if 22 <= i <= 29:
        return tables.bdr(i - 15) / tables.duration(i - 14)
    raise ValueError(f"rule {i} is not an adult rule")


# -- phases -----------------------------------------------------------------

@dataclass(frozen=True)
class MosquitoPhase:
    """Life stage of one mosquito, convertible to and from loop content.

    ``kind`` is ``Egg``, ``Larva``, ``Pupa`` or ``Adult``; ``number`` is the
    instar (1-4) for larvae and the gonotrophic cycle (1-8) for adults.
    """

    kind: str
    number: int = 0
    blood: int = 0

    def __post_init__(self):
        if self.kind in ("Egg", "Pupa"):
            ok = self.number == 0 and self.blood == 0
        elif self.kind == "Larva":
            ok = 1 <= self.number <= 4 and self.blood == 0
        elif self.kind == "Adult":
            ok = 1 <= self.number <= 8 and self.blood >= 0
        else:
            ok = False
        if not ok:
            raise ValueError(f"invalid phase {self!r}")

    @property
    def stage(self) -> int:
        """Stage index 1-14."""
        return {"Egg": 1, "Pupa": 6}.get(self.kind) or (
            1 + self.number if self.kind == "Larva" else 6 + self.number
        )

    @property
    def immature(self) -> bool:
        return self.kind != "Adult"

    def content(self) -> Term:
        items = [(Seq(self.kind), 1)]
        if self.number:
            items.append((Seq(str(self.number)), 1))
        if self.blood:
            items.append((Seq("Blood"), self.blood))
        return Term(items)

    def loop(self) -> Loop:
        return Loop("a", {}, self.content())

    @classmethod
    def from_content(cls, content: Term) -> MosquitoPhase:
        counts = {n.text: m for n, m in content.items if isinstance(n, Seq)}
        kinds = [k for k in ("Egg", "Larva", "Pupa", "Adult") if k in counts]
        if len(kinds) != 1:
            raise ValueError(f"not a mosquito: {content.text}")
        kind = kinds[0]
        numbers = [int(k) for k in counts if k.isdigit()]
        blood = counts.get("Blood", 0)
        return cls(kind, numbers[0] if numbers else 0, blood)


def phase_counts(content: Term) -> dict[str, int]:
    """Count ``a`` loops in ``content`` by kind/number label, e.g. ``Larva2``."""
    out: dict[str, int] = {}
    for node, m in content.items:
        if isinstance(node, Loop) and node.wrap.text == "a":
            try:
                ph = MosquitoPhase.from_content(node.content)
            except ValueError:
                continue
            label = ph.kind + (str(ph.number) if ph.number else "")
            out[label] = out.get(label, 0) + m
    return out


def population_loops(counts: Sequence[tuple[MosquitoPhase, int]]) -> Term:
    return Term((ph.loop(), n) for ph, n in counts)
