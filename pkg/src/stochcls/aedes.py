"""Aedes albopictus population in outdoor water containers.

The state is one environment loop ``{En}<Temp; Daylight>`` holding the adult
females and the containers ``{C}<ind; Temp; Vol; p1; p2; p3; DTime>``; eggs,
larvae and pupae live inside the containers.  Life-cycle transitions are the
29 rules bundled in ``data/aedes.cls``; weather is driven by external events
(``Temp``, ``Light``, ``Rain`` and ``Desic``) handled by :func:`handle_event`.
"""

from __future__ import annotations

import functools
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources

from .biology import VOLUMES, MosquitoPhase, StageTables, phase_counts
from .dsl import parse_model
from .errors import InvalidSpecError, UnknownEventError
from .events import EventList, ExternalEvent
from .rules import Ecosystem
from .terms import Loop, Term, root_loop

ENVIRONMENT = "En"
CONTAINER = "C"
LIGHT_VALUES = {"sunrise": True, "sunset": False}
RAIN_LEVELS = ("light", "heavy")
# Stable order for events sharing a timestamp.
EVENT_PRIORITY = {"Temp": 0, "Light": 1, "Rain": 2, "Desic": 3}

IMMATURE_LABELS = ("Egg", "Larva1", "Larva2", "Larva3", "Larva4", "Pupa")
ADULT_LABELS = tuple(f"Adult{j}" for j in range(1, 9))


def event_priority(event: ExternalEvent) -> int:
    return EVENT_PRIORITY.get(event.name, len(EVENT_PRIORITY))


def temperature_offset(temp_c: float, mtd: float) -> float:
    """Degrees above the minimum development temperature, clamped at 0.

    Rounded to 1e-9 so that e.g. 18.8 - 8.8 gives exactly 10.
    """
    if not math.isfinite(temp_c):
        raise InvalidSpecError(f"temperature must be finite, got {temp_c!r}")
    return round(max(0.0, temp_c - mtd), 9)


@dataclass(frozen=True)
class ContainerSpec:
    """One water container.

    ``p1 < p2 < p3`` are the density thresholds (individuals) separating
    sparse, normal, crowded and overcrowded containers; ``dtime`` is the
    number of days for the water to drop one level.
    """

    ind: int
    p1: int
    p2: int
    p3: int
    dtime: float
    initial_vol: str = "half-full"
    initial_temp: float = 0.0

    def __post_init__(self):
        if isinstance(self.ind, bool) or not isinstance(self.ind, int) or self.ind < 1:
            raise InvalidSpecError(f"container index must be a positive integer, got {self.ind!r}")
        if not 0 < self.p1 < self.p2 < self.p3:
            raise InvalidSpecError(f"container {self.ind}: thresholds must satisfy 0 < p1 < p2 < p3")
        if not (self.dtime > 0 and math.isfinite(self.dtime)):
            raise InvalidSpecError(f"container {self.ind}: dtime must be positive")
        if self.initial_vol not in VOLUMES:
            raise InvalidSpecError(f"container {self.ind}: unknown volume {self.initial_vol!r}")
        if not (self.initial_temp >= 0 and math.isfinite(self.initial_temp)):
            raise InvalidSpecError(f"container {self.ind}: initial_temp must be a nonnegative offset")

    def info(self, temp: float | None = None) -> dict:
        return {
            "ind": self.ind, "Temp": self.initial_temp if temp is None else temp,
            "Vol": self.initial_vol, "p1": self.p1, "p2": self.p2, "p3": self.p3,
            "DTime": self.dtime,
        }

    def loop(self, content: Term | None = None, temp: float | None = None) -> Loop:
        return Loop(CONTAINER, self.info(temp), content)


def _per_day(value, day: int) -> float:
    if isinstance(value, Mapping):
        return value[day]
    return value


@dataclass(frozen=True)
class ClimateSchedule:
    """Daily mean temperatures (degrees C), rainfalls and day length.

    ``sunrise`` and ``sunset`` are fractions of the day, either constants or
    mappings from day to fraction.
    """

    daily_temps: Mapping = field(default_factory=dict)
    rainfalls: tuple = ()
    sunrise: float | Mapping = 0.25
    sunset: float | Mapping = 0.75

    def __post_init__(self):
        temps = {int(d): float(t) for d, t in dict(self.daily_temps).items()}
        for d, t in temps.items():
            if d < 0 or not math.isfinite(t):
                raise InvalidSpecError(f"day {d}: temperatures need nonnegative days and finite values")
        rains = tuple((float(t), str(lev)) for t, lev in self.rainfalls)
        for t, lev in rains:
            if not (t >= 0 and math.isfinite(t)):
                raise InvalidSpecError(f"rainfall time must be nonnegative, got {t}")
            if lev not in RAIN_LEVELS:
                raise InvalidSpecError(f"rainfall level must be light or heavy, got {lev!r}")
        object.__setattr__(self, "daily_temps", dict(sorted(temps.items())))
        object.__setattr__(self, "rainfalls", tuple(sorted(rains)))
        for d in temps:
            rise, set_ = _per_day(self.sunrise, d), _per_day(self.sunset, d)
            if not 0 <= rise < set_ < 1:
                raise InvalidSpecError(f"day {d}: need 0 <= sunrise < sunset < 1")

    @property
    def days(self) -> list[int]:
        return list(self.daily_temps)

    def offset(self, day: int, mtd: float) -> float | None:
        temp = self.daily_temps.get(day)
        return None if temp is None else temperature_offset(temp, mtd)

    def is_daylight(self, t: float) -> bool:
        day = math.floor(t)
        if day not in self.daily_temps:
            return False
        frac = t - day
        return _per_day(self.sunrise, day) <= frac < _per_day(self.sunset, day)

    def events(self, mtd: float, t0: float = 0.0) -> list[ExternalEvent]:
        """Temperature changes at midnight, sunrise and sunset, and rainfalls."""
        out = []
        for day, temp in self.daily_temps.items():
            out.append(ExternalEvent.make("Temp", temperature_offset(temp, mtd), day))
            out.append(ExternalEvent.make("Light", "sunrise", day + _per_day(self.sunrise, day)))
            out.append(ExternalEvent.make("Light", "sunset", day + _per_day(self.sunset, day)))
        for t, level in self.rainfalls:
            out.append(ExternalEvent.make("Rain", level, t))
        return [e for e in out if e.time >= t0]


@dataclass(frozen=True)
class InitialPopulation:
    """Adults placed in the environment and immatures placed in every container."""

    adults: tuple = ((MosquitoPhase("Adult", 1), 4),)
    per_container: tuple = (
        (MosquitoPhase("Egg"), 6),
        (MosquitoPhase("Larva", 1), 2),
        (MosquitoPhase("Larva", 2), 1),
        (MosquitoPhase("Larva", 3), 1),
    )

    def __post_init__(self):
        for ph, n in self.adults:
            if ph.immature:
                raise InvalidSpecError(f"{ph.kind} cannot live outside a container")
        for ph, n in self.per_container:
            if not ph.immature:
                raise InvalidSpecError("adults cannot be placed inside containers")
        if any(n < 0 for _, n in self.adults + self.per_container):
            raise InvalidSpecError("population counts must be nonnegative")

    @classmethod
    def empty(cls) -> InitialPopulation:
        return cls(adults=(), per_container=())


@functools.lru_cache(maxsize=None)
def load_rules() -> tuple:
    """The 29 bundled life-cycle rules, R1 to R29."""
    text = resources.files("stochcls").joinpath("data/aedes.cls").read_text(encoding="utf-8")
    return tuple(parse_model(text))


def build_ecosystem(specs: Sequence[ContainerSpec], tables: StageTables, climate: ClimateSchedule,
                    population: InitialPopulation | None = None, *, t0: float = 0.0,
                    rules: Sequence | None = None) -> Ecosystem:
    """Initial state, rules and scheduled events for one simulation."""
    population = population or InitialPopulation()
    indices = [s.ind for s in specs]
    if len(set(indices)) != len(indices):
        raise InvalidSpecError("container indices must be unique")
    if sorted(indices) != list(range(1, len(indices) + 1)):
        raise InvalidSpecError("container indices must be 1..N")
    start = climate.offset(math.floor(t0), tables.mtd)
    inside = Term((ph.loop(), n) for ph, n in population.per_container)
    items = [(ph.loop(), n) for ph, n in population.adults]
    items += [(s.loop(inside, start), 1) for s in specs]
    env_info = {"Temp": 0.0 if start is None else start, "Daylight": climate.is_daylight(t0)}
    initial = Term([(Loop(ENVIRONMENT, env_info, Term(items)), 1)])

    events = climate.events(tables.mtd, t0)
    events += [ExternalEvent.make("Desic", s.ind, t0 + s.dtime) for s in specs]
    return Ecosystem(
        initial=initial,
        rules=tuple(load_rules() if rules is None else rules),
        events=EventList(events, event_priority),
        params=tables,
        handler=handle_event,
    )


# -- external events ----------------------------------------------------------

def _environment(term: Term) -> Loop:
    env = root_loop(term)
    if env is None or env.wrap.text != ENVIRONMENT:
        raise ValueError("the state must be a single environment loop")
    return env


def _rebuild(env: Loop, updates: dict[int, Loop], info=None) -> tuple[Term, set]:
    """Swap container loops (keyed by position in ``env``) and report their new addresses."""
    items = [(updates.get(i, node), m) for i, (node, m) in enumerate(env.content.items)]
    content = Term(items)
    new_env = Loop(env.wrap, env.info if info is None else info, content)
    changed = {(content.index_of(loop.text),) for loop in updates.values()}
    return Term([(new_env, 1)]), changed


def _containers(env: Loop) -> list[tuple[int, Loop]]:
    return [
        (i, node) for i, (node, _) in enumerate(env.content.items)
        if isinstance(node, Loop) and node.wrap.text == CONTAINER
    ]


def _set_volume(loop: Loop, vol: str) -> Loop:
    return loop.with_info(loop.info.replace("Vol", vol))


def _handle_light(event, env, events):
    if event.value not in LIGHT_VALUES:
        raise UnknownEventError(f"Light events are sunrise or sunset, got {event.value!r}")
    info = env.info.replace("Daylight", LIGHT_VALUES[event.value])
    term = Term([(env.with_info(info), 1)])
    return term, events, {()}


def _handle_temp(event, env, events):
    value = event.value
    if isinstance(value, (bool, str)) or not value >= 0:
        raise UnknownEventError(f"Temp events carry a nonnegative offset, got {value!r}")
    updates = {i: c.with_info(c.info.replace("Temp", value)) for i, c in _containers(env)}
    term, changed = _rebuild(env, updates, env.info.replace("Temp", value))
    return term, events, changed | {()}


def _handle_desic(event, env, events):
    found = [(i, c) for i, c in _containers(env) if c.info.get("ind") == event.value]
    if len(found) != 1:
        raise UnknownEventError(f"no container with index {event.value!r}")
    i, loop = found[0]
    level = VOLUMES.index(loop.info["Vol"])
    if level == 0:
        return Term([(env, 1)]), events, set()
    lower = VOLUMES[level - 1]
    if lower != "empty":
        events.schedule(ExternalEvent.make("Desic", event.value, event.time + loop.info["DTime"]))
    term, changed = _rebuild(env, {i: _set_volume(loop, lower)})
    return term, events, changed


def _handle_rain(event, env, events):
    if event.value not in RAIN_LEVELS:
        raise UnknownEventError(f"Rain events are light or heavy, got {event.value!r}")
    events.cancel(lambda e: e.name == "Desic")
    updates = {}
    for i, loop in _containers(env):
        if event.value == "heavy":
            vol = "full"
        else:
            vol = VOLUMES[min(VOLUMES.index(loop.info["Vol"]) + 1, len(VOLUMES) - 1)]
        updates[i] = _set_volume(loop, vol)
        events.schedule(ExternalEvent.make("Desic", loop.info["ind"], event.time + loop.info["DTime"]))
    term, changed = _rebuild(env, updates)
    return term, events, changed


HANDLERS = {"Light": _handle_light, "Temp": _handle_temp, "Desic": _handle_desic, "Rain": _handle_rain}


def handle_event(event: ExternalEvent, term: Term, events: EventList) -> tuple[Term, EventList, set]:
    """Apply ``event`` to the state; returns the new state, the event list and changed addresses.

    ``events`` is updated in place: rescheduled desiccations are added and a
    rainfall cancels all pending ones first.
    """
    handler = HANDLERS.get(event.name)
    if handler is None:
        raise UnknownEventError(f"unknown event {event.name!r}")
    new, events, changed = handler(event, _environment(term), events)
    return (new if changed else term), events, changed


# -- observables --------------------------------------------------------------

def observe(term: Term) -> dict:
    """Population counts by phase, container volumes, temperature and daylight."""
    env = _environment(term)
    counts = dict.fromkeys(IMMATURE_LABELS + ADULT_LABELS, 0)
    for label, n in phase_counts(env.content).items():
        counts[label] = counts.get(label, 0) + n
    volumes = {}
    for _, c in _containers(env):
        for label, n in phase_counts(c.content).items():
            counts[label] = counts.get(label, 0) + n
        volumes[c.info["ind"]] = VOLUMES.index(c.info["Vol"])
    out = {
        "eggs": counts["Egg"],
        **{f"larva{k}": counts[f"Larva{k}"] for k in range(1, 5)},
        "pupae": counts["Pupa"],
        **{f"adult_c{j}": counts[f"Adult{j}"] for j in range(1, 9)},
    }
    out["adults"] = sum(counts[label] for label in ADULT_LABELS)
    out.update({f"vol_{ind}": volumes[ind] for ind in sorted(volumes)})
    out["temp"] = env.info["Temp"]
    out["daylight"] = int(bool(env.info["Daylight"]))
    return out
