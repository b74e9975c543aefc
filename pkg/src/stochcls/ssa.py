"""Gillespie direct method over compartments, interleaved with external events.

Each step draws the waiting time ``tau = ln(1/r1) / a0`` for the next
reaction.  If the earliest scheduled event comes strictly before
``t + tau`` the event is handled instead and the next step draws a fresh
waiting time.  Otherwise the reaction ``(rule, compartment)`` is chosen with
probability ``a_j^i / a0`` and executed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Union

from .errors import NonPositivePropensityError, StaleTableError, UnknownEventError
from .events import EventList, ExternalEvent
from .rules import Ecosystem, PropensityTable, execute, uniform01
from .terms import Term, compartment_at

RNG_ALGORITHM = "python-random-MT19937"


def make_rng(seed: int) -> random.Random:
    """The seeded generator used by every simulation (Mersenne Twister)."""
    return random.Random(seed)


def waiting_time(a0: float, r1: float) -> float:
    """Inverse-CDF transform of a uniform draw ``r1`` in (0, 1]."""
    return math.log(1.0 / r1) / a0


def sample_tau(a0: float, rng) -> float:
    if not a0 > 0:
        raise NonPositivePropensityError(f"a0 must be positive, got {a0}")
    return waiting_time(a0, uniform01(rng))


@dataclass(frozen=True)
class ReactionFired:
    rule_id: str
    locus: tuple


@dataclass(frozen=True)
class EventHandled:
    event: ExternalEvent


@dataclass(frozen=True)
class Terminated:
    reason: str  # "max-time" or "extinction"


StepOutcome = Union[ReactionFired, EventHandled, Terminated]


def _no_handler(event, term, events):
    raise UnknownEventError(f"no handler for event {event.text}")


@dataclass
class SimState:
    """Everything that evolves during one simulation run."""

    term: Term
    clock: float
    events: EventList
    rng: random.Random
    table: PropensityTable
    rules: tuple
    params: object = None
    handler: Callable = _no_handler
    version: int = 0
    log: list = field(default_factory=list)

    @classmethod
    def start(cls, eco: Ecosystem, seed: int = 0, *, rng=None, debug: bool = False) -> SimState:
        table = PropensityTable.build(eco.rules, eco.initial, eco.params, debug=debug)
        return cls(
            term=eco.initial,
            clock=0.0,
            events=eco.events.copy(),
            rng=rng if rng is not None else make_rng(seed),
            table=table,
            rules=eco.rules,
            params=eco.params,
            handler=eco.handler or _no_handler,
        )


def step(state: SimState, maxtime: float, handler: Callable | None = None) -> tuple[SimState, StepOutcome]:
    """Advance ``state`` by one event or one reaction."""
    handler = handler or state.handler
    a0 = state.table.total
    pending = state.events.peek()
    if a0 <= 0 and pending is None:
        return state, Terminated("extinction")
    tau = sample_tau(a0, state.rng) if a0 > 0 else math.inf
    if pending is not None and pending.time < state.clock + tau:
        if pending.time > maxtime:
            state.clock = maxtime
            return state, Terminated("max-time")
        state.events.pop()
        state.clock = max(state.clock, pending.time)
        term, events, changed = handler(pending, state.term, state.events)
        state.events = events
        if term is not state.term:
            state.term = term
            state.version += 1
            state.table.update(term, changed)
        return state, EventHandled(pending)
    t_next = state.clock + tau
    if t_next > maxtime:
        state.clock = maxtime
        return state, Terminated("max-time")
    state.clock = t_next
    j, addr = state.table.select(state.rng)
    rule = state.rules[j]
    comp = compartment_at(state.term, addr)
    match = rule.pick(comp, state.rng, state.params)
    if match is None:
        raise StaleTableError(f"rule {rule.id} has propensity at {addr} but no match")
    state.term = execute(rule, match, state.term)
    state.version += 1
    state.table.update(state.term, {addr})
    return state, ReactionFired(rule.id, addr)


def sample_grid(maxtime: float, interval: float) -> list[float]:
    """Sample times ``k * interval`` up to ``maxtime`` inclusive."""
    if not interval > 0:
        raise ValueError("sample interval must be positive")
    if maxtime < 0:
        raise ValueError("maxtime must be nonnegative")
    n = int(math.floor(maxtime / interval + 1e-9))
    return [k * interval for k in range(n + 1)]


def run(eco: Ecosystem, maxtime: float, handler: Callable | None = None,
        sampler: Callable | None = None, sample_interval: float = 1.0, seed: int = 0,
        *, rng=None, observer: Callable | None = None, debug: bool = False) -> list[tuple]:
    """Simulate ``eco`` up to ``maxtime`` and sample on a regular grid.

    Returns ``[(time, sampler(time, term)), ...]``.  A sample at time ``t``
    sees every jump at or before ``t``.  ``observer(state, outcome)`` is
    called after every step.
    """
    sampler = sampler or (lambda t, term: term)
    grid = sample_grid(maxtime, sample_interval)
    state = SimState.start(eco, seed, rng=rng, debug=debug)
    samples: list[tuple] = []
    k = 0
    while True:
        before = state.term
        state, outcome = step(state, maxtime, handler)
        if observer is not None:
            observer(state, outcome)
        if isinstance(outcome, Terminated):
            break
        while k < len(grid) and grid[k] < state.clock:
            samples.append((grid[k], sampler(grid[k], before)))
            k += 1
    while k < len(grid):
        samples.append((grid[k], sampler(grid[k], state.term)))
        k += 1
    return samples
