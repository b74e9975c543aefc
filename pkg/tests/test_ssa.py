import math
import random

import pytest

from stochcls.dsl import parse_model, parse_term
from stochcls.events import EventList, ExternalEvent, cancel, schedule
from stochcls.rules import Ecosystem
from stochcls.ssa import (
    EventHandled, ReactionFired, SimState, Terminated, make_rng, run, sample_grid, sample_tau, step,
    waiting_time,
)


def test_waiting_time_formula():
    assert waiting_time(2.0, 1.0) == 0.0
    assert waiting_time(2.0, math.exp(-1)) == pytest.approx(0.5)


def test_sample_tau_never_infinite():
    rng = make_rng(0)
    assert all(math.isfinite(sample_tau(3.0, rng)) for _ in range(10000))


def test_sample_grid():
    assert sample_grid(0, 1) == [0]
    assert sample_grid(3, 1) == [0, 1, 2, 3]
    assert sample_grid(0.3, 0.1) == pytest.approx([0, 0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        sample_grid(1, 0)


def count_a(_t, term):
    return sum(m for n, m in term.items if n.text == "A")


def test_pure_death_is_monotone_and_deterministic():
    eco = Ecosystem(parse_term("A^50"), parse_model("rule D A => 0 @ 0.3;"))
    a = run(eco, 10, sampler=count_a, seed=4)
    b = run(eco, 10, sampler=count_a, seed=4)
    assert a == b
    values = [v for _, v in a]
    assert values[0] == 50 and all(x >= y for x, y in zip(values, values[1:]))


def test_extinction_terminates():
    eco = Ecosystem(parse_term("A"), parse_model("rule D A => 0 @ 5;"))
    state = SimState.start(eco, 1)
    state, out = step(state, 100)
    assert isinstance(out, ReactionFired)
    state, out = step(state, 100)
    assert out == Terminated("extinction")


def noop_handler(event, term, events):
    return term, events, set()


def test_idle_system_runs_events_then_stops_at_maxtime():
    events = EventList([ExternalEvent.make("Tick", 1, 2.0), ExternalEvent.make("Tick", 2, 7.0)])
    eco = Ecosystem(parse_term("A"), (), events, handler=noop_handler)
    state = SimState.start(eco, 0)
    state, out = step(state, 5)
    assert isinstance(out, EventHandled) and state.clock == 2.0
    state, out = step(state, 5)
    assert out == Terminated("max-time") and state.clock == 5
    assert len(state.events) == 1  # the event beyond maxtime is never handled


def test_event_waits_for_earlier_reactions():
    log = []

    def handler(event, term, events):
        log.append(("event", event.time))
        return term, events, set()

    events = EventList([ExternalEvent.make("Tick", 0, 1.0)])
    eco = Ecosystem(parse_term("A"), parse_model("rule K A => A @ 50;"), events, handler=handler)
    state = SimState.start(eco, 3)
    times = []
    while True:
        state, out = step(state, 2.0)
        if isinstance(out, Terminated):
            break
        times.append(state.clock)
        if isinstance(out, EventHandled):
            event_index = len(times) - 1
    assert times == sorted(times)
    assert times[event_index] == 1.0
    assert times[event_index - 1] < 1.0 < times[event_index + 1]


def test_tie_goes_to_the_reaction(monkeypatch):
    import stochcls.ssa as ssa
    monkeypatch.setattr(ssa, "sample_tau", lambda a0, rng: 1.0)
    handled = []
    events = EventList([ExternalEvent.make("Tick", 0, 1.0)])
    eco = Ecosystem(parse_term("A"), parse_model("rule K A => A @ 1;"), events,
                    handler=lambda e, t, ev: (handled.append(e) or t, ev, set()))
    state = SimState.start(eco, 0)
    state, out = step(state, 10)
    assert isinstance(out, ReactionFired) and state.clock == 1.0 and not handled


def test_event_inserted_later_only_changes_the_future():
    rules = parse_model("rule B A => A | A @ 0.7;\nrule D A => 0 @ 0.5;")

    def trace(events, handler):
        eco = Ecosystem(parse_term("A^5"), rules, events, handler=handler)
        state = SimState.start(eco, 9)
        out_times = []
        while True:
            state, out = step(state, 4.0)
            if isinstance(out, Terminated):
                return out_times
            out_times.append((state.clock, state.term.text))

    def add_one(event, term, events):
        return parse_term(term.text + " | A") if term.text != "0" else parse_term("A"), events, {()}

    base = trace(EventList(), noop_handler)
    t_event = (base[3][0] + base[4][0]) / 2
    other = trace(EventList([ExternalEvent.make("Add", 1, t_event)]), add_one)
    before = [x for x in base if x[0] < t_event]
    assert [x for x in other if x[0] < t_event] == before
    assert other != base


def test_run_samples_piecewise_constant():
    eco = Ecosystem(parse_term("A^3"), parse_model("rule D A => 0 @ 1;"))
    samples = run(eco, 2.0, sampler=count_a, sample_interval=0.5, seed=1)
    assert [t for t, _ in samples] == [0, 0.5, 1.0, 1.5, 2.0]
    assert samples[0][1] == 3


def test_event_list_order_and_cancel():
    ev = EventList()
    schedule(ev, ExternalEvent.make("Desic", 2, 2.5))
    schedule(ev, ExternalEvent.make("Desic", 1, 1.0))
    schedule(ev, ExternalEvent.make("Rain", "light", 1.0))
    assert [e.time for e in ev] == [1.0, 1.0, 2.5]
    assert ev.peek().name == "Desic"  # insertion order breaks ties without a priority
    cancel(ev, lambda e: False)
    assert len(ev) == 3
    cancel(ev, lambda e: e.name == "Desic")
    assert ev.text == "(Rain, light, 1.0)"
    with pytest.raises(ValueError):
        ExternalEvent.make("Bad", 1, -1)


def test_priority_breaks_ties():
    order = {"Temp": 0, "Light": 1}
    ev = EventList([ExternalEvent.make("Light", "sunrise", 3.0), ExternalEvent.make("Temp", 10, 3.0)],
                   lambda e: order[e.name])
    assert ev.pop().name == "Temp"


def test_rng_is_reproducible():
    assert make_rng(5).random() == random.Random(5).random()
