"""Scheduled external events and the time-ordered event list."""

from __future__ import annotations

import bisect
import itertools
import math
from collections.abc import Callable, Iterable
from typing import NamedTuple

from .terms import Value, _check_name, format_value, normalize_value


class ExternalEvent(NamedTuple):
    """A ``(name, value, time)`` triple; the integer part of ``time`` is the day."""

    name: str
    value: Value
    time: float

    @classmethod
    def make(cls, name: str, value, time) -> ExternalEvent:
        time = float(time)
        if not math.isfinite(time) or time < 0:
            raise ValueError(f"event times must be finite and nonnegative, got {time!r}")
        return cls(_check_name(name), normalize_value(value), time)

    @property
    def text(self) -> str:
        return f"({self.name}, {format_value(self.value)}, {self.time!r})"

    def __str__(self):
        return self.text


def _no_priority(event: ExternalEvent) -> int:
    return 0


class EventList:
    """Events sorted by time, then by ``priority(event)``, then insertion order."""

    def __init__(self, events: Iterable[ExternalEvent] = (),
                 priority: Callable[[ExternalEvent], int] | None = None):
        self.priority = priority or _no_priority
        self._counter = itertools.count()
        self._entries: list[tuple] = []
        for e in events:
            self.schedule(e)

    def _key(self, e: ExternalEvent) -> tuple:
        return (e.time, self.priority(e), next(self._counter))

    def schedule(self, e: ExternalEvent) -> EventList:
        bisect.insort(self._entries, (*self._key(e), e))
        return self

    def cancel(self, predicate: Callable[[ExternalEvent], bool]) -> EventList:
        self._entries = [entry for entry in self._entries if not predicate(entry[-1])]
        return self

    def peek(self) -> ExternalEvent | None:
        return self._entries[0][-1] if self._entries else None

    def pop(self) -> ExternalEvent:
        return self._entries.pop(0)[-1]

    def copy(self) -> EventList:
        new = EventList(priority=self.priority)
        new._entries = list(self._entries)
        new._counter = itertools.count(next(self._counter))
        return new

    def __iter__(self):
        return (entry[-1] for entry in self._entries)

    def __len__(self):
        return len(self._entries)

    def __bool__(self):
        return bool(self._entries)

    def __eq__(self, other):
        if isinstance(other, EventList):
            return list(self) == list(other)
        return NotImplemented

    def __repr__(self):
        return f"EventList({len(self)} events)"

    @property
    def text(self) -> str:
        return "\n".join(e.text for e in self)


def schedule(events: EventList, e: ExternalEvent) -> EventList:
    return events.schedule(e)


def cancel(events: EventList, predicate: Callable[[ExternalEvent], bool]) -> EventList:
    return events.cancel(predicate)
