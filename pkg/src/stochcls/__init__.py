"""Stochastic simulation of Calculus of Looping Sequences models.

Terms, patterns and rewrite rules are in :mod:`stochcls.terms`,
:mod:`stochcls.patterns` and :mod:`stochcls.rules`; :mod:`stochcls.ssa` runs
the Gillespie direct method with scheduled external events and
:mod:`stochcls.aedes` builds the Aedes albopictus population model.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.0.0"

from .aedes import ClimateSchedule, ContainerSpec, InitialPopulation, build_ecosystem, observe
from .biology import MosquitoPhase, StageTables
from .dsl import ParseError, parse_events, parse_model, parse_pattern, parse_rule, parse_term, serialize
from .errors import StochCLSError
from .events import EventList, ExternalEvent
from .rules import Ecosystem, PropensityTable, RewriteRule
from .ssa import run, step
from .terms import Loop, Seq, Term

__all__ = [
    "ClimateSchedule", "ContainerSpec", "Ecosystem", "EventList", "ExternalEvent",
    "InitialPopulation", "Loop", "MosquitoPhase", "ParseError", "PropensityTable",
    "RewriteRule", "Seq", "StageTables", "StochCLSError", "Term", "build_ecosystem",
    "observe", "parse_events", "parse_model", "parse_pattern", "parse_rule", "parse_term",
    "run", "serialize", "step",
]
