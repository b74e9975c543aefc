"""The closed set of rate functions, guards, exponent functions and strategies.

Rules refer to these by name so that models stay declarative.  Rates are
evaluated on the context of the compartment where a rule applies (its info
and its content); none of them looks at individual bindings.
"""

from __future__ import annotations

import math
import operator
from collections.abc import Mapping
from typing import NamedTuple

from .biology import IMMATURE, adult_rate, density_class, eggs, immature_rate
from .terms import EnvInfo, Loop, Seq, Term, count_individuals, format_value, normalize_value

MEMO_LIMIT = 50_000


class RateContext(NamedTuple):
    info: EnvInfo
    content: Term
    params: object = None


class Constant:
    name = "constant"
    reads_content = False
    reads_info = False

    def __init__(self, value):
        value = normalize_value(value)
        if isinstance(value, (bool, str)) or value < 0:
            raise ValueError(f"constant rates are nonnegative numbers, got {value!r}")
        self.value = value
        self.text = format_value(value)

    def __call__(self, ctx: RateContext) -> float:
        return float(self.value)

    def __eq__(self, other):
        return isinstance(other, Constant) and self.text == other.text

    def __hash__(self):
        return hash(("rate", self.text))

    def __repr__(self):
        return f"Constant({self.text})"


class _IndexedRate:
    name = ""
    valid: frozenset = frozenset()
    reads_content = False
    reads_info = False

    def __init__(self, index: int):
        if index not in self.valid:
            raise ValueError(f"{self.name}({index}) is not a valid rule index")
        self.index = index
        self.text = f"{self.name}({index})"

    def __eq__(self, other):
        return type(other) is type(self) and self.index == other.index

    def __hash__(self):
        return hash(("rate", self.text))

    def __repr__(self):
        return f"{type(self).__name__}({self.index})"


class ImmatureRate(_IndexedRate):
    """Development or death of one immature individual in a container."""

    name = "immature"
    valid = frozenset(range(1, 7)) | frozenset(range(16, 22))
    reads_content = True
    reads_info = True

    @staticmethod
    def project(node) -> str | None:
        """The part of a content item the rate depends on (its head count)."""
        if isinstance(node, Loop) and node.wrap.text == "a" and any(
            isinstance(n, Seq) and n.text in IMMATURE for n, _ in node.content.items
        ):
            return "immature"
        return None

    # The immature rules of one container are evaluated back to back on the
    # same content, so the head count of the last content is kept.
    _last: tuple = (None, 0)

    def __init__(self, index: int):
        super().__init__(index)
        self._memo: dict = {}

    @staticmethod
    def _head_count(content) -> int:
        last, n = ImmatureRate._last
        if last is not content:
            n = count_individuals(content, IMMATURE)
            ImmatureRate._last = (content, n)
        return n

    @staticmethod
    def context_key(ctx: RateContext) -> tuple:
        """What every immature rate reads; equal keys give equal rates."""
        info = ctx.info
        n = ImmatureRate._head_count(ctx.content)
        return info.text, density_class(n, info["Vol"], info["p1"], info["p2"], info["p3"])

    def __call__(self, ctx: RateContext) -> float:
        key = (self.context_key(ctx), id(ctx.params))
        hit = self._memo.get(key)
        if hit is None or hit[0] is not ctx.params:
            if len(self._memo) > MEMO_LIMIT:
                self._memo.clear()
            n = self._head_count(ctx.content)
            hit = self._memo[key] = (ctx.params, immature_rate(self.index, ctx.info, n, ctx.params))
        return hit[1]


class AdultRate(_IndexedRate):
    """Feeding, oviposition or death of one adult."""

    name = "adult"
    valid = frozenset(range(7, 16)) | frozenset(range(22, 30))

    def __call__(self, ctx: RateContext) -> float:
        return adult_rate(self.index, ctx.params)


RATES = {"constant": Constant, "immature": ImmatureRate, "adult": AdultRate}


def make_rate(name: str, args: tuple):
    cls = RATES.get(name)
    if cls is None:
        raise KeyError(f"unknown rate {name!r}")
    if len(args) != 1:
        raise ValueError(f"{name} takes exactly one argument")
    return cls(args[0])


# -- guards -----------------------------------------------------------------

COMPARISONS = {
    ">": operator.gt, ">=": operator.ge, "<": operator.lt,
    "<=": operator.le, "==": operator.eq, "!=": operator.ne,
}
# Parameter names a guard may compare against, with the attribute they read.
GUARD_PARAMETERS = {"blood_threshold": "blood_threshold"}


class Comparison:
    """Guard ``#var OP bound`` where ``bound`` is a number or a parameter name."""

    def __init__(self, var: str, op: str, bound):
        if op not in COMPARISONS:
            raise ValueError(f"unknown comparison {op!r}")
        if isinstance(bound, str):
            if bound not in GUARD_PARAMETERS:
                raise KeyError(f"unknown guard parameter {bound!r}")
        elif isinstance(bound, bool) or int(bound) != bound:
            raise ValueError(f"guard bounds are integers, got {bound!r}")
        else:
            bound = int(bound)
        self.var, self.op, self.bound = var, op, bound
        self.text = f"#{var} {op} {bound}"

    def resolve(self, params) -> int:
        if isinstance(self.bound, str):
            if params is None:
                raise ValueError(f"guard needs parameter {self.bound!r}")
            return getattr(params, GUARD_PARAMETERS[self.bound])
        return self.bound

    def __call__(self, binding: Mapping, params=None) -> bool:
        return COMPARISONS[self.op](binding["#" + self.var], self.resolve(params))

    def __eq__(self, other):
        return isinstance(other, Comparison) and self.text == other.text

    def __hash__(self):
        return hash(("guard", self.text))

    def __repr__(self):
        return f"Comparison({self.text!r})"


# -- exponent functions -------------------------------------------------------

EXPONENT_FUNCTIONS = {"eggs": eggs}


# -- strategies -------------------------------------------------------------

class Strategy:
    """How one match is picked among the candidates at the chosen compartment.

    ``extreme`` is ``"fewest"`` or ``"most"`` to keep only candidates whose
    nat variable ``var`` is minimal or maximal.  ``target`` names the info
    variable of a loop pattern (e.g. a container) that is drawn uniformly at
    random and does not contribute to the propensity.
    """

    def __init__(self, extreme: str | None = None, var: str | None = None, target: str | None = None):
        if extreme not in (None, "fewest", "most"):
            raise ValueError(f"unknown strategy {extreme!r}")
        if (extreme is None) != (var is None):
            raise ValueError("an extreme strategy needs exactly one nat variable")
        if extreme is None and target is None:
            raise ValueError("empty strategy")
        self.extreme, self.var, self.target = extreme, var, target
        parts = []
        if extreme:
            parts.append(f"{extreme}(#{var})")
        if target:
            parts.append(f"into(@{target})")
        self.text = " ".join(parts)

    def __eq__(self, other):
        return isinstance(other, Strategy) and self.text == other.text

    def __hash__(self):
        return hash(("strategy", self.text))

    def __repr__(self):
        return f"Strategy({self.text!r})"


def check_rate(value: float, rule_id: str) -> float:
    if not (value >= 0 and math.isfinite(value)):
        raise ValueError(f"rule {rule_id} produced invalid rate {value!r}")
    return value
