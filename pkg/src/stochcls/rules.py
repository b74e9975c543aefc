"""Guarded rewrite rules, rule application and the propensity table.

The propensity of rule ``j`` in compartment ``i`` is the number of distinct
reactant combinations that pass the guard times the rule's rate, where the
rate is read from the compartment's info and content.

:class:`PropensityTable` keeps one entry per applicable (rule, compartment)
pair.  It mirrors the compartment tree of the state, so after a change only
compartments whose subtree differs are revisited, and an entry is only
recomputed when the change can affect that rule (see :class:`_Relevance`).
Totals are exact sums (``math.fsum``) so the incremental table and a
rebuild from scratch agree bit for bit.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .errors import (
    InvalidAddressError,
    NonPositivePropensityError,
    StaleMatchError,
    StaleTableError,
    UnboundVariableError,
)
from .events import EventList
from .patterns import (
    ExpCall,
    LoopPattern,
    Match,
    NatVar,
    Pattern,
    _match_info,
    iter_levels,
    match_compartment,
    match_level,
    match_loop,
    substitute,
    variables,
)
from .rates import EXPONENT_FUNCTIONS, Comparison, Constant, RateContext, Strategy, check_rate
from .terms import (
    EMPTY_INFO,
    Compartment,
    Loop,
    Seq,
    Term,
    _check_name,
    compartment_at,
    replace_content,
    root_loop,
    splice,
)


def uniform01(rng) -> float:
    """A uniform draw on (0, 1]."""
    return 1.0 - rng.random()


def bracket(weights: Sequence[float], target: float) -> int:
    """Index of the first positive weight whose running sum reaches ``target``.

    Falls back to the last positive weight when rounding leaves the total a
    hair below ``target``.
    """
    acc = 0.0
    last = -1
    for i, w in enumerate(weights):
        if w <= 0:
            continue
        last = i
        acc += w
        if acc >= target:
            return i
    if last < 0:
        raise NonPositivePropensityError("no positive weight to select")
    return last


_MEMO_LIMIT = 50_000


class _SingleLoopCounter:
    """Counter for a level holding one loop pattern and a rest variable.

    Every distinct item then contributes its multiplicity times the weight
    of its own inner matches, which only depend on the item's text and are
    memoized.  Only linear patterns qualify, i.e. the loop pattern shares no
    variable with the rest of the rule's left side.
    """

    def __init__(self, part: LoopPattern):
        self.part = part
        self.wrap = part.wrap.text
        self._memo: dict[str, tuple] = {}

    @classmethod
    def compile(cls, search: Pattern) -> _SingleLoopCounter | None:
        anchor = search.anchor
        level = anchor.content if anchor is not None else search
        if level.rest is None or len(level.items) != 1:
            return None
        part, exp = level.items[0]
        if not isinstance(part, LoopPattern) or exp != 1:
            return None
        outer = {"$" + level.rest}
        if anchor is not None and anchor.info.var is not None:
            outer.add("@" + anchor.info.var)
        if variables(Pattern([part])) & outer:
            return None
        return cls(part)

    def inner(self, node: Loop) -> tuple:
        """``(binding, signature, weight)`` per distinct inner match of ``node``."""
        hit = self._memo.get(node.text)
        if hit is None:
            if len(self._memo) > _MEMO_LIMIT:
                self._memo.clear()
            seen = set()
            out = []
            for b, sig, w in match_loop(self.part, node, {}):
                if sig not in seen:
                    seen.add(sig)
                    out.append((b, sig, w))
            hit = self._memo[node.text] = tuple(out)
        return hit

    def count(self, content: Term, rule: RewriteRule, params) -> int:
        h = 0
        for node, m in content.items:
            if isinstance(node, Loop) and node.wrap.text == self.wrap:
                for b, _, w in self.inner(node):
                    if rule._passes(b, params):
                        h += m * w
        return h

    def options(self, content: Term, rule: RewriteRule, params) -> list[tuple]:
        """Guard-passing ``(index, binding, signature, weight)`` in match order."""
        out = []
        for i, (node, m) in enumerate(content.items):
            if isinstance(node, Loop) and node.wrap.text == self.wrap:
                for b, sig, w in self.inner(node):
                    if rule._passes(b, params):
                        out.append((i, b, sig, m * w))
        return out


class RewriteRule:
    """A guarded rewrite rule ``[guard] left => right @ rate``.

    Parameters
    ----------
    id : str
        Unique rule name.
    left, right : Pattern
        Left and right patterns; every variable on the right must occur on
        the left.
    rate : rate object or number
        A registered rate (see :mod:`stochcls.rates`); numbers become
        constant rates.
    guard : Comparison, optional
        Predicate on the nat-variable bindings of a match.
    strategy : Strategy, optional
        How the match to execute is picked at the chosen compartment.
    """

    def __init__(self, id: str, left: Pattern, right: Pattern, rate,
                 guard: Comparison | None = None, strategy: Strategy | None = None):
        self.id = _check_name(id)
        self.left = left
        self.right = right
        self.rate = Constant(rate) if isinstance(rate, (int, float)) and not isinstance(rate, bool) else rate
        self.guard = guard
        self.strategy = strategy

        left_vars = variables(left)
        missing = variables(right) - left_vars
        if missing:
            raise UnboundVariableError(
                f"rule {id}: right side uses variables not bound on the left: {sorted(missing)}"
            )
        for level in iter_levels(left):
            for _, exp in level.items:
                if isinstance(exp, ExpCall) or (isinstance(exp, NatVar) and exp.offset):
                    raise ValueError(f"rule {id}: left exponents must be integers or plain nat variables")
        if guard is not None and "#" + guard.var not in left_vars:
            raise UnboundVariableError(f"rule {id}: guard reads unbound #{guard.var}")
        if strategy is not None and strategy.var is not None and "#" + strategy.var not in left_vars:
            raise UnboundVariableError(f"rule {id}: strategy reads unbound #{strategy.var}")

        self.anchor = left.anchor
        self.target = None
        search = left
        if strategy is not None and strategy.target is not None:
            level = self.anchor.content if self.anchor is not None else left
            self.target = self._find_target(level, strategy.target)
            reduced = level.without(self.target)
            if self.anchor is not None:
                search = Pattern([(LoopPattern(self.anchor.wrap, self.anchor.info, reduced), 1)])
            else:
                search = reduced
        # pattern used for counting; it omits a randomly drawn target
        self.search = search
        self._search_anchor = search.anchor
        self._target_memo: dict = {}
        self._info_memo: dict[str, bool] = {}
        self._fast = _SingleLoopCounter.compile(search)

    def _find_target(self, level: Pattern, var: str) -> LoopPattern:
        found = [
            (p, e) for p, e in level.items
            if isinstance(p, LoopPattern) and p.info.var == var
        ]
        if len(found) != 1 or found[0][1] != 1:
            raise ValueError(f"rule {self.id}: into(@{var}) needs one loop pattern binding @{var}")
        target = found[0][0]
        if level.rest is None:
            raise ValueError(f"rule {self.id}: the level holding the target needs a rest variable")
        for p, _ in level.items:
            if p is not target and isinstance(p, LoopPattern) and p.wrap == target.wrap:
                raise ValueError(f"rule {self.id}: the target wrap must differ from other loops at its level")
        return target

    @property
    def text(self) -> str:
        guard = f" [{self.guard.text}]" if self.guard is not None else ""
        strategy = f" by {self.strategy.text}" if self.strategy is not None else ""
        return f"rule {self.id}{guard} {self.left.text} => {self.right.text} @ {self.rate.text}{strategy};"

    def __eq__(self, other):
        return isinstance(other, RewriteRule) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"RewriteRule({self.text!r})"

    @classmethod
    def constant(cls, id: str, left: Pattern, k: float, right: Pattern) -> RewriteRule:
        return cls(id, left, right, Constant(k))

    # -- counting and candidates --

    def _passes(self, binding, params) -> bool:
        return self.guard is None or self.guard(binding, params)

    def _target_hit(self, node: Loop) -> bool:
        memo = self._target_memo
        # a target whose content is a bare rest variable only looks at wrap and info
        key = (node.wrap.text, node.info.text) if self.target.content.is_trivial else node.text
        hit = memo.get(key)
        if hit is None:
            if len(memo) > _MEMO_LIMIT:
                memo.clear()
            hit = memo[key] = next(match_loop(self.target, node, {}), None) is not None
        return hit

    def _target_slots(self, level: Term) -> list[tuple[int, int]]:
        return [(i, m) for i, (node, m) in enumerate(level.items)
                if isinstance(node, Loop) and self._target_hit(node)]

    def _anchor_accepts(self, info) -> bool:
        memo = self._info_memo
        hit = memo.get(info.text)
        if hit is None:
            if len(memo) > _MEMO_LIMIT:
                memo.clear()
            hit = memo[info.text] = _match_info(self._search_anchor.info, info, {}) is not None
        return hit

    def count(self, loop: Loop | None, content: Term, params=None) -> int:
        """Guard-passing reactant combinations for one copy of a compartment."""
        anchor = self._search_anchor
        if anchor is not None:
            if loop is None:
                return 0
            if self.target is not None and not self._target_slots(loop.content):
                return 0
            if self._fast is not None:
                if loop.wrap.text != anchor.wrap.text or not self._anchor_accepts(loop.info):
                    return 0
                return self._fast.count(loop.content, self, params)
            seen = set()
            h = 0
            for b, sig, w in match_loop(anchor, loop, {}):
                if sig not in seen:
                    seen.add(sig)
                    if self._passes(b, params):
                        h += w
            return h
        if self.target is not None and not self._target_slots(content):
            return 0
        if self._fast is not None:
            return self._fast.count(content, self, params)
        seen = set()
        h = 0
        for b, sig, w, _ in match_level(self.search, content, {}, True):
            if sig not in seen:
                seen.add(sig)
                if self._passes(b, params):
                    h += w
        return h

    def candidates(self, comp: Compartment, rng=None, params=None) -> list[Match]:
        """Guard-passing matches at ``comp``, after drawing the target if any."""
        pin = None
        if self.target is not None:
            if self.anchor is not None:
                if comp.loop is None:
                    return []
                level = comp.loop.content
            else:
                level = comp.content
            slots = self._target_slots(level)
            if not slots:
                return []
            r = uniform01(rng) * sum(m for _, m in slots)
            pin = (self.target, slots[bracket([m for _, m in slots], r)][0])
        return [m for m in match_compartment(self.left, comp, pin) if self._passes(m.binding, params)]


    def pick(self, comp: Compartment, rng, params=None) -> Match | None:
        """Draw the match to execute at ``comp``; ``None`` when nothing applies.

        Same draws and result as ``choose_match(rule, rule.candidates(...))``
        but only the chosen match is materialized when the rule qualifies.
        """
        if self._fast is None or (self.target is not None and not self.target.content.is_trivial):
            candidates = self.candidates(comp, rng, params)
            return choose_match(self, candidates, rng) if candidates else None
        if self.anchor is not None:
            loop = comp.loop
            if loop is None or loop.wrap.text != self.anchor.wrap.text:
                return None
            binding = _match_info(self.anchor.info, loop.info, {})
            if binding is None:
                return None
            level, rest = loop.content, self.anchor.content.rest
        else:
            binding, level, rest = {}, comp.content, self.left.rest
        binding = dict(binding)
        sig = []
        factor = comp.multiplicity
        consumed = [0] * len(level.items)
        if self.target is not None:
            slots = self._target_slots(level)
            if not slots:
                return None
            r = uniform01(rng) * sum(m for _, m in slots)
            t_index, t_mult = slots[bracket([m for _, m in slots], r)]
            tb, tsig, tw = next(match_loop(self.target, level.items[t_index][0], {}))
            binding.update(tb)
            sig.append((t_index, tsig, 1))
            factor *= t_mult * tw
            consumed[t_index] = 1
        pool = self._fast.options(level, self, params)
        if not pool:
            return None
        st = self.strategy
        if st is not None and st.extreme is not None:
            key = "#" + st.var
            values = [b[key] for _, b, _, _ in pool]
            best = min(values) if st.extreme == "fewest" else max(values)
            pool = [o for o, v in zip(pool, values) if v == best]
        if len(pool) == 1:
            i, b, isig, w = pool[0]
        else:
            weights = [w * factor for _, _, _, w in pool]
            i, b, isig, w = pool[bracket(weights, uniform01(rng) * sum(weights))]
        binding.update(b)
        consumed[i] += 1
        sig.append((i, isig, 1))
        taken = {k: c for k, c in enumerate(consumed) if c}
        binding["$" + rest] = level.subtract(taken)
        if self.anchor is not None:
            return Match(binding, comp.address, w * factor, tuple(sorted(sig)), None,
                         comp.loop.text, Term._sorted(((comp.loop, 1),)))
        return Match(binding, comp.address, w * factor, tuple(sorted(sig)), taken,
                     comp.content.text, comp.content)


def ConstantRateRule(left: Pattern, k: float, right: Pattern, id: str = "K") -> RewriteRule:
    """A rule with no guard and constant rate ``k``."""
    return RewriteRule.constant(id, left, k, right)


def choose_match(rule: RewriteRule, candidates: Sequence[Match], rng) -> Match:
    """Pick the match to execute according to the rule's strategy.

    Extreme strategies keep the candidates with the smallest or largest value
    of their nat variable; the remaining candidates are drawn in proportion
    to their combinatorial weight.
    """
    if not candidates:
        raise ValueError("no candidate matches")
    pool = list(candidates)
    st = rule.strategy
    if st is not None and st.extreme is not None:
        key = "#" + st.var
        values = [m.binding[key] for m in pool]
        best = min(values) if st.extreme == "fewest" else max(values)
        pool = [m for m, v in zip(pool, values) if v == best]
    if len(pool) == 1:
        return pool[0]
    weights = [m.weight for m in pool]
    return pool[bracket(weights, uniform01(rng) * sum(weights))]


def execute(rule: RewriteRule, match: Match, state: Term, functions: Mapping | None = None) -> Term:
    """Replace the matched portion of ``state`` by the instantiated right side."""
    try:
        comp = compartment_at(state, match.locus)
    except InvalidAddressError:
        raise StaleMatchError(f"locus {match.locus} no longer exists") from None
    if match.taken is None:
        stale = comp.loop is None or comp.loop.text != match.subject
    else:
        stale = comp.content.text != match.subject
    if stale:
        raise StaleMatchError(f"match of {rule.id} at {match.locus} is stale")
    replacement = substitute(rule.right, match.binding, EXPONENT_FUNCTIONS if functions is None else functions)
    if match.taken is None:
        return splice(state, match.locus, lambda node: replacement)
    if rule.left.rest is not None:
        new_content = replacement
    else:
        new_content = comp.content.subtract(match.taken).plus(replacement.items)
    return replace_content(state, match.locus, new_content)


def propensity(rule: RewriteRule, state: Term, addr, params=None) -> float:
    """Propensity of ``rule`` in the compartment at ``addr``."""
    comp = compartment_at(state, addr)
    return _entry_value(rule, comp.loop, comp.info, comp.content, comp.multiplicity, params)


def _unit_value(rule: RewriteRule, loop, info, content, params) -> tuple[int, float]:
    anchor = rule._search_anchor
    if anchor is not None and (loop is None or loop.wrap.text != anchor.wrap.text):
        return 0, 0.0
    rate = check_rate(rule.rate(RateContext(info, content, params)), rule.id)
    h = rule.count(loop, content, params) if rate > 0 else 0
    return h, rate


def _entry_value(rule, loop, info, content, mult, params) -> float:
    h, rate = _unit_value(rule, loop, info, content, params)
    return (h * mult) * rate


@dataclass
class Ecosystem:
    """Initial term, rules and scheduled events, plus optional model hooks.

    ``params`` is passed to rates and guards; ``handler`` handles external
    events.
    """

    initial: Term
    rules: tuple
    events: EventList = field(default_factory=EventList)
    params: object = None
    handler: object = None

    def __post_init__(self):
        self.rules = tuple(self.rules)
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError("rule ids must be unique")


# -- propensity table ---------------------------------------------------------

class _Relevance:
    """Decides whether a change inside a compartment can alter a rule's entry.

    Items at the rule's matching level that no pattern part can match only
    feed the rest variable, so they never change the count.  Loops whose info
    or content every candidate part ignores are compared only by wrap.
    """

    def __init__(self, rule: RewriteRule):
        anchor = rule._search_anchor
        level = anchor.content if anchor is not None else rule.search
        # a rate reading the content may name the items it depends on
        self.rate_project = getattr(rule.rate, "project", None) if rule.rate.reads_content else None
        self.always = (rule.rate.reads_content and self.rate_project is None) or (
            anchor is not None and level.rest is None
        )
        self.reads_info = rule.rate.reads_info or (anchor is not None and not anchor.info.is_trivial)
        self.seqs = set()
        self.loops: dict[str, list[bool]] = {}
        self._parts: dict[str, list[LoopPattern]] = {}
        self._memo: dict[str, bool] = {}
        parts = [p for p, _ in level.items]
        if rule.target is not None:
            parts.append(rule.target)
        for p in parts:
            if isinstance(p, Seq):
                self.seqs.add(p.text)
            else:
                flags = self.loops.setdefault(p.wrap.text, [False, False])
                flags[0] |= not p.info.is_trivial
                flags[1] |= not p.content.is_trivial
                self._parts.setdefault(p.wrap.text, []).append(p)

    @property
    def key(self) -> tuple:
        loops = tuple(sorted(
            (w, tuple(f), tuple(sorted(p.text for p in self._parts[w]))) for w, f in self.loops.items()
        ))
        rate = self.rate_project.__qualname__ if self.rate_project is not None else None
        return (self.always, self.reads_info, tuple(sorted(self.seqs)), loops, rate)

    def _project(self, node):
        if isinstance(node, Seq):
            return node.text if node.text in self.seqs else None
        flags = self.loops.get(node.wrap.text)
        if flags is None:
            return None
        if flags[0] or flags[1]:
            hit = self._memo.get(node.text)
            if hit is None:
                if len(self._memo) > _MEMO_LIMIT:
                    self._memo.clear()
                hit = self._memo[node.text] = any(
                    next(match_loop(p, node, {}), None) is not None for p in self._parts[node.wrap.text]
                )
            if not hit:
                return None
        return (node.wrap.text, node.info.text if flags[0] else None,
                node.content.text if flags[1] else None)

    def affected(self, info_changed: bool, removed, added, rate_verdicts: dict) -> bool:
        """``rate_verdicts`` shares rate-projection results between rules of one update."""
        if self.always or (info_changed and self.reads_info):
            return True
        if self.rate_project is not None:
            hit = rate_verdicts.get(self.rate_project)
            if hit is None:
                hit = rate_verdicts[self.rate_project] = _projected_change(self.rate_project, removed, added)
            if hit:
                return True
        return _projected_change(self._project, removed, added)


def _projected_change(project, removed, added) -> bool:
    before: dict = {}
    after: dict = {}
    for node, m in removed:
        k = project(node)
        if k is not None:
            before[k] = before.get(k, 0) + m
    for node, m in added:
        k = project(node)
        if k is not None:
            after[k] = after.get(k, 0) + m
    return before != after


def _diff(old: Term, new: Term):
    old_map = {n.text: (n, m) for n, m in old.items}
    removed, added = [], []
    for n, m in new.items:
        prev = old_map.pop(n.text, None)
        if prev is None:
            added.append((n, m))
        elif prev[1] != m:
            if prev[1] > m:
                removed.append((n, prev[1] - m))
            else:
                added.append((n, m - prev[1]))
    removed.extend(old_map.values())
    return removed, added


def _first(entry):
    return entry[0]


class _Slot:
    __slots__ = ("parent", "key", "loop", "info", "content", "mult", "entries", "children", "counts",
                 "rate_keys")

    def __init__(self, parent, loop, info, content, mult):
        self.parent = parent
        self.key = loop.text if loop is not None else None
        self.loop = loop
        self.info = info
        self.content = content
        self.mult = mult
        self.entries: dict[int, float] = {}
        self.children: dict[str, _Slot] = {}
        # raw reactant counts of the single-loop rules, see PropensityTable._weights
        self.counts: dict[int, int] = {}
        # last context key of each rate family that defines one
        self.rate_keys: dict = {}


class PropensityTable:
    """Per-rule, per-compartment propensities of a state.

    Parameters
    ----------
    rules : sequence of RewriteRule
    params : object, optional
        Model parameters handed to rates and guards.
    debug : bool
        Cross-check every update against a rebuild and raise
        :class:`StaleTableError` on any difference.
    """

    CACHE_LIMIT = 200_000

    def __init__(self, rules: Iterable[RewriteRule], params=None, *, debug: bool = False):
        self.rules = tuple(rules)
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise ValueError("rule ids must be unique")
        self.params = params
        self.debug = debug
        self._anchor_rules: dict[str, list[int]] = {}
        self._level_rules: list[int] = []
        for j, r in enumerate(self.rules):
            if r.anchor is not None:
                self._anchor_rules.setdefault(r.anchor.wrap.text, []).append(j)
            else:
                self._level_rules.append(j)
        # rules with the same projection share one relevance object
        shared: dict[tuple, _Relevance] = {}
        self._relevance = []
        for r in self.rules:
            rel = _Relevance(r)
            self._relevance.append(shared.setdefault(rel.key, rel))
        self._cache: dict[tuple, tuple[int, float]] = {}
        # Rules with a single-loop counter keep raw counts per slot that are
        # adjusted from content diffs.  Key j holds rule j's reactant count,
        # key ~j the number of loops its target could be drawn from.
        self._fast_rules = frozenset(j for j, r in enumerate(self.rules) if r._fast is not None)
        self._counted_by_wrap: dict[str, list[int]] = {}
        self._targets_by_wrap: dict[str, list[int]] = {}
        for j in sorted(self._fast_rules):
            r = self.rules[j]
            self._counted_by_wrap.setdefault(r._fast.wrap, []).append(j)
            if r.target is not None:
                self._targets_by_wrap.setdefault(r.target.wrap.text, []).append(j)
        self._info_targets = {
            w for w, js in self._targets_by_wrap.items()
            if all(self.rules[j].target.content.is_trivial for j in js)
        }
        self._content_rates = frozenset(j for j in self._fast_rules if self.rules[j].rate.reads_content)
        self._weight_memo: dict = {}
        self._reset()
        # number of entries evaluated by the most recent build or update
        self.recomputed = 0

    def _reset(self):
        self._by_rule: list[dict[_Slot, float]] = [{} for _ in self.rules]
        self.rule_totals = [0.0] * len(self.rules)
        self.total = 0.0
        self.term: Term | None = None
        self._root: _Slot | None = None

    @classmethod
    def build(cls, rules, state: Term, params=None, *, debug: bool = False) -> PropensityTable:
        table = cls(rules, params, debug=debug)
        table._build(state, cached=False)
        return table

    # -- construction --

    def _build(self, state: Term, cached: bool):
        self._reset()
        self.recomputed = 0
        touched = set(range(len(self.rules)))
        root = root_loop(state)
        if root is None:
            self._root = self._make_slot(None, None, EMPTY_INFO, state, 1, touched, cached, force=True)
        else:
            self._root = self._make_slot(None, root, root.info, root.content, 1, touched, cached, force=True)
        self.term = state
        self._retotal(touched)

    def _needs_slot(self, loop: Loop) -> bool:
        if self._level_rules or loop.wrap.text in self._anchor_rules:
            return True
        return any(isinstance(n, Loop) for n, _ in loop.content.items)

    def _make_slot(self, parent, loop, info, content, mult, touched, cached, force=False):
        if not force and not self._needs_slot(loop):
            return None
        slot = _Slot(parent, loop, info, content, mult)
        if self._fast_rules:
            self._adjust_counts(slot.counts, content.items, 1)
        applicable = self._level_rules
        if loop is not None:
            applicable = self._anchor_rules.get(loop.wrap.text, []) + self._level_rules
        for j in applicable:
            self._set(slot, j, self._value(j, slot, cached), touched)
        for node, m in content.items:
            if isinstance(node, Loop):
                child = self._make_slot(slot, node, node.info, node.content, mult * m, touched, cached)
                if child is not None:
                    slot.children[node.text] = child
        return slot

    def _weights(self, node: Loop) -> tuple:
        """``(key, amount)`` pairs one copy of ``node`` adds to its level's counts."""
        memo = self._weight_memo
        if len(memo) > _MEMO_LIMIT:
            memo.clear()
        wrap = node.wrap.text
        out = ()
        if wrap in self._counted_by_wrap:
            out = memo.get(node.text)
            if out is None:
                found = []
                for j in self._counted_by_wrap[wrap]:
                    rule = self.rules[j]
                    w = sum(w for b, _, w in rule._fast.inner(node) if rule._passes(b, self.params))
                    if w:
                        found.append((j, w))
                out = memo[node.text] = tuple(found)
        if wrap in self._targets_by_wrap:
            # targets whose content is a bare rest variable only look at wrap and info
            key = ("target", wrap, node.info.text) if wrap in self._info_targets else ("target", node.text)
            hits = memo.get(key)
            if hits is None:
                hits = memo[key] = tuple(
                    (~j, 1) for j in self._targets_by_wrap[wrap] if self.rules[j]._target_hit(node)
                )
            out = out + hits if out else hits
        return out

    def _adjust_counts(self, counts: dict, items, sign: int, delta: dict | None = None):
        for node, m in items:
            if isinstance(node, Loop):
                for key, w in self._weights(node):
                    d = sign * m * w
                    counts[key] = counts.get(key, 0) + d
                    if delta is not None:
                        delta[key] = delta.get(key, 0) + d

    def _fast_value(self, j: int, slot: _Slot) -> float:
        rule = self.rules[j]
        self.recomputed += 1
        h = slot.counts.get(j, 0)
        if not h or (rule.target is not None and not slot.counts.get(~j)) or (
                rule._search_anchor is not None and not rule._anchor_accepts(slot.info)):
            return 0.0
        rate = check_rate(rule.rate(RateContext(slot.info, slot.content, self.params)), rule.id)
        return (h * slot.mult) * rate

    def _fast_affected(self, j: int, slot: _Slot, info_changed: bool, delta: dict, removed, added,
                       rate_verdicts: dict) -> bool:
        if delta.get(j):
            return True
        rule = self.rules[j]
        if rule.target is not None:
            d = delta.get(~j)
            if d:
                now = slot.counts.get(~j, 0)
                if (now > 0) != (now - d > 0):
                    return True
        if info_changed and (rule.rate.reads_info or (
                rule._search_anchor is not None and not rule._search_anchor.info.is_trivial)):
            return True
        if rule.rate.reads_content and (removed or added):
            keyed = getattr(rule.rate, "context_key", None)
            if keyed is not None:
                hit = rate_verdicts.get(keyed)
                if hit is None:
                    key = keyed(RateContext(slot.info, slot.content, self.params))
                    hit = rate_verdicts[keyed] = slot.rate_keys.get(keyed) != key
                    slot.rate_keys[keyed] = key
                return hit
            project = getattr(rule.rate, "project", None)
            if project is None:
                return True
            hit = rate_verdicts.get(project)
            if hit is None:
                hit = rate_verdicts[project] = _projected_change(project, removed, added)
            return hit
        return False

    def _value(self, j: int, slot: _Slot, cached: bool) -> float:
        if j in self._fast_rules:
            return self._fast_value(j, slot)
        rule = self.rules[j]
        key = (j, slot.key if slot.key is not None else slot.content.text)
        hit = self._cache.get(key) if cached else None
        if hit is None:
            hit = _unit_value(rule, slot.loop, slot.info, slot.content, self.params)
            self.recomputed += 1
            if cached:
                if len(self._cache) >= self.CACHE_LIMIT:
                    self._cache.clear()
                self._cache[key] = hit
        h, rate = hit
        return (h * slot.mult) * rate

    def _set(self, slot, j, value, touched):
        slot.entries[j] = value
        self._by_rule[j][slot] = value
        touched.add(j)

    def _drop(self, slot, touched):
        for j in slot.entries:
            del self._by_rule[j][slot]
            touched.add(j)
        for child in slot.children.values():
            self._drop(child, touched)

    def _retotal(self, touched):
        for j in touched:
            self.rule_totals[j] = math.fsum(self._by_rule[j].values())
        self.total = math.fsum(self.rule_totals)

    # -- incremental update --

    def update(self, state: Term, changed=None) -> PropensityTable:
        """Bring the table in line with ``state``.

        ``changed`` lists the compartments the caller modified; an empty
        collection means nothing changed and the table is kept as is.  The
        table itself finds the differing subtrees, so ``changed`` is only a
        hint, verified in debug mode.
        """
        if changed is not None and not changed:
            if self.debug:
                self._cross_check(state)
            return self
        self.recomputed = 0
        if self.term is not None and (state is self.term or state.text == self.term.text):
            return self
        root = root_loop(state)
        if self._root is None or (root is None) != (self._root.loop is None):
            self._build(state, cached=True)
        else:
            touched: set[int] = set()
            if root is None:
                self._update_slot(self._root, None, self._root.info, state, touched)
            else:
                self._update_slot(self._root, root, root.info, root.content, touched)
            self.term = state
            self._retotal(touched)
        if self.debug:
            self._cross_check(state)
        return self

    def _update_slot(self, slot: _Slot, loop, info, content, touched):
        old_info, old_content = slot.info, slot.content
        slot.loop = loop
        slot.key = loop.text if loop is not None else None
        slot.info = info
        slot.content = content
        info_changed = old_info is not info and old_info.text != info.text
        content_changed = old_content is not content and old_content.text != content.text
        if not (info_changed or content_changed):
            return
        if info_changed:
            slot.rate_keys.clear()
        removed, added = _diff(old_content, content) if content_changed else ((), ())
        delta: dict[int, int] = {}
        if self._fast_rules and content_changed:
            self._adjust_counts(slot.counts, removed, -1, delta)
            self._adjust_counts(slot.counts, added, 1, delta)
        verdicts: dict[int, bool] = {}
        rate_verdicts: dict = {}
        fast = self._fast_rules
        if info_changed:
            check = slot.entries
        else:
            # a single-loop rule needs a look only if one of its counts moved
            # or its rate reads the content
            keys = {k if k >= 0 else ~k for k, d in delta.items() if d}
            check = [j for j in slot.entries if j not in fast or j in keys or j in self._content_rates]
        for j in check:
            if j in fast:
                hit = self._fast_affected(j, slot, info_changed, delta, removed, added, rate_verdicts)
            else:
                rel = self._relevance[j]
                hit = verdicts.get(id(rel))
                if hit is None:
                    hit = verdicts[id(rel)] = rel.affected(info_changed, removed, added, rate_verdicts)
            if hit:
                self._set(slot, j, self._value(j, slot, True), touched)
        if content_changed:
            self._update_children(slot, removed, added, touched)

    def _update_children(self, slot: _Slot, removed, added, touched):
        """Re-pair child slots after the ``removed`` and ``added`` items changed."""
        children = slot.children
        old: dict[str, _Slot] = {}
        moved = []
        for node, _ in removed:
            if isinstance(node, Loop):
                child = children.pop(node.text, None)
                if child is not None:
                    old[node.text] = child
                moved.append(node)
        moved.extend(node for node, _ in added if isinstance(node, Loop))
        content = slot.content
        pending = []
        seen = set()
        for node in moved:
            if node.text in seen:
                continue
            seen.add(node.text)
            i = content.index_of(node.text)
            if i < 0:
                continue
            cm = slot.mult * content.items[i][1]
            child = old.pop(node.text, None) or children.pop(node.text, None)
            if child is not None:
                if child.mult == cm:
                    children[node.text] = child
                    continue
                old[node.text] = child
            if self._needs_slot(node):
                pending.append((node, cm))
        # pair each new loop with the removed loop of the same wrap, info and
        # multiplicity when that pairing is unambiguous
        shapes: dict[tuple, int] = {}
        for n, cm in pending:
            shape = (n.wrap.text, n.info.text, cm)
            shapes[shape] = shapes.get(shape, 0) + 1
        by_shape: dict[tuple, list[_Slot]] = {}
        for child in old.values():
            by_shape.setdefault((child.loop.wrap.text, child.info.text, child.mult), []).append(child)
        for node, cm in pending:
            shape = (node.wrap.text, node.info.text, cm)
            partners = by_shape.get(shape)
            if partners is not None and len(partners) == 1 and shapes[shape] == 1:
                child = partners.pop()
                del old[child.key]
                self._update_slot(child, node, node.info, node.content, touched)
            else:
                child = self._make_slot(slot, node, node.info, node.content, cm, touched, True, force=True)
            children[node.text] = child
        for child in old.values():
            self._drop(child, touched)

    def _cross_check(self, state: Term):
        reference = PropensityTable.build(self.rules, state, self.params)
        if self.entries() != reference.entries() or self.rule_totals != reference.rule_totals:
            raise StaleTableError("propensity table differs from a rebuild of the state")
        if self.total != reference.total:
            raise StaleTableError("total propensity differs from a rebuild of the state")

    # -- queries --

    def address(self, slot: _Slot) -> tuple:
        path = []
        while slot.parent is not None:
            path.append(slot.parent.content.index_of(slot.key))
            slot = slot.parent
        return tuple(reversed(path))

    def entries(self) -> dict[tuple, float]:
        """All entries keyed by ``(rule id, compartment address)``."""
        out = {}
        if self._root is None:
            return out

        def visit(slot):
            addr = self.address(slot)
            for j, v in slot.entries.items():
                out[(self.rules[j].id, addr)] = v
            for child in slot.children.values():
                visit(child)

        visit(self._root)
        return out

    def rule_entries(self, j: int) -> list[tuple[tuple, float]]:
        """Entries of rule ``j`` in address order."""
        return sorted((self.address(s), v) for s, v in self._by_rule[j].items())

    def select(self, rng) -> tuple[int, tuple]:
        """Draw ``(rule index, compartment address)`` with probability a_j^i / a_0."""
        if not self.total > 0:
            raise NonPositivePropensityError(f"total propensity is {self.total}")
        target = uniform01(rng) * self.total
        j = bracket(self.rule_totals, target)
        before = 0.0
        for k in range(j):
            if self.rule_totals[k] > 0:
                before += self.rule_totals[k]
        # siblings are ordered by text, so key paths sort like addresses
        entries = sorted(((self._key_path(s), s, v) for s, v in self._by_rule[j].items() if v > 0),
                         key=_first)
        i = bracket([v for _, _, v in entries], target - before)
        return j, self.address(entries[i][1])

    @staticmethod
    def _key_path(slot: _Slot) -> tuple:
        path = []
        while slot.parent is not None:
            path.append(slot.key)
            slot = slot.parent
        return tuple(reversed(path))


def rebuild(table: PropensityTable | None, state: Term, rules=None, params=None) -> PropensityTable:
    """A freshly computed table for ``state``."""
    if rules is None:
        rules = table.rules
    if params is None and table is not None:
        params = table.params
    debug = table.debug if table is not None else False
    return PropensityTable.build(rules, state, params, debug=debug)


def update_affected(table: PropensityTable, state: Term, changed, rules=None) -> PropensityTable:
    """Update ``table`` in place for ``state`` after the ``changed`` compartments moved."""
    if rules is not None and tuple(rules) != table.rules:
        raise ValueError("the table was built for a different rule set")
    return table.update(state, changed)


def select_rule_and_compartment(table: PropensityTable, rng) -> tuple[int, tuple]:
    return table.select(rng)
