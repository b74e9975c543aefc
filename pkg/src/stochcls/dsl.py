"""Text syntax for terms, patterns, rules and event lists.

Grammar (whitespace-insensitive, ``--`` starts a comment)::

    term     := item ("|" item)* | "0"
    item     := atom ("^" exponent)?          -- patterns may also use $X
    atom     := seq | loop
    loop     := "{" term "}" "<" info ">" "[" term "]"
    seq      := "eps" | SYMBOL ("." SYMBOL)*
    info     := binding (";" binding)* [";" "@x"] | "@x" | (empty)
    binding  := NAME ":" (NUMBER | TOKEN | "true" | "false")
    exponent := NAT | "#q" | "(" "#q" "+" NAT ")" | NAME "(" NAT ("," NAT)* ")"

    rule     := "rule" NAME guard? pattern "=>" pattern "@" rate strategy? ";"
    guard    := "[" "#q" OP (NAT | NAME) "]"
    rate     := NUMBER | NAME "(" NUMBER ")"
    strategy := "by" (("fewest" | "most") "(" "#q" ")")? ("into" "(" "@y" ")")?

    events   := ("(" NAME "," value "," NUMBER ")")*

Serialization is the ``text`` attribute of each object, which is canonical.
"""

from __future__ import annotations

import re
from collections.abc import Iterable
from typing import NamedTuple

from .errors import StochCLSError, UnboundVariableError
from .events import EventList, ExternalEvent
from .patterns import ExpCall, InfoPattern, LoopPattern, NatVar, Pattern
from .rates import COMPARISONS, Comparison, Constant, Strategy, make_rate
from .rules import RewriteRule
from .terms import EnvInfo, Loop, Seq, Term

MAX_DEPTH = 100

_WS = re.compile(r"(?:\s+|--[^\n]*)+")
_SYMBOL = re.compile(r"[A-Za-z0-9_]+")
_NAME = re.compile(r"[A-Za-z0-9_]+")
_NAT = re.compile(r"[0-9]+")
_NUMBER = re.compile(r"-?(?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)(?:[eE][+-]?[0-9]+)?")
_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*")
_FOUND = re.compile(r"[A-Za-z0-9_]+|\S")
_COMPARISON = re.compile(r">=|<=|==|!=|>|<")


class SourceSpan(NamedTuple):
    line: int
    column: int
    start: int
    end: int


class ParseError(StochCLSError, ValueError):
    """Syntax or well-formedness error with the offending source span."""

    def __init__(self, span: SourceSpan, expected: Iterable[str], found: str, message: str = ""):
        self.span = span
        self.expected = tuple(sorted(set(expected)))
        self.found = found
        detail = message or f"expected {' or '.join(self.expected) or 'something else'}"
        super().__init__(f"line {span.line}, column {span.column}: {detail}, found {found}")


def _span(text: str, start: int, end: int) -> SourceSpan:
    line = text.count("\n", 0, start) + 1
    column = start - (text.rfind("\n", 0, start) + 1) + 1
    return SourceSpan(line, column, start, end)


class _Parser:
    def __init__(self, text):
        if isinstance(text, (bytes, bytearray)):
            text = bytes(text).decode("utf-8", errors="replace")
        self.text = text
        self.pos = 0
        self.depth = 0

    # -- low level --

    def skip(self):
        m = _WS.match(self.text, self.pos)
        if m:
            self.pos = m.end()

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.text)

    def error(self, expected, message="", start=None, end=None):
        start = self.pos if start is None else start
        if end is None:
            m = _FOUND.match(self.text, start)
            end = m.end() if m else start
        found = repr(self.text[start:end]) if end > start else "end of input"
        raise ParseError(_span(self.text, start, end), expected, found, message)

    def peek(self, literal: str) -> bool:
        self.skip()
        return self.text.startswith(literal, self.pos)

    def accept(self, literal: str) -> bool:
        if self.peek(literal):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str):
        if not self.accept(literal):
            self.error([repr(literal)])

    def regex(self, pattern, what: str) -> str:
        self.skip()
        m = pattern.match(self.text, self.pos)
        if not m:
            self.error([what])
        self.pos = m.end()
        return m.group()

    def peek_word(self, word: str) -> bool:
        self.skip()
        m = _NAME.match(self.text, self.pos)
        return bool(m) and m.group() == word

    def keyword(self, word: str):
        if not self.peek_word(word):
            self.error([repr(word)])
        self.pos += len(word)

    def name(self) -> str:
        return self.regex(_NAME, "name")

    def nat(self) -> int:
        return int(self.regex(_NAT, "natural number"))

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.error([], "nesting too deep")

    def leave(self):
        self.depth -= 1

    def guarded(self, start, build, *args):
        """Run a constructor, turning validation errors into spanned parse errors."""
        try:
            return build(*args)
        except (ValueError, TypeError, KeyError) as exc:
            if isinstance(exc, ParseError):
                raise
            message = exc.args[0] if exc.args else str(exc)
            self.error([], str(message), start=start, end=max(start, self.pos))

    # -- values and info --

    def value(self):
        self.skip()
        start = self.pos
        m = _NUMBER.match(self.text, self.pos)
        if m and not _TOKEN.match(self.text, m.end()) and not self.text.startswith(".", m.end()):
            self.pos = m.end()
            s = m.group()
            if re.fullmatch(r"-?[0-9]+", s):
                return int(s)
            return self.guarded(start, _finite_float, s)
        m = _TOKEN.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            word = m.group()
            if word == "true":
                return True
            if word == "false":
                return False
            return word
        self.error(["number", "token", "'true'", "'false'"])

    def info(self, allow_vars: bool):
        start = self.pos
        bindings: dict = {}
        var = None
        self.skip()
        if self.peek(">"):
            return EnvInfo() if not allow_vars else InfoPattern()
        while True:
            if allow_vars and self.peek("@"):
                self.pos += 1
                var = self.name()
                break
            name_start = self.pos
            name = self.name()
            if name in bindings:
                self.error([], f"info name {name!r} bound twice", start=name_start, end=self.pos)
            self.expect(":")
            bindings[name] = self.value()
            if not self.accept(";"):
                break
        info = self.guarded(start, EnvInfo, bindings)
        if not allow_vars:
            return info
        return InfoPattern(info, var)

    # -- terms and patterns --

    def level(self, allow_vars: bool, rhs: bool):
        """One parallel level; returns a Term or a Pattern."""
        self.enter()
        start = self.pos
        self.skip()
        m = _NAME.match(self.text, self.pos)
        if m and m.group() == "0":
            self.pos = m.end()
            self.leave()
            return Pattern() if allow_vars else Term()
        items = []
        rest = None
        while True:
            self.skip()
            item_start = self.pos
            if self.peek("$"):
                if not allow_vars:
                    self.error(["symbol", "'{'", "'eps'"], "variables are not allowed in ground terms")
                self.pos += 1
                var = self.name()
                if rest is not None:
                    self.error([], "at most one term variable per level", start=item_start, end=self.pos)
                rest = var
            else:
                atom = self.atom(allow_vars, rhs)
                exp = 1
                if self.accept("^"):
                    exp = self.exponent(allow_vars, rhs)
                items.append((atom, exp))
            if not self.accept("|"):
                break
        self.leave()
        if allow_vars:
            return self.guarded(start, Pattern, items, rest)
        return self.guarded(start, Term, items)

    def atom(self, allow_vars: bool, rhs: bool):
        self.skip()
        start = self.pos
        if self.accept("{"):
            wrap = self.level(False, False)
            self.expect("}")
            self.expect("<")
            info = self.info(allow_vars)
            self.expect(">")
            self.expect("[")
            content = self.level(allow_vars, rhs)
            self.expect("]")
            if allow_vars:
                return LoopPattern(wrap, info, content)
            return Loop(wrap, info, content)
        m = _SYMBOL.match(self.text, self.pos)
        if not m:
            expected = ["symbol", "'{'", "'eps'"] + (["'$'"] if allow_vars else [])
            self.error(expected)
        if m.group() == "eps":
            self.pos = m.end()
            return Seq()
        symbols = [m.group()]
        self.pos = m.end()
        while self.text.startswith(".", self.pos):
            self.pos += 1
            m = _SYMBOL.match(self.text, self.pos)
            if not m:
                self.error(["symbol"])
            symbols.append(m.group())
            self.pos = m.end()
        return self.guarded(start, Seq, symbols)

    def exponent(self, allow_vars: bool, rhs: bool):
        self.skip()
        start = self.pos
        if _NAT.match(self.text, self.pos):
            n = self.nat()
            if n == 0:
                self.error([], "multiplicities are positive", start=start, end=self.pos)
            return n
        if not allow_vars:
            self.error(["natural number"])
        if self.accept("#"):
            return NatVar(self.name())
        if rhs and self.accept("("):
            self.expect("#")
            var = self.name()
            self.expect("+")
            offset = self.nat()
            self.expect(")")
            return NatVar(var, offset)
        if rhs and _NAME.match(self.text, self.pos):
            fn = self.name()
            self.expect("(")
            args = [self.nat()]
            while self.accept(","):
                args.append(self.nat())
            self.expect(")")
            return ExpCall(fn, args)
        self.error(["natural number", "'#'"] + (["'('", "function call"] if rhs else []))

    # -- rules --

    def rule(self) -> RewriteRule:
        self.skip()
        start = self.pos
        self.keyword("rule")
        rule_id = self.name()
        guard = None
        if self.accept("["):
            guard_start = self.pos
            self.expect("#")
            var = self.name()
            op = self.regex(_COMPARISON, "comparison")
            self.skip()
            if _NAT.match(self.text, self.pos):
                bound = self.nat()
            else:
                bound = self.name()
            guard = self.guarded(guard_start, Comparison, var, op, bound)
            self.expect("]")
        left = self.level(True, False)
        self.expect("=>")
        right = self.level(True, True)
        self.expect("@")
        rate = self.rate()
        strategy = None
        if self.peek_word("by"):
            self.keyword("by")
            strategy = self.strategy()
        self.expect(";")
        try:
            return RewriteRule(rule_id, left, right, rate, guard, strategy)
        except UnboundVariableError as exc:
            self.error([], f"unbound variable on the right side: {exc.args[0]}", start=start, end=self.pos)
        except (ValueError, TypeError, KeyError) as exc:
            self.error([], str(exc.args[0] if exc.args else exc), start=start, end=self.pos)

    def rate(self):
        self.skip()
        start = self.pos
        m = _NUMBER.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return self.guarded(start, Constant, _number(m.group()))
        name = self.name()
        self.expect("(")
        self.skip()
        arg_start = self.pos
        arg = self.regex(_NUMBER, "number")
        self.expect(")")
        value = _number(arg)
        if name != "constant" and not isinstance(value, int):
            self.error([], f"{name} takes a rule index", start=arg_start, end=arg_start + len(arg))
        try:
            return make_rate(name, (value,))
        except KeyError:
            self.error([], f"unknown rate name {name!r}", start=start, end=start + len(name))
        except ValueError as exc:
            self.error([], str(exc), start=start, end=self.pos)

    def strategy(self) -> Strategy:
        start = self.pos
        extreme = var = target = None
        if self.peek_word("fewest") or self.peek_word("most"):
            extreme = self.name()
            self.expect("(")
            self.expect("#")
            var = self.name()
            self.expect(")")
        if self.peek_word("into"):
            self.keyword("into")
            self.expect("(")
            self.expect("@")
            target = self.name()
            self.expect(")")
        if extreme is None and target is None:
            self.error(["'fewest'", "'most'", "'into'"])
        return self.guarded(start, Strategy, extreme, var, target)

    # -- events --

    def event(self) -> ExternalEvent:
        self.skip()
        start = self.pos
        self.expect("(")
        name = self.name()
        self.expect(",")
        value = self.value()
        self.expect(",")
        self.skip()
        time_start = self.pos
        time = _number(self.regex(_NUMBER, "time"))
        if time < 0:
            self.error([], "event times must be nonnegative", start=time_start, end=self.pos)
        self.expect(")")
        return self.guarded(start, ExternalEvent.make, name, value, time)

    def finish(self):
        if not self.at_end():
            self.error(["end of input"])


def _number(s: str):
    if re.fullmatch(r"-?[0-9]+", s):
        return int(s)
    return _finite_float(s)


def _finite_float(s: str) -> float:
    f = float(s)
    if f != f or f in (float("inf"), float("-inf")):
        raise ValueError(f"number out of range: {s}")
    return f


def parse_term(text) -> Term:
    """Parse a ground term."""
    p = _Parser(text)
    t = p.level(False, False)
    p.finish()
    return t


def parse_pattern(text, rhs: bool = False) -> Pattern:
    """Parse a pattern; ``rhs`` also allows ``(#q+1)`` and ``f(n)`` exponents."""
    p = _Parser(text)
    pat = p.level(True, rhs)
    p.finish()
    return pat


def parse_rule(text) -> RewriteRule:
    p = _Parser(text)
    r = p.rule()
    p.finish()
    return r


def parse_model(text) -> list[RewriteRule]:
    """Parse a model file: a sequence of rules."""
    p = _Parser(text)
    rules = []
    seen: dict[str, int] = {}
    while not p.at_end():
        start = p.pos
        r = p.rule()
        if r.id in seen:
            p.error([], f"duplicate rule id {r.id!r}", start=start, end=p.pos)
        seen[r.id] = start
        rules.append(r)
    return rules


def parse_events(text, priority=None) -> EventList:
    """Parse ``(NAME, VALUE, TIME)`` triples; the result is sorted by time."""
    p = _Parser(text)
    events = []
    while not p.at_end():
        events.append(p.event())
    return EventList(events, priority)


def serialize(x) -> str:
    """Canonical text of a term, pattern, rule, event list, or list of rules."""
    if isinstance(x, (list, tuple)):
        return "\n".join(serialize(r) for r in x)
    return x.text
