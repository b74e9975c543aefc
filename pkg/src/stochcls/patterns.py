"""Patterns over terms: matching with combinatorial weights, and substitution.

A pattern level is a multiset of compartment patterns (literal sequences or
loop patterns), each with an exponent, plus an optional term variable that
absorbs the unconsumed residue of that level.  Exponents are integers or
natural-number variables; a variable exponent on a symbol binds the full
multiplicity of that symbol at its level.

Two placements of a pattern are recognised:

* *anchored*: the pattern is a single loop pattern with exponent 1 and no
  rest variable.  It matches a compartment loop as a whole, and that loop is
  the match locus.
* *level*: anything else.  It matches inside the content of a compartment,
  with the unmatched items left untouched as context.

The weight of a match counts the distinct combinations of concrete
individuals it stands for, e.g. picking one egg out of ``Egg^6`` has weight 6.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping
from typing import NamedTuple, Union

from .errors import UnboundVariableError
from .terms import (
    EMPTY,
    EMPTY_INFO,
    Address,
    Compartment,
    EnvInfo,
    Loop,
    Seq,
    Term,
    _check_name,
    as_term,
    compartments,
    normalize_value,
)


class NatVar:
    """A natural-number variable used as an exponent, optionally plus a constant."""

    __slots__ = ("name", "offset", "text")

    def __init__(self, name: str, offset: int = 0):
        self.name = _check_name(name)
        if offset < 0:
            raise ValueError("nat-variable offsets are nonnegative")
        self.offset = int(offset)
        self.text = f"#{name}" if not offset else f"(#{name}+{offset})"

    def __eq__(self, other):
        return isinstance(other, NatVar) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"NatVar({self.name!r}, {self.offset})"


class ExpCall:
    """An exponent computed by a registered function, e.g. ``eggs(1)``."""

    __slots__ = ("name", "args", "text")

    def __init__(self, name: str, args=()):
        self.name = _check_name(name)
        self.args = tuple(int(a) for a in args)
        self.text = f"{name}({', '.join(map(str, self.args))})"

    def __eq__(self, other):
        return isinstance(other, ExpCall) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"ExpCall({self.name!r}, {self.args})"


Exponent = Union[int, NatVar, ExpCall]


def _exp_text(exp: Exponent) -> str:
    return str(exp) if isinstance(exp, int) else exp.text


class InfoPattern:
    """Literal info bindings plus an optional variable absorbing the rest."""

    __slots__ = ("literal", "var", "text")

    def __init__(self, literal: Mapping = EMPTY_INFO, var: str | None = None):
        self.literal = literal if isinstance(literal, EnvInfo) else EnvInfo(literal)
        self.var = None if var is None else _check_name(var)
        parts = [self.literal.text] if self.literal else []
        if var is not None:
            parts.append(f"@{var}")
        self.text = "; ".join(parts)

    def __eq__(self, other):
        return isinstance(other, InfoPattern) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"InfoPattern({self.text!r})"

    @property
    def is_trivial(self) -> bool:
        """True when any info whatsoever matches."""
        return not self.literal and self.var is not None


class LoopPattern:
    """``{wrap}<info-pattern>[content-pattern]``; the wrap is a literal term."""

    __slots__ = ("wrap", "info", "content", "text")

    def __init__(self, wrap, info: InfoPattern | None = None, content: Pattern | None = None):
        self.wrap = as_term(wrap)
        self.info = info if info is not None else InfoPattern()
        self.content = content if content is not None else Pattern()
        self.text = f"{{{self.wrap.text}}}<{self.info.text}>[{self.content.text}]"

    def __eq__(self, other):
        return isinstance(other, LoopPattern) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"LoopPattern({self.text!r})"


Part = Union[Seq, LoopPattern]


class Pattern:
    """One level of a pattern: ``items`` plus an optional rest variable.

    Items are ``(part, exponent)`` pairs kept in canonical order; identical
    parts with integer exponents are merged.
    """

    __slots__ = ("items", "rest", "text")

    def __init__(self, items=(), rest: str | None = None):
        merged: dict[str, list] = {}
        others = []
        for entry in items:
            part, exp = entry if isinstance(entry, tuple) else (entry, 1)
            if isinstance(part, str):
                part = Seq(part)
            if not isinstance(part, (Seq, LoopPattern)):
                raise TypeError(f"not a compartment pattern: {part!r}")
            if isinstance(part, Seq) and part.is_empty:
                continue
            if isinstance(exp, bool) or not isinstance(exp, (int, NatVar, ExpCall)):
                raise TypeError(f"bad exponent {exp!r}")
            if isinstance(exp, int):
                if exp < 0:
                    raise ValueError("exponents are nonnegative")
                if exp == 0:
                    continue
                slot = merged.get(part.text)
                if slot is None:
                    merged[part.text] = [part, exp]
                else:
                    slot[1] += exp
            else:
                others.append((part, exp))
        all_items = [tuple(v) for v in merged.values()] + others
        all_items.sort(key=lambda pe: (pe[0].text, _exp_text(pe[1])))
        self.items = tuple(all_items)
        self.rest = None if rest is None else _check_name(rest)
        texts = [
            p.text if e == 1 else f"{p.text}^{_exp_text(e)}" for p, e in self.items
        ]
        if rest is not None:
            texts.append(f"${rest}")
        self.text = " | ".join(texts) if texts else "0"

    def __eq__(self, other):
        return isinstance(other, Pattern) and self.text == other.text

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"Pattern({self.text!r})"

    def __str__(self):
        return self.text

    @property
    def anchor(self) -> LoopPattern | None:
        """The loop pattern when this is an anchored pattern, else ``None``."""
        if self.rest is None and len(self.items) == 1:
            part, exp = self.items[0]
            if isinstance(part, LoopPattern) and exp == 1:
                return part
        return None

    @property
    def is_trivial(self) -> bool:
        """True when the level matches anything (a bare rest variable)."""
        return not self.items and self.rest is not None

    def without(self, target: Part) -> Pattern:
        """This level minus one occurrence of ``target`` (compared by identity)."""
        items = list(self.items)
        for k, (p, _) in enumerate(items):
            if p is target:
                del items[k]
                return Pattern(items, self.rest)
        raise ValueError("target part not found at this level")


def pattern_of(term: Term) -> Pattern:
    """The ground pattern that matches exactly ``term``."""
    items = []
    for node, m in term.items:
        if isinstance(node, Seq):
            items.append((node, m))
        else:
            items.append((LoopPattern(node.wrap, InfoPattern(node.info), pattern_of(node.content)), m))
    return Pattern(items)


# -- variables --------------------------------------------------------------

def variables(p: Pattern) -> set[str]:
    """Sigil-prefixed names of all variables in ``p``: ``$X``, ``@x``, ``#q``."""
    out: set[str] = set()
    _collect(p, out)
    return out


def _collect(p: Pattern, out: set[str]) -> None:
    if p.rest is not None:
        out.add("$" + p.rest)
    for part, exp in p.items:
        if isinstance(exp, NatVar):
            out.add("#" + exp.name)
        if isinstance(part, LoopPattern):
            if part.info.var is not None:
                out.add("@" + part.info.var)
            _collect(part.content, out)


def iter_levels(p: Pattern):
    """Yield every pattern level, outermost first."""
    yield p
    for part, _ in p.items:
        if isinstance(part, LoopPattern):
            yield from iter_levels(part.content)


class Instantiation(Mapping):
    """Variable bindings keyed by sigil-prefixed names.

    ``$X`` maps to a :class:`Term`, ``@x`` to an :class:`EnvInfo` and ``#q``
    to a nonnegative integer.
    """

    __slots__ = ("_data",)

    def __init__(self, data: Mapping | None = None, *, terms=None, infos=None, nats=None):
        d = dict(data or {})
        for k, v in (terms or {}).items():
            d["$" + k] = v
        for k, v in (infos or {}).items():
            d["@" + k] = v
        for k, v in (nats or {}).items():
            d["#" + k] = v
        self._data = d

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __repr__(self):
        inner = ", ".join(f"{k}={getattr(v, 'text', v)}" for k, v in sorted(self._data.items()))
        return f"Instantiation({inner})"

    def _by_sigil(self, sigil):
        return {k[1:]: v for k, v in self._data.items() if k[0] == sigil}

    @property
    def terms(self) -> dict[str, Term]:
        return self._by_sigil("$")

    @property
    def infos(self) -> dict[str, EnvInfo]:
        return self._by_sigil("@")

    @property
    def nats(self) -> dict[str, int]:
        return self._by_sigil("#")


# -- matching ---------------------------------------------------------------

def _same_value(a, b) -> bool:
    return a == b and isinstance(a, bool) == isinstance(b, bool)


def _match_info(ip: InfoPattern, info: EnvInfo, b: dict):
    lit = ip.literal
    for name, v in lit.items():
        if name not in info or not _same_value(info[name], v):
            return None
    if ip.var is None:
        return b if len(info) == len(lit) else None
    rest = info if not lit else EnvInfo({k: v for k, v in info.items() if k not in lit})
    key = "@" + ip.var
    bound = b.get(key)
    if bound is not None:
        return b if bound == rest else None
    nb = dict(b)
    nb[key] = rest
    return nb


def match_loop(lp: LoopPattern, node: Loop, b: dict, pin=None) -> Iterator[tuple]:
    """Match a loop pattern against one copy of ``node``.

    Yields ``(binding, signature, weight)``.  The signature identifies which
    individuals inside the loop were consumed.
    """
    if node.wrap.text != lp.wrap.text:
        return
    nb = _match_info(lp.info, node.info, b)
    if nb is None:
        return
    for b2, sig, w, _ in match_level(lp.content, node.content, nb, False, pin):
        yield b2, sig, w


def match_level(p: Pattern, level: Term, b: dict, top: bool, pin=None) -> Iterator[tuple]:
    """Match one pattern level against the items of ``level``.

    Yields ``(binding, signature, weight, taken)`` where ``taken`` maps item
    indices of ``level`` to the number of copies consumed.  Unless ``top`` is
    set, a level without a rest variable must be consumed completely.
    ``pin`` is an optional ``(loop_pattern, index)`` restricting that loop
    pattern to one item of the level it applies to.
    """
    items = p.items
    entries = level.items
    remaining = [m for _, m in entries]
    roles: list[tuple] = []
    n_items = len(items)

    def finish(b):
        if p.rest is not None:
            residue = Term._sorted(tuple(
                (entries[i][0], r) for i, r in enumerate(remaining) if r
            ))
            key = "$" + p.rest
            bound = b.get(key)
            if bound is not None:
                if bound != residue:
                    return None
            else:
                b = dict(b)
                b[key] = residue
        elif not top and any(remaining):
            return None
        return b

    def rec(k, b):
        if k == n_items:
            fb = finish(b)
            if fb is not None:
                sig, w, taken = _summarize(roles, entries)
                yield fb, sig, w, taken
            return
        part, exp = items[k]
        if isinstance(part, Seq):
            i = level.index_of(part.text)
            avail = remaining[i] if i >= 0 else 0
            nb = b
            if isinstance(exp, NatVar):
                key = "#" + exp.name
                if key in b:
                    if b[key] != avail:
                        return
                else:
                    nb = dict(b)
                    nb[key] = avail
                take = avail
            else:
                if avail < exp:
                    return
                take = exp
            if take:
                remaining[i] -= take
                roles.append((i, (), take, 1))
            yield from rec(k + 1, nb)
            if take:
                roles.pop()
                remaining[i] += take
            return

        wrap_text = part.wrap.text
        natkey = "#" + exp.name if isinstance(exp, NatVar) else None
        found = False
        for i, (node, _) in enumerate(entries):
            if not isinstance(node, Loop) or node.wrap.text != wrap_text:
                continue
            if pin is not None and pin[0] is part and pin[1] != i:
                continue
            avail = remaining[i]
            if natkey is None:
                need = exp
            elif natkey in b:
                need = b[natkey]
                if need != avail:
                    continue
            else:
                need = avail
            if need == 0 or avail < need:
                continue
            for b2, isig, iw in match_loop(part, node, b, pin):
                found = True
                if natkey is not None and natkey not in b2:
                    b2 = dict(b2)
                    b2[natkey] = need
                remaining[i] -= need
                roles.append((i, isig, need, iw))
                yield from rec(k + 1, b2)
                roles.pop()
                remaining[i] += need
        if natkey is not None and not found:
            bound = b.get(natkey)
            if bound is None:
                nb = dict(b)
                nb[natkey] = 0
                yield from rec(k + 1, nb)
            elif bound == 0:
                yield from rec(k + 1, b)

    yield from rec(0, b)


def _summarize(roles, entries):
    """Signature, weight and per-index consumption of an assignment.

    For each group of ``k`` identical items, ``c`` copies are consumed.  The
    roles played by those copies are grouped by inner signature; with
    ``m_s`` roles of signature ``s`` the number of distinct concrete choices
    is ``C(k, c) * c! / prod(m_s!) * prod(w_s ** m_s)``.
    """
    if not roles:
        return (), 1, {}
    by_idx: dict[int, dict] = {}
    for idx, isig, count, w in roles:
        d = by_idx.setdefault(idx, {})
        slot = d.get(isig)
        if slot is None:
            d[isig] = [count, w]
        else:
            slot[0] += count
    weight = 1
    taken = {}
    sig = []
    for idx, d in by_idx.items():
        c = 0
        multinomial_den = 1
        inner = 1
        for isig, (m, w) in d.items():
            c += m
            multinomial_den *= math.factorial(m)
            inner *= w ** m
            sig.append((idx, isig, m))
        k = entries[idx][1]
        weight *= math.comb(k, c) * (math.factorial(c) // multinomial_den) * inner
        taken[idx] = c
    sig.sort()
    return tuple(sig), weight, taken


class Match:
    """One distinct way a pattern applies at a compartment.

    ``weight`` counts the concrete reactant combinations represented,
    including the multiplicity of the compartment itself.
    """

    __slots__ = ("binding", "locus", "weight", "signature", "taken", "subject", "_level")

    def __init__(self, binding, locus, weight, signature, taken, subject, level):
        self.binding = binding if isinstance(binding, Instantiation) else Instantiation(binding)
        self.locus = locus
        self.weight = weight
        self.signature = signature
        self.taken = taken
        # canonical text of the anchored loop or matched level, for staleness checks
        self.subject = subject
        self._level = level

    def __repr__(self):
        return f"Match(locus={self.locus}, weight={self.weight}, {self.binding!r})"

    @property
    def consumed(self) -> Term:
        """The part of the locus matched by the literal part of the pattern."""
        if self.taken is None:
            return self._level
        return Term(
            (self._level.items[i][0], c) for i, c in sorted(self.taken.items())
        )


def match_compartment(p: Pattern, comp: Compartment, pin=None) -> Iterator[Match]:
    """Distinct matches of ``p`` with locus ``comp``."""
    anchor = p.anchor
    seen = set()
    if anchor is not None:
        if comp.loop is None:
            return
        for b, sig, w in match_loop(anchor, comp.loop, {}, pin):
            if sig in seen:
                continue
            seen.add(sig)
            yield Match(b, comp.address, w * comp.multiplicity, sig, None,
                        comp.loop.text, Term._sorted(((comp.loop, 1),)))
        return
    for b, sig, w, taken in match_level(p, comp.content, {}, True, pin):
        if sig in seen:
            continue
        seen.add(sig)
        yield Match(b, comp.address, w * comp.multiplicity, sig, taken,
                    comp.content.text, comp.content)


def match_all(p: Pattern, t: Term) -> list[Match]:
    """Every distinct match of ``p`` in ``t``, ordered by locus."""
    out = []
    for comp in compartments(t):
        out.extend(match_compartment(p, comp))
    return out


def weight(matches, address: Address) -> int:
    """Number of reactant combinations among ``matches`` located at ``address``."""
    address = tuple(address)
    return sum(m.weight for m in matches if tuple(m.locus) == address)


# -- substitution -----------------------------------------------------------

def _eval_exp(exp: Exponent, s: Mapping, functions: Mapping) -> int:
    if isinstance(exp, int):
        return exp
    if isinstance(exp, NatVar):
        key = "#" + exp.name
        if key not in s:
            raise UnboundVariableError(key)
        return s[key] + exp.offset
    fn = functions.get(exp.name)
    if fn is None:
        raise KeyError(f"unknown exponent function {exp.name!r}")
    return int(fn(*exp.args))


def _subst_info(ip: InfoPattern, s: Mapping) -> EnvInfo:
    if ip.var is None:
        return ip.literal
    key = "@" + ip.var
    if key not in s:
        raise UnboundVariableError(key)
    return ip.literal.union(s[key]) if ip.literal else s[key]


def _is_ground(p: Pattern) -> bool:
    """No variables and no computed exponents anywhere in ``p``."""
    if p.rest is not None:
        return False
    for part, exp in p.items:
        if not isinstance(exp, int):
            return False
        if isinstance(part, LoopPattern) and (part.info.var is not None or not _is_ground(part.content)):
            return False
    return True


# instantiations of ground patterns, keyed by pattern text (None: not ground)
_GROUND: dict[str, Term | None] = {}


def substitute(p: Pattern, s: Mapping, functions: Mapping | None = None) -> Term:
    """Instantiate ``p`` with the bindings ``s``; the result is ground."""
    ground = _GROUND.get(p.text, False)
    if ground is False:
        if len(_GROUND) > 10_000:
            _GROUND.clear()
        ground = _GROUND[p.text] = _instantiate(p, {}, {}) if _is_ground(p) else None
    if ground is not None:
        return ground
    return _instantiate(p, s, functions or {})


def _instantiate(p: Pattern, s: Mapping, functions: Mapping) -> Term:
    parts = []
    for part, exp in p.items:
        n = _eval_exp(exp, s, functions)
        if n <= 0:
            continue
        if isinstance(part, Seq):
            parts.append((part, n))
        else:
            node = Loop(part.wrap, _subst_info(part.info, s), _instantiate(part.content, s, functions))
            parts.append((node, n))
    if p.rest is not None:
        key = "$" + p.rest
        if key not in s:
            raise UnboundVariableError(key)
        return s[key].plus(parts)
    return Term(parts)


__all__ = [
    "NatVar", "ExpCall", "InfoPattern", "LoopPattern", "Pattern", "Instantiation",
    "Match", "match_all", "match_compartment", "match_level", "match_loop",
    "substitute", "weight", "variables", "iter_levels", "pattern_of",
    "EMPTY", "normalize_value",
]
