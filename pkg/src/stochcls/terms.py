"""Extended CLS terms: sequences, loops with environmental info, and mixtures.

Every :class:`Term` is kept in canonical form.  Identical siblings are merged
into one item carrying a multiplicity, empty sequences vanish from parallel
composition, and items are sorted by their canonical text.  Because the
canonical text of a node determines the node, equality and hashing use it
directly.

Sequences serialize with characters from ``[A-Za-z0-9_.]`` and loops always
start with ``{``, which sorts after all of those, so sorting by text puts
sequences before loops.
"""

from __future__ import annotations

import bisect
import math
import numbers
import re
from collections.abc import Iterable, Iterator, Mapping
from typing import NamedTuple, Union

from .errors import InvalidAddressError, UnknownInfoNameError

SYMBOL_RE = re.compile(r"[A-Za-z0-9_]+\Z")
ENUM_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*\Z")
# "0" spells the empty term and "eps" the empty sequence.
RESERVED_SYMBOLS = frozenset({"0", "eps"})

Value = Union[int, float, bool, str]


def normalize_value(v) -> Value:
    """Return the canonical Python value for an info binding.

    Integral reals collapse to ``int`` so that ``10`` and ``10.0`` are the
    same value; this keeps serialization unique.
    """
    if isinstance(v, bool):
        return v
    if isinstance(v, numbers.Integral):
        return int(v)
    if isinstance(v, numbers.Real):
        f = float(v)
        if not math.isfinite(f):
            raise ValueError(f"info values must be finite, got {v!r}")
        return int(f) if f.is_integer() else f
    if isinstance(v, str):
        if v in ("true", "false") or not ENUM_RE.match(v):
            raise ValueError(f"invalid enum token {v!r}")
        return v
    raise TypeError(f"unsupported info value {v!r}")


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _check_name(name: str) -> str:
    if not isinstance(name, str) or not SYMBOL_RE.match(name):
        raise ValueError(f"invalid name {name!r}")
    return name


class EnvInfo(Mapping):
    """Environmental information: an immutable map from names to values."""

    __slots__ = ("_data", "text", "_hash")

    def __init__(self, bindings: Mapping | Iterable = ()):
        data = dict(bindings)
        self._data = {
            _check_name(k): normalize_value(v) for k, v in sorted(data.items())
        }
        self.text = "; ".join(f"{k}:{format_value(v)}" for k, v in self._data.items())
        self._hash = hash(("info", self.text))

    def __getitem__(self, name):
        return self._data[name]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __eq__(self, other):
        if isinstance(other, EnvInfo):
            return self.text == other.text
        return NotImplemented

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"EnvInfo({self.text!r})"

    def replace(self, name: str, value) -> EnvInfo:
        if name not in self._data:
            raise UnknownInfoNameError(name)
        data = dict(self._data)
        data[name] = value
        return EnvInfo(data)

    def union(self, other: Mapping) -> EnvInfo:
        """Concatenate two infos whose names are disjoint."""
        clash = set(self._data) & set(other)
        if clash:
            raise ValueError(f"info names bound twice: {sorted(clash)}")
        data = dict(self._data)
        data.update(other)
        return EnvInfo(data)


EMPTY_INFO = EnvInfo()


class Seq:
    """A sequence of symbols; the empty sequence is epsilon."""

    __slots__ = ("symbols", "text", "_hash")

    def __init__(self, symbols: Iterable[str] | str = ()):
        if isinstance(symbols, str):
            symbols = symbols.split(".") if symbols else ()
        symbols = tuple(symbols)
        for s in symbols:
            _check_name(s)
            if s in RESERVED_SYMBOLS:
                raise ValueError(f"{s!r} is reserved and cannot be a symbol")
        self.symbols = symbols
        self.text = ".".join(symbols) if symbols else "eps"
        self._hash = hash(self.text)

    def __eq__(self, other):
        if isinstance(other, (Seq, Loop)):
            return self.text == other.text
        return NotImplemented

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.text < other.text

    def __repr__(self):
        return f"Seq({self.text!r})"

    def __str__(self):
        return self.text

    def __add__(self, other: Seq) -> Seq:
        return Seq(self.symbols + other.symbols)

    @property
    def is_empty(self) -> bool:
        return not self.symbols


class Loop:
    """Looping containment ``{wrap}<info>[content]``."""

    __slots__ = ("wrap", "info", "content", "text", "_hash")

    def __init__(self, wrap, info: Mapping = EMPTY_INFO, content=None):
        self.wrap = as_term(wrap)
        self.info = info if isinstance(info, EnvInfo) else EnvInfo(info)
        self.content = as_term(content)
        self.text = f"{{{self.wrap.text}}}<{self.info.text}>[{self.content.text}]"
        self._hash = hash(self.text)

    def __eq__(self, other):
        if isinstance(other, (Seq, Loop)):
            return self.text == other.text
        return NotImplemented

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.text < other.text

    def __repr__(self):
        return f"Loop({self.text!r})"

    def __str__(self):
        return self.text

    def with_info(self, info: EnvInfo) -> Loop:
        return Loop(self.wrap, info, self.content)

    def with_content(self, content: Term) -> Loop:
        return Loop(self.wrap, self.info, content)


Node = Union[Seq, Loop]


def _item_text(node: Node, mult: int) -> str:
    return node.text if mult == 1 else f"{node.text}^{mult}"


class Term:
    """A canonical multiset of sequences and loops.

    ``items`` is a tuple of ``(node, multiplicity)`` pairs sorted by node text
    with no duplicate nodes and no empty sequences.
    """

    __slots__ = ("items", "text", "_hash", "_index", "_texts")

    def __init__(self, items: Iterable = ()):
        counts: dict[str, list] = {}
        for entry in items:
            node, mult = entry if isinstance(entry, tuple) else (entry, 1)
            if not isinstance(node, (Seq, Loop)):
                raise TypeError(f"not a term node: {node!r}")
            if not isinstance(mult, numbers.Integral) or mult < 0:
                raise ValueError(f"multiplicity must be a nonnegative integer, got {mult!r}")
            if mult == 0 or (isinstance(node, Seq) and node.is_empty):
                continue
            slot = counts.get(node.text)
            if slot is None:
                counts[node.text] = [node, int(mult)]
            else:
                slot[1] += int(mult)
        self._set(tuple((n, m) for _, (n, m) in sorted(counts.items())))

    def _set(self, items, texts=None):
        self.items = items
        # per-item texts, kept so that small edits can rebuild ``text`` cheaply
        self._texts = texts if texts is not None else [_item_text(n, m) for n, m in items]
        self.text = " | ".join(self._texts) if items else "0"
        self._hash = hash(("term", self.text))
        self._index = None

    @classmethod
    def _sorted(cls, items: tuple, texts: list | None = None) -> Term:
        """Wrap items already in canonical order without re-checking them."""
        t = cls.__new__(cls)
        t._set(items, texts)
        return t

    @classmethod
    def of(cls, *parts) -> Term:
        """Parallel composition of nodes, ``(node, n)`` pairs and terms."""
        flat = []
        for p in parts:
            if isinstance(p, Term):
                flat.extend(p.items)
            else:
                flat.append(p)
        return cls(flat)

    def __eq__(self, other):
        if isinstance(other, Term):
            return self.text == other.text
        return NotImplemented

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.text < other.text

    def __repr__(self):
        return f"Term({self.text!r})"

    def __str__(self):
        return self.text

    def __iter__(self) -> Iterator[tuple[Node, int]]:
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __bool__(self):
        return bool(self.items)

    def __or__(self, other) -> Term:
        return Term.of(self, other)

    def __pow__(self, n: int) -> Term:
        return Term((node, m * n) for node, m in self.items)

    @property
    def size(self) -> int:
        """Total multiplicity of the top-level items."""
        return sum(m for _, m in self.items)

    def index_of(self, text: str) -> int:
        """Position of the item whose node has this canonical text, or -1."""
        if self._index is None:
            self._index = {n.text: i for i, (n, _) in enumerate(self.items)}
        return self._index.get(text, -1)

    def multiplicity(self, node: Node) -> int:
        i = self.index_of(node.text)
        return self.items[i][1] if i >= 0 else 0

    def replace_one(self, index: int, replacement: Term) -> Term:
        """Remove one copy of the item at ``index`` and add ``replacement``."""
        items = list(self.items)
        texts = list(self._texts)
        node, m = items[index]
        items[index] = (node, m - 1)
        texts[index] = _item_text(node, m - 1)
        return _merge(items, texts, replacement.items)

    def plus(self, extra) -> Term:
        """This term in parallel with a few ``(node, multiplicity)`` pairs.

        Cheaper than ``Term.of`` when ``extra`` is short; ``extra`` must hold
        valid nodes with positive multiplicities.
        """
        return _merge(list(self.items), list(self._texts), extra)

    def subtract(self, counts: Mapping[int, int]) -> Term:
        """Remove ``counts[i]`` copies of the item at each index ``i``."""
        items = list(self.items)
        texts = list(self._texts)
        for i, c in counts.items():
            if c:
                node, m = items[i]
                items[i] = (node, m - c)
                texts[i] = _item_text(node, m - c)
        keep = [i for i, (_, m) in enumerate(items) if m > 0]
        if len(keep) < len(items):
            items = [items[i] for i in keep]
            texts = [texts[i] for i in keep]
        return Term._sorted(tuple(items), texts)


def _node_text(item) -> str:
    return item[0].text


def _merge(items: list, texts: list, extra) -> Term:
    for n, k in extra:
        if isinstance(n, Seq) and n.is_empty:
            continue
        i = bisect.bisect_left(items, n.text, key=_node_text)
        if i < len(items) and items[i][0].text == n.text:
            node, m = items[i][0], items[i][1] + k
            items[i] = (node, m)
            texts[i] = _item_text(node, m)
        else:
            items.insert(i, (n, k))
            texts.insert(i, _item_text(n, k))
    if any(m <= 0 for _, m in items):
        keep = [i for i, (_, m) in enumerate(items) if m > 0]
        items = [items[i] for i in keep]
        texts = [texts[i] for i in keep]
    return Term._sorted(tuple(items), texts)


EMPTY = Term()


def as_term(x) -> Term:
    """Coerce a node, a symbol name, a term or ``None`` to a term."""
    if x is None:
        return EMPTY
    if isinstance(x, Term):
        return x
    if isinstance(x, (Seq, Loop)):
        return Term([x])
    if isinstance(x, str):
        return Term([Seq(x)])
    raise TypeError(f"cannot build a term from {x!r}")


def canonicalize(t) -> Term:
    """Canonical form of a term, node, or iterable of nodes/``(node, n)`` pairs.

    Terms are canonical by construction, so a :class:`Term` comes back as is.
    """
    if isinstance(t, Term):
        return t
    if isinstance(t, (Seq, Loop)):
        return Term([t])
    return Term(t)


def congruent(t1, t2) -> bool:
    return canonicalize(t1) == canonicalize(t2)


# -- compartments -----------------------------------------------------------

Address = tuple


class Compartment(NamedTuple):
    """A place where rules can act.

    ``loop`` is ``None`` for the implicit top-level mixture.  ``multiplicity``
    is the product of the group multiplicities on the path from the root.
    """

    address: Address
    loop: Loop | None
    info: EnvInfo
    content: Term
    multiplicity: int


def root_loop(t: Term) -> Loop | None:
    """The environment loop when the term is exactly one loop, else ``None``."""
    if len(t.items) == 1:
        node, m = t.items[0]
        if m == 1 and isinstance(node, Loop):
            return node
    return None


def compartments(t: Term) -> Iterator[Compartment]:
    """All compartments of ``t`` in address order, root first."""
    root = root_loop(t)
    if root is None:
        yield Compartment((), None, EMPTY_INFO, t, 1)
        level = t
    else:
        yield Compartment((), root, root.info, root.content, 1)
        level = root.content
    yield from _walk(level, (), 1)


def _walk(level: Term, prefix: tuple, mult: int):
    for i, (node, m) in enumerate(level.items):
        if isinstance(node, Loop):
            addr = prefix + (i,)
            yield Compartment(addr, node, node.info, node.content, mult * m)
            yield from _walk(node.content, addr, mult * m)


def _loop_at(level: Term, addr: Address) -> tuple[Loop, int]:
    mult = 1
    node = None
    for i in addr:
        if not isinstance(i, int) or not 0 <= i < len(level.items):
            raise InvalidAddressError(addr)
        node, m = level.items[i]
        if not isinstance(node, Loop):
            raise InvalidAddressError(addr)
        mult *= m
        level = node.content
    return node, mult


def compartment_at(t: Term, addr: Address) -> Compartment:
    addr = tuple(addr)
    root = root_loop(t)
    if not addr:
        if root is None:
            return Compartment((), None, EMPTY_INFO, t, 1)
        return Compartment((), root, root.info, root.content, 1)
    node, mult = _loop_at(t if root is None else root.content, addr)
    return Compartment(addr, node, node.info, node.content, mult)


def resolve(t: Term, addr: Address) -> tuple[EnvInfo, Term]:
    """Info and content of the addressed compartment."""
    c = compartment_at(t, addr)
    return c.info, c.content


def _edit(level: Term, addr: Address, fn) -> Term:
    i = addr[0]
    if not isinstance(i, int) or not 0 <= i < len(level.items):
        raise InvalidAddressError(addr)
    node = level.items[i][0]
    if not isinstance(node, Loop):
        raise InvalidAddressError(addr)
    if len(addr) == 1:
        replacement = fn(node)
    else:
        replacement = Term._sorted(((node.with_content(_edit(node.content, addr[1:], fn)), 1),))
    return level.replace_one(i, replacement)


def splice(t: Term, addr: Address, fn) -> Term:
    """Replace one copy of the loop at ``addr`` by the term ``fn(loop)``.

    Copies that share a group with the edited loop keep the old node, so a
    group of multiplicity ``m`` splits into ``m - 1`` old copies and the
    replacement.
    """
    addr = tuple(addr)
    root = root_loop(t)
    if not addr:
        if root is None:
            raise InvalidAddressError(addr)
        return fn(root)
    if root is None:
        return _edit(t, addr, fn)
    return Term._sorted(((root.with_content(_edit(root.content, addr, fn)), 1),))


def replace_content(t: Term, addr: Address, content: Term) -> Term:
    addr = tuple(addr)
    if not addr and root_loop(t) is None:
        return content
    return splice(t, addr, lambda node: Term._sorted(((node.with_content(content), 1),)))


def update_info(t: Term, addr: Address, name: str, v) -> Term:
    """Set one info binding of the addressed loop."""
    addr = tuple(addr)
    if not addr and root_loop(t) is None:
        raise UnknownInfoNameError(name)
    return splice(t, addr, lambda node: Term._sorted(((node.with_info(node.info.replace(name, v)), 1),)))


# -- counting ---------------------------------------------------------------

def _phase_matcher(phase):
    if callable(phase):
        return phase
    names = {phase} if isinstance(phase, str) else set(phase)
    return lambda content: any(
        isinstance(n, Seq) and n.text in names for n, _ in content.items
    )


def count_individuals(t: Term, phase, wrap: str = "a") -> int:
    """Total multiplicity of top-level ``wrap`` loops whose content matches.

    ``phase`` is a symbol name, a collection of names (a loop matches when
    its content holds any of them as a top-level symbol), or a predicate on
    the content term.
    """
    wrap_text = wrap if isinstance(wrap, str) else as_term(wrap).text
    matches = _phase_matcher(phase)
    return sum(
        m for n, m in t.items
        if isinstance(n, Loop) and n.wrap.text == wrap_text and matches(n.content)
    )


def total_size(t: Term, wrap: str = "a") -> int:
    """Number of ``wrap`` loops anywhere in ``t``, counting every copy."""
    wrap_text = as_term(wrap).text
    total = 0
    for node, m in t.items:
        if isinstance(node, Loop):
            inner = total_size(node.content, wrap)
            total += m * ((1 if node.wrap.text == wrap_text else 0) + inner)
    return total
