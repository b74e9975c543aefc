"""Statistical self-checks of the simulator against analytic oracles.

Each suite returns a :class:`SuiteResult`; ``passed`` says whether the
statistic is within its documented bound.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .dsl import parse_model, parse_term
from .rules import Ecosystem, PropensityTable
from .ssa import SimState, make_rng, run, step

KS_CRITICAL_001 = 1.628  # asymptotic Kolmogorov critical value at alpha = 0.01
Z_99 = 2.5758293035489004


@dataclass
class SuiteResult:
    name: str
    passed: bool
    stats: dict = field(default_factory=dict)

    def report(self) -> str:
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.stats.items())
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({parts})"


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


# -- exponential waiting times ------------------------------------------------

def ks_exponential(samples, rate: float) -> float:
    """Kolmogorov-Smirnov distance between ``samples`` and Exp(rate)."""
    xs = sorted(samples)
    n = len(xs)
    d = 0.0
    for i, x in enumerate(xs):
        cdf = 1.0 - math.exp(-rate * x)
        d = max(d, (i + 1) / n - cdf, cdf - i / n)
    return d


def waiting_times(a0: float, n: int, seed: int = 0) -> list[float]:
    """``n`` inter-reaction times of a rule that never changes the state."""
    eco = Ecosystem(parse_term("A"), parse_model(f"rule K A => A @ {a0!r};"))
    state = SimState.start(eco, seed)
    out = []
    for _ in range(n):
        before = state.clock
        state, _ = step(state, math.inf)
        out.append(state.clock - before)
    return out


def exp_times(a0: float = 4.0, n: int = 100_000, seed: int = 0) -> SuiteResult:
    xs = waiting_times(a0, n, seed)
    d = ks_exponential(xs, a0)
    critical = KS_CRITICAL_001 / math.sqrt(n)
    mean = math.fsum(xs) / n
    rel = abs(mean * a0 - 1.0)
    return SuiteResult(
        f"exp-times(a0={a0:g})", d < critical and rel < 0.03,
        {"n": n, "ks": d, "critical": critical, "mean": mean, "expected_mean": 1 / a0, "rel_err": rel},
    )


# -- reaction selection -------------------------------------------------------

DEFAULT_MATRIX = ((1.0, 2.0, 3.0), (0.5, 4.0, 1.5), (2.5, 0.25, 5.0))


def selection_system(matrix) -> tuple[PropensityTable, dict]:
    """A table whose entry for rule ``j`` in compartment ``i`` is ``matrix[j][i]``.

    Compartment ``i`` is a loop ``{m_i}`` holding one ``S_j`` per rule; rule
    ``j`` rewrites ``S_j`` to itself at rate ``matrix[j][i]``.  Returns the
    table and the expected probability of each ``(rule, address)`` pair.
    """
    n_rules, n_comps = len(matrix), len(matrix[0])
    loops = " | ".join(
        f"{{m{i}}}<>[{' | '.join(f'S{j}' for j in range(n_rules))}]" for i in range(n_comps)
    )
    state = parse_term(loops)
    # rates are per rule, so every (rule, compartment) pair gets its own rule
    rules = []
    for j in range(n_rules):
        for i in range(n_comps):
            if matrix[j][i] > 0:
                rules.append(f"rule K{j}_{i} {{m{i}}}<@x>[S{j} | $X] => {{m{i}}}<@x>[S{j} | $X] @ {matrix[j][i]!r};")
    table = PropensityTable.build(parse_model("\n".join(rules)), state)
    total = math.fsum(v for row in matrix for v in row)
    expected = {(j, i): matrix[j][i] / total
                for j in range(n_rules) for i in range(n_comps) if matrix[j][i] > 0}
    return table, expected


def selection(matrix=DEFAULT_MATRIX, n: int = 100_000, seed: int = 0) -> SuiteResult:
    table, expected = selection_system(matrix)
    rng = make_rng(seed)
    counts: Counter = Counter()
    for _ in range(n):
        k, _addr = table.select(rng)
        j, i = (int(x) for x in table.rules[k].id[1:].split("_"))
        counts[(j, i)] += 1
    worst = 0.0
    for key, p in expected.items():
        sigma = math.sqrt(n * p * (1 - p)) or 1.0
        worst = max(worst, abs(counts[key] - n * p) / sigma)
    stray = sum(c for key, c in counts.items() if key not in expected)
    return SuiteResult("selection", worst <= 3.0 and stray == 0,
                       {"n": n, "pairs": len(expected), "max_z": worst})


# -- CTMC oracle --------------------------------------------------------------

CTMC_RULES = """
rule K1 A => B @ 1.0;
rule K2 B => A @ 0.5;
rule K3 B => C @ 1.0;
rule K4 C => B @ 0.7;
rule K5 A | B => B | B @ 0.4;
"""
# (consumed, produced, rate) in species order A, B, C
CTMC_REACTIONS = (
    ((1, 0, 0), (0, 1, 0), 1.0),
    ((0, 1, 0), (1, 0, 0), 0.5),
    ((0, 1, 0), (0, 0, 1), 1.0),
    ((0, 0, 1), (0, 1, 0), 0.7),
    ((1, 1, 0), (0, 2, 0), 0.4),
)


def ctmc_states(n: int) -> list[tuple]:
    return [(a, b, n - a - b) for a in range(n + 1) for b in range(n + 1 - a)]


def ctmc_generator(n: int, reactions=CTMC_REACTIONS) -> tuple[list, list[list[float]]]:
    """States with ``n`` molecules and the generator built from mass-action counts."""
    states = ctmc_states(n)
    index = {s: k for k, s in enumerate(states)}
    q = [[0.0] * len(states) for _ in states]
    for s in states:
        for consumed, produced, rate in reactions:
            h = 1
            for have, need in zip(s, consumed):
                h *= math.comb(have, need)
            if h == 0:
                continue
            t = tuple(x - c + p for x, c, p in zip(s, consumed, produced))
            q[index[s]][index[t]] += rate * h
            q[index[s]][index[s]] -= rate * h
    return states, q


def transient(q: list[list[float]], p0: list[float], t: float, tol: float = 1e-13) -> list[float]:
    """``p0 · exp(Q t)`` by uniformization."""
    lam = max(-q[i][i] for i in range(len(q))) or 1.0
    m = len(q)
    # P = I + Q / lam, row-stochastic
    pm = [[(1.0 if i == j else 0.0) + q[i][j] / lam for j in range(m)] for i in range(m)]
    term = list(p0)
    weight = math.exp(-lam * t)
    out = [weight * x for x in term]
    acc = weight
    k = 0
    while 1.0 - acc > tol:
        k += 1
        term = [math.fsum(term[i] * pm[i][j] for i in range(m)) for j in range(m)]
        weight *= lam * t / k
        acc += weight
        out = [o + weight * x for o, x in zip(out, term)]
    return out


def _species_counts(term) -> tuple:
    counts = {n.text: m for n, m in term.items}
    return tuple(counts.get(s, 0) for s in "ABC")


def ctmc_oracle(n_runs: int = 50_000, molecules: int = 3, t: float = 1.0, seed: int = 0) -> SuiteResult:
    states, q = ctmc_generator(molecules)
    start = (molecules, 0, 0)
    p0 = [1.0 if s == start else 0.0 for s in states]
    exact = dict(zip(states, transient(q, p0, t)))
    eco = Ecosystem(parse_term(f"A^{molecules}"), parse_model(CTMC_RULES))
    rng = make_rng(seed)
    hist: Counter = Counter()
    for _ in range(n_runs):
        samples = run(eco, t, sampler=lambda _t, term: _species_counts(term),
                      sample_interval=t, rng=rng)
        hist[samples[-1][1]] += 1
    tv = 0.5 * sum(abs(hist[s] / n_runs - exact[s]) for s in set(exact) | set(hist))
    return SuiteResult("ctmc-oracle", tv < 0.02, {"runs": n_runs, "states": len(states), "tv": tv})


# -- pure death ---------------------------------------------------------------

def death_decay(n0: int = 100, c: float = 0.1, t: float = 10.0, replicates: int = 1000,
                seed: int = 0) -> SuiteResult:
    eco = Ecosystem(parse_term(f"A^{n0}"), parse_model(f"rule D A => 0 @ {c!r};"))
    rng = make_rng(seed)
    finals = []
    for _ in range(replicates):
        samples = run(eco, t, sampler=lambda _t, term: _species_counts(term)[0],
                      sample_interval=t, rng=rng)
        finals.append(samples[-1][1])
    mean = math.fsum(finals) / replicates
    p = math.exp(-c * t)
    expected = n0 * p
    half_width = Z_99 * math.sqrt(n0 * p * (1 - p) / replicates)
    return SuiteResult("death-decay", abs(mean - expected) <= half_width,
                       {"replicates": replicates, "mean": mean, "expected": expected,
                        "ci99_half_width": half_width})


SUITES = {
    "exp-times": exp_times,
    "selection": selection,
    "ctmc-oracle": ctmc_oracle,
    "death-decay": death_decay,
}


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    return fn(seed=seed)


