"""Exact cluster-state dynamic programming for the coalescing parity walk.

A state is the ordered tuple of clusters ``(site, first, last)`` where
``first..last`` are the indices of the initial particles the cluster holds.
Each step applies every one of the ``2^m`` move combinations of the ``m``
clusters with probability ``2^-m`` and merges clusters landing on one site.
Probabilities are exact ``Fraction`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

__all__ = [
    "OracleLimitError",
    "PatternQuery",
    "WallParticleQuery",
    "WarrenQuery",
    "cluster_distribution",
    "dp_oracle",
    "dp_oracle_exact",
]

# default budget: total move combinations enumerated over all steps
MAX_TRANSITIONS = 2_000_000

State = tuple  # tuple of (site, first, last)


class OracleLimitError(ValueError):
    """The requested system is too large for exact enumeration."""


def _step(state: State):
    m = len(state)
    for moves in product((-1, 1), repeat=m):
        out = []
        for (x, a, b), d in zip(state, moves):
            x += d
            if out and out[-1][0] == x:
                out[-1] = (x, out[-1][1], b)
            else:
                out.append((x, a, b))
        yield tuple(out)


def cluster_distribution(
    starts: Sequence[int], steps: int, max_transitions: int = MAX_TRANSITIONS
) -> dict[State, Fraction]:
    """Exact law of the cluster state after ``steps`` synchronous steps."""
    starts = [int(x) for x in starts]
    if not starts:
        raise ValueError("need at least one particle")
    if any(a >= b for a, b in zip(starts, starts[1:])):
        raise ValueError("starts must be strictly increasing")
    if len({x % 2 for x in starts}) > 1:
        raise ValueError("starts must share one parity (opposite parities cross unseen)")
    if steps < 0 or steps != int(steps):
        raise ValueError("steps must be a nonnegative integer")
    dist = {tuple((x, i, i) for i, x in enumerate(starts)): Fraction(1)}
    budget = max_transitions
    for _ in range(int(steps)):
        budget -= sum(2 ** len(s) for s in dist)
        if budget < 0:
            raise OracleLimitError(
                f"more than {max_transitions} transitions for {len(starts)} particles "
                f"over {steps} steps"
            )
        nxt: dict[State, Fraction] = {}
        for state, p in dist.items():
            q = p / 2 ** len(state)
            for s in _step(state):
                nxt[s] = nxt.get(s, 0) + q
        dist = nxt
    return dist


@dataclass(frozen=True)
class PatternQuery:
    """Survivors exactly at ``survivors`` with blocks of sizes ``parts``."""

    parts: tuple
    survivors: tuple

    def starts(self, starts):
        return starts

    def __call__(self, state: State) -> bool:
        if len(state) != len(self.parts):
            return False
        first = 0
        for (x, a, b), n, y in zip(state, self.parts, self.survivors):
            if x != y or a != first or b != first + n - 1:
                return False
            first += n
        return True


@dataclass(frozen=True)
class WallParticleQuery:
    """Walls and survivors of a fully occupied window.

    The window holds every site of the particles' parity from the first
    wall's left flank to the last wall's right flank; ``half`` is the
    distance from a wall to its flanks.
    """

    walls: tuple
    survivors: tuple
    half: int = 1

    def starts(self, starts=None):
        lo = int(self.walls[0] - self.half)
        hi = int(self.walls[-1] + self.half)
        return tuple(range(lo, hi + 1, 2 * self.half))

    def __call__(self, state: State, starts) -> bool:
        index = {x: i for i, x in enumerate(starts)}
        flanks = [(index[int(w - self.half)], index[int(w + self.half)]) for w in self.walls]
        owner = {}
        for c, (x, a, b) in enumerate(state):
            for i in range(a, b + 1):
                owner[i] = (c, x)
        # a_i and b_i in different clusters; b_i and a_{i+1} in one
        for ai, bi in flanks:
            if owner[ai][0] == owner[bi][0]:
                return False
        groups = [[flanks[0][0]]]
        groups += [[flanks[i][1], flanks[i + 1][0]] for i in range(len(flanks) - 1)]
        groups.append([flanks[-1][1]])
        for y, g in zip(self.survivors, groups):
            if len({owner[i] for i in g}) != 1 or owner[g[0]][1] != y:
                return False
        return True


@dataclass(frozen=True)
class WarrenQuery:
    """``Z(x_i) <= y_i`` for every initial particle ``i``."""

    thresholds: tuple

    def starts(self, starts):
        return starts

    def __call__(self, state: State) -> bool:
        for x, a, b in state:
            for i in range(a, b + 1):
                if x > self.thresholds[i]:
                    return False
        return True


def dp_oracle_exact(starts, steps: int, query) -> Fraction:
    """Exact probability of ``query`` (a query object or a state predicate)."""
    if isinstance(query, WallParticleQuery):
        sites = query.starts()
        dist = cluster_distribution(sites, steps)
        return sum((p for s, p in dist.items() if query(s, sites)), Fraction(0))
    if isinstance(query, PatternQuery) and sum(query.parts) != len(starts):
        raise ValueError("composition does not cover the starts")
    if isinstance(query, WarrenQuery) and len(query.thresholds) != len(starts):
        raise ValueError("need one threshold per start")
    dist = cluster_distribution(starts, steps)
    pred: Callable = query
    return sum((p for s, p in dist.items() if pred(s)), Fraction(0))


def dp_oracle(starts, steps: int, query) -> float:
    """:func:`dp_oracle_exact` rounded to double precision."""
    value = dp_oracle_exact(starts, steps, query)
    out = float(value)
    assert math.isfinite(out)
    return out
