"""Reference computations that share no code with the package."""

from __future__ import annotations

import math
from itertools import permutations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm


def walk_generator(sites: int, right: float = 1.0, left: float = 1.0) -> np.ndarray:
    """Nearest-neighbour generator on ``0..sites-1``; jumps off the ends are suppressed."""
    Q = np.zeros((sites, sites))
    for i in range(sites):
        if i + 1 < sites:
            Q[i, i + 1] = right
        if i > 0:
            Q[i, i - 1] = left
        Q[i, i] = -Q[i].sum()
    return Q


def ct_walk_law(t: float, radius: int = 60, right: float = 1.0, left: float = 1.0) -> dict:
    """``{n: P_t(0, n)}`` for ``|n| <= radius`` via the matrix exponential."""
    size = 2 * radius + 1
    P = expm(t * walk_generator(size, right, left))
    row = P[radius]
    return {n: row[n + radius] for n in range(-radius, radius + 1)}


def birth_death_generator(K: int, lam: float, mu: float) -> np.ndarray:
    """Queue length chain on ``0..K``: up at rate ``lam``, down at rate ``mu``."""
    Q = np.zeros((K + 1, K + 1))
    for i in range(K + 1):
        if i < K:
            Q[i, i + 1] = lam
        if i > 0:
            Q[i, i - 1] = mu
        Q[i, i] = -Q[i].sum()
    return Q


class MatrixKernel:
    """Duck-typed discrete kernel from a dense transition matrix on ``0..K``."""

    discrete = True
    spacing = 1

    def __init__(self, P: np.ndarray):
        self.P = P
        self.C = np.cumsum(P, axis=1)

    def p(self, x, y):
        y = int(y)
        return self.P[int(x), y] if 0 <= y < self.P.shape[1] else 0.0

    def F(self, x, y):
        y = math.floor(y)
        if y < 0:
            return 0.0
        return self.C[int(x), min(y, self.C.shape[1] - 1)]

    def admissible(self, x, y):
        return 0 <= int(y) < self.P.shape[1]

    def admissible_start(self, x):
        return 0 <= int(x) < self.P.shape[0]


def coalescing_law(Q: np.ndarray, starts, t: float) -> dict:
    """Exact law of the cluster state of coalescing copies of the chain ``Q``.

    States are tuples of ``(site, first, last)``.  Clusters move one at a
    time with the rates of ``Q``; a move onto an occupied site merges.
    """
    n_sites = Q.shape[0]
    init = tuple((int(x), i, i) for i, x in enumerate(starts))
    index = {init: 0}
    states = [init]
    rows, cols, rates = [], [], []
    k = 0
    while k < len(states):
        s = states[k]
        for c, (x, a, b) in enumerate(s):
            for y in range(n_sites):
                r = Q[x, y]
                if y == x or r == 0:
                    continue
                new = list(s)
                new[c] = (y, a, b)
                # order preservation: skip-free chains only reach neighbours
                new.sort()
                merged = []
                for z, lo, hi in new:
                    if merged and merged[-1][0] == z:
                        merged[-1] = (z, min(merged[-1][1], lo), max(merged[-1][2], hi))
                    else:
                        merged.append((z, lo, hi))
                t_state = tuple(merged)
                if t_state not in index:
                    index[t_state] = len(states)
                    states.append(t_state)
                rows.append(k)
                cols.append(index[t_state])
                rates.append(r)
        k += 1
    G = np.zeros((len(states), len(states)))
    for i, j, r in zip(rows, cols, rates):
        G[i, j] += r
    G -= np.diag(G.sum(axis=1))
    p = expm(t * G)[0]
    return {s: p[i] for i, s in enumerate(states)}


def pattern_probability(law: dict, parts, survivors) -> float:
    total = 0.0
    for s, p in law.items():
        if len(s) != len(parts):
            continue
        first, ok = 0, True
        for (x, a, b), n, y in zip(s, parts, survivors):
            if x != y or a != first or b != first + n - 1:
                ok = False
                break
            first += n
        if ok:
            total += p
    return total


def laplace_det(m) -> float:
    """Determinant by the permutation expansion (small matrices only)."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    total = 0.0
    for perm in permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        prod = 1.0
        for i in range(n):
            prod *= m[i, perm[i]]
        total += (-1) ** inv * prod
    return total


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def _Phi(z):
    from scipy.special import ndtr

    return ndtr(z)


def brute_h(G1: float, G2: float, n: int = 160) -> float:
    """``h(G1, G2)`` by a tensor Gauss-Legendre rule in ``(u, w = v - u)``.

    The 4 x 4 matrix is written out entry by entry from the unit-time
    Gaussian density, its CDF and their source derivatives; columns are
    ``P(y0) | P(y1) F(y1) | P(y2)`` and rows ``(u, d/du, v, d/dv)``.
    """
    y0, y1, y2 = 0.0, G1, G1 + G2
    x, w = leggauss(n)
    a, b = -9.0, y2 + 9.0
    u = 0.5 * (b - a) * x + 0.5 * (a + b)
    wu = 0.5 * (b - a) * w
    span = b - a
    d = 0.5 * span * (x + 1)
    wd = 0.5 * span * w
    U, D = np.meshgrid(u, d, indexing="ij")
    V = U + D
    W = np.outer(wu, wd)

    M = np.empty(U.shape + (4, 4))
    for r, (s, deriv, below) in enumerate(((U, False, True), (U, True, False), (V, False, False), (V, True, False))):
        if deriv:
            cols = [(y0 - s) * _phi(y0 - s), (y1 - s) * _phi(y1 - s), -_phi(y1 - s), (y2 - s) * _phi(y2 - s)]
        else:
            cols = [_phi(y0 - s), _phi(y1 - s), _Phi(y1 - s) - (1.0 if below else 0.0), _phi(y2 - s)]
        for c in range(4):
            M[..., r, c] = cols[c]
    return float((np.linalg.det(M) * W).sum())
