"""Numba kernels for coalescing nearest-neighbour walks.

Both engines take sorted integer start sites and return, for every surviving
cluster in left-to-right order, its final site and the index range
``[lo, hi]`` of the start sites it absorbed.  Order preservation means a
cluster can only ever meet its immediate neighbours.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def run_ct_walk(starts, rate, duration, rng):
    """Continuous-time walk, each cluster jumping +-1 at ``rate`` per direction.

    Gillespie form of independent exponential clocks: the next event is at
    total rate ``2 * rate * N`` and belongs to a uniformly chosen cluster.
    """
    n = starts.shape[0]
    pos = starts.copy()
    lo = np.arange(n)
    hi = np.arange(n)
    prv = np.arange(-1, n - 1)
    nxt = np.arange(1, n + 1)
    alive = np.arange(n)
    slot = np.arange(n)
    head = 0
    count = n
    t = 0.0
    while count > 0:
        t += rng.standard_exponential() / (2.0 * rate * count)
        if t > duration:
            break
        r = int(rng.random() * 2 * count)
        if r >= 2 * count:
            r = 2 * count - 1
        c = alive[r >> 1]
        step = 1 if (r & 1) else -1
        target = pos[c] + step
        nb = nxt[c] if step > 0 else prv[c]
        if nb >= 0 and nb < n and pos[nb] == target:
            # c merges into its neighbour
            if lo[c] < lo[nb]:
                lo[nb] = lo[c]
            if hi[c] > hi[nb]:
                hi[nb] = hi[c]
            p, q = prv[c], nxt[c]
            if p >= 0:
                nxt[p] = q
            else:
                head = q
            if q < n:
                prv[q] = p
            last = alive[count - 1]
            alive[slot[c]] = last
            slot[last] = slot[c]
            count -= 1
        else:
            pos[c] = target
    out_pos = np.empty(count, dtype=np.int64)
    out_lo = np.empty(count, dtype=np.int64)
    out_hi = np.empty(count, dtype=np.int64)
    c = head
    i = 0
    while c < n and i < count:
        out_pos[i] = pos[c]
        out_lo[i] = lo[c]
        out_hi[i] = hi[c]
        c = nxt[c]
        i += 1
    return out_pos, out_lo, out_hi


@njit(cache=True, nogil=True)
def run_parity_walk(starts, steps, rng):
    """Discrete-time +-1 walk; all clusters move simultaneously."""
    n = starts.shape[0]
    pos = starts.copy()
    lo = np.arange(n)
    hi = np.arange(n)
    count = n
    for _ in range(steps):
        for i in range(count):
            pos[i] += 1 if rng.random() < 0.5 else -1
        k = 0
        for i in range(1, count):
            if pos[i] == pos[k]:
                hi[k] = hi[i]
            else:
                k += 1
                pos[k] = pos[i]
                lo[k] = lo[i]
                hi[k] = hi[i]
        count = k + 1 if count > 0 else 0
    return pos[:count].copy(), lo[:count].copy(), hi[:count].copy()


@njit(cache=True, nogil=True)
def _owner_positions(pos, lo, hi, n):
    out = np.empty(n, dtype=np.int64)
    for c in range(pos.shape[0]):
        for i in range(lo[c], hi[c] + 1):
            out[i] = pos[c]
    return out


@njit(cache=True, nogil=True)
def warren_batch(starts, thresholds, parity_steps, rate, duration, replicates, rng):
    """Count replicates with ``Z(x_i) <= y_i`` for every start.

    ``parity_steps >= 0`` selects the synchronous walk, otherwise the
    continuous-time walk with the given rate and duration is used.
    """
    n = starts.shape[0]
    hits = 0
    for _ in range(replicates):
        if parity_steps >= 0:
            pos, lo, hi = run_parity_walk(starts, parity_steps, rng)
        else:
            pos, lo, hi = run_ct_walk(starts, rate, duration, rng)
        z = _owner_positions(pos, lo, hi, n)
        ok = True
        for i in range(n):
            if z[i] > thresholds[i]:
                ok = False
                break
        if ok:
            hits += 1
    return hits
