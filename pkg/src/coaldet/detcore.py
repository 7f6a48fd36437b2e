"""Coalescence matrices and their determinants.

All matrices share one builder.  Rows are indexed by source points, columns
by survivors grouped into blocks; the first column of a block holds
transition probabilities ``P`` (densities in the continuous case) and every
further column holds ``F(x_i, y) - [i < j]`` with the staircase taken at row
level.  Continuous wall-particle matrices add source-derivative rows, which
carry no staircase.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from itertools import accumulate
from typing import Sequence

import numpy as np

from .kernels import Gaussian, Kernel, KernelDomainError, ReflectedGaussian

__all__ = [
    "CoalescencePattern",
    "WallParticlePattern",
    "PatternError",
    "NegativeDeterminantError",
    "ClampedDeterminant",
    "determinant",
    "coalescence_matrix",
    "coalescence_probability",
    "wall_particle_matrix",
    "wall_particle_probability",
    "multi_pattern_matrix",
    "multi_pattern_probability",
    "block_view",
    "m0_matrix",
    "brownian_m0",
    "brownian_intensity",
    "halfline_m0",
    "halfline_intensity",
    "warren_matrix",
    "warren_cdf",
]

log = logging.getLogger(__name__)

CLAMP_TOL = 1e-12


class PatternError(ValueError):
    """Inconsistent lengths, orderings or sites."""


class NegativeDeterminantError(ArithmeticError):
    """A probability determinant came out clearly negative."""


class ClampedDeterminant(UserWarning):
    """A determinant slightly outside its admissible range was clamped."""


def _strictly_increasing(xs) -> bool:
    return all(a < b for a, b in zip(xs, xs[1:]))


@dataclass(frozen=True)
class CoalescencePattern:
    """Integer composition ``n_1 + ... + n_k = n``."""

    parts: tuple[int, ...]

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if not parts or any(p < 1 for p in parts):
            raise PatternError(f"composition parts must be positive, got {self.parts}")
        object.__setattr__(self, "parts", parts)

    @property
    def n(self) -> int:
        return sum(self.parts)

    @property
    def k(self) -> int:
        return len(self.parts)

    @property
    def first_indices(self) -> tuple[int, ...]:
        """0-based index of the first particle of each block."""
        return (0, *accumulate(self.parts[:-1]))

    def column_blocks(self) -> list[tuple[int, bool]]:
        """For every column: (block index, is first column of its block)."""
        cols = []
        for l, size in enumerate(self.parts):
            cols.extend((l, j == 0) for j in range(size))
        return cols

    @classmethod
    def wall_particle(cls, k: int) -> "CoalescencePattern":
        """The composition ``1 + 2 + ... + 2 + 1`` with ``k`` walls."""
        if k < 1:
            raise PatternError("need at least one wall")
        return cls((1,) + (2,) * (k - 1) + (1,))

    @classmethod
    def halfline(cls, k: int) -> "CoalescencePattern":
        """The composition ``2 + ... + 2 + 1`` (boundary particle first)."""
        return cls((2,) * k + (1,))


@dataclass(frozen=True)
class WallParticlePattern:
    """Walls ``x_{1/2} < ... < x_{k-1/2}`` and survivors ``y_0 < ... < y_k``."""

    walls: tuple
    survivors: tuple

    def __post_init__(self):
        walls, surv = tuple(self.walls), tuple(self.survivors)
        if len(walls) < 1 or len(surv) != len(walls) + 1:
            raise PatternError(
                f"need k >= 1 walls and k + 1 survivors, got {len(walls)} and {len(surv)}"
            )
        if not (_strictly_increasing(walls) and _strictly_increasing(surv)):
            raise PatternError("walls and survivors must be strictly increasing")
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "survivors", surv)

    @property
    def k(self) -> int:
        return len(self.walls)

    def flanks(self, half_spacing=0.5) -> tuple:
        """Initial sites ``a_1, b_1, ..., a_k, b_k`` on either side of each wall."""
        out = []
        for x in self.walls:
            out.extend((x - half_spacing, x + half_spacing))
        return tuple(out)


# ---------------------------------------------------------------------------
# determinant
# ---------------------------------------------------------------------------


def determinant(m) -> float:
    """Determinant by LU decomposition with partial pivoting."""
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValueError(f"need a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    n = a.shape[0]
    det = 1.0
    for c in range(n):
        piv = c + int(np.argmax(np.abs(a[c:, c])))
        if a[piv, c] == 0.0:
            return 0.0
        if piv != c:
            a[[c, piv]] = a[[piv, c]]
            det = -det
        det *= a[c, c]
        if c + 1 < n:
            factors = a[c + 1 :, c] / a[c, c]
            a[c + 1 :, c:] -= np.outer(factors, a[c, c:])
    return float(det)


def _clamp_probability(value: float, what: str, upper: float | None = 1.0) -> float:
    if value < 0:
        if value < -CLAMP_TOL:
            raise NegativeDeterminantError(f"{what} determinant {value:.3e} is negative")
        if value != 0.0:
            warnings.warn(f"{what}: clamped {value:.3e} to 0", ClampedDeterminant, stacklevel=3)
            log.debug("%s clamped %.3e to 0", what, value)
        return 0.0
    if upper is not None and value > upper:
        if value > upper + CLAMP_TOL:
            raise NegativeDeterminantError(f"{what} determinant {value:.3e} exceeds {upper}")
        warnings.warn(f"{what}: clamped {value:.16g} to {upper}", ClampedDeterminant, stacklevel=3)
        return upper
    return value


# ---------------------------------------------------------------------------
# the shared builder
# ---------------------------------------------------------------------------


def _staircase(
    kernel: Kernel,
    rows: Sequence[tuple[object, bool, int]],
    pattern: CoalescencePattern,
    survivors: Sequence,
) -> np.ndarray:
    """Assemble ``M[..., i, j]``.

    ``rows`` holds ``(x, derivative, stair_index)``: the source point, whether
    the row is a source derivative, and the row index compared against the
    column index in ``[i < j]``.  Sources may be arrays, in which case the
    result is a stack of matrices broadcast over them.
    """
    cols = pattern.column_blocks()
    n_rows, n_cols = len(rows), len(cols)
    if n_rows != n_cols:
        raise PatternError(f"{n_rows} rows but {n_cols} columns")
    entries = [[None] * n_cols for _ in range(n_rows)]
    for i, (x, deriv, stair) in enumerate(rows):
        for j, (block, first) in enumerate(cols):
            y = survivors[block]
            if first:
                v = kernel.dp(x, y) if deriv else kernel.p(x, y)
            elif deriv:
                v = kernel.dF(x, y)
            else:
                v = kernel.F(x, y) - (1.0 if stair < j else 0.0)
            entries[i][j] = v
    flat = np.broadcast_arrays(*(np.asarray(v, dtype=float) for row in entries for v in row))
    shape = flat[0].shape
    return np.stack(flat, axis=-1).reshape(shape + (n_rows, n_cols))


def _check_sites(kernel: Kernel, starts, survivors, pattern: CoalescencePattern):
    if len(starts) != pattern.n:
        raise PatternError(f"{len(starts)} starts for a composition of {pattern.n}")
    if len(survivors) != pattern.k:
        raise PatternError(f"{len(survivors)} survivors for {pattern.k} blocks")
    if not _strictly_increasing(starts) or not _strictly_increasing(survivors):
        raise PatternError("starts and survivors must be strictly increasing")
    if kernel.discrete:
        for x in starts:
            if x != int(x):
                raise PatternError(f"start {x} is not a lattice site")
            if not kernel.admissible_start(int(x)):
                raise PatternError(f"start {x} is off the occupied sublattice")


def _as_pattern(pattern) -> CoalescencePattern:
    return pattern if isinstance(pattern, CoalescencePattern) else CoalescencePattern(tuple(pattern))


def coalescence_matrix(kernel: Kernel, starts, pattern, survivors) -> np.ndarray:
    pattern = _as_pattern(pattern)
    starts, survivors = tuple(starts), tuple(survivors)
    _check_sites(kernel, starts, survivors, pattern)
    rows = [(x, False, i) for i, x in enumerate(starts)]
    return _staircase(kernel, rows, pattern, survivors)


def _survivors_reachable(kernel: Kernel, starts, pattern: CoalescencePattern, survivors) -> bool:
    # every particle of block l must be able to reach y_l
    for l, first in enumerate(pattern.first_indices):
        for x in starts[first : first + pattern.parts[l]]:
            if not kernel.admissible(int(x), int(survivors[l])):
                return False
    return True


def coalescence_probability(kernel: Kernel, starts, pattern, survivors) -> float:
    """Probability (density, for continuous kernels) of the pattern with given survivors."""
    pattern = _as_pattern(pattern)
    starts, survivors = tuple(starts), tuple(survivors)
    _check_sites(kernel, starts, survivors, pattern)
    if kernel.discrete:
        if any(y != int(y) for y in survivors):
            return 0.0
        if not _survivors_reachable(kernel, starts, pattern, survivors):
            return 0.0
    value = determinant(coalescence_matrix(kernel, starts, pattern, survivors))
    return _clamp_probability(value, "coalescence", 1.0 if kernel.discrete else None)


# ---------------------------------------------------------------------------
# wall-particle systems on the lattice
# ---------------------------------------------------------------------------


def _flanks_for(kernel: Kernel, pattern: WallParticlePattern) -> tuple:
    half = kernel.spacing / 2 if kernel.discrete else None
    if half is None:
        raise PatternError("wall_particle_matrix needs a discrete kernel; use m0_matrix")
    flanks = pattern.flanks(half)
    for x, a in zip(pattern.walls, flanks[::2]):
        if a != int(a) or not kernel.admissible_start(int(a)):
            raise PatternError(f"wall {x} does not sit between two occupied sites")
    return tuple(int(a) for a in flanks)


def wall_particle_matrix(kernel: Kernel, pattern: WallParticlePattern) -> np.ndarray:
    """The ``2k x 2k`` matrix for ``y_0 <- x_{1/2} -> y_1 ... -> y_k``."""
    starts = _flanks_for(kernel, pattern)
    return coalescence_matrix(
        kernel, starts, CoalescencePattern.wall_particle(pattern.k), pattern.survivors
    )


def wall_particle_probability(kernel: Kernel, pattern: WallParticlePattern) -> float:
    starts = _flanks_for(kernel, pattern)
    return coalescence_probability(
        kernel, starts, CoalescencePattern.wall_particle(pattern.k), pattern.survivors
    )


def _multi_parts(kernel: Kernel, patterns: Sequence[WallParticlePattern]):
    if not patterns:
        raise PatternError("need at least one pattern")
    walls = [x for p in patterns for x in p.walls]
    survivors = [y for p in patterns for y in p.survivors]
    if not _strictly_increasing(walls) or not _strictly_increasing(survivors):
        raise PatternError("patterns overlap: walls and survivors must increase globally")
    starts = [a for p in patterns for a in _flanks_for(kernel, p)]
    if not _strictly_increasing(starts):
        raise PatternError("patterns overlap: flanking sites collide")
    parts = tuple(q for p in patterns for q in CoalescencePattern.wall_particle(p.k).parts)
    return starts, CoalescencePattern(parts), survivors


def multi_pattern_matrix(kernel: Kernel, patterns: Sequence[WallParticlePattern]) -> np.ndarray:
    """Matrix for several separated patterns observed at once."""
    starts, comp, survivors = _multi_parts(kernel, patterns)
    return coalescence_matrix(kernel, starts, comp, survivors)


def multi_pattern_probability(kernel: Kernel, patterns: Sequence[WallParticlePattern]) -> float:
    starts, comp, survivors = _multi_parts(kernel, patterns)
    return coalescence_probability(kernel, starts, comp, survivors)


def block_view(m: np.ndarray, k: int) -> dict[tuple[int, int], np.ndarray]:
    """The ``2 x 2`` blocks ``B_{i,j}`` of a wall-particle matrix.

    Keys are (wall number ``1..k``, interior survivor number ``1..k-1``).
    This is a view onto the row-level matrix, not a second construction.
    """
    blocks = {}
    for wall in range(1, k + 1):
        r = 2 * (wall - 1)
        for surv in range(1, k):
            c = 1 + 2 * (surv - 1)
            blocks[(wall, surv)] = m[r : r + 2, c : c + 2]
    return blocks


# ---------------------------------------------------------------------------
# continuous wall-particle intensities
# ---------------------------------------------------------------------------


def m0_matrix(kernel: Kernel, walls, survivors, boundary=None) -> np.ndarray:
    """Density/derivative row pairs for each wall, columns as in the lattice case.

    ``walls`` entries may be arrays (broadcast together), which yields a stack
    of matrices.  With ``boundary`` set, a single value row for a particle at
    that point is prepended and the columns follow ``2 + ... + 2 + 1``.
    """
    if kernel.discrete:
        raise PatternError("m0_matrix needs a continuous kernel")
    k = len(walls)
    if len(survivors) != k + 1:
        raise PatternError("need k + 1 survivors")
    rows = []
    if boundary is None:
        comp = CoalescencePattern.wall_particle(k)
    else:
        comp = CoalescencePattern.halfline(k)
        rows.append((boundary, False, 0))
    for x in walls:
        i = len(rows)
        rows.append((x, False, i))
        rows.append((x, True, i))
    return _staircase(kernel, rows, comp, tuple(survivors))


def _check_continuous(pattern: WallParticlePattern, T: float):
    if not (T > 0 and math.isfinite(T)):
        raise PatternError(f"horizon must be positive, got {T}")


def brownian_m0(pattern: WallParticlePattern, T: float) -> np.ndarray:
    _check_continuous(pattern, T)
    return m0_matrix(Gaussian(T), pattern.walls, pattern.survivors)


def brownian_intensity(pattern: WallParticlePattern, T: float) -> float:
    """Intensity of the wall-particle pattern for coalescing Brownian motions."""
    return determinant(brownian_m0(pattern, T))


def halfline_m0(pattern: WallParticlePattern, T: float) -> np.ndarray:
    """``(2k+1) x (2k+1)`` matrix for reflected Brownian motion, ``y_0`` leftmost."""
    _check_continuous(pattern, T)
    if pattern.walls[0] <= 0 or pattern.survivors[0] <= 0:
        raise PatternError("half-line patterns need positive walls and survivors")
    try:
        return m0_matrix(ReflectedGaussian(T), pattern.walls, pattern.survivors, boundary=0.0)
    except KernelDomainError as exc:
        raise PatternError(str(exc)) from exc


def halfline_intensity(pattern: WallParticlePattern, T: float) -> float:
    return determinant(halfline_m0(pattern, T))


# ---------------------------------------------------------------------------
# Warren's joint CDF
# ---------------------------------------------------------------------------


def warren_matrix(kernel: Kernel, starts, thresholds) -> np.ndarray:
    """``M_ij = F(x_i, y_j) - [i < j]``; infinite thresholds give ``F = 1``."""
    starts, thresholds = tuple(starts), tuple(thresholds)
    n = len(starts)
    if n == 0 or len(thresholds) != n:
        raise PatternError("need equally many starts and thresholds")
    if not _strictly_increasing(starts):
        raise PatternError("starts must be strictly increasing")
    if any(a > b for a, b in zip(thresholds, thresholds[1:])):
        raise PatternError("thresholds must be nondecreasing")
    m = np.empty((n, n))
    for j, y in enumerate(thresholds):
        for i, x in enumerate(starts):
            if y == math.inf:
                f = 1.0
            elif y == -math.inf:
                f = 0.0
            else:
                f = float(kernel.F(x, y))
            m[i, j] = f - (1.0 if i < j else 0.0)
    return m


def warren_cdf(kernel: Kernel, starts, thresholds) -> float:
    """``P(Z_T(x_i) <= y_i for all i)`` for coalescing particles from ``starts``."""
    value = determinant(warren_matrix(kernel, starts, thresholds))
    return _clamp_probability(value, "warren")
