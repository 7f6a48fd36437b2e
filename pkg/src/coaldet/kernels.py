"""Transition laws at a fixed horizon.

Discrete kernels live on the integers and expose point masses ``P(x, y)``
with cumulative sums ``F(x, y) = sum_{z <= y} P(x, z)``.  Continuous kernels
expose the density ``p_x(y)``, its CDF ``F_x(y)`` and the derivatives of both
with respect to the source point ``x``.

Every kernel is an immutable value.  Changing the horizon means building a
second instance with :meth:`Kernel.at`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import special

__all__ = [
    "Family",
    "KernelDomainError",
    "Kernel",
    "DiscreteKernel",
    "CTSimpleWalk",
    "ParityWalk",
    "ContinuousKernel",
    "Gaussian",
    "ReflectedGaussian",
    "make_kernel",
    "point_prob",
    "cumulative",
    "density",
    "cdf",
    "d_source_density",
    "d_source_cdf",
]

# Tail mass left out of the truncated displacement tables.
TAIL_MASS = 1e-18

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class Family(str, Enum):
    CT_SIMPLE_WALK = "ct_simple_walk"
    PARITY_WALK = "parity_walk"
    GAUSSIAN = "gaussian"
    REFLECTED_GAUSSIAN = "reflected_gaussian"


class KernelDomainError(ValueError):
    """Raised for arguments outside a kernel's state space."""


def _check_time(t: float) -> float:
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise KernelDomainError(f"time must be finite and >= 0, got {t}")
    return t


@dataclass(frozen=True)
class Kernel:
    horizon: float

    family = None  # type: Family
    discrete = True

    def __post_init__(self):
        object.__setattr__(self, "horizon", _check_time(self.horizon))

    def at(self, t: float) -> "Kernel":
        """Same law evaluated at horizon ``t``."""
        return replace(self, horizon=t)


# ---------------------------------------------------------------------------
# discrete kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteKernel(Kernel):
    """Translation-invariant skip-free law on the integers.

    Subclasses provide :meth:`pmf` (the displacement law ``P_T(n)``) and
    :meth:`_support_radius`.  ``spacing`` is the distance between neighbouring
    initial sites of the occupied lattice.
    """

    spacing = 1
    translation_invariant = True

    @property
    def symmetric(self) -> bool:
        return True

    def pmf(self, n):
        raise NotImplementedError

    def _support_radius(self) -> int:
        raise NotImplementedError

    @cached_property
    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """Displacements ``-M..M`` and their masses, ``M`` from the tail bound."""
        m = self._support_radius()
        n = np.arange(-m, m + 1)
        return n, np.asarray(self.pmf(n), dtype=float)

    @cached_property
    def _tails(self) -> tuple[int, np.ndarray, np.ndarray]:
        n, p = self.table
        lower = np.cumsum(p)
        upper = np.cumsum(p[::-1])[::-1]
        return int(-n[0]), lower, upper

    def cdf_displacement(self, n):
        """``sum_{m <= n} P_T(m)``, tails accumulated smallest terms first."""
        m, lower, upper = self._tails
        n = np.asarray(n)
        idx = np.clip(n + m, -1, 2 * m + 1)
        out = np.where(
            n < 0,
            lower[np.clip(idx, 0, 2 * m)],
            1.0 - np.where(idx + 1 <= 2 * m, upper[np.clip(idx + 1, 0, 2 * m)], 0.0),
        )
        out = np.where(idx < 0, 0.0, out)
        out = np.where(idx > 2 * m, 1.0, out)
        return out if out.ndim else float(out)

    def admissible(self, x: int, y: int) -> bool:
        """Whether ``y`` can be reached from ``x`` at the horizon."""
        return True

    def admissible_start(self, x: int) -> bool:
        return True

    # uniform entry points used by detcore
    def p(self, x, y):
        return self.point_prob(x, y)

    def F(self, x, y):
        return self.cumulative(x, y)

    def point_prob(self, x: int, y: int) -> float:
        return float(self.pmf(int(y) - int(x)))

    def cumulative(self, x: int, y: float) -> float:
        if y == math.inf:
            return 1.0
        if y == -math.inf:
            return 0.0
        return float(self.cdf_displacement(math.floor(y) - int(x)))


@dataclass(frozen=True)
class CTSimpleWalk(DiscreteKernel):
    """Continuous-time nearest-neighbour walk.

    Jumps to the right at ``right_rate`` and to the left at ``left_rate``;
    the default is the symmetric walk with total rate 2, so that
    ``P_t(n) = exp(-2t) I_n(2t)``.
    """

    right_rate: float = 1.0
    left_rate: float = 1.0

    family = Family.CT_SIMPLE_WALK

    def __post_init__(self):
        super().__post_init__()
        if self.right_rate <= 0 or self.left_rate <= 0:
            raise KernelDomainError("jump rates must be positive")

    @property
    def symmetric(self) -> bool:
        return self.right_rate == self.left_rate

    def pmf(self, n):
        n = np.asarray(n)
        t = self.horizon
        if t == 0:
            out = (n == 0).astype(float)
            return out if out.ndim else float(out)
        lam, nu = self.right_rate, self.left_rate
        z = 2.0 * t * math.sqrt(lam * nu)
        out = special.ive(np.abs(n), z)
        shift = z - (lam + nu) * t
        if not self.symmetric:
            out = out * np.exp(shift + 0.5 * n * math.log(lam / nu))
        elif shift != 0.0:
            out = out * math.exp(shift)
        return out if np.ndim(out) else float(out)

    def _support_radius(self) -> int:
        # |displacement| <= number of jumps ~ Poisson((lam + nu) t)
        mu = (self.right_rate + self.left_rate) * self.horizon
        m = int(mu)
        while special.pdtrc(m, mu) > TAIL_MASS:
            m += max(1, int(math.sqrt(mu + 1)))
        return max(m, 1)


@dataclass(frozen=True)
class ParityWalk(DiscreteKernel):
    """Discrete-time +-1 walk after ``horizon`` integer steps.

    Particles started on one sublattice (``parity`` of the initial sites)
    stay on a common sublattice, so the occupied lattice has spacing 2 and
    coordinates are always reported on the original integers.
    """

    parity: int = 0

    family = Family.PARITY_WALK
    spacing = 2

    def __post_init__(self):
        super().__post_init__()
        if self.horizon != int(self.horizon):
            raise KernelDomainError(f"parity walk needs integer steps, got {self.horizon}")
        if self.parity not in (0, 1):
            raise KernelDomainError("parity must be 0 or 1")

    @property
    def steps(self) -> int:
        return int(self.horizon)

    def pmf(self, n):
        t = self.steps
        n = np.asarray(n)
        k2 = t + n
        ok = (np.abs(n) <= t) & (k2 % 2 == 0)
        k = np.where(ok, k2 // 2, 0)
        out = np.where(ok, special.comb(t, k, exact=False) * 0.5**t, 0.0)
        if out.ndim == 0:
            if not ok:
                return 0.0
            return math.comb(t, int(k)) / 2.0**t
        return out

    def _support_radius(self) -> int:
        return max(self.steps, 1)

    def admissible(self, x: int, y: int) -> bool:
        d = int(y) - int(x)
        return abs(d) <= self.steps and (d - self.steps) % 2 == 0

    def admissible_start(self, x: int) -> bool:
        return int(x) % 2 == self.parity

    def point_prob(self, x: int, y: int) -> float:
        if (int(y) - int(x) - self.steps) % 2:
            raise KernelDomainError(
                f"parity walk: {x} -> {y} in {self.steps} steps violates the sublattice"
            )
        return float(self.pmf(int(y) - int(x)))


# ---------------------------------------------------------------------------
# continuous kernels
# ---------------------------------------------------------------------------


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


@dataclass(frozen=True)
class ContinuousKernel(Kernel):
    discrete = False

    def __post_init__(self):
        super().__post_init__()
        if self.horizon <= 0:
            raise KernelDomainError("continuous kernels need a positive horizon")

    def p(self, x, y):
        return self.density(x, y)

    def F(self, x, y):
        return self.cdf(x, y)

    def dp(self, x, y):
        return self.d_source_density(x, y)

    def dF(self, x, y):
        return self.d_source_cdf(x, y)

    def admissible(self, x, y) -> bool:
        return True

    def admissible_start(self, x) -> bool:
        return True


@dataclass(frozen=True)
class Gaussian(ContinuousKernel):
    """Brownian transition density ``p_x(y)`` with variance ``horizon``."""

    family = Family.GAUSSIAN
    translation_invariant = True
    symmetric = True

    def density(self, x, y):
        s = math.sqrt(self.horizon)
        return _phi((np.asarray(y) - x) / s) / s

    def cdf(self, x, y):
        return special.ndtr((np.asarray(y) - x) / math.sqrt(self.horizon))

    def d_source_density(self, x, y):
        d = np.asarray(y) - x
        return self.density(x, y) * d / self.horizon

    def d_source_cdf(self, x, y):
        return -self.density(x, y)


@dataclass(frozen=True)
class ReflectedGaussian(ContinuousKernel):
    """Brownian motion on ``[0, inf)`` reflected at the origin (image sum)."""

    family = Family.REFLECTED_GAUSSIAN
    translation_invariant = False
    symmetric = False

    @staticmethod
    def _check(x, y):
        if np.any(np.asarray(x) < 0) or np.any(np.asarray(y) < 0):
            raise KernelDomainError("reflected kernel lives on [0, inf)")

    def density(self, x, y):
        self._check(x, y)
        s = math.sqrt(self.horizon)
        y = np.asarray(y)
        return (_phi((y - x) / s) + _phi((y + x) / s)) / s

    def cdf(self, x, y):
        self._check(x, y)
        s = math.sqrt(self.horizon)
        y = np.asarray(y)
        # Phi((y-x)/s) + Phi((y+x)/s) - 1 without cancelling against 1
        return special.ndtr((y + x) / s) - special.ndtr((x - y) / s)

    def d_source_density(self, x, y):
        self._check(x, y)
        t = self.horizon
        s = math.sqrt(t)
        y = np.asarray(y)
        return ((y - x) * _phi((y - x) / s) - (y + x) * _phi((y + x) / s)) / (t * s)

    def d_source_cdf(self, x, y):
        self._check(x, y)
        s = math.sqrt(self.horizon)
        y = np.asarray(y)
        return (_phi((y + x) / s) - _phi((y - x) / s)) / s


_FAMILIES = {
    Family.CT_SIMPLE_WALK: CTSimpleWalk,
    Family.PARITY_WALK: ParityWalk,
    Family.GAUSSIAN: Gaussian,
    Family.REFLECTED_GAUSSIAN: ReflectedGaussian,
}


def make_kernel(family: Family | str, horizon: float, **kwargs) -> Kernel:
    """Build a kernel from its family name, e.g. ``make_kernel("ct_simple_walk", 1.0)``."""
    try:
        key = family if isinstance(family, Family) else Family(str(family).lower())
        cls = _FAMILIES[key]
    except ValueError:
        raise KernelDomainError(f"unknown kernel family {family!r}") from None
    return cls(horizon, **kwargs)


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def _at(kernel: Kernel, t):
    if t is None or _check_time(t) == kernel.horizon:
        return kernel
    return kernel.at(t)


def point_prob(kernel: DiscreteKernel, x: int, y: int, t: float | None = None) -> float:
    """``P_t(x, y)``; ``t`` defaults to the kernel horizon."""
    if not kernel.discrete:
        raise KernelDomainError("point_prob needs a discrete kernel")
    return _at(kernel, t).point_prob(x, y)


def cumulative(kernel: Kernel, x, y, t: float | None = None) -> float:
    """``F_t(x, y)``: cumulative sum (discrete) or CDF (continuous)."""
    return _at(kernel, t).F(x, y)


def _continuous(kernel):
    if kernel.discrete:
        raise KernelDomainError("operation needs a continuous kernel")
    return kernel


def density(kernel: ContinuousKernel, x, y):
    return _continuous(kernel).density(x, y)


def cdf(kernel: ContinuousKernel, x, y):
    return _continuous(kernel).cdf(x, y)


def d_source_density(kernel: ContinuousKernel, x, y):
    return _continuous(kernel).d_source_density(x, y)


def d_source_cdf(kernel: ContinuousKernel, x, y):
    return _continuous(kernel).d_source_cdf(x, y)
