"""Gap laws of coalescing systems under the maximal entrance law.

Discrete: the gap intensity ``mu({g}) = R(g - s) - R(g + s)`` built from the
autocorrelation ``R`` of the displacement law (``s`` is the lattice spacing of
the occupied sites; ``R(m) = P_{2T}(m)`` for symmetric walks).

Continuous: everything is computed in rescaled coordinates (``T = 1``) from
determinants of the density/derivative matrix ``M0`` integrated over wall
positions.  Gap moments avoid a 4-D integral: with the middle survivor pinned
at 0, the outer gaps only enter the first and last columns, and integrating
those columns against ``G^a`` has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .detcore import m0_matrix
from .kernels import CTSimpleWalk, DiscreteKernel, Gaussian, KernelDomainError
from .quad import (
    DEFAULT_SPEC,
    QuadratureSpec,
    integrate_1d,
    integrate_ordered_kd,
)

__all__ = [
    "marginal_by_columns",
    "GapIntensity",
    "JointGapResult",
    "GapCorrelation",
    "autocorrelation",
    "discrete_gap_intensity",
    "discrete_gap_total",
    "discrete_gap_pmf",
    "gap_intensity_table",
    "rayleigh_gap_density",
    "rayleigh_pdf",
    "rayleigh_total",
    "survivor_density",
    "gap_intensity_density",
    "single_gap_intensity_quadrature",
    "joint_gap_intensity",
    "joint_gap_intensity_k",
    "joint_gap_marginal",
    "gap_moments",
    "gap_correlation",
    "gap_correlations_k3",
    "joint_gap_mesh",
    "scaling_convergence_report",
]

SQRT_PI = math.sqrt(math.pi)
UNIT = Gaussian(1.0)
# det chunk size (number of matrices) kept in memory at once
_CHUNK = 1 << 18


# ---------------------------------------------------------------------------
# discrete gaps
# ---------------------------------------------------------------------------


def _translation_invariant(kernel) -> DiscreteKernel:
    if not getattr(kernel, "discrete", False) or not getattr(kernel, "translation_invariant", False):
        raise KernelDomainError("needs a translation-invariant discrete kernel")
    return kernel


def autocorrelation(kernel: DiscreteKernel, m: int) -> float:
    """``R(m) = sum_s P_T(s) P_T(s + m)``."""
    _translation_invariant(kernel)
    n, p = kernel.table
    m = int(m)
    lo = max(0, -m)
    hi = min(len(p), len(p) - m)
    if hi <= lo:
        return 0.0
    return float(np.dot(p[lo:hi], p[lo + m : hi + m]))


def _check_gap(kernel, g):
    if int(g) != g or g < 1:
        raise KernelDomainError(f"gap must be a positive integer, got {g}")
    return int(g)


def discrete_gap_intensity(kernel: DiscreteKernel, g: int, form: str = "auto") -> float:
    """Expected number of gaps of size ``g`` per occupied initial site.

    ``form`` is ``"doubled"`` (``P_{2T}(g-s) - P_{2T}(g+s)``, symmetric walks
    only), ``"autocorrelation"`` (``R(g-s) - R(g+s)``), or ``"auto"``.
    """
    _translation_invariant(kernel)
    g = _check_gap(kernel, g)
    s = kernel.spacing
    if g % s:
        return 0.0
    if form == "auto":
        form = "doubled" if kernel.symmetric else "autocorrelation"
    if form == "doubled":
        if not kernel.symmetric:
            raise KernelDomainError("the doubled-time form needs a symmetric kernel")
        k2 = kernel.at(2 * kernel.horizon)
        value = float(k2.pmf(g - s) - k2.pmf(g + s))
    elif form == "autocorrelation":
        value = autocorrelation(kernel, g - s) - autocorrelation(kernel, g + s)
    else:
        raise ValueError(f"unknown form {form!r}")
    return max(value, 0.0) if value > -1e-15 else value


def discrete_gap_total(kernel: DiscreteKernel) -> float:
    """Survivor density per occupied site, ``sum_g mu({g})``."""
    _translation_invariant(kernel)
    s = kernel.spacing
    if kernel.symmetric:
        k2 = kernel.at(2 * kernel.horizon)
        return float(k2.pmf(0) + k2.pmf(s))
    # no telescoping identity: sum the tail-bounded support directly
    n, _ = kernel.table
    gmax = 2 * int(n[-1]) + 2 * s
    return float(sum(discrete_gap_intensity(kernel, g) for g in range(s, gmax + 1, s)))


def discrete_gap_pmf(kernel: DiscreteKernel, g: int) -> float:
    return discrete_gap_intensity(kernel, g) / discrete_gap_total(kernel)


@dataclass(frozen=True)
class GapIntensity:
    """Gap intensity on ``g = 1..gmax`` (discrete) with its normalisation."""

    support: np.ndarray
    values: np.ndarray
    total_intensity: float
    normalization: float

    @property
    def pmf(self) -> np.ndarray:
        return self.values / self.normalization


def gap_intensity_table(kernel: DiscreteKernel, gmax: int) -> GapIntensity:
    g = np.arange(1, int(gmax) + 1)
    mu = np.array([discrete_gap_intensity(kernel, int(x)) for x in g])
    total = discrete_gap_total(kernel)
    return GapIntensity(g, mu, float(mu.sum()), total)


# ---------------------------------------------------------------------------
# Brownian single gap
# ---------------------------------------------------------------------------


def rayleigh_gap_density(G):
    """Gap intensity ``G/(2 sqrt(pi)) exp(-G^2/4)`` in rescaled coordinates."""
    G = np.asarray(G, dtype=float)
    if np.any(G <= 0):
        raise ValueError("gap must be positive")
    out = G / (2 * SQRT_PI) * np.exp(-G * G / 4)
    return out if out.ndim else float(out)


def rayleigh_pdf(G):
    """Normalised Rayleigh(sqrt 2) density."""
    return SQRT_PI * rayleigh_gap_density(G)


def rayleigh_total() -> float:
    return 1 / SQRT_PI


def survivor_density(T: float) -> float:
    """Survivors per unit length at time ``T``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return 1 / math.sqrt(math.pi * T)


def gap_intensity_density(gap, T: float):
    """Unrescaled gap intensity per unit length: ``G/(2 sqrt(pi) T^1.5) exp(-G^2/4T)``."""
    if not T > 0:
        raise ValueError("T must be positive")
    gap = np.asarray(gap, dtype=float)
    out = gap / (2 * SQRT_PI * T**1.5) * np.exp(-gap * gap / (4 * T))
    return out if out.ndim else float(out)


def _det(m: np.ndarray) -> np.ndarray:
    flat = m.reshape((-1,) + m.shape[-2:])
    out = np.empty(flat.shape[0])
    for i in range(0, flat.shape[0], _CHUNK):
        out[i : i + _CHUNK] = np.linalg.det(flat[i : i + _CHUNK])
    return out.reshape(m.shape[:-2])


def single_gap_intensity_quadrature(G: float, T: float = 1.0, spec: QuadratureSpec | None = None):
    """``int det M0(u; 0, G) du`` for one wall between survivors at 0 and ``G``."""
    kernel = Gaussian(T)

    def f(u):
        return _det(m0_matrix(kernel, (u,), (0.0, G)))

    return integrate_1d(f, -math.inf, math.inf, spec, center=0.5 * G, scale=math.sqrt(T))


# ---------------------------------------------------------------------------
# joint gaps (rescaled, T = 1)
# ---------------------------------------------------------------------------


def _radius(spec: QuadratureSpec) -> float:
    return spec.truncation_radius_sigma


def _h_direct(gaps: Sequence, spec: QuadratureSpec):
    """Ordered wall integral of ``det M0`` with survivors at the gap partial sums.

    ``gaps`` holds ``k`` arrays of a common shape (the batch).
    """
    k = len(gaps)
    gaps = np.broadcast_arrays(*(np.asarray(g, dtype=float) for g in gaps))
    if np.any(np.concatenate([g.ravel() for g in gaps]) <= 0):
        raise ValueError("gaps must be positive")
    batch = gaps[0].shape
    ys = [np.zeros(batch)]
    for g in gaps:
        ys.append(ys[-1] + g)
    r = _radius(spec)
    lo, hi = -r, float(np.max(ys[-1])) + r

    def f(*walls):
        nd = walls[-1].ndim
        surv = [y.reshape(batch + (1,) * nd) for y in ys]
        return _det(m0_matrix(UNIT, walls, surv))

    if k == 1:
        return integrate_1d(lambda u: f(u), lo, hi, spec)
    return integrate_ordered_kd(f, k, spec, lo=lo, hi=hi)


def _batched(fn, args, chunk: int = 32):
    arrays = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))
    shape = arrays[0].shape
    flat = [a.ravel() for a in arrays]
    vals = np.empty(flat[0].size)
    errs = np.empty(flat[0].size)
    for i in range(0, len(vals), chunk):
        v, e = fn([a[i : i + chunk] for a in flat])
        vals[i : i + chunk] = v
        errs[i : i + chunk] = e
    if not shape:
        return float(vals[0]), float(errs[0])
    return vals.reshape(shape), errs.reshape(shape)


def joint_gap_intensity_k(gaps: Sequence, spec: QuadratureSpec | None = None):
    """Joint intensity ``h(G_1, ..., G_k)`` of ``k <= 3`` consecutive rescaled gaps.

    Entries of ``gaps`` may be arrays (evaluated pointwise).  Returns
    ``(value, error_estimate)``.
    """
    k = len(gaps)
    if k not in (1, 2, 3):
        raise ValueError(f"k must be 1, 2 or 3, got {k}")
    if spec is None:
        spec = DEFAULT_SPEC if k < 3 else QuadratureSpec(relative_tolerance=1e-6)
    return _batched(lambda g: _h_direct(g, spec), gaps, chunk=32 if k < 3 else 1)


def joint_gap_intensity(G1, G2, spec: QuadratureSpec | None = None):
    """``h(G1, G2) = iint_{u<v} det M0(u, v; 0, G1, G1+G2) du dv``."""
    return joint_gap_intensity_k((G1, G2), spec)


def joint_gap_marginal(G1, spec: QuadratureSpec | None = None, outer: QuadratureSpec | None = None):
    """``int_0^inf h(G1, G2) dG2`` by direct nested quadrature."""
    spec = spec or DEFAULT_SPEC
    outer = outer or spec

    def f(G2):
        return joint_gap_intensity(np.full_like(G2, G1), G2, spec)

    return integrate_1d(f, 0.0, math.inf, outer, center=0.0, scale=1.5)


# -- closed-form end columns ------------------------------------------------


def _ramp(order: int, d):
    """``int_{-inf}^d (d - z)^order phi(z) dz``."""
    Phi, phi = special.ndtr(d), np.exp(-0.5 * d * d) / math.sqrt(2 * math.pi)
    if order == 0:
        return Phi
    if order == 1:
        return d * Phi + phi
    if order == 2:
        return (d * d + 1) * Phi + d * phi
    raise ValueError("moment order must be 0, 1 or 2")


def _ramp_prime(order: int, d):
    if order == 0:
        return np.exp(-0.5 * d * d) / math.sqrt(2 * math.pi)
    return order * _ramp(order - 1, d)


def _moment_matrix(walls, inner_survivors, left: int, right: int):
    """``M0`` with the end columns integrated against ``G_first^left`` and ``G_last^right``.

    ``inner_survivors`` are ``y_1, ..., y_{k-1}``.
    """
    y_first, y_last = inner_survivors[0], inner_survivors[-1]
    survivors = [y_first - 1.0, *inner_survivors, y_last + 1.0]
    m = m0_matrix(UNIT, walls, survivors).copy()
    for l, x in enumerate(walls):
        d_left = y_first - x
        d_right = x - y_last
        m[..., 2 * l, 0] = _ramp(left, d_left)
        m[..., 2 * l + 1, 0] = -_ramp_prime(left, d_left)
        m[..., 2 * l, -1] = _ramp(right, d_right)
        m[..., 2 * l + 1, -1] = _ramp_prime(right, d_right)
    return m


def gap_moments(k: int, orders: Sequence[tuple[int, ...]], spec: QuadratureSpec | None = None):
    """Unnormalised moments ``int prod_i G_i^{a_i} h(G_1..G_k) dG``.

    ``orders`` lists exponent tuples of length ``k`` (each exponent 0..2);
    ``k`` is 2 or 3.  Returns ``(values, errors)`` arrays aligned with
    ``orders``.
    """
    if k not in (2, 3):
        raise ValueError("gap moments are implemented for k = 2 and 3")
    orders = [tuple(int(a) for a in o) for o in orders]
    if any(len(o) != k for o in orders):
        raise ValueError("each exponent tuple needs k entries")
    spec = spec or DEFAULT_SPEC
    r = _radius(spec)
    left = [o[0] for o in orders]
    right = [o[-1] for o in orders]

    if k == 2:

        def f(u, v):
            shape = np.broadcast_shapes(u.shape, v.shape)
            out = np.empty((len(orders),) + shape)
            for i, (a, b) in enumerate(zip(left, right)):
                out[i] = _det(_moment_matrix((u, v), [0.0], a, b))
            return out

        return integrate_ordered_kd(f, 2, spec, lo=-r, hi=r)

    mid = [o[1] for o in orders]

    def over_g2(g2):
        # survivors y1 = 0, y2 = G2; walls span [-r, max(G2) + r]
        hi = float(np.max(g2)) + r

        def f(u, v, w):
            nd = w.ndim
            y2 = g2.reshape((-1,) + (1,) * nd)
            out = np.empty((len(orders), len(g2)) + w.shape)
            # the middle exponent only rescales, so share determinants across it
            dets = {}
            for i, (a, c, b) in enumerate(zip(left, mid, right)):
                if (a, b) not in dets:
                    m = _moment_matrix((u, v, w), [np.zeros_like(y2), y2], a, b)
                    dets[a, b] = _det(m)
                out[i] = dets[a, b] * y2**c
            return out

        return integrate_ordered_kd(f, 3, spec, lo=-r, hi=hi)

    def g(g2):
        vals = np.empty((len(orders), len(g2)))
        errs = np.empty_like(vals)
        for i in range(len(g2)):
            v, e = over_g2(g2[i : i + 1])
            vals[:, i], errs[:, i] = v[:, 0], e[:, 0]
        return vals, errs

    return integrate_1d(g, 0.0, math.inf, spec, center=0.0, scale=1.5)


@dataclass(frozen=True)
class GapCorrelation:
    rho: float
    error: float
    total: float
    means: tuple[float, float]
    variances: tuple[float, float]
    moment_errors: dict = field(default_factory=dict)


def _pearson(m):
    total, e1, e2, s1, s2, c12 = m
    mean1, mean2 = e1 / total, e2 / total
    var1, var2 = s1 / total - mean1**2, s2 / total - mean2**2
    cov = c12 / total - mean1 * mean2
    return cov / math.sqrt(var1 * var2), (mean1, mean2), (var1, var2)


def _correlation_from_moments(vals, errs) -> GapCorrelation:
    rho, means, variances = _pearson(vals)
    # first-order propagation, each moment moved by its own error bound
    bound = 0.0
    for i, e in enumerate(errs):
        if e == 0:
            continue
        bumped = np.array(vals, dtype=float)
        bumped[i] += e
        bound += abs(_pearson(bumped)[0] - rho)
    names = ("total", "G1", "G2", "G1^2", "G2^2", "G1*G2")
    return GapCorrelation(
        float(rho),
        float(bound),
        float(vals[0]),
        tuple(float(x) for x in means),
        tuple(float(x) for x in variances),
        dict(zip(names, (float(e) for e in errs))),
    )


_PAIR_ORDERS = [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)]


def gap_correlation(spec: QuadratureSpec | None = None) -> GapCorrelation:
    """Pearson correlation of two consecutive rescaled gaps, with error bound."""
    vals, errs = gap_moments(2, _PAIR_ORDERS, spec)
    return _correlation_from_moments(vals, errs)


def gap_correlations_k3(spec: QuadratureSpec | None = None) -> dict:
    """Correlations of (G1, G2), (G2, G3) and (G1, G3) from the three-gap intensity."""
    spec = spec or QuadratureSpec(relative_tolerance=1e-6, absolute_tolerance=1e-10)
    idx = {(0, 0, 0): "total"}
    orders = [(0, 0, 0)]
    for i in range(3):
        for p in (1, 2):
            o = [0, 0, 0]
            o[i] = p
            orders.append(tuple(o))
    for i, j in ((0, 1), (1, 2), (0, 2)):
        o = [0, 0, 0]
        o[i] = o[j] = 1
        orders.append(tuple(o))
    vals, errs = gap_moments(3, orders, spec)
    mom = dict(zip(orders, vals))
    err = dict(zip(orders, errs))

    def unit(i, p):
        o = [0, 0, 0]
        o[i] = p
        return tuple(o)

    out = {"total": (float(mom[(0, 0, 0)]), float(err[(0, 0, 0)]))}
    for (i, j), name in (((0, 1), "rho12"), ((1, 2), "rho23"), ((0, 2), "rho13")):
        pair = (0, 0, 0)
        o = [0, 0, 0]
        o[i] = o[j] = 1
        keys = [(0, 0, 0), unit(i, 1), unit(j, 1), unit(i, 2), unit(j, 2), tuple(o)]
        r = _correlation_from_moments([mom[q] for q in keys], [err[q] for q in keys])
        out[name] = (r.rho, r.error)
    return out


@dataclass(frozen=True)
class JointGapResult:
    grid: tuple[np.ndarray, np.ndarray]
    h_values: np.ndarray
    h_errors: np.ndarray
    total: float
    correlation_rho: float
    rho_error: float
    marginal_check: float


def joint_gap_mesh(
    rows: int = 56,
    gmax: float = 2.5,
    spec: QuadratureSpec | None = None,
) -> JointGapResult:
    """``h`` on a ``rows x rows`` mesh over ``(0, gmax]^2`` plus summary numbers.

    ``marginal_check`` is the largest deviation of the column-integrated
    marginal from the Rayleigh intensity at ``G1 in {0.5, 1, 1.5, 2}``.
    """
    if rows < 2 or not gmax > 0:
        raise ValueError("need rows >= 2 and gmax > 0")
    spec = spec or DEFAULT_SPEC
    g = np.linspace(gmax / rows, gmax, rows)
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    h, herr = joint_gap_intensity(G1, G2, spec)
    corr = gap_correlation(spec)
    probe = np.array([0.5, 1.0, 1.5, 2.0])
    marg, _ = marginal_by_columns(probe, spec)
    check = float(np.max(np.abs(marg - rayleigh_gap_density(probe))))
    return JointGapResult((G1, G2), h, herr, corr.total, corr.rho, corr.error, check)


def marginal_by_columns(G1, spec: QuadratureSpec | None = None):
    """``int h(G1, G2) dG2`` with the last column integrated in closed form."""
    spec = spec or DEFAULT_SPEC
    G1 = np.atleast_1d(np.asarray(G1, dtype=float))
    r = _radius(spec)

    def f(u, v):
        nd = v.ndim
        y1 = G1.reshape((-1,) + (1,) * nd)
        survivors = [np.zeros_like(y1), y1, y1 + 1.0]
        m = m0_matrix(UNIT, (u, v), survivors).copy()
        for l, x in enumerate((u, v)):
            d = x - y1
            m[..., 2 * l, -1] = _ramp(0, d)
            m[..., 2 * l + 1, -1] = _ramp_prime(0, d)
        return _det(m)

    return integrate_ordered_kd(f, 2, spec, lo=-r, hi=float(G1.max()) + r)


# ---------------------------------------------------------------------------
# discrete -> Brownian scaling
# ---------------------------------------------------------------------------


def scaling_convergence_report(T_list: Sequence[float], gmax_sigmas: float = 12.0) -> list[dict]:
    """Distance of the rescaled CT-walk gap pmf from the Rayleigh(sqrt 2) density.

    The walk jumps at total rate 2, so its displacement has variance ``2T``
    and gaps are rescaled by ``sigma = sqrt(2T)``: ``G = g / sigma`` with
    density ``sigma * pmf(g)``.
    """
    rows = []
    prev = None
    for T in T_list:
        T = float(T)
        if prev is not None and T <= prev:
            raise ValueError("T_list must be increasing")
        prev = T
        kernel = CTSimpleWalk(T)
        sigma = math.sqrt(2 * T)
        k2 = kernel.at(2 * T)
        gmax = int(math.ceil(gmax_sigmas * sigma)) + 2
        g = np.arange(1, gmax + 1)
        mu = k2.pmf(g - 1) - k2.pmf(g + 1)
        total = float(k2.pmf(0) + k2.pmf(1))
        scaled = sigma * mu / total
        sup = float(np.max(np.abs(scaled - rayleigh_pdf(g / sigma))))
        rows.append(
            {
                "T": T,
                "sigma": sigma,
                "sup_distance": sup,
                "total_intensity": total,
                "total_scaled": total * math.sqrt(2 * math.pi * T),
            }
        )
    return rows
