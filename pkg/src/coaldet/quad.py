"""Adaptive Gauss-Kronrod (7/15) quadrature for Gaussian-decay integrands.

Integrands are vectorised: ``f(x)`` receives a 1-D array of nodes and returns
an array whose *last* axis runs over those nodes.  Leading axes form a batch
that is integrated simultaneously; panels are shared across the batch and a
panel is bisected as soon as any batch member needs it.  This is what makes
nested (ordered 2-D/3-D) integration cheap: the inner integral for all outer
nodes is a single batched call.

An integrand may also return ``(values, errors)``; the errors (typically from
an inner integral) are integrated alongside and added to the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "gk15",
    "integrate_1d",
    "integrate_ordered_2d",
    "integrate_ordered_kd",
]

# Kronrod abscissae (descending, last is the centre) and weights; the Gauss
# 7-point rule uses every second abscissa.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[13, 11, 9]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]

_EPS = np.finfo(float).eps
MAX_PANELS = 4096


class QuadratureError(ArithmeticError):
    """Tolerance not met within the subdivision budget."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    relative_tolerance: float = 1e-9
    absolute_tolerance: float = 1e-12
    truncation_radius_sigma: float = 8.0
    # maximum bisection depth of any panel
    max_subdivisions: int = 24
    initial_panels: int = 4

    def __post_init__(self):
        if self.relative_tolerance <= 0 or self.absolute_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.truncation_radius_sigma < 4:
            raise ValueError("truncation radius must be at least 4 sigma")
        if self.max_subdivisions < 1 or self.initial_panels < 1:
            raise ValueError("subdivision budget must be positive")

    def loosened(self, factor: float) -> "QuadratureSpec":
        from dataclasses import replace

        return replace(
            self,
            relative_tolerance=self.relative_tolerance * factor,
            absolute_tolerance=self.absolute_tolerance * factor,
        )


DEFAULT_SPEC = QuadratureSpec()


def gk15(f: Callable, a: float, b: float):
    """One Gauss-Kronrod panel: ``(kronrod, gauss)`` estimates of the integral."""
    half = 0.5 * (b - a)
    vals = np.asarray(f(0.5 * (a + b) + half * NODES))
    return half * vals @ KRONROD_WEIGHTS, half * vals @ GAUSS_WEIGHTS


def _unpack(out):
    if isinstance(out, tuple):
        vals, errs = out
        return np.asarray(vals, dtype=float), np.asarray(errs, dtype=float)
    return np.asarray(out, dtype=float), None


def _limits(lo, hi, spec, center, scale):
    r = spec.truncation_radius_sigma * scale
    a = center - r if lo == -math.inf else float(lo)
    b = center + r if hi == math.inf else float(hi)
    if math.isnan(a) or math.isnan(b):
        raise ValueError("integration limits are NaN")
    return a, b


def integrate_1d(
    f: Callable,
    lo: float,
    hi: float,
    spec: QuadratureSpec | None = None,
    *,
    center: float = 0.0,
    scale: float = 1.0,
):
    """Integrate ``f`` over ``[lo, hi]``; infinite ends are cut at ``center +- R*scale``.

    Returns ``(value, error_estimate)``; both are arrays when ``f`` is batched.
    The error estimate is the summed ``|K15 - G7|`` over panels, which is
    conservative for smooth integrands.
    """
    spec = spec or DEFAULT_SPEC
    a, b = _limits(lo, hi, spec, center, scale)
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    if a == b:
        probe, _ = _unpack(f(np.array([a])))
        zero = np.zeros(probe.shape[:-1])
        return (zero, zero.copy()) if zero.ndim else (0.0, 0.0)
    width = b - a

    edges = np.linspace(a, b, spec.initial_panels + 1)
    lefts, rights = edges[:-1], edges[1:]
    depth = np.zeros(len(lefts), dtype=int)
    # per-panel arrays, shape (batch..., panels); inner errors are reported
    # but cannot be reduced by bisecting this level
    kron = err = inner = None

    pending_l, pending_r, pending_d = lefts, rights, depth
    while True:
        half = 0.5 * (pending_r - pending_l)
        mid = 0.5 * (pending_r + pending_l)
        x = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
        vals, errs = _unpack(f(x))
        vals = vals.reshape(vals.shape[:-1] + (len(half), 15))
        k = (vals @ KRONROD_WEIGHTS) * half
        g = (vals @ GAUSS_WEIGHTS) * half
        e = np.abs(k - g)
        # round-off floor of the panel sum
        e = np.maximum(e, 50 * _EPS * (np.abs(vals) @ KRONROD_WEIGHTS) * half)
        if errs is not None:
            errs = errs.reshape(vals.shape)
            ie = (np.abs(errs) @ KRONROD_WEIGHTS) * half
        else:
            ie = np.zeros_like(e)
        if kron is None:
            kron, err, inner = k, e, ie
            cur_l, cur_r, cur_d = pending_l, pending_r, pending_d
        else:
            kron = np.concatenate([kron, k], axis=-1)
            err = np.concatenate([err, e], axis=-1)
            inner = np.concatenate([inner, ie], axis=-1)
            cur_l = np.concatenate([cur_l, pending_l])
            cur_r = np.concatenate([cur_r, pending_r])
            cur_d = np.concatenate([cur_d, pending_d])

        total = kron.sum(axis=-1)
        total_err = err.sum(axis=-1)
        tol = np.maximum(spec.absolute_tolerance, spec.relative_tolerance * np.abs(total))
        if np.all(total_err <= tol):
            break
        # panels whose share of the error exceeds their share of the budget
        share = (cur_r - cur_l) / width
        bad = err > tol[..., None] * share
        bad = np.any(bad.reshape(-1, bad.shape[-1]), axis=0)
        if not np.any(bad):
            bad[np.argmax(err.reshape(-1, err.shape[-1]).max(axis=0))] = True
        if np.any(cur_d[bad] >= spec.max_subdivisions) or len(cur_l) + bad.sum() > MAX_PANELS:
            raise QuadratureError(
                f"no convergence on [{a}, {b}]: error {np.max(total_err):.3e} "
                f"> tolerance {np.min(tol):.3e}",
                value=sign * total,
                error=total_err + inner.sum(axis=-1),
            )
        bl, br, bd = cur_l[bad], cur_r[bad], cur_d[bad] + 1
        bm = 0.5 * (bl + br)
        keep = ~bad
        kron, err, inner = kron[..., keep], err[..., keep], inner[..., keep]
        cur_l, cur_r, cur_d = cur_l[keep], cur_r[keep], cur_d[keep]
        pending_l = np.concatenate([bl, bm])
        pending_r = np.concatenate([bm, br])
        pending_d = np.concatenate([bd, bd])

    value = sign * total
    total_err = total_err + inner.sum(axis=-1)
    if np.ndim(value) == 0:
        return float(value), float(total_err)
    return value, total_err


def _broadcast_result(out, shapes):
    vals = np.asarray(out, dtype=float)
    target = np.broadcast_shapes(*shapes)
    nd = len(target)
    lead = vals.shape[: max(vals.ndim - nd, 0)]
    return np.broadcast_to(vals, lead + np.broadcast_shapes(vals.shape[len(lead):], target))


def integrate_ordered_kd(
    f: Callable,
    k: int,
    spec: QuadratureSpec | None = None,
    *,
    lo: float,
    hi: float,
):
    """Integrate ``f(x_1, ..., x_k)`` over ``lo <= x_1 < ... < x_k``.

    The ordered region is parametrised by ``x_1`` and the spacings
    ``w_j = x_{j+1} - x_j >= 0``, each cut at ``hi - lo``; ``[lo, hi]`` must
    cover the integrand's mass.  ``f`` gets mutually broadcastable arrays and
    returns values (optionally with leading batch axes).
    """
    if k not in (1, 2, 3):
        raise ValueError(f"ordered integration supports k <= 3, got {k}")
    spec = spec or (DEFAULT_SPEC if k < 3 else QuadratureSpec(relative_tolerance=1e-6))
    lo, hi = float(lo), float(hi)
    width = hi - lo
    if width <= 0:
        raise ValueError("need lo < hi")

    def level(prefix, j):
        def g(nodes):
            shape = (1,) * j + (len(nodes),)
            step = nodes.reshape(shape)
            x = step if j == 0 else prefix[-1][..., None] + step
            coords = [p[..., None] for p in prefix] + [x]
            if j + 1 == k:
                return _broadcast_result(f(*coords), [c.shape for c in coords])
            return level(coords, j + 1)

        if j == 0:
            return integrate_1d(g, lo, hi, spec)
        return integrate_1d(g, 0.0, width, spec)

    return level([], 0)


def integrate_ordered_2d(f: Callable, spec: QuadratureSpec | None = None, *, lo: float, hi: float):
    """``iint_{lo <= u < v} f(u, v) du dv`` via ``(u, w = v - u)``."""
    return integrate_ordered_kd(f, 2, spec, lo=lo, hi=hi)
