"""Windowed tallies and empirical estimators.

A gap (or an adjacent pair of gaps) belongs to the observation window when
its left survivor does.  With a half-open window this makes every tally an
unbiased estimate of intensity times window length; requiring both ends
inside would under-count long gaps near the right edge.

Standard errors come from the spread across replicates: ratio estimators use
the delta method, the correlation uses a leave-one-replicate-out jackknife.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _engine
from .core import ConfigError, Model, SurvivorConfiguration, replicate_rng

__all__ = [
    "EmptyWindowError",
    "extract_gaps",
    "extract_gap_pairs",
    "extract_wall_gaps",
    "GapHistogram",
    "Estimate",
    "SimulationSummary",
    "summarize",
    "lattice_edges",
    "HistogramComparison",
    "empirical_gap_histogram",
    "empirical_survivor_density",
    "empirical_joint_gap_corr",
    "empirical_wall_gaps",
    "compare_histograms",
    "empirical_warren_cdf",
]


class EmptyWindowError(ValueError):
    """No survivors fall inside the observation window."""


def _left_in_window(points, window):
    lo, hi = window
    keep = (points[:-1] >= lo) & (points[:-1] < hi)
    return keep


def extract_gaps(cfg: SurvivorConfiguration) -> np.ndarray:
    """Gaps ``y_{j+1} - y_j`` whose left survivor lies in the window."""
    y = cfg.survivors
    if len(y) < 2:
        return np.zeros(0, dtype=y.dtype)
    return np.diff(y)[_left_in_window(y, cfg.observation_window)]


def extract_gap_pairs(cfg: SurvivorConfiguration) -> np.ndarray:
    """Adjacent gap pairs ``(G1, G2)`` keyed by their leftmost survivor."""
    y = cfg.survivors
    if len(y) < 3:
        return np.zeros((0, 2), dtype=y.dtype)
    g = np.diff(y)
    pairs = np.stack([g[:-1], g[1:]], axis=-1)
    return pairs[_left_in_window(y[:-1], cfg.observation_window)]


def extract_wall_gaps(cfg: SurvivorConfiguration) -> np.ndarray:
    x = cfg.walls
    if len(x) < 2:
        return np.zeros(0, dtype=x.dtype)
    return np.diff(x)[_left_in_window(x, cfg.observation_window)]


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def z(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.stderr


@dataclass(frozen=True)
class GapHistogram:
    """Normalised histogram; ``edges`` has one more entry than ``pmf``."""

    edges: np.ndarray
    pmf: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def _ratio(num: np.ndarray, den: np.ndarray):
    """Pooled ratio ``sum(num) / sum(den)`` over replicates (axis 0) with delta-method error."""
    R = num.shape[0]
    sden = den.sum(axis=0)
    if np.any(sden == 0):
        raise EmptyWindowError("no observations in the window")
    est = num.sum(axis=0) / sden
    if R < 2:
        return est, np.full_like(est, np.nan, dtype=float)
    resid = num - est * den
    var = resid.var(axis=0, ddof=1) * R / sden**2
    return est, np.sqrt(var)


@dataclass
class SimulationSummary:
    """Per-replicate sufficient statistics for every estimator in this module.

    ``edges`` bins survivor and wall gaps; pass integer-aligned edges for the
    lattice models so each bin holds exactly one gap value.
    """

    edges: np.ndarray
    spacing: float = 1.0
    survivor_counts: list = field(default_factory=list)
    window_lengths: list = field(default_factory=list)
    gap_counts: list = field(default_factory=list)
    wall_gap_counts: list = field(default_factory=list)
    pair_moments: list = field(default_factory=list)

    def add(self, cfg: SurvivorConfiguration) -> None:
        lo, hi = cfg.observation_window
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
            raise EmptyWindowError("summaries need a finite, nonempty observation window")
        self.spacing = cfg.spacing
        self.survivor_counts.append(len(cfg.survivors_in_window()))
        self.window_lengths.append(hi - lo)
        g = extract_gaps(cfg)
        self.gap_counts.append(self._bin(g))
        self.wall_gap_counts.append(self._bin(extract_wall_gaps(cfg)))
        p = extract_gap_pairs(cfg).astype(float)
        a, b = p[:, 0], p[:, 1]
        self.pair_moments.append(
            [len(p), a.sum(), b.sum(), (a * a).sum(), (b * b).sum(), (a * b).sum()]
        )

    def _bin(self, g):
        # last slot counts gaps beyond the final edge
        idx = np.searchsorted(self.edges, g, side="right") - 1
        idx = np.where(idx >= len(self.edges) - 1, len(self.edges) - 1, idx)
        idx = np.where(idx < 0, len(self.edges) - 1, idx)
        return np.bincount(idx, minlength=len(self.edges))

    @property
    def replicates(self) -> int:
        return len(self.survivor_counts)

    def _require(self):
        if self.replicates == 0:
            raise EmptyWindowError("no replicates summarised")

    def survivor_density(self) -> Estimate:
        """Survivors per unit length of the window."""
        self._require()
        num = np.asarray(self.survivor_counts, dtype=float)
        den = np.asarray(self.window_lengths, dtype=float)
        est, err = _ratio(num, den)
        return Estimate(float(est), float(err))

    def _histogram(self, counts) -> GapHistogram:
        self._require()
        c = np.asarray(counts, dtype=float)
        tot = c.sum(axis=1)
        est, err = _ratio(c[:, :-1], np.broadcast_to(tot[:, None], c[:, :-1].shape))
        return GapHistogram(self.edges, est, err, c[:, :-1].sum(axis=0), int(tot.sum()))

    def gap_histogram(self) -> GapHistogram:
        return self._histogram(self.gap_counts)

    def wall_gap_histogram(self) -> GapHistogram:
        return self._histogram(self.wall_gap_counts)

    def gap_correlation(self) -> Estimate:
        """Pearson correlation of adjacent gaps, jackknifed over replicates."""
        self._require()
        m = np.asarray(self.pair_moments, dtype=float)
        total = m.sum(axis=0)
        if total[0] < 3:
            raise EmptyWindowError("too few adjacent gap pairs in the window")
        rho = float(_pearson(total))
        R = len(m)
        if R < 2:
            return Estimate(rho, math.nan)
        loo = _pearson(total[None, :] - m)
        err = math.sqrt((R - 1) / R * ((loo - loo.mean()) ** 2).sum())
        return Estimate(rho, err)


def _pearson(s):
    """Correlation from sums ``(n, a, b, aa, bb, ab)`` along the last axis."""
    n, a, b, aa, bb, ab = np.moveaxis(np.asarray(s, dtype=float), -1, 0)
    ma, mb = a / n, b / n
    cov = ab / n - ma * mb
    return cov / np.sqrt((aa / n - ma * ma) * (bb / n - mb * mb))


def lattice_edges(gmax: int, step: int = 1) -> np.ndarray:
    """Bins ``[g - step/2, g + step/2)`` for ``g = step, 2 step, ..., gmax``."""
    centers = np.arange(step, gmax + 1, step, dtype=float)
    return np.append(centers - 0.5 * step, centers[-1] + 0.5 * step)


def summarize(stream: Iterable[SurvivorConfiguration], edges) -> SimulationSummary:
    summary = SimulationSummary(np.asarray(edges, dtype=float))
    for cfg in stream:
        summary.add(cfg)
    return summary


def _as_summary(source, edges) -> SimulationSummary:
    if isinstance(source, SimulationSummary):
        return source
    if edges is None:
        raise ValueError("bin edges are required when summarising a raw stream")
    return summarize(source, edges)


def empirical_gap_histogram(source, edges=None) -> GapHistogram:
    """Gap pmf with standard errors from a replicate stream or a summary."""
    return _as_summary(source, edges).gap_histogram()


def empirical_survivor_density(source, edges=None) -> Estimate:
    return _as_summary(source, edges if edges is not None else [0.0, 1.0]).survivor_density()


def empirical_joint_gap_corr(source, edges=None) -> Estimate:
    return _as_summary(source, edges if edges is not None else [0.0, 1.0]).gap_correlation()


def empirical_wall_gaps(source, edges=None) -> GapHistogram:
    return _as_summary(source, edges).wall_gap_histogram()


@dataclass(frozen=True)
class HistogramComparison:
    sup_distance: float
    max_z: float
    bins_compared: int


def compare_histograms(summary: SimulationSummary, min_count: float = 100) -> HistogramComparison:
    """Wall-gap versus survivor-gap histograms from the same replicates.

    Both are tallied on every replicate, so the per-bin difference of the
    two pmfs is jackknifed replicate-wise, which accounts for their
    correlation.  Bins where either histogram has fewer than ``min_count``
    entries are skipped.
    """
    summary._require()
    g = np.asarray(summary.gap_counts, dtype=float)
    w = np.asarray(summary.wall_gap_counts, dtype=float)
    tg, tw = g.sum(axis=0), w.sum(axis=0)
    ng, nw = tg.sum(), tw.sum()
    diff = tg[:-1] / ng - tw[:-1] / nw
    keep = (tg[:-1] >= min_count) & (tw[:-1] >= min_count)
    R = g.shape[0]
    if R < 2 or not keep.any():
        return HistogramComparison(float(np.abs(diff).max()), math.nan, int(keep.sum()))
    gl = tg[None, :] - g
    wl = tw[None, :] - w
    loo = gl[:, :-1] / gl.sum(axis=1, keepdims=True) - wl[:, :-1] / wl.sum(axis=1, keepdims=True)
    se = np.sqrt((R - 1) / R * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    z = np.abs(diff[keep]) / se[keep]
    return HistogramComparison(float(np.abs(diff).max()), float(z.max()), int(keep.sum()))


WARREN_BLOCK = 4096


def empirical_warren_cdf(
    model: Model | str,
    starts,
    thresholds,
    replicates: int,
    seed: int,
    horizon: float,
) -> Estimate:
    """Monte Carlo estimate of ``P(Z_T(x_i) <= y_i for all i)``.

    Replicates run in fixed blocks, block ``b`` on stream ``b`` of ``seed``,
    so the estimate does not depend on how blocks are scheduled.
    """
    model = Model(model)
    if model is Model.BROWNIAN_FINE_LATTICE:
        raise ConfigError("Warren estimates are for the lattice walks")
    if replicates < 1:
        raise ConfigError("replicates must be positive")
    x = np.asarray(starts, dtype=np.int64)
    if len(x) == 0 or np.any(np.diff(x) <= 0) or not np.array_equal(x, np.asarray(starts)):
        raise ConfigError("starts must be strictly increasing integer sites")
    y = np.asarray(thresholds, dtype=float)
    if y.shape != x.shape:
        raise ConfigError("need one threshold per start")
    if np.all(np.isposinf(y)):
        return Estimate(1.0, 0.0)
    if model is Model.PARITY_WALK:
        if len({int(s) % 2 for s in x}) > 1:
            raise ConfigError("parity walk starts must share one parity")
        if horizon != int(horizon):
            raise ConfigError("the parity walk needs an integer number of steps")
        steps, duration = int(horizon), 0.0
    else:
        steps, duration = -1, float(horizon)
    hits = 0
    for b, start in enumerate(range(0, replicates, WARREN_BLOCK)):
        n = min(WARREN_BLOCK, replicates - start)
        hits += _engine.warren_batch(x, y, steps, 1.0, duration, n, replicate_rng(seed, b))
    p = hits / replicates
    return Estimate(p, math.sqrt(max(p * (1 - p), 0.0) / replicates))
