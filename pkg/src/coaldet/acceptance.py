"""The acceptance checks, shared by ``coaldet verify`` and the test suite.

Each check returns a :class:`CheckResult` holding the measured value, the
target and the tolerance it was judged against.  Seeds are fixed so a rerun
reproduces the same numbers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .detcore import (
    CoalescencePattern,
    WallParticlePattern,
    brownian_m0,
    coalescence_probability,
    determinant,
    halfline_m0,
    wall_particle_probability,
    warren_cdf,
)
from .gaps import (
    discrete_gap_intensity,
    discrete_gap_pmf,
    discrete_gap_total,
    gap_correlation,
    gap_intensity_density,
    joint_gap_marginal,
    rayleigh_gap_density,
    scaling_convergence_report,
    single_gap_intensity_quadrature,
)
from .kernels import CTSimpleWalk, ParityWalk
from .quad import integrate_1d
from .sim import (
    PatternQuery,
    SimulationConfig,
    WallParticleQuery,
    WarrenQuery,
    dp_oracle,
    lattice_edges,
    simulate,
    summarize,
)

__all__ = ["CheckResult", "CHECKS", "SUITES", "run_suite"]

RHO_TARGET = -0.163
SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: str
    expected: str
    seconds: float
    budget: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        timing = f"{self.seconds:.1f}s/{self.budget:g}s"
        return (
            f"[{status}] {self.number:2d} {self.name}: measured {self.measured}; "
            f"expected {self.expected} ({timing})"
        )


def _timed(number, name, budget):
    def wrap(fn):
        def run() -> CheckResult:
            t0 = time.perf_counter()
            passed, measured, expected = fn()
            dt = time.perf_counter() - t0
            return CheckResult(number, name, bool(passed), measured, expected, dt, budget)

        run.number = number
        run.name = name
        run.__name__ = fn.__name__
        return run

    return wrap


@_timed(1, "telescoping total", 1)
def check_telescoping():
    worst = 0.0
    for T in (0.25, 1.0, 4.0):
        k = CTSimpleWalk(T)
        k2 = k.at(2 * T)
        target = float(k2.pmf(0) + k2.pmf(1))
        gmax = int(40 + 20 * math.sqrt(2 * T))
        total = math.fsum(discrete_gap_intensity(k, g) for g in range(1, gmax + 1))
        worst = max(worst, abs(total - target))
    return worst <= 1e-12, f"max |sum mu - (P0+P1)| = {worst:.3e}", "<= 1e-12"


def _random_oracle_cases(rng, count):
    """Admissible parity-walk cases: (starts, steps, pattern, survivors)."""
    cases = []
    while len(cases) < count:
        n = int(rng.integers(1, 5))
        steps = int(rng.integers(1, 4))
        starts = np.sort(rng.choice(np.arange(0, 14, 2), n, replace=False))
        parts = []
        left = n
        while left:
            p = int(rng.integers(1, left + 1))
            parts.append(p)
            left -= p
        k = len(parts)
        lo, hi = int(starts[0]) - steps, int(starts[-1]) + steps
        sites = np.arange(lo, hi + 1)
        sites = sites[sites % 2 == steps % 2]
        if len(sites) < k:
            continue
        surv = np.sort(rng.choice(sites, k, replace=False))
        cases.append((tuple(int(x) for x in starts), steps, tuple(parts), tuple(int(y) for y in surv)))
    return cases


@_timed(2, "oracle equivalence", 10)
def check_oracle():
    rng = np.random.default_rng(20240601)
    worst = {"pattern": 0.0, "wall": 0.0, "warren": 0.0}
    counts = {key: 0 for key in worst}
    nonzero = {key: 0 for key in worst}

    for starts, steps, parts, surv in _random_oracle_cases(rng, 60):
        a = coalescence_probability(ParityWalk(steps), starts, CoalescencePattern(parts), surv)
        b = dp_oracle(starts, steps, PatternQuery(parts, surv))
        worst["pattern"] = max(worst["pattern"], abs(a - b))
        counts["pattern"] += 1
        nonzero["pattern"] += b > 0

    while counts["wall"] < 60:
        k = int(rng.integers(1, 3))
        steps = int(rng.integers(1, 4))
        walls = [int(rng.choice([1, 3]))]
        for _ in range(k - 1):
            walls.append(walls[-1] + 4)
        sites = np.arange(walls[0] - 1 - steps, walls[-1] + 1 + steps + 1)
        sites = sites[sites % 2 == steps % 2]
        surv = tuple(int(y) for y in np.sort(rng.choice(sites, k + 1, replace=False)))
        pat = WallParticlePattern(tuple(walls), surv)
        a = wall_particle_probability(ParityWalk(steps), pat)
        b = dp_oracle(None, steps, WallParticleQuery(tuple(walls), surv))
        worst["wall"] = max(worst["wall"], abs(a - b))
        counts["wall"] += 1
        nonzero["wall"] += b > 0

    while counts["warren"] < 60:
        n = int(rng.integers(1, 5))
        steps = int(rng.integers(1, 4))
        starts = tuple(int(x) for x in np.sort(rng.choice(np.arange(0, 14, 2), n, replace=False)))
        raw = rng.integers(starts[0] - steps - 1, starts[-1] + steps + 2, n)
        thr = tuple(int(y) for y in np.sort(raw))
        a = warren_cdf(ParityWalk(steps), starts, thr)
        b = dp_oracle(starts, steps, WarrenQuery(thr))
        worst["warren"] = max(worst["warren"], abs(a - b))
        counts["warren"] += 1
        nonzero["warren"] += b > 0

    passed = all(v <= 1e-13 for v in worst.values()) and all(c >= 50 for c in counts.values())
    measured = ", ".join(
        f"{key} max err {worst[key]:.1e} over {counts[key]} cases ({nonzero[key]} nonzero)"
        for key in worst
    )
    return passed, measured, "<= 1e-13, >= 50 cases each"


@_timed(3, "Rayleigh constants", 1)
def check_rayleigh():
    def mom(a):
        return lambda G: np.where(G > 0, G**a * rayleigh_gap_density(np.maximum(G, 1e-300)), 0.0)

    total, _ = integrate_1d(mom(0), 0.0, math.inf, center=0.0, scale=2.0)
    m1, _ = integrate_1d(mom(1), 0.0, math.inf, center=0.0, scale=2.0)
    m2, _ = integrate_1d(mom(2), 0.0, math.inf, center=0.0, scale=2.0)
    mean = m1 / total
    var = m2 / total - mean**2
    errs = (abs(total - 1 / SQRT_PI), abs(mean - SQRT_PI), abs(var - (4 - math.pi)))
    passed = errs[0] <= 1e-8 and errs[1] <= 1e-8 and errs[2] <= 1e-7
    measured = f"total {total:.10f}, mean {mean:.10f}, variance {var:.10f}"
    expected = f"{1 / SQRT_PI:.9f} (1e-8), {SQRT_PI:.9f} (1e-8), {4 - math.pi:.9f} (1e-7)"
    return passed, measured, expected


@_timed(4, "single-gap closed form", 5)
def check_single_gap():
    worst = 0.0
    points = [(G, T) for G in (0.1, 0.5, 1.0, 2.0, 3.5) for T in (0.25, 0.5, 1.0, 2.0)]
    for G, T in points:
        val, _ = single_gap_intensity_quadrature(G, T)
        worst = max(worst, abs(val - gap_intensity_density(G, T)))
    return worst <= 1e-8, f"max abs error {worst:.3e} over {len(points)} points", "<= 1e-8"


@_timed(5, "joint-gap correlation", 120)
def check_rho():
    c = gap_correlation()
    dev = abs(c.rho - RHO_TARGET) + c.error
    measured = f"rho = {c.rho:.9f} +- {c.error:.1e} (|rho - target| + error = {dev:.2e})"
    return dev <= 5e-4, measured, f"{RHO_TARGET} +- 5e-4"


@_timed(6, "joint-gap marginals", 120)
def check_marginals():
    worst = 0.0
    for G1 in (0.5, 1.0, 1.5, 2.0):
        val, _ = joint_gap_marginal(G1)
        worst = max(worst, abs(val - rayleigh_gap_density(G1)))
    return worst < 5e-7, f"max |int h dG2 - mu(G1)| = {worst:.3e}", "< 5e-7"


MC_SEED = 20241016


@_timed(7, "Monte Carlo gap law", 300)
def check_mc_gaps():
    cfg = SimulationConfig(
        model="ct_simple_walk",
        horizon=1.0,
        window_halfwidth=1024,
        replicates=10_000,
        seed=MC_SEED,
    )
    s = summarize(simulate(cfg), lattice_edges(60))
    k = CTSimpleWalk(1.0)
    hist = s.gap_histogram()
    g = np.arange(1, 61)
    pmf = np.array([discrete_gap_pmf(k, int(x)) for x in g])
    keep = pmf * hist.total >= 100
    z = np.abs(hist.pmf[keep] - pmf[keep]) / hist.stderr[keep]
    density = s.survivor_density()
    dz = abs(density.z(discrete_gap_total(k)))
    passed = bool(np.all(z <= 3)) and dz <= 3
    measured = (
        f"max |z| {z.max():.2f} over {keep.sum()} bins; density {density.value:.6f} "
        f"+- {density.stderr:.1e} (|z| {dz:.2f})"
    )
    return passed, measured, f"|z| <= 3, density {discrete_gap_total(k):.6f}"


@_timed(8, "Brownian-scale simulation", 900)
def check_mc_brownian():
    cfg = SimulationConfig(
        model="brownian_fine_lattice",
        horizon=1.0,
        window_halfwidth=100.0,
        lattice_spacing=0.01,
        replicates=1000,
        seed=MC_SEED,
    )
    s = summarize(simulate(cfg), np.arange(0.0, 8.0001, 0.1))
    density = s.survivor_density()
    rho = s.gap_correlation()
    dz, rz = abs(density.z(1 / SQRT_PI)), abs(rho.z(RHO_TARGET))
    measured = (
        f"density {density.value:.5f} +- {density.stderr:.1e} (|z| {dz:.2f}); "
        f"rho {rho.value:.4f} +- {rho.stderr:.1e} (|z| {rz:.2f})"
    )
    return dz <= 3 and rz <= 3, measured, f"density {1 / SQRT_PI:.5f}, rho {RHO_TARGET} within 3 sd"


@_timed(9, "scaling convergence", 10)
def check_scaling():
    rows = scaling_convergence_report([1, 16, 256])
    sups = [r["sup_distance"] for r in rows]
    passed = all(a > b for a, b in zip(sups, sups[1:]))
    return passed, "sup distances " + ", ".join(f"{d:.3e}" for d in sups), "strictly decreasing"


def _random_halfline_pattern(rng):
    k = int(rng.integers(1, 4))
    pts = np.sort(rng.uniform(0.05, 4.0, 2 * k + 1))
    # interleave: y_0 < x_1 < y_1 < ... < x_k < y_k
    return WallParticlePattern(tuple(pts[1::2]), tuple(pts[0::2]))


@_timed(10, "half-line sanity", 10)
def check_halfline():
    rng = np.random.default_rng(7)
    lowest = math.inf
    for _ in range(1000):
        d = determinant(halfline_m0(_random_halfline_pattern(rng), float(rng.uniform(0.2, 3.0))))
        lowest = min(lowest, d)
    # far from the boundary the boundary row/F column decouple
    worst_rel = 0.0
    for x, y0, y1 in ((3.5, 3.0, 4.2), (10.0, 9.3, 11.2), (20.0, 19.0, 20.5)):
        pat = WallParticlePattern((x,), (y0, y1))
        m = halfline_m0(pat, 1.0)
        minor = determinant(np.delete(np.delete(m, 0, axis=0), 1, axis=1))
        full = determinant(brownian_m0(pat, 1.0))
        worst_rel = max(worst_rel, abs(minor - full) / abs(full))
    passed = lowest >= 0 and worst_rel <= 1e-6
    measured = f"min det {lowest:.3e} over 1000 patterns; far-field relative error {worst_rel:.2e}"
    return passed, measured, "min det >= 0; relative error <= 1e-6"


CHECKS: list[Callable[[], CheckResult]] = [
    check_telescoping,
    check_oracle,
    check_rayleigh,
    check_single_gap,
    check_rho,
    check_marginals,
    check_mc_gaps,
    check_mc_brownian,
    check_scaling,
    check_halfline,
]

SUITES = {
    "oracle": [1, 2],
    "quadrature": [3, 4, 5, 6, 9, 10],
    "montecarlo": [7, 8],
}
SUITES["all"] = sorted(n for v in SUITES.values() for n in v)


def run_suite(name: str, report: Callable[[str], None] | None = print) -> list[CheckResult]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    wanted = set(SUITES[name])
    results = []
    for check in CHECKS:
        if check.number in wanted:
            r = check()
            results.append(r)
            if report:
                report(r.line())
    return results
