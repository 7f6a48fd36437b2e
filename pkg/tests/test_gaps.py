import math

import numpy as np
import pytest
from scipy import special

from coaldet.gaps import (
    autocorrelation,
    discrete_gap_intensity,
    discrete_gap_pmf,
    discrete_gap_total,
    gap_correlation,
    gap_correlations_k3,
    gap_intensity_density,
    gap_intensity_table,
    gap_moments,
    joint_gap_intensity,
    joint_gap_intensity_k,
    joint_gap_marginal,
    marginal_by_columns,
    rayleigh_gap_density,
    rayleigh_pdf,
    rayleigh_total,
    scaling_convergence_report,
    single_gap_intensity_quadrature,
    survivor_density,
)
from coaldet.kernels import CTSimpleWalk, KernelDomainError, ParityWalk
from coaldet.quad import QuadratureSpec, integrate_1d

from oracles import brute_h, ct_walk_law

RHO_CLOSED = (3 - math.pi) / (4 - math.pi)


# -- discrete ------------------------------------------------------------------


def test_autocorrelation_equals_doubled_time_law():
    k = CTSimpleWalk(1.3)
    k2 = k.at(2.6)
    for m in range(-6, 7):
        assert autocorrelation(k, m) == pytest.approx(k2.pmf(m), abs=1e-15)


def test_autocorrelation_brute_double_sum():
    law = ct_walk_law(0.9)
    k = CTSimpleWalk(0.9)
    for m in (0, 1, 3):
        brute = sum(law[s] * law[s + m] for s in range(-60, 61 - m))
        assert autocorrelation(k, m) == pytest.approx(brute, abs=1e-13)


@pytest.mark.parametrize("T", [0.5, 1.0, 4.0])
def test_doubled_and_autocorrelation_forms_agree(T):
    k = CTSimpleWalk(T)
    for g in range(1, 15):
        a = discrete_gap_intensity(k, g, form="doubled")
        b = discrete_gap_intensity(k, g, form="autocorrelation")
        assert a == pytest.approx(b, abs=1e-14)


def test_bessel_value_at_two():
    T = 1.0
    expected = math.exp(-4 * T) * (special.iv(1, 4 * T) - special.iv(3, 4 * T))
    assert discrete_gap_intensity(CTSimpleWalk(T), 2) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("kernel", [CTSimpleWalk(1.0), CTSimpleWalk(6.0), ParityWalk(4), ParityWalk(9)])
def test_telescoping_partial_sums(kernel):
    s = kernel.spacing
    k2 = kernel.at(2 * kernel.horizon)
    partial = 0.0
    for g in range(s, 80, s):
        partial += discrete_gap_intensity(kernel, g)
        # sum_{g' <= g} mu = P2T(0) + P2T(s) - P2T(g) - P2T(g + s)
        expected = k2.pmf(0) + k2.pmf(s) - k2.pmf(g) - k2.pmf(g + s)
        assert partial == pytest.approx(expected, abs=1e-14)
    assert partial == pytest.approx(discrete_gap_total(kernel), abs=1e-14)


def test_parity_walk_gaps_are_even():
    k = ParityWalk(5)
    assert all(discrete_gap_intensity(k, g) == 0.0 for g in range(1, 30, 2))
    assert discrete_gap_intensity(k, 2) > 0


def test_asymmetric_walk_uses_autocorrelation():
    k = CTSimpleWalk(1.0, right_rate=1.4, left_rate=0.6)
    with pytest.raises(KernelDomainError):
        discrete_gap_intensity(k, 2, form="doubled")
    total = discrete_gap_total(k)
    assert sum(discrete_gap_pmf(k, g) for g in range(1, 60)) == pytest.approx(1.0, abs=1e-12)
    assert 0 < total < 1


def test_gap_table_normalises():
    table = gap_intensity_table(CTSimpleWalk(1.0), 60)
    assert table.pmf.sum() == pytest.approx(1.0, abs=1e-13)
    assert table.support[0] == 1
    assert np.all(table.values >= 0)


def test_non_integer_gap_rejected():
    with pytest.raises(KernelDomainError):
        discrete_gap_intensity(CTSimpleWalk(1.0), 1.5)
    with pytest.raises(KernelDomainError):
        discrete_gap_intensity(CTSimpleWalk(1.0), 0)


# -- single Brownian gap -------------------------------------------------------


def test_rayleigh_constants():
    val, _ = integrate_1d(rayleigh_gap_density, 1e-300, math.inf, center=0.0, scale=1.5)
    assert val == pytest.approx(rayleigh_total(), abs=1e-12)
    assert rayleigh_total() == pytest.approx(1 / math.sqrt(math.pi), rel=1e-15)
    mean, _ = integrate_1d(lambda g: g * rayleigh_pdf(g), 1e-300, math.inf, center=0.0, scale=1.5)
    assert mean == pytest.approx(math.sqrt(math.pi), abs=1e-12)
    var, _ = integrate_1d(lambda g: g * g * rayleigh_pdf(g), 1e-300, math.inf, center=0.0, scale=1.5)
    assert var - math.pi == pytest.approx(4 - math.pi, abs=1e-12)


def test_unscaled_intensity_and_density():
    T = 2.5
    assert survivor_density(T) == pytest.approx(1 / math.sqrt(math.pi * T))
    val, _ = integrate_1d(lambda g: gap_intensity_density(g, T), 0.0, math.inf, center=0.0, scale=2 * math.sqrt(T))
    assert val == pytest.approx(survivor_density(T), abs=1e-12)


@pytest.mark.parametrize("G", [0.1, 0.7, 1.5, 3.0, 5.0])
def test_single_gap_quadrature_matches_closed_form(G):
    val, err = single_gap_intensity_quadrature(G)
    assert abs(val - rayleigh_gap_density(G)) < 1e-9
    T = 0.4
    val, _ = single_gap_intensity_quadrature(G, T)
    assert abs(val - gap_intensity_density(G, T)) < 1e-9


# -- joint gaps ----------------------------------------------------------------


@pytest.mark.parametrize("G1,G2", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.7), (0.2, 0.3)])
def test_joint_gap_against_tensor_rule(G1, G2):
    val, err = joint_gap_intensity(G1, G2)
    assert abs(val - brute_h(G1, G2)) < 1e-10
    assert err < 1e-8


def test_joint_gap_is_symmetric():
    g = np.array([0.3, 0.9, 1.7, 2.6])
    a, _ = joint_gap_intensity(g[:, None], g[None, :])
    assert np.allclose(a, a.T, atol=1e-11)


def test_joint_gap_does_not_factorise():
    for G1, G2 in ((0.5, 0.5), (2.0, 2.0), (0.5, 2.5)):
        h, _ = joint_gap_intensity(G1, G2)
        product = rayleigh_gap_density(G1) * rayleigh_gap_density(G2) / rayleigh_total()
        assert abs(h - product) > 1e-3


def test_marginals_match_rayleigh():
    probe = np.array([0.5, 1.0, 1.5, 2.0])
    cols, _ = marginal_by_columns(probe)
    assert np.max(np.abs(cols - rayleigh_gap_density(probe))) < 1e-9
    direct, _ = joint_gap_marginal(1.0)
    assert abs(direct - rayleigh_gap_density(1.0)) < 5e-7


def test_k_consistency():
    # integrating the last of three gaps recovers the two-gap intensity
    spec = QuadratureSpec(relative_tolerance=1e-4, absolute_tolerance=1e-8)
    G1, G2 = 1.0, 1.2
    val, err = integrate_1d(
        lambda g3: joint_gap_intensity_k((np.full_like(g3, G1), np.full_like(g3, G2), g3), spec)[0],
        1e-12,
        math.inf,
        QuadratureSpec(relative_tolerance=1e-4, absolute_tolerance=1e-7),
        center=0.0,
        scale=1.5,
    )
    h2, _ = joint_gap_intensity(G1, G2)
    assert abs(val - h2) < 1e-5


def test_three_gap_correlations():
    spec = QuadratureSpec(relative_tolerance=1e-2, absolute_tolerance=1e-5)
    report = gap_correlations_k3(spec)
    total, err = report["total"]
    assert abs(total - 1 / math.sqrt(math.pi)) <= err
    # adjacent pairs reproduce the two-gap value; the separated pair is much weaker
    for name in ("rho12", "rho23"):
        rho, err = report[name]
        assert abs(rho - RHO_CLOSED) <= err
        assert abs(rho - RHO_CLOSED) < 1e-6
    rho13, _ = report["rho13"]
    assert -0.05 < rho13 < 0


def test_k1_is_the_rayleigh_intensity():
    val, _ = joint_gap_intensity_k((1.3,))
    assert abs(val - rayleigh_gap_density(1.3)) < 1e-10


def test_invalid_gap_count_and_values():
    with pytest.raises(ValueError):
        joint_gap_intensity_k((1.0, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        joint_gap_intensity(-1.0, 1.0)


def test_moments_and_correlation():
    c = gap_correlation()
    assert c.total == pytest.approx(1 / math.sqrt(math.pi), abs=1e-9)
    assert c.means[0] == pytest.approx(math.sqrt(math.pi), abs=1e-8)
    assert c.variances[0] == pytest.approx(4 - math.pi, abs=1e-8)
    assert c.error < 1e-7
    # the covariance works out to 3 - pi, giving a closed form for rho
    assert abs(c.rho - RHO_CLOSED) < 1e-8
    assert c.rho < 0


def test_gap_moments_validation():
    with pytest.raises(ValueError):
        gap_moments(4, [(0, 0, 0, 0)])
    with pytest.raises(ValueError):
        gap_moments(2, [(0, 0, 0)])


# -- scaling -------------------------------------------------------------------


def test_scaling_report_converges():
    rows = scaling_convergence_report([4, 16, 64, 256])
    sups = [r["sup_distance"] for r in rows]
    assert all(b < a for a, b in zip(sups, sups[1:]))
    assert sups[-1] < 0.01
    assert abs(rows[-1]["total_scaled"] - 1) < 0.01
    with pytest.raises(ValueError):
        scaling_convergence_report([4, 2])
