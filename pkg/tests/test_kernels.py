import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from coaldet.kernels import (
    CTSimpleWalk,
    Family,
    Gaussian,
    KernelDomainError,
    ParityWalk,
    ReflectedGaussian,
    cdf,
    cumulative,
    d_source_cdf,
    d_source_density,
    density,
    make_kernel,
    point_prob,
)

from oracles import ct_walk_law


def test_zero_time_identity():
    k = CTSimpleWalk(0.0)
    assert point_prob(k, 0, 0) == 1.0
    assert point_prob(k, 0, 3) == 0.0


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 3.7])
def test_ct_walk_matches_matrix_exponential(t):
    law = ct_walk_law(t)
    k = CTSimpleWalk(t)
    for n in range(-40, 41):
        assert point_prob(k, 0, n) == pytest.approx(law[n], abs=1e-13)


def test_ct_walk_half_unit_example():
    law = ct_walk_law(0.5)
    assert abs(point_prob(CTSimpleWalk(0.5), 0, 1) - law[1]) < 1e-10
    assert abs(point_prob(CTSimpleWalk(0.5), 0, 1) - math.exp(-1) * special.iv(1, 1.0)) < 1e-15


def test_asymmetric_rates_match_matrix_exponential():
    law = ct_walk_law(0.8, right=1.5, left=0.4)
    k = CTSimpleWalk(0.8, right_rate=1.5, left_rate=0.4)
    assert not k.symmetric
    for n in range(-20, 21):
        assert k.pmf(n) == pytest.approx(law[n], abs=1e-13)


def test_cumulative_against_oracle_and_limits():
    law = ct_walk_law(0.5)
    k = CTSimpleWalk(0.5)
    expected = sum(v for n, v in law.items() if n <= 0)
    assert abs(cumulative(k, 0, 0) - expected) < 1e-12
    assert abs(cumulative(k, 0, 60) - 1.0) < 1e-12
    assert cumulative(k, 0, math.inf) == 1.0
    assert cumulative(k, 0, -math.inf) == 0.0


@pytest.mark.parametrize("kernel", [CTSimpleWalk(0.3), CTSimpleWalk(7.5), ParityWalk(5), ParityWalk(12, parity=1)])
def test_discrete_normalisation_and_monotone_cdf(kernel):
    n, p = kernel.table
    assert abs(p.sum() - 1.0) < 1e-12
    F = [kernel.F(0 if kernel.spacing == 1 else kernel.parity, y) for y in range(-30, 31)]
    assert all(b >= a for a, b in zip(F, F[1:]))
    assert F[0] >= 0 and F[-1] <= 1 + 1e-15


def test_parity_walk_binomial():
    k = ParityWalk(2)
    assert point_prob(k, 0, 0) == 0.5
    assert point_prob(k, 0, 2) == 0.25
    k = ParityWalk(7)
    for n in range(-7, 8, 2):
        assert k.pmf(n) == math.comb(7, (7 + n) // 2) / 2**7


def test_parity_violation_is_an_error():
    with pytest.raises(KernelDomainError):
        point_prob(ParityWalk(2), 0, 1)
    with pytest.raises(KernelDomainError):
        ParityWalk(1.5)
    with pytest.raises(KernelDomainError):
        ParityWalk(2, parity=3)


def test_negative_time_rejected():
    with pytest.raises(KernelDomainError):
        CTSimpleWalk(-1.0)
    with pytest.raises(KernelDomainError):
        point_prob(CTSimpleWalk(1.0), 0, 0, t=-0.5)


def test_chapman_kolmogorov():
    k = CTSimpleWalk(1.3)
    k2 = k.at(2.6)
    n, p = k.table
    for m in range(-10, 11):
        conv = sum(p[i] * k.pmf(m - n[i]) for i in range(len(n)))
        assert abs(conv - k2.pmf(m)) < 1e-10


def test_time_change_builds_a_new_instance():
    k = CTSimpleWalk(1.0)
    k2 = k.at(2.0)
    assert k.horizon == 1.0 and k2.horizon == 2.0
    assert point_prob(k, 0, 1, t=2.0) == point_prob(k2, 0, 1)


@given(st.floats(0.01, 20), st.integers(0, 40))
@settings(max_examples=60, deadline=None)
def test_symmetry_property(t, n):
    k = CTSimpleWalk(t)
    assert k.pmf(n) == k.pmf(-n)
    steps = int(t) + 1
    pw = ParityWalk(steps)
    assert pw.pmf(n) == pw.pmf(-n)


def test_gaussian_values():
    g = Gaussian(1.0)
    assert density(g, 0, 0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
    for t in (0.3, 1.0, 5.0):
        assert cdf(Gaussian(t), 0, 0) == 0.5
    assert d_source_cdf(g, 0, 1) == pytest.approx(-density(g, 0, 1), abs=1e-16)


@pytest.mark.parametrize("kernel", [Gaussian(0.7), ReflectedGaussian(0.7)])
def test_source_derivatives_by_finite_differences(kernel):
    h = 1e-5
    for x, y in ((0.4, 1.3), (1.0, 0.2), (2.5, 2.0)):
        fd = (kernel.density(x + h, y) - kernel.density(x - h, y)) / (2 * h)
        assert abs(fd - d_source_density(kernel, x, y)) < 1e-7
        fd = (kernel.cdf(x + h, y) - kernel.cdf(x - h, y)) / (2 * h)
        assert abs(fd - d_source_cdf(kernel, x, y)) < 1e-7


def test_reflected_gaussian_image_formula():
    r = ReflectedGaussian(1.0)
    phi1 = math.exp(-0.5) / math.sqrt(2 * math.pi)
    assert density(r, 0, 1) == pytest.approx(2 * phi1, rel=1e-15)
    g = Gaussian(1.0)
    for x, y in ((0.3, 0.9), (2.0, 0.1)):
        assert r.density(x, y) == pytest.approx(g.density(x, y) + g.density(-x, y), rel=1e-14)
    with pytest.raises(KernelDomainError):
        r.density(-0.1, 1.0)


def test_continuous_normalisation():
    from coaldet.quad import integrate_1d

    for kernel, lo in ((Gaussian(2.0), -math.inf), (ReflectedGaussian(2.0), 0.0)):
        val, _ = integrate_1d(lambda y: kernel.density(0.8, y), lo, math.inf, center=0.8, scale=math.sqrt(2))
        assert abs(val - 1) < 1e-10
        assert kernel.cdf(0.8, 50.0) == pytest.approx(1.0, abs=1e-15)


def test_make_kernel_and_family_names():
    assert isinstance(make_kernel("ct_simple_walk", 1.0), CTSimpleWalk)
    assert isinstance(make_kernel(Family.PARITY_WALK, 4, parity=1), ParityWalk)
    with pytest.raises(KernelDomainError):
        make_kernel("levy_flight", 1.0)
    with pytest.raises(KernelDomainError):
        density(CTSimpleWalk(1.0), 0, 0)
