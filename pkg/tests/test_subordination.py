import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from fkchain.errors import ConfigError, DomainError, InsufficientDepthError
from fkchain.kernel import nn_kernel
from fkchain.space import build_lattice, lattice_graph
from fkchain.subordination import (convolve_pmf, heat_kernel_sequence, pmf_from_values,
                                   relativistic_pmf, required_depth, stable_pmf,
                                   subordinate_kernel, verify_subordinate_decay, wendel_check,
                                   z1_relativistic_profile, z1_stable_profile, z1_stable_tail,
                                   z1_subordinate_kernel)

ALPHAS = [0.25, 0.5, 0.75]


def gamma_oracle(alpha, k):
    """alpha Gamma(k - alpha) / (Gamma(1 - alpha) Gamma(k + 1)) at 40 digits."""
    with mp.workdps(40):
        a = mp.mpf(alpha)
        return float(a * mp.exp(mp.loggamma(k - a) - mp.loggamma(1 - a) - mp.loggamma(k + 1)))


@pytest.mark.parametrize("alpha", ALPHAS)
def test_first_terms_exact(alpha):
    a = stable_pmf(alpha, 10)
    assert a.linear[0] == alpha
    assert a.linear[1] == alpha * (1 - alpha) / 2


@pytest.mark.parametrize("alpha", ALPHAS)
def test_recurrence_matches_gamma_oracle(alpha):
    a = stable_pmf(alpha, 1000)
    ks = list(range(1, 40)) + list(range(40, 1001, 37)) + [1000]
    ref = np.array([gamma_oracle(alpha, k) for k in ks])
    got = a.linear[np.array(ks) - 1]
    assert np.abs(got / ref - 1).max() < 1e-12


@pytest.mark.parametrize("alpha", ALPHAS)
def test_generating_function(alpha):
    a = stable_pmf(alpha, 10_000)
    for s in np.arange(0.1, 1.0, 0.1):
        assert abs(a.generating_function(s) - (1 - (1 - s) ** alpha)) < 1e-8


@pytest.mark.parametrize("alpha", np.linspace(0.1, 0.9, 9))
def test_wendel_sandwich(alpha):
    rep = wendel_check(alpha, 10_000)
    assert rep.lower_violations == 0 and rep.upper_violations == 0
    assert rep.lower_margin >= 1 and rep.upper_margin >= 1


@pytest.mark.parametrize("alpha", ALPHAS)
def test_stable_tail_bounds(alpha):
    a = stable_pmf(alpha, 500)
    exact = a.meta["tail_exact"]
    assert exact <= a.tail_bound
    # exact tail closes the mass to one
    assert a.mass() + exact == pytest.approx(1.0, abs=1e-13)


def test_relativistic_limit_m_to_zero():
    a0 = stable_pmf(0.5, 200)
    am = relativistic_pmf(0.5, 1e-12, 200)
    assert np.allclose(am.linear, a0.linear, rtol=1e-6)


@pytest.mark.parametrize("alpha,m", [(0.5, 1.0), (0.3, 0.2), (0.8, 2.0)])
def test_relativistic_ratio(alpha, m):
    a = relativistic_pmf(alpha, m, 300)
    k = np.arange(1, 300)
    expect = (k - alpha) / ((k + 1) * (1 + m ** (1 / alpha)))
    assert np.allclose(a.linear[1:] / a.linear[:-1], expect, rtol=1e-13)
    assert np.allclose(np.exp(a.log_values), a.linear, rtol=1e-12)


def test_relativistic_normalization():
    a = relativistic_pmf(0.5, 1.0, 1000)
    assert abs(a.mass() + a.tail_bound - 1.0) < 1e-10
    s = 0.7
    assert a.generating_function(s) == pytest.approx(1 - a.laplace_exponent(1 - s), abs=1e-12)


def test_relativistic_needs_mass():
    with pytest.raises(DomainError):
        relativistic_pmf(0.5, 0.0, 10)
    with pytest.raises(DomainError):
        stable_pmf(1.2, 10)


def test_convolution_basics():
    a = stable_pmf(0.5, 400)
    c = convolve_pmf(a, a)
    assert c.values[0] == pytest.approx(a.linear[0] ** 2, rel=1e-15)
    # every pair (k, l) with k, l <= K/2 lands inside the range
    half = math.fsum(a.linear[:200]) ** 2
    assert math.fsum(c.values) >= half * (1 - 1e-14)
    assert math.fsum(c.values) <= a.mass() ** 2 * (1 + 1e-14)


def test_tempering_identity():
    alpha, m = 0.5, 1.0
    a0, am = stable_pmf(alpha, 300), relativistic_pmf(alpha, m, 300)
    c0, cm = convolve_pmf(a0, a0), convolve_pmf(am, am)
    n = c0.n
    lhs = cm.log_values
    rhs = 2 * (am.M * alpha - math.log(am.theta_m)) - am.M * n + c0.log_values
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-10)


def test_heat_kernel_sequence_simple_walk():
    sp = build_lattice(1, 15, 15)
    Z = nn_kernel(lattice_graph(sp))
    hk = heat_kernel_sequence(Z, np.full(sp.n, 2.0), 12)
    o = sp.origin
    assert hk.g[0, o, sp.index(1)] == 0.25
    x = sp.coords[:, 0]
    d = np.abs(x[:, None] - x[None, :])
    for n in range(1, 13):
        assert np.all(hk.g[n - 1][d > n] == 0)
        assert np.all(hk.g[n - 1][(d + n) % 2 == 1] == 0)
    assert hk.asymmetry() == 0.0


def test_subordinate_kernel_positive_and_mass():
    sp = build_lattice(1, 12, 12)
    Z = nn_kernel(lattice_graph(sp))
    a = stable_pmf(0.5, 400)
    hk = heat_kernel_sequence(Z, np.full(sp.n, 2.0), 400)
    P = subordinate_kernel(hk, a, eps=0.05)
    assert np.all(P.dense() > 0)
    # rows plus tracked loss stay sub-probability; rows alone carry at most the pmf mass
    total = P.row_sums + P.row_tail
    assert np.all(total <= 1 + 1e-12)
    assert np.all(P.row_sums <= a.mass() + 1e-12)


def test_subordinate_kernel_depth_error():
    sp = build_lattice(1, 10, 10)
    hk = heat_kernel_sequence(nn_kernel(lattice_graph(sp)), np.full(sp.n, 2.0), 50)
    with pytest.raises(InsufficientDepthError) as e:
        subordinate_kernel(hk, stable_pmf(0.5, 50), eps=1e-10)
    assert e.value.required is not None and e.value.required > 50
    assert required_depth(stable_pmf(0.5, 50), 1e-3) > 50
    with pytest.raises(ConfigError):
        subordinate_kernel(hk, stable_pmf(0.5, 20))


def test_z1_stable_profile_matches_fourier_quadrature():
    # p(0, d) = (1/pi) int_0^pi [1 - (1 - cos t)^alpha] cos(d t) dt for d >= 1
    for alpha in ALPHAS:
        for d in (0, 1, 2, 7, 30):
            val, _ = integrate.quad(lambda t: (1 - (1 - math.cos(t)) ** alpha) * math.cos(d * t),
                                    0, math.pi, limit=400, epsabs=1e-14)
            ref = val / math.pi
            assert z1_stable_profile(alpha, d) == pytest.approx(ref, rel=1e-8, abs=1e-14)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_z1_stable_tail_telescopes(alpha):
    d = np.arange(1, 200_001)
    head = math.fsum(z1_stable_profile(alpha, d[d <= 50]))
    total = math.fsum(z1_stable_profile(alpha, d))
    assert float(z1_stable_tail(alpha, 50)) == pytest.approx(
        float(z1_stable_tail(alpha, 200_000)) + total - head, rel=1e-9)
    # row sums to one: diag + 2 * (sum_{d >= 1})
    full = float(z1_stable_profile(alpha, 0)) + 2 * float(z1_stable_tail(alpha, 0))
    assert full == pytest.approx(1.0, abs=1e-13)


def test_z1_relativistic_matches_generic_subordination():
    alpha, m = 0.5, 1.0
    sp = build_lattice(1, 20, 20)
    Z = nn_kernel(lattice_graph(sp))
    a = relativistic_pmf(alpha, m, 200)
    hk = heat_kernel_sequence(Z, np.full(sp.n, 2.0), 200)
    P = subordinate_kernel(hk, a, eps=1e-10)
    prof, _ = z1_relativistic_profile(alpha, m, 10)
    o = sp.origin
    for d in range(0, 8):
        assert P.entry(o, sp.index(d)) == pytest.approx(prof[d], rel=1e-10)


@pytest.mark.parametrize("alpha,expected", [(0.5, 2.0), (0.25, 1.5), (0.75, 2.5)])
def test_stable_decay_exponent(alpha, expected):
    P = z1_subordinate_kernel(build_lattice(1, 400, 400), alpha)
    fit = verify_subordinate_decay(P, alpha, 0.0)
    assert fit.passes
    assert fit.exponent == pytest.approx(-expected, rel=0.05)


def test_relativistic_kernel_decays_exponentially():
    alpha, m = 0.5, 1.0
    P = z1_subordinate_kernel(build_lattice(1, 220, 220), alpha, m)
    fit = verify_subordinate_decay(P, alpha, m, d_range=(10, 200))
    kappa = math.acosh(1 + m ** (1 / alpha))
    # log p(0, y) is asymptotically linear in |y| with slope -kappa
    assert fit.rate == pytest.approx(kappa, rel=0.02)
    assert fit.rate > math.log1p(m ** (1 / alpha))


def test_user_pmf_validation():
    with pytest.raises(ConfigError):
        pmf_from_values([0.6, 0.6])
    a = pmf_from_values([1.0])
    assert a.K_max == 1 and a.tail_after(1) == 0.0
