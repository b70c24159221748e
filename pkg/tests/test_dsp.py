import math

import numpy as np
import pytest

from fkchain.dsp import (check_doubling, check_subadditive_factor, dsp_constant, dsp_pmf_check,
                         kb_bounds, self_convolution_ratio)
from fkchain.errors import ConfigError, PositivityError
from fkchain.kernel import product_kernel, profile_kernel
from fkchain.space import build_lattice
from fkchain.subordination import geometric_pmf, relativistic_pmf, stable_pmf


def inv_sq(t):
    return np.maximum(t, 1.0) ** -2.0


def brute_cstar(P):
    M = P.dense()
    return float(((M @ M) / M).max())


@pytest.mark.slow
def test_profile_cstar_stable_across_windows():
    c = []
    for R in (500, 1000):
        P = profile_kernel(build_lattice(1, R, R), inv_sq)
        rep = dsp_constant(P, "window", "window")
        assert rep.holds and np.isfinite(rep.c_star)
        c.append(rep.c_star)
    assert abs(c[1] - c[0]) / c[1] < 0.01


def test_cstar_matches_brute_force():
    P = profile_kernel(build_lattice(1, 40, 40), inv_sq)
    rep = dsp_constant(P, "window", "window")
    assert rep.c_star == pytest.approx(brute_cstar(P), rel=1e-14)
    assert rep.tail_caveat == 0.0
    full = dsp_constant(P, "working", "full")
    assert full.tail_caveat > 0
    lo, hi = full.interval
    assert lo <= hi


def test_nearest_neighbour_fails_with_witness(z1_walk):
    rep = dsp_constant(z1_walk)
    assert not rep.holds
    x, y = rep.witness
    sp = z1_walk.space
    assert sp.points[y][0] - sp.points[x][0] == 2


def test_product_constant_bounded_by_factors():
    s = build_lattice(1, 8, 8)
    P1 = profile_kernel(s, inv_sq)
    P2 = profile_kernel(s, inv_sq, lambda t: np.exp(-0.3 * t))
    c1 = dsp_constant(P1, "window", "window").c_star
    c2 = dsp_constant(P2, "window", "window").c_star
    c = dsp_constant(product_kernel(P1, P2), "window", "window").c_star
    assert c <= c1 * c2 * (1 + 1e-12)


def test_kb_singleton_and_envelopes():
    P = profile_kernel(build_lattice(1, 30, 30), inv_sq)
    o = P.space.origin
    kb = kb_bounds(P, [o])
    assert kb.k_lower == 1.0 and kb.k_upper == 1.0
    c = dsp_constant(P, "window", "window").c_star
    B = P.space.indices([-1, 0, 1])
    kb = kb_bounds(P, B, c_star=c)
    assert kb.env_lower <= kb.k_lower <= 1 <= kb.k_upper <= kb.env_upper


def test_kb_symmetric_pair_brute_force():
    P = profile_kernel(build_lattice(1, 20, 20), inv_sq)
    B = P.space.indices([-1, 1])
    M = P.dense()
    r = M[:, B[0]] / M[:, B[1]]
    kb = kb_bounds(P, B)
    assert kb.k_lower == pytest.approx(np.minimum(r, 1 / r).min(), rel=1e-15)
    assert kb.k_upper == pytest.approx(np.maximum(r, 1 / r).max(), rel=1e-15)


def test_kb_errors(z1_walk):
    with pytest.raises(ConfigError):
        kb_bounds(z1_walk, [])
    with pytest.raises(PositivityError):
        kb_bounds(z1_walk, [z1_walk.space.origin])


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 3.5])
def test_doubling_power(gamma):
    rep = check_doubling(lambda t: np.maximum(t, 1.0) ** -gamma, 1e6)
    assert rep.holds
    assert rep.c_doubling == pytest.approx(2**gamma, rel=1e-12)


def test_doubling_exponential_grows():
    rep = check_doubling(lambda t: np.exp(-t), 50.0)
    assert not rep.holds
    assert "grow" in rep.diagnosis
    assert rep.c_doubling == pytest.approx(math.exp(50.0), rel=1e-6)


def test_doubling_constant():
    rep = check_doubling(lambda t: np.ones_like(t), 100.0)
    assert rep.holds and rep.c_doubling == 1.0


@pytest.mark.parametrize("K", [
    lambda t: np.exp(-0.7 * t),
    lambda t: np.exp(-0.7 * t**0.5),
    lambda t: np.exp(-2.0 * t**0.25),
    lambda t: np.ones_like(t),
])
def test_subadditive_factor_is_one(K):
    rep = check_subadditive_factor(K, 1e3)
    assert rep.holds
    assert rep.c_tilde == pytest.approx(1.0, abs=1e-12)


def test_pmf_stable_plateau():
    rep = dsp_pmf_check(stable_pmf(0.5, 10_000))
    assert rep.holds and np.isfinite(rep.c)
    assert rep.plateau_change < 0.05
    # subexponential behaviour: the ratio tends to 2
    assert rep.ratios[-1] == pytest.approx(2.0, rel=1e-2)


def test_pmf_ratio_matches_direct_convolution():
    a = stable_pmf(0.3, 400)
    direct = np.convolve(a.linear, a.linear)[: a.K_max - 1] / a.linear[1:]
    assert np.allclose(self_convolution_ratio(a.log_values), direct, rtol=1e-12)


def test_pmf_geometric_unbounded():
    q = 0.6
    a = geometric_pmf(q, 300)
    rep = dsp_pmf_check(a)
    n = np.arange(2, 301)
    assert np.allclose(rep.ratios, (n - 1) * (1 - q) / q, rtol=1e-10)
    assert not rep.holds


def test_pmf_relativistic_tilt():
    a = relativistic_pmf(0.5, 1.0, 3000)
    rep = dsp_pmf_check(a)
    assert rep.holds and np.all(np.isfinite(rep.ratios))


def test_pmf_split_hypotheses():
    alpha = 0.5
    a = stable_pmf(alpha, 2000)
    j = lambda t: np.asarray(t, float) ** (-1 - alpha)  # noqa: E731
    l = lambda t: np.ones_like(np.asarray(t, float))  # noqa: E731
    rep = dsp_pmf_check(a, split=(j, l))
    info = rep.split
    assert info["j_doubling"] == pytest.approx(2 ** (1 + alpha))
    assert info["l_submultiplicative"] == 1.0
    lo, hi = info["comparability"]
    assert 0 < lo <= hi < np.inf
