import math

import numpy as np
import pytest
from scipy import sparse

from fkchain.dsp import dsp_constant
from fkchain.errors import CapacityError, ConfigError, PositivityError
from fkchain.kernel import (check_reversible, compose, generic_kernel, identity_kernel, n_step,
                            nn_kernel, normalize_general, product_kernel, profile_kernel)
from fkchain.space import build_lattice, graph_from_edges, lattice_graph


def inv_sq(t):
    return np.maximum(t, 1.0) ** -2.0


def test_simple_walk_probabilities(z1_walk):
    sp = z1_walk.space
    o = sp.origin
    assert z1_walk.entry(o, sp.index(1)) == 0.5
    assert z1_walk.entry(o, sp.index(-1)) == 0.5
    assert z1_walk.row_tail[sp.index(20)] == 0.5
    assert z1_walk.row_tail[o] == 0.0
    assert z1_walk.meta["M_nn"] == 0.5


def test_star_graph():
    g = graph_from_edges(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])
    P = nn_kernel(g)
    assert np.allclose(P.row(0), [0, 1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(P.row(1), [1, 0, 0, 0])


def test_profile_kernel_isotropy():
    sp = build_lattice(1, 30, 30)
    P = profile_kernel(sp, inv_sq)
    M = P.dense()
    x = sp.coords[:, 0]
    for d in (0, 1, 5, 17):
        vals = M[np.abs(x[:, None] - x[None, :]) == d]
        assert np.ptp(vals) == 0.0
    Z = P.meta["Z"]
    # full-lattice normalizer: 1 + 2 sum 1/t^2 = 1 + pi^2/3
    assert Z == pytest.approx(1 + math.pi**2 / 3, rel=1e-9)
    rows = P.row_sums
    assert np.all(rows <= 1 + 1e-15)
    assert np.all(rows >= 1 - P.row_tail - 1e-15)


def test_profile_kernel_with_exponential_factor():
    sp = build_lattice(1, 20, 20)
    P = profile_kernel(sp, inv_sq, lambda t: np.exp(-t))
    o = sp.origin
    d = np.arange(1, 15)
    vals = np.array([P.entry(o, sp.index(int(k))) for k in d])
    ratio = vals / (inv_sq(d) * np.exp(-d))
    assert np.ptp(ratio) / ratio.mean() < 1e-12


def test_profile_kernel_rejects_increasing():
    with pytest.raises(ConfigError):
        profile_kernel(build_lattice(1, 5, 5), lambda t: 1.0 + t)


def test_product_kernel_row_sums():
    s1, s2 = build_lattice(1, 6, 6), build_lattice(1, 5, 5)
    P1 = profile_kernel(s1, inv_sq)
    P2 = profile_kernel(s2, inv_sq, lambda t: np.exp(-0.5 * t))
    Q = product_kernel(P1, P2)
    assert Q.n == s1.n * s2.n
    assert np.allclose(Q.row_sums, np.outer(P1.row_sums, P2.row_sums).ravel(), rtol=1e-14)
    i1, j1, i2, j2 = 3, 8, 1, 9
    assert Q.entry(i1 * s2.n + i2, j1 * s2.n + j2) == pytest.approx(
        P1.entry(i1, j1) * P2.entry(i2, j2), rel=1e-15)


def test_product_with_point_identity():
    s1 = build_lattice(1, 6, 6)
    P1 = profile_kernel(s1, inv_sq)
    Q = product_kernel(P1, identity_kernel(build_lattice(1, 0, 0)))
    assert np.array_equal(Q.dense(), P1.dense())
    assert np.array_equal(Q.row_tail, P1.row_tail)


def test_two_step_simple_walk(z1_walk):
    sp = z1_walk.space
    P2 = compose(z1_walk, z1_walk)
    o = sp.origin
    assert P2.entry(o, o) == 0.5
    assert P2.entry(o, sp.index(2)) == 0.25
    assert P2.entry(o, sp.index(1)) == 0.0
    # mass that left the window is tracked
    assert np.allclose(P2.row_sums + P2.row_tail, 1.0)


def test_compose_identity(z1_walk):
    Q = compose(z1_walk, identity_kernel(z1_walk.space))
    assert np.array_equal(Q.dense(), z1_walk.dense())


@pytest.mark.parametrize("m,n", [(1, 2), (2, 3), (3, 3)])
def test_chapman_kolmogorov(z1_walk, m, n):
    lhs = n_step(z1_walk, m + n).dense()
    rhs = compose(n_step(z1_walk, m), n_step(z1_walk, n)).dense()
    assert np.abs(lhs - rhs).max() <= 1e-15


def test_n_step_values(z1_walk):
    assert n_step(z1_walk, 1) is z1_walk
    o = z1_walk.space.origin
    assert n_step(z1_walk, 4).entry(o, o) == 6 / 16
    with pytest.raises(ConfigError):
        n_step(z1_walk, 0)


def test_normalize_general_scaling():
    sp = build_lattice(1, 10, 10)
    P = profile_kernel(sp, inv_sq)
    raw = generic_kernel(sp, 2 * P.dense(), 2 * P.row_tail, raw=True)
    Pt, M1, M2 = normalize_general(raw)
    assert M1 == pytest.approx(2.0, rel=1e-14)
    assert np.allclose(Pt.row_sums + Pt.row_tail, 1.0, rtol=1e-14)
    # the DSP constant of the rescaled kernel is M2 / M1
    c = dsp_constant(Pt, "window", "window").c_star
    assert c == pytest.approx(M2 / M1, rel=1e-12)
    assert Pt.meta["c_star_declared"] == pytest.approx(M1 * M2)


def test_normalize_general_subprobability():
    sp = build_lattice(1, 8, 8)
    P = profile_kernel(sp, inv_sq)
    Pt, M1, _ = normalize_general(P)
    assert M1 <= 1 + 1e-15
    assert np.allclose(Pt.dense(), P.dense() / M1)


def test_normalize_general_needs_positivity(z1_walk):
    with pytest.raises(PositivityError):
        normalize_general(z1_walk)


def test_reversibility():
    g = graph_from_edges(4, [(0, 1, 2.0), (1, 2, 0.5), (2, 3, 1.0), (3, 0, 3.0)])
    rep = check_reversible(nn_kernel(g), g.degree)
    assert rep.reversible and rep.violation <= 1e-15
    sp = build_lattice(1, 10, 10)
    assert check_reversible(profile_kernel(sp, inv_sq), np.ones(sp.n)).reversible
    two = build_lattice(1, 1, 1)
    M = np.array([[0.1, 0.7, 0.0], [0.2, 0.1, 0.5], [0.0, 0.6, 0.1]])
    rep = check_reversible(generic_kernel(two, M), np.ones(3))
    assert not rep.reversible and rep.violation == pytest.approx(0.5)


def test_row_mass_above_one_rejected():
    sp = build_lattice(1, 1, 1)
    with pytest.raises(ConfigError):
        generic_kernel(sp, np.full((3, 3), 0.5))


def test_capacity_guard():
    sp = build_lattice(2, 60, 60)  # 7321 states -> 5.4e7 dense entries
    with pytest.raises(CapacityError):
        profile_kernel(sp, inv_sq)


def test_sparse_storage_for_large_windows():
    sp = build_lattice(1, 2500, 2500)
    P = nn_kernel(lattice_graph(sp))
    assert sparse.issparse(P.matrix)
    assert P.apply(np.ones(sp.n))[sp.origin] == 1.0
