import math

import numpy as np
import pytest

from fkchain.errors import ConfigError
from fkchain.feynman_kac import FKOperator, Potential, conjugate_semigroup_apply, semigroup_apply
from fkchain.kernel import generic_kernel, n_step, nn_kernel
from fkchain.montecarlo import (SimConfig, counter_uniforms, fk_estimate, simulate_chain,
                                simulate_subordinated)
from fkchain.space import build_lattice, lattice_graph
from fkchain.subordination import (convolve_pmf, heat_kernel_sequence, pmf_from_values,
                                   subordinate_kernel)


def empirical(states, n):
    counts = np.bincount(states[states >= 0], minlength=n)
    return counts / states.size


def tv(p, q):
    return 0.5 * np.abs(p - q).sum()


def test_counter_uniforms_range_and_keys():
    ids = np.arange(10_000)
    u = counter_uniforms(7, ids, 3)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    assert not np.array_equal(u, counter_uniforms(7, ids, 4))
    assert not np.array_equal(u, counter_uniforms(8, ids, 3))
    assert not np.array_equal(u, counter_uniforms(7, ids, 3, slot=1))
    assert np.array_equal(u[500:600], counter_uniforms(7, ids[500:600], 3))


def test_deterministic_shift():
    sp = build_lattice(1, 10, 10)
    M = np.eye(sp.n, k=1)
    P = generic_kernel(sp, M, np.eye(sp.n)[-1])
    cfg = SimConfig(seed=1, n_paths=50, horizon=8, start=sp.index(0))
    S = simulate_chain(P, cfg).states
    want = [sp.index(k) for k in range(9)]
    assert np.all(S == np.array(want)[None, :])


def test_half_survival():
    sp = build_lattice(1, 1, 1)
    M = np.array([[0.0, 0.25, 0.25], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    P = generic_kernel(sp, M, np.array([0.5, 0.0, 0.0]))
    n = 100_000
    batch = simulate_chain(P, SimConfig(seed=3, n_paths=n, horizon=1, start=0))
    surv = float((batch.states[:, 1] >= 0).mean())
    assert abs(surv - 0.5) <= 3 * math.sqrt(0.25 / n)
    assert np.all(batch.killed_at[batch.states[:, 1] < 0] == 1)


def test_one_step_law_tv(z1_walk):
    sp = z1_walk.space
    P = n_step(z1_walk, 3)
    n = 50_000
    x0 = sp.index(19)
    S = simulate_chain(P, SimConfig(seed=11, n_paths=n, horizon=1, start=x0)).states[:, 1]
    row = P.row(x0)
    support = int((row > 0).sum()) + 1
    emp = empirical(S, sp.n)
    dead_emp, dead = float((S < 0).mean()), 1 - row.sum()
    assert tv(emp, row) + 0.5 * abs(dead_emp - dead) <= 3 * math.sqrt(support / n)


def test_subordinated_delta_pmf(z1_walk):
    cfg = SimConfig(seed=5, n_paths=2000, horizon=6, start=z1_walk.space.origin)
    Y = simulate_subordinated(z1_walk, pmf_from_values([1.0]), cfg)
    Z = simulate_chain(z1_walk, cfg)
    # same marginal law step by step; with a degenerate pmf every draw is one walk step
    for k in range(1, 7):
        p, q = empirical(Y.states[:, k], z1_walk.n), empirical(Z.states[:, k], z1_walk.n)
        assert tv(p, q) <= 3 * math.sqrt(2 * (k + 1) / 2000)
    assert not Y.censored.any()


@pytest.fixture(scope="module")
def small_subordinate():
    sp = build_lattice(1, 20, 20)
    Z = nn_kernel(lattice_graph(sp))
    a = pmf_from_values([0.5, 0.3, 0.2, 0.0, 0.0, 0.0])
    hk = heat_kernel_sequence(Z, np.full(sp.n, 2.0), 6)
    return sp, Z, a, hk, subordinate_kernel(hk, a, eps=1e-12)


def test_subordinated_one_step_law(small_subordinate):
    sp, Z, a, _, P = small_subordinate
    n = 60_000
    o = sp.origin
    Y = simulate_subordinated(Z, a, SimConfig(seed=21, n_paths=n, horizon=2, start=o))
    row = P.row(o)
    emp = empirical(Y.states[:, 1], sp.n)
    assert tv(emp, row) <= 3 * math.sqrt(int((row > 0).sum()) / n)


def test_subordinated_two_step_law(small_subordinate):
    sp, Z, a, _, P = small_subordinate
    n = 60_000
    o = sp.origin
    c = convolve_pmf(a, a)
    law = np.zeros(sp.n)
    for k, w in zip(c.n, c.values):
        law += w * n_step(Z, int(k)).row(o)
    assert np.allclose(law, n_step(P, 2).row(o), atol=1e-14)
    Y = simulate_subordinated(Z, a, SimConfig(seed=22, n_paths=n, horizon=2, start=o))
    emp = empirical(Y.states[:, 2], sp.n)
    assert tv(emp, law) <= 3 * math.sqrt(int((law > 0).sum()) / n)


def test_constant_potential_exact(cycle_graph):
    P = nn_kernel(cycle_graph)
    c = 3.0
    cfg = SimConfig(seed=0, n_paths=500, horizon=5, start=0)
    for conv in ("U", "W"):
        est = fk_estimate(P, np.full(8, c), np.ones(8), cfg, conv, ns=range(6))
        for e in est:
            assert e.estimate == pytest.approx(c ** -e.n, rel=1e-14)
            assert e.std_error == pytest.approx(0.0, abs=1e-15)


def test_n_zero_exact(small_z1):
    P, V = small_z1.kernel, small_z1.V
    f = np.arange(small_z1.n, dtype=float)
    o = small_z1.space.origin
    est = fk_estimate(P, V, f, SimConfig(seed=2, n_paths=100, horizon=3, start=o), ns=[0])
    assert est[0].estimate == f[o] and est[0].std_error == 0.0


@pytest.mark.parametrize("conv", ["U", "W"])
def test_matches_operator_powers(z1_walk, conv):
    sp = z1_walk.space
    x = sp.coords[:, 0].astype(float)
    V = 1.0 + 0.05 * x * x
    op = FKOperator(z1_walk, Potential(V))
    f = np.exp(-0.1 * np.abs(x))
    o = sp.origin
    cfg = SimConfig(seed=99, n_paths=100_000, horizon=10, start=o)
    e = fk_estimate(z1_walk, V, f, cfg, conv, ns=[10])[0]
    ref = semigroup_apply(op, f, 10)[o] if conv == "U" else \
        conjugate_semigroup_apply(op, f, 10)[o]
    assert abs(e.estimate - ref) <= 3 * e.std_error


def test_chunk_invariance(z1_walk):
    base = dict(seed=4, n_paths=3000, horizon=7, start=z1_walk.space.origin)
    a = simulate_chain(z1_walk, SimConfig(**base, chunk=3000)).states
    b = simulate_chain(z1_walk, SimConfig(**base, chunk=77)).states
    assert np.array_equal(a, b)


def test_config_errors(z1_walk):
    with pytest.raises(ConfigError):
        SimConfig(seed=1, n_paths=0, horizon=1, start=0)
    cfg = SimConfig(seed=1, n_paths=10, horizon=2, start=0)
    with pytest.raises(ConfigError):
        fk_estimate(z1_walk, np.ones(z1_walk.n), np.ones(z1_walk.n), cfg, "X")
    with pytest.raises(ConfigError):
        fk_estimate(z1_walk, np.ones(z1_walk.n), np.ones(z1_walk.n), cfg, ns=[3])
