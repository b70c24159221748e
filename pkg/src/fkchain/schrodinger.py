"""Graph Schrodinger operators and spectral checks for U.

H f(x) = m(x)^-1 sum_y b(x, y) (f(x) - f(y)) + V(x) f(x). Off the set
A = {m V + b <= 0}, H f = -(V + b/m)(U - I) f with P = b(x, y) / b_star and
potential (m V + b) / b_star. On A the reduced potential is +inf, so U
kills there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.sparse import linalg as sparse_linalg

from .errors import (CertificateError, ConfigError, ConvergenceError, InsufficientWindowError,
                     PreconditionError)
from .feynman_kac import (BoundCertificate, FKOperator, Potential, apply_U, bound_constants,
                          find_B0, verify_two_sided)
from .kernel import Kernel
from .space import WeightedGraph


@dataclass(frozen=True, eq=False)
class GraphLaplacian:
    graph: WeightedGraph
    m: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        n = self.graph.space.n
        m = np.asarray(self.m, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if m.shape != (n,) or V.shape != (n,):
            raise ConfigError("m and V must be given on every window state")
        if m.min() <= 0 or not np.all(np.isfinite(m)):
            raise ConfigError("measure m must be positive")
        if not np.all(np.isfinite(V)):
            raise ConfigError("V must be finite")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "V", V)

    @property
    def b(self) -> np.ndarray:
        return self.graph.degree

    @property
    def b_star(self) -> float:
        return float(self.b.max())

    @property
    def A(self) -> frozenset:
        return frozenset(int(i) for i in np.nonzero(self.m * self.V + self.b <= 0)[0])

    @property
    def V_tilde(self) -> np.ndarray:
        """(m V + b) / b_star off A, 0 on A."""
        v = (self.m * self.V + self.b) / self.b_star
        return np.where(v > 0, v, 0.0)

    @property
    def scale(self) -> np.ndarray:
        return self.V + self.b / self.m


def apply_H(L: GraphLaplacian, f) -> np.ndarray:
    """H f with f zero outside the window (escaped edges still count in b)."""
    f = np.asarray(f, dtype=float)
    return (L.b / L.m + L.V) * f - np.asarray(L.graph.weights @ f).ravel() / L.m


def reduce_to_fk(L: GraphLaplacian) -> tuple[FKOperator, frozenset, np.ndarray]:
    """Return (U-operator, A, scale) with H f = -scale (U - I) f off A."""
    bs = L.b_star
    P = Kernel(L.graph.space, L.graph.weights / bs, L.graph.escaped / bs, "nearest_neighbour",
               meta={"b_star": bs})
    A = L.A
    vt = L.V_tilde
    off = np.ones(L.graph.space.n, dtype=bool)
    off[list(A)] = False
    if np.any(vt[off] <= 0):
        raise PreconditionError("reduced potential is not positive off A")
    pot = Potential(np.where(off, vt, np.inf))
    return FKOperator(P, pot), A, L.scale


class MuConditions(NamedTuple):
    cond_i: float
    cond_ii: float
    caveat_i: float


def mu_conditions_check(P: Kernel, mu) -> MuConditions:
    """cond_i = sup_y sum_x mu(x) P(x,y) / mu(y), cond_ii = sup P(x,y) / mu(y).

    The column sums miss rows outside the window; for a reversible pair
    that mass is mu(y) row_tail(y), reported as `caveat_i`.
    """
    mu = np.asarray(mu, dtype=float)
    M = P.dense()
    cols = (mu @ M) / mu
    return MuConditions(float(cols.max()), float((M / mu[None, :]).max()),
                        float(P.row_tail.max(initial=0.0)))


def _mu_norm(v: np.ndarray, mu: np.ndarray) -> float:
    return math.sqrt(math.fsum(mu * v * v))


class GapResult(NamedTuple):
    gap: float
    envelope: float
    k: float
    size: int
    iterations: int
    holds: bool


def finite_rank_gap(op: FKOperator, mu, k: float, tol: float = 1e-10,
                    max_iter: int = 20_000) -> GapResult:
    """Norm in l2(mu) of U - U^(k), where U^(k) keeps outputs on B_k = {V < k}.

    The difference is diag(1_{B_k^c} / V) P; its norm is found by power
    iteration on D^* D and compared with cond_i^(1/2) / k.
    """
    mu = np.asarray(mu, dtype=float)
    V = op.V
    inside = V < k
    shell = op.space.shell
    outside = op.potential.outside_lower
    if inside[shell].any() or (outside is not None and outside < k):
        raise InsufficientWindowError(f"level set V < {k} reaches the window boundary",
                                      required_level=k)
    w = np.where(inside, 0.0, 1.0 / V)
    P = op.kernel
    sq, isq = np.sqrt(mu), 1.0 / np.sqrt(mu)

    def A(x):
        return sq * w * P.apply(isq * x)

    def At(y):
        return isq * P.apply_transpose(w * sq * y)

    x = np.ones(op.n) / math.sqrt(op.n)
    sigma = 0.0
    for it in range(1, max_iter + 1):
        y = At(A(x))
        nrm = float(np.linalg.norm(y))
        if nrm == 0:
            sigma = 0.0
            break
        x_new = y / nrm
        s_new = math.sqrt(nrm)
        if abs(s_new - sigma) <= tol * s_new:
            sigma = s_new
            break
        sigma, x = s_new, x_new
    else:
        raise ConvergenceError(f"gap iteration did not settle (last {sigma:.6g})")
    cond_i = mu_conditions_check(P, mu).cond_i
    env = math.sqrt(cond_i) / k
    return GapResult(sigma, env, float(k), int(inside.sum()), it, bool(sigma <= env * (1 + 1e-12)))


@dataclass(frozen=True)
class SpectralResult:
    lambda0: float
    psi0: np.ndarray
    residual: float
    iterations: int


def ground_state(op: FKOperator, mu, tol: float = 1e-12, max_iter: int = 100_000) -> SpectralResult:
    """Power iteration for the Perron pair of U in l2(mu), from the constant vector."""
    mu = np.asarray(mu, dtype=float)
    psi = np.ones(op.n)
    psi /= _mu_norm(psi, mu)
    res = math.inf
    lam = 0.0
    for it in range(1, max_iter + 1):
        u = apply_U(op, psi)
        lam = math.fsum(mu * psi * u)
        res = _mu_norm(u - lam * psi, mu)
        nrm = _mu_norm(u, mu)
        if nrm == 0:
            raise ConvergenceError("U annihilates the iterate")
        if res <= tol * abs(lam):
            break
        psi = u / nrm
    else:
        raise ConvergenceError(f"power iteration stalled; residual {res:.3e}")
    if psi.min() <= 0:
        raise ConvergenceError("ground state iterate is not strictly positive")
    return SpectralResult(float(lam), psi, float(res), it)


def eigenpairs(op: FKOperator, mu, count: int | None = None,
               limit: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of U sorted by modulus (largest first).

    Uses the symmetric form (mu V)^(1/2) U (mu V)^(-1/2) when the pair is
    reversible: a dense solve up to `limit` states, ARPACK for the leading
    `count` pairs above it. Eigenvectors (columns) are normalized in l2(mu)
    with positive sum.
    """
    mu = np.asarray(mu, dtype=float)
    P = op.kernel.dense()
    V = op.V
    G = mu[:, None] * P
    reversible = np.allclose(G, G.T, rtol=0, atol=1e-14 * max(G.max(), 1e-300))
    if op.n > limit and not (reversible and count is not None and count < op.n - 1):
        raise InsufficientWindowError(f"dense eigensolve limited to {limit} states")
    if reversible:
        d = np.sqrt(mu * V)
        S = d[:, None] * (P / V[:, None]) / d[None, :]
        S = 0.5 * (S + S.T)
        if op.n > limit:
            vals, vecs = sparse_linalg.eigsh(S, k=count, which="LM", tol=1e-14)
        else:
            vals, vecs = linalg.eigh(S)
        vecs = vecs / d[:, None]
    else:
        vals, vecs = linalg.eig(P / V[:, None])
        vals, vecs = vals.real, vecs.real
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        v /= _mu_norm(v, mu)
        if v.sum() < 0:
            v *= -1
    if count is not None:
        vals, vecs = vals[:count], vecs[:, :count]
    return vals, vecs


def eigenfunction_decay_cert(op: FKOperator, lam: float, psi, c_star_interval,
                             lower: bool = True) -> BoundCertificate:
    """Certify |psi| for U psi = lam psi through the potential |lam| V.

    |psi| is subharmonic for (|lam| V)^-1 P, so the upper bound applies;
    for the ground state it is harmonic and the lower bound is checked too.
    """
    if lam == 0:
        raise ConfigError("eigenvalue must be nonzero")
    outside = op.potential.outside_lower
    pot = Potential(abs(lam) * op.V, None, None if outside is None else abs(lam) * outside)
    op_l = FKOperator(op.kernel, pot)
    try:
        B0 = find_B0(op_l, c_star_interval[1])
        cert = bound_constants(op_l, B0, c_star_interval)
    except InsufficientWindowError as e:
        raise CertificateError(f"shifted potential is not confining on the window: {e}") from e
    if not B0:
        B0 = frozenset([op.space.origin])
    f = np.abs(np.asarray(psi, dtype=float))
    D = range(op.n) if lower else B0
    return verify_two_sided(op_l, B0, D, f, cert)


class AsymmetryReport(NamedTuple):
    asymmetry: float
    witness: tuple[int, int] | None


def self_adjoint_check(op: FKOperator, mu) -> AsymmetryReport:
    """max |<U e_y, e_x>_{mu V} - <e_y, U e_x>_{mu V}| = max |mu(x)P(x,y) - mu(y)P(y,x)|."""
    mu = np.asarray(mu, dtype=float)
    G = mu[:, None] * op.kernel.dense()
    D = np.abs(G - G.T)
    k = int(np.argmax(D))
    a = float(D.ravel()[k])
    if a == 0:
        return AsymmetryReport(0.0, None)
    i, j = divmod(k, op.n)
    return AsymmetryReport(a, (int(i), int(j)))
