"""Sub-probability kernels on truncated spaces.

A `Kernel` stores P(x, y) for all pairs of guard-window states together
with ``row_tail(x)``, an upper bound on the mass P(x, .) sends outside the
window. ``col_exterior(y)``, when known, bounds sup_{z outside} P(z, y); it
is what the DSP module needs to bound the middle sum that truncation of
P_2 misses.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, sparse, special

from .errors import CapacityError, ConfigError, PositivityError, SummabilityError
from .space import TruncatedSpace, WeightedGraph

EPS_NUM = 1e-12
DENSE_LIMIT = 4000
MAX_ENTRIES = 2 * 10**7
KINDS = ("nearest_neighbour", "profile", "subordinate", "product", "generic")


@dataclass(frozen=True, eq=False)
class Kernel:
    """Nonnegative matrix over a window plus tail bookkeeping.

    Parameters
    ----------
    space : TruncatedSpace
    matrix : ndarray or scipy.sparse.csr_matrix
        P(x, y) for guard-window states, shape (n, n).
    row_tail : ndarray
        Upper bound on sum_{y outside} P(x, y) for every row.
    kind : str
        One of `KINDS`.
    col_exterior : ndarray, optional
        Upper bound on sup_{z outside} P(z, y) for every column.
    profile : callable, optional
        For isotropic kernels, P as a function of distance.
    raw : bool
        Skip the sub-probability check (used for unnormalized kernels).
    """

    space: TruncatedSpace
    matrix: np.ndarray | sparse.csr_matrix
    row_tail: np.ndarray
    kind: str = "generic"
    col_exterior: np.ndarray | None = None
    profile: Callable | None = None
    raw: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.space.n
        m = self.matrix
        if sparse.issparse(m):
            m = sparse.csr_matrix(m, dtype=float)
            data = m.data
        else:
            m = np.asarray(m, dtype=float)
            data = m
        if m.shape != (n, n):
            raise ConfigError(f"matrix shape {m.shape} does not match {n} states")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if data.size and (not np.all(np.isfinite(data)) or data.min() < 0):
            raise ConfigError("kernel entries must be finite and nonnegative")
        tail = np.asarray(self.row_tail, dtype=float)
        if tail.shape != (n,) or np.any(tail < 0):
            raise ConfigError("row_tail must be a nonnegative vector")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "row_tail", tail)
        if not self.raw:
            mass = self.row_sums + tail
            if mass.max(initial=0.0) > 1 + EPS_NUM:
                raise ConfigError(
                    f"row mass {mass.max():.17g} exceeds 1 at index {int(np.argmax(mass))}")

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix

    @property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    @property
    def truncation_loss(self) -> np.ndarray:
        """delta(x) = 1 - (row sum + row_tail), clipped at zero."""
        return np.maximum(1.0 - self.row_sums - self.row_tail, 0.0)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(P f)(x) for f given on the window and zero outside."""
        return np.asarray(self.matrix @ np.asarray(f, dtype=float)).ravel()

    def apply_transpose(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix.T @ np.asarray(g, dtype=float)).ravel()

    def entry(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def row(self, i: int) -> np.ndarray:
        if self.is_sparse:
            return self.matrix.getrow(i).toarray().ravel()
        return self.matrix[i]

    def squared(self):
        """Window-truncated two-step matrix sum_{z in window} P(x,z)P(z,y)."""
        return self.matrix @ self.matrix


def _check_capacity(n: int, dense_entries: bool = True):
    if dense_entries and n * n > MAX_ENTRIES:
        raise CapacityError(
            f"{n} states need {n * n} stored entries (budget {MAX_ENTRIES})")


def _store(mat: np.ndarray):
    """Dense below DENSE_LIMIT states, CSR above."""
    return sparse.csr_matrix(mat) if mat.shape[0] > DENSE_LIMIT else mat


def identity_kernel(space: TruncatedSpace) -> Kernel:
    mat = sparse.identity(space.n, format="csr") if space.n > DENSE_LIMIT \
        else np.eye(space.n)
    return Kernel(space, mat, np.zeros(space.n), "generic",
                  col_exterior=np.zeros(space.n))


def generic_kernel(space: TruncatedSpace, matrix, row_tail=None,
                   raw: bool = False, **meta) -> Kernel:
    """Wrap a user matrix; `row_tail` defaults to zero (finite support)."""
    tail = np.zeros(space.n) if row_tail is None else row_tail
    return Kernel(space, matrix, tail, "generic", raw=raw, meta=dict(meta))


def nn_kernel(graph: WeightedGraph) -> Kernel:
    """Nearest-neighbour walk P(x, y) = b(x, y) / b(x).

    Edges leaving the window are accounted for in ``row_tail``.
    """
    b = graph.degree
    mat = sparse.diags(1.0 / b) @ graph.weights
    mat = sparse.csr_matrix(mat)
    tail = graph.escaped / b
    # a state outside reaches y only along an escaped edge of y
    col = np.where(graph.escaped > 0,
                   np.minimum(graph.escaped / b.min(), 1.0), 0.0)
    store = mat if graph.space.n > DENSE_LIMIT else mat.toarray()
    m_nn = float(mat.data.min()) if mat.nnz else 0.0
    return Kernel(graph.space, store, tail, "nearest_neighbour",
                  col_exterior=col, meta={"M_nn": m_nn, "graph": graph})


def shell_counts(dimension: int, t: np.ndarray, metric: str = "l1") -> np.ndarray:
    """Number of lattice points at distance exactly t from the origin."""
    t = np.asarray(t, dtype=np.int64)
    out = np.zeros(t.shape, dtype=float)
    if metric == "linf":
        out = (2.0 * t + 1) ** dimension - np.maximum(2.0 * t - 1, 0) ** dimension
    else:
        for k in range(1, dimension + 1):
            # 2^k C(d,k) C(t-1,k-1)
            out += 2.0**k * math.comb(dimension, k) * np.rint(special.comb(t - 1, k - 1))
    return np.where(t == 0, 1.0, out)


def _shell_envelope(dimension: int, metric: str) -> float:
    """A with N(t) <= A t^(d-1) for t >= 1."""
    if metric == "linf":
        return 2.0 * dimension * 3.0 ** (dimension - 1)
    return sum(2.0**k * math.comb(dimension, k) / math.factorial(k - 1)
               for k in range(1, dimension + 1))


def _vectorize(fn: Callable) -> Callable:
    def wrapped(t):
        t = np.asarray(t, dtype=float)
        try:
            out = np.asarray(fn(t), dtype=float)
            if out.shape == t.shape:
                return out
        except Exception:
            pass
        return np.array([float(fn(float(s))) for s in t.ravel()]).reshape(t.shape)
    return wrapped


def lattice_profile_mass(h: Callable, dimension: int, t_cut: int,
                         metric: str = "l1") -> tuple[float, float]:
    """Return (sum_{|y| <= t_cut} h(|y|), upper bound on the rest).

    The remainder uses N(t) <= A t^(d-1) and, for nonincreasing h,
    sum_{t > T} t^(d-1) h(t) <= int_T^inf (s+1)^(d-1) h(s) ds, integrated on
    dyadic blocks. Geometric extrapolation closes the sum once blocks decay.
    """
    t = np.arange(t_cut + 1)
    head = math.fsum(shell_counts(dimension, t, metric) * h(t))
    A = _shell_envelope(dimension, metric)
    d = dimension

    def integrand(s):
        return (s + 1.0) ** (d - 1) * float(h(np.array([s]))[0])

    blocks = []
    a = float(t_cut)
    for _ in range(400):
        val, _err = integrate.quad(integrand, a, 2 * a, limit=200)
        if not np.isfinite(val):
            raise SummabilityError("profile tail integral is not finite")
        blocks.append(val)
        a *= 2
        if len(blocks) >= 3 and val <= 1e-18 * max(head, 1e-300):
            break
    r = blocks[-1] / blocks[-2] if blocks[-2] > 0 else 0.0
    if r >= 1 - 1e-9:
        raise SummabilityError(
            f"profile blocks do not decay (ratio {r:.6f}); not summable in dimension {d}")
    tail = A * (math.fsum(blocks) + blocks[-1] * r / (1 - r))
    return head, tail


def profile_kernel(space: TruncatedSpace, J: Callable, K: Callable | None = None,
                   t_cut: int | None = None) -> Kernel:
    """Isotropic kernel P(x, y) = J(d) K(d) / Z with one global normalizer.

    Z is the full-lattice sum of J K (head up to `t_cut` plus a certified
    tail bound), so every row of the infinite kernel has mass at most one
    and P depends on d(x, y) only.
    """
    if space.coords is None:
        raise ConfigError("profile kernels need a lattice space")
    _check_capacity(space.n)
    Jv = _vectorize(J)
    Kv = _vectorize(K) if K is not None else (lambda t: np.ones_like(np.asarray(t, float)))

    def h(t):
        return Jv(t) * Kv(t)

    probe = h(np.arange(0, 2 * space.guard_radius + 2))
    if np.any(probe <= 0) or np.any(np.diff(probe) > 1e-15 * probe[:-1]):
        raise ConfigError("profile must be positive and nonincreasing")
    cut = t_cut if t_cut is not None else max(4 * space.guard_radius, 1 << 14)
    head, tail = lattice_profile_mass(h, space.dimension, cut, space.metric)
    Z = head + tail
    dist = space.distance_matrix()
    table = h(np.arange(dist.max() + 1)) / Z
    mat = table[dist]
    window_rows = mat.sum(axis=1)
    row_tail = np.maximum(1.0 - window_rows, 0.0)
    col = (h(space.distance_to_exterior().astype(float)) / Z)

    def prof(t):
        return h(np.asarray(t, dtype=float)) / Z

    return Kernel(space, _store(mat), row_tail, "profile", col_exterior=col,
                  profile=prof,
                  meta={"Z": Z, "head": head, "tail_bound": tail, "t_cut": cut})


def _product_space(s1: TruncatedSpace, s2: TruncatedSpace) -> TruncatedSpace:
    if s1.coords is None or s2.coords is None:
        raise ConfigError("product kernels need lattice factors")
    if s1.metric != s2.metric:
        raise ConfigError("factor spaces must share a metric")
    pts = [p + q for p in s1.points for q in s2.points]
    mu = np.outer(s1.measure, s2.measure).ravel()
    origin = s1.origin * s2.n + s2.origin
    ext = np.minimum.outer(s1.distance_to_exterior(), s2.distance_to_exterior()).ravel()
    work = np.zeros((s1.n, s2.n), dtype=bool)
    work[np.ix_(s1.working, s2.working)] = True
    return TruncatedSpace(tuple(pts), min(s1.working_radius, s2.working_radius),
                          min(s1.guard_radius, s2.guard_radius), mu, origin,
                          s1.metric, meta={"kind": "product", "factors": (s1.n, s2.n)},
                          working_mask=work.ravel(), exterior_distance=ext)


def product_kernel(P1: Kernel, P2: Kernel) -> Kernel:
    """Independent-coordinate kernel P1(x1, y1) P2(x2, y2) via Kronecker product.

    The window is the box W1 x W2; a row loses whatever either factor
    sends outside its own window.
    """
    n = P1.n * P2.n
    _check_capacity(n, dense_entries=not (P1.is_sparse and P2.is_sparse))
    space = _product_space(P1.space, P2.space)
    if P1.is_sparse or P2.is_sparse or n > DENSE_LIMIT:
        mat = sparse.kron(sparse.csr_matrix(P1.matrix), sparse.csr_matrix(P2.matrix),
                          format="csr")
        if n <= DENSE_LIMIT:
            mat = mat.toarray()
    else:
        mat = np.kron(P1.matrix, P2.matrix)
    # mass leaving the box: (r1 + t1)(r2 + t2) - r1 r2
    r1, r2, t1, t2 = P1.row_sums, P2.row_sums, P1.row_tail, P2.row_tail
    tail = (np.outer(r1, t2) + np.outer(t1, r2) + np.outer(t1, t2)).ravel()
    col = None
    if P1.col_exterior is not None and P2.col_exterior is not None:
        m1 = np.maximum(np.asarray(P1.matrix.max(axis=0).toarray()).ravel()
                        if P1.is_sparse else P1.matrix.max(axis=0), P1.col_exterior)
        m2 = np.maximum(np.asarray(P2.matrix.max(axis=0).toarray()).ravel()
                        if P2.is_sparse else P2.matrix.max(axis=0), P2.col_exterior)
        col = np.maximum(np.outer(P1.col_exterior, m2),
                         np.outer(m1, P2.col_exterior)).ravel()
    return Kernel(space, mat, np.minimum(tail, 1.0), "product", col_exterior=col,
                  meta={"factors": (P1.kind, P2.kind)})


def compose(P: Kernel, Q: Kernel) -> Kernel:
    """(PQ)(x, y) = sum_{z in window} P(x, z) Q(z, y).

    Tail: mass leaving after the second step, P @ tail_Q, plus mass that
    left at the first step, tail_P times the largest total row mass of Q.
    """
    if P.space is not Q.space:
        raise ConfigError("compose needs kernels on the same space")
    _check_capacity(P.n, dense_entries=not (P.is_sparse and Q.is_sparse))
    mat = P.matrix @ Q.matrix
    if sparse.issparse(mat):
        mat = sparse.csr_matrix(mat)
        if P.n <= DENSE_LIMIT and not (P.is_sparse and Q.is_sparse):
            mat = mat.toarray()
    q_mass = max(1.0, float((Q.row_sums + Q.row_tail).max())) if Q.raw else 1.0
    tail = P.row_tail * q_mass + P.apply(Q.row_tail)
    kind = P.kind if P.kind == Q.kind else "generic"
    return Kernel(P.space, mat, tail, kind, raw=P.raw or Q.raw,
                  meta={"composed": (P.kind, Q.kind)})


def n_step(P: Kernel, n: int) -> Kernel:
    """P_n by iterated composition (P_1 = P)."""
    if n < 1:
        raise ConfigError("n must be a positive integer")
    out = P
    for _ in range(n - 1):
        out = compose(out, P)
    return out


def normalize_general(P_raw: Kernel) -> tuple[Kernel, float, float]:
    """Rescale a positive kernel with finite M1, M2 to a sub-probability kernel.

    Returns ``(P_tilde, M1, M2)`` with P_tilde = P_raw / M1. The DSP constant
    of P_tilde is M2 / M1 (recorded as ``meta["c_star_exact"]``); the product
    M1 * M2 is recorded as ``meta["c_star_declared"]`` and dominates it
    whenever M1 >= 1.
    """
    dense = P_raw.dense()
    if np.any(dense <= 0):
        i, j = np.argwhere(dense <= 0)[0]
        raise PositivityError(f"zero entry P({i},{j})")
    M1 = float((P_raw.row_sums + P_raw.row_tail).max())
    two = dense @ dense
    M2 = float((two / dense).max())
    mat = dense / M1
    tilde = Kernel(P_raw.space, _store(mat), P_raw.row_tail / M1, "generic",
                   col_exterior=None if P_raw.col_exterior is None
                   else P_raw.col_exterior / M1,
                   meta={"M1": M1, "M2": M2, "c_star_exact": M2 / M1,
                         "c_star_declared": M1 * M2})
    return tilde, M1, M2


class ReversibilityReport(NamedTuple):
    reversible: bool
    violation: float
    witness: tuple[int, int] | None


def check_reversible(P: Kernel, mu: np.ndarray, tol: float = 1e-12) -> ReversibilityReport:
    """sup over working pairs of |mu(x)P(x,y) - mu(y)P(y,x)|."""
    mu = np.asarray(mu, dtype=float)
    w = P.space.working
    A = P.dense()[np.ix_(w, w)] * mu[w, None]
    diff = np.abs(A - A.T)
    k = int(np.argmax(diff)) if diff.size else 0
    viol = float(diff.ravel()[k]) if diff.size else 0.0
    witness = None
    if viol > 0:
        i, j = divmod(k, len(w))
        witness = (int(w[i]), int(w[j]))
    return ReversibilityReport(viol <= tol, viol, witness)
