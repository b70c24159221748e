"""Feynman-Kac operator U f = V^-1 P f and the decay certificates built on it.

Functions live on the guard window and are extended by zero outside, so
every window sum is exact for them. `truncation_residual` gives the extra
error for a bounded function whose extension is not zero.

Certification compares a computed f with the exact harmonic extension f*
of f restricted to B (window-killed). With I = window minus B and
U_I = V^-1 P restricted to I,

    f - f* = (I - U_I)^-1 (f - U f)   on I,

and since U_I 1 <= q < 1 the difference is bounded pointwise by
``defect + (U_I 1) * max(defect) / (1 - q)``. These are the guard bands
used by `verify_two_sided`, `proof_iteration_check` and `bhi_check`.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .dsp import kb_bounds
from .errors import (CertificateError, ConfigError, ConvergenceError, InsufficientWindowError,
                     NoConvergenceError, PositivityError, PreconditionError)
from .kernel import Kernel, _vectorize
from .space import TruncatedSpace

B0_MARGIN = 1e-9
TAGS = ("harmonic", "subharmonic", "superharmonic", "neither")


@dataclass(frozen=True, eq=False)
class Potential:
    """Killing potential 0 < V <= inf on the window.

    Parameters
    ----------
    values : ndarray
    profile : (x0, W), optional
        V(x) = W(d(x0, x)) with W increasing.
    outside_lower : float, optional
        Lower bound for V outside the window (confinement certificate).
    """

    values: np.ndarray
    profile: tuple | None = None
    outside_lower: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        # +inf is allowed and means immediate killing
        if v.ndim != 1 or np.any(np.isnan(v)) or v.min(initial=1.0) <= 0:
            raise ConfigError("potential must be strictly positive")
        object.__setattr__(self, "values", v)

    @classmethod
    def radial(cls, space: TruncatedSpace, W: Callable, x0: int | None = None,
               outside_lower: float | None = None) -> "Potential":
        x0 = space.origin if x0 is None else x0
        Wv = _vectorize(W)
        grid = np.arange(0, space.guard_radius + 2, dtype=float)
        w = Wv(grid)
        if np.any(np.diff(w) < 0):
            raise ConfigError("radial profile W must be nondecreasing")
        d = space.distances_from(x0)
        if outside_lower is None:
            outside_lower = float(w[-1])
        return cls(Wv(d.astype(float)), (x0, Wv), outside_lower)

    @classmethod
    def constant(cls, space: TruncatedSpace, c: float) -> "Potential":
        return cls(np.full(space.n, float(c)), None, float(c))

    @classmethod
    def from_function(cls, space: TruncatedSpace, fn: Callable,
                      outside_lower: float | None = None) -> "Potential":
        vals = np.array([float(fn(p)) for p in space.points])
        return cls(vals, None, outside_lower)


@dataclass(frozen=True, eq=False)
class FKOperator:
    kernel: Kernel
    potential: Potential

    def __post_init__(self):
        if self.potential.values.shape != (self.kernel.n,):
            raise ConfigError("potential and kernel live on different windows")

    @property
    def space(self) -> TruncatedSpace:
        return self.kernel.space

    @property
    def V(self) -> np.ndarray:
        return self.potential.values

    @property
    def n(self) -> int:
        return self.kernel.n


def apply_U(op: FKOperator, f) -> np.ndarray:
    """U f(x) = V(x)^-1 sum_y P(x, y) f(y), f zero outside the window."""
    return op.kernel.apply(f) / op.V


def truncation_residual(op: FKOperator, f) -> np.ndarray:
    """Bound on |U f - U_window f| for an arbitrary extension with the same sup norm."""
    norm = float(np.abs(np.asarray(f, dtype=float)).max(initial=0.0))
    return norm * op.kernel.row_tail / op.V


def semigroup_apply(op: FKOperator, f, n: int) -> np.ndarray:
    """U_n f; U_0 is the identity."""
    if n < 0:
        raise ConfigError("n must be nonnegative")
    u = np.asarray(f, dtype=float).copy()
    for _ in range(n):
        u = apply_U(op, u)
    return u


def cauchy_evolution(op: FKOperator, f, n: int) -> np.ndarray:
    """Rows u(0), ..., u(n) of u(k+1) = u(k) + (U - I) u(k)."""
    out = np.empty((n + 1, op.n))
    out[0] = f
    for k in range(n):
        out[k + 1] = apply_U(op, out[k])
    return out


def apply_conjugate_W(op: FKOperator, g) -> np.ndarray:
    """W g(x) = sum_y P(x, y) g(y) / V(y)."""
    return op.kernel.apply(np.asarray(g, dtype=float) / op.V)


def conjugate_semigroup_apply(op: FKOperator, g, n: int) -> np.ndarray:
    """W_n g = (P V^-1)^n g."""
    if n < 0:
        raise ConfigError("n must be nonnegative")
    u = np.asarray(g, dtype=float).copy()
    for _ in range(n):
        u = apply_conjugate_W(op, u)
    return u


def adjoint_defect(op: FKOperator, f, g, mu) -> tuple[float, float]:
    """Return (|<g, Uf>_mu - <Wg, f>_mu|, |<g, Uf>_{mu V} - <Ug, f>_{mu V}|)."""
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    Uf, Ug, Wg = apply_U(op, f), apply_U(op, g), apply_conjugate_W(op, g)
    a = abs(math.fsum(mu * g * Uf) - math.fsum(mu * Wg * f))
    muV = mu * op.V
    b = abs(math.fsum(muV * g * Uf) - math.fsum(muV * Ug * f))
    return a, b


class Harmonicity(NamedTuple):
    points: np.ndarray
    tags: np.ndarray
    defect: np.ndarray
    band: np.ndarray

    def all_in(self, *tags) -> bool:
        return bool(np.isin(self.tags, tags).all())

    @property
    def subharmonic(self) -> bool:
        return self.all_in("harmonic", "subharmonic")

    @property
    def superharmonic(self) -> bool:
        return self.all_in("harmonic", "superharmonic")


def classify_harmonicity(op: FKOperator, f, D: Iterable[int], tol: float = 1e-9,
                         extension: str = "zero") -> Harmonicity:
    """Tag each x in D by the sign of (U - I) f(x).

    The band is `tol`, widened by the truncation residual when
    ``extension="bounded"`` (f not known to vanish outside the window).
    """
    D = np.array(sorted(int(x) for x in D), dtype=np.int64)
    f = np.asarray(f, dtype=float)
    h = (apply_U(op, f) - f)[D]
    band = np.full(D.size, float(tol))
    if extension == "bounded":
        band = band + truncation_residual(op, f)[D]
    elif extension != "zero":
        raise ConfigError("extension must be 'zero' or 'bounded'")
    tags = np.where(~np.isfinite(h), "neither",
                    np.where(np.abs(h) <= band, "harmonic",
                             np.where(h > 0, "subharmonic", "superharmonic")))
    return Harmonicity(D, tags, h, band)


def _outside_level(op: FKOperator) -> tuple[float, bool]:
    """Lower bound for V outside the window, and whether it is certified."""
    if op.potential.outside_lower is not None:
        return float(op.potential.outside_lower), True
    shell = op.space.shell
    return float(op.V[shell].min()), False


def find_B0(op: FKOperator, c_star_high: float, margin: float = B0_MARGIN) -> frozenset:
    """Smallest ball B_r(origin) with sup_{outside B_r} 1/V < min(1, 1/C*) - margin."""
    thr = min(1.0, 1.0 / c_star_high) - margin
    if thr <= 0:
        raise ConfigError("C* too large for the margin")
    level, _ = _outside_level(op)
    if not 1.0 / level < thr:
        raise InsufficientWindowError(
            f"V outside the window is only known to exceed {level:.6g}; need > {1 / thr:.6g}",
            required_level=1.0 / thr)
    d = op.space.dist_origin
    bad = 1.0 / op.V >= thr
    r = int(d[bad].max()) + 1 if bad.any() else 0
    if r > op.space.working_radius:
        raise InsufficientWindowError(
            f"B0 radius {r} exceeds the working radius", required_level=1.0 / thr)
    return frozenset(int(i) for i in np.nonzero(d < r)[0])


@dataclass
class BoundCertificate:
    """Constants of the upper/lower bounds plus a per-point table.

    ``table`` maps column names (x_idx, f, lower, upper, pass) to arrays.
    """

    B0: frozenset
    C1: float
    c2: float
    C2: float
    c_star_interval: tuple[float, float]
    C1_certified: bool = True
    k_lower: float | None = None
    k_upper: float | None = None
    table: dict | None = None
    checks: dict = field(default_factory=dict)

    @property
    def c_star_high(self) -> float:
        return self.c_star_interval[1]

    @property
    def passed(self) -> bool:
        ok = all(bool(v) for v in self.checks.values())
        if self.table is not None:
            ok = ok and bool(np.all(self.table["pass"]))
        return ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["B0"] = sorted(self.B0)
        d["c_star_interval"] = list(self.c_star_interval)
        d.pop("table")
        d["passed"] = self.passed
        if self.table is not None:
            d["n_points"] = int(len(self.table["x_idx"]))
            d["n_fail"] = int(np.sum(~np.asarray(self.table["pass"])))
        return d


def bound_constants(op: FKOperator, B0: Iterable[int], c_star_interval) -> BoundCertificate:
    """C1 = sup_{B0^c} 1/V, c2 = C1 max(1, C*), C2 = 1 + C* c2 / (1 - c2).

    Uses the upper end of the C* interval.
    """
    B0 = frozenset(int(b) for b in B0)
    lo, hi = (float(c) for c in c_star_interval)
    if not (0 < lo <= hi and np.isfinite(hi)):
        raise CertificateError(f"invalid C* interval ({lo}, {hi})")
    mask = np.ones(op.n, dtype=bool)
    mask[list(B0)] = False
    level, certified = _outside_level(op)
    inner = float((1.0 / op.V[mask]).max()) if mask.any() else 0.0
    C1 = max(inner, 1.0 / level)
    c2 = C1 * max(1.0, hi)
    if c2 >= 1:
        raise CertificateError(f"c2 = {c2:.6g} >= 1; enlarge B0")
    C2 = 1.0 + hi * c2 / (1.0 - c2)
    return BoundCertificate(B0, C1, c2, C2, (lo, hi), certified)


@dataclass(frozen=True)
class HarmonicSolution:
    f: np.ndarray
    sweeps: int
    changes: np.ndarray
    q: float
    residual: float
    dense_check: float | None


def _split(op: FKOperator, B, D):
    Bm = np.zeros(op.n, dtype=bool)
    Bm[list(B)] = True
    Dm = np.zeros(op.n, dtype=bool)
    Dm[list(D)] = True
    return Bm, Dm & ~Bm


def interior_rate(op: FKOperator, interior: np.ndarray) -> np.ndarray:
    """(U_I 1)(x) = sum_{y in I} P(x, y) / V(x) for x in I."""
    ind = interior.astype(float)
    return op.kernel.apply(ind) / op.V * ind


def solve_harmonic(op: FKOperator, B: Iterable[int], D: Iterable[int], boundary_data,
                   eps: float = 1e-12, max_sweeps: int = 10_000,
                   dense_limit: int = 1000) -> HarmonicSolution:
    """Sweep iteration f <- U f on D minus B, f = data on B, f = 0 elsewhere.

    The iteration contracts with rate q = max_I (U_I 1) < 1. It stops when
    the sup change falls below eps * max|data| * (1 - q), or when rounding
    noise stops the decrease.
    """
    Bm, Im = _split(op, B, D)
    data = np.asarray(boundary_data, dtype=float)
    if data.shape == (op.n,):
        data = data[Bm]
    if data.shape != (int(Bm.sum()),):
        raise ConfigError("boundary data must match |B| (or the window size)")
    q = float(interior_rate(op, Im).max(initial=0.0))
    if q >= 1:
        raise NoConvergenceError(f"no contraction certificate: q = {q:.6g} >= 1")
    f = np.zeros(op.n)
    f[Bm] = data
    scale = float(np.abs(data).max(initial=0.0))
    changes = []
    if scale > 0 and Im.any():
        stop = eps * scale * (1 - q)
        floor = 64 * np.finfo(float).eps * scale
        for _ in range(max_sweeps):
            new = np.where(Im, apply_U(op, f), f)
            ch = float(np.abs(new - f).max())
            if not np.isfinite(ch):
                raise ConvergenceError("iteration produced non-finite values")
            f = new
            changes.append(ch)
            if ch <= stop or ch == 0.0:
                break
            # rounding floor: changes stop shrinking
            if len(changes) > 1 and ch <= floor and ch >= changes[-2]:
                break
        else:
            raise ConvergenceError(f"no convergence after {max_sweeps} sweeps")
    resid = float(np.abs((apply_U(op, f) - f)[Im]).max(initial=0.0))
    dense = None
    if 0 < Im.sum() <= dense_limit:
        I = np.nonzero(Im)[0]
        Pm = op.kernel.dense()
        A = np.diag(op.V[I]) - Pm[np.ix_(I, I)]
        rhs = Pm[np.ix_(I, np.nonzero(Bm)[0])] @ data
        sol = linalg.solve(A, rhs)
        dense = float(np.abs(sol - f[I]).max())
    return HarmonicSolution(f, len(changes), np.asarray(changes), q, resid, dense)


class Bands(NamedTuple):
    sub: np.ndarray
    sup: np.ndarray
    q: float


def defect_bands(op: FKOperator, B: Iterable[int], f) -> Bands:
    """Pointwise bounds on (f - f*)^+ and (f* - f)^+ on I = window minus B."""
    f = np.asarray(f, dtype=float)
    Bm, Im = _split(op, B, range(op.n))
    rate = interior_rate(op, Im)
    q = float(rate.max(initial=0.0))
    if q >= 1:
        raise PreconditionError(f"window interior does not contract (q = {q:.6g})")
    r = np.where(Im, f - apply_U(op, f), 0.0)
    pos, neg = np.maximum(r, 0.0), np.maximum(-r, 0.0)
    sub = pos + rate * pos.max(initial=0.0) / (1 - q)
    sup = neg + rate * neg.max(initial=0.0) / (1 - q)
    return Bands(sub, sup, q)


def _b_sum(op: FKOperator, Bm: np.ndarray, f: np.ndarray) -> np.ndarray:
    return op.kernel.apply(np.where(Bm, f, 0.0)) / op.V


def verify_two_sided(op: FKOperator, B: Iterable[int], D: Iterable[int], f,
                     cert: BoundCertificate, rel_defect: float = 1e-8) -> BoundCertificate:
    """Per-point upper bound on B^c and lower bound on D minus B.

    upper(x) = C2 V^-1 sum_B P f + band, lower(x) = V^-1 sum_B P f - band;
    the K_B forms with x0 in B are checked alongside.
    """
    f = np.asarray(f, dtype=float)
    B = sorted(int(b) for b in B)
    if not set(cert.B0) <= set(B):
        raise PreconditionError("B must contain B0")
    if f.min(initial=0.0) < 0:
        raise PreconditionError("f must be nonnegative")
    Bm, Dm = _split(op, B, D)
    bands = defect_bands(op, B, f)
    norm = float(np.abs(f).max(initial=0.0))
    if bands.sub.max(initial=0.0) > rel_defect * max(norm, 1e-300) and norm > 0:
        raise PreconditionError("f is not subharmonic off B within tolerance")
    if bands.sup[Dm].max(initial=0.0) > rel_defect * max(norm, 1e-300) and norm > 0:
        raise PreconditionError("f is not superharmonic on D within tolerance")
    out = ~Bm
    S = _b_sum(op, Bm, f)
    upper = cert.C2 * S + bands.sub
    lower = np.where(Dm, S - bands.sup, -np.inf)
    x0 = op.space.origin if op.space.origin in B else B[0]
    rows = np.nonzero(out)[0]
    kb = kb_bounds(op.kernel, B, rows=rows)
    mass = math.fsum(f[Bm])
    base = op.kernel.dense()[:, x0] / op.V * mass
    upper_k = cert.C2 * kb.k_upper * base + bands.sub
    lower_k = np.where(Dm, kb.k_lower * base - bands.sup, -np.inf)
    ok = (f <= upper) & (f >= lower) & (f <= upper_k) & (f >= lower_k)
    cert.k_lower, cert.k_upper = kb.k_lower, kb.k_upper
    cert.table = {"x_idx": rows, "f": f[rows], "lower": lower[rows], "upper": upper[rows],
                  "pass": ok[rows], "lower_kb": lower_k[rows], "upper_kb": upper_k[rows],
                  "band_sub": bands.sub[rows], "band_sup": bands.sup[rows]}
    cert.checks["two_sided"] = bool(ok[rows].all())
    return cert


def proof_iteration_check(op: FKOperator, B: Iterable[int], f, cert: BoundCertificate,
                          n_max: int = 5) -> dict:
    """f(x) <= (c2 + ... + c2^n) sum_B P f + C1^n ||f|| on B^c, n = 1..n_max.

    Checked for the exact extension f* through the defect band. Returns the
    number of violations per n.
    """
    f = np.asarray(f, dtype=float)
    Bm, _ = _split(op, B, [])
    bands = defect_bands(op, B, f)
    S = op.kernel.apply(np.where(Bm, f, 0.0))
    norm = float(f.max(initial=0.0) + bands.sup.max(initial=0.0))
    out = ~Bm
    res = {}
    for n in range(1, n_max + 1):
        geo = sum(cert.c2**k for k in range(1, n + 1))
        rhs = geo * S + cert.C1**n * norm
        res[n] = int(np.sum((f - bands.sub > rhs)[out]))
    cert.checks["proof_iteration"] = all(v == 0 for v in res.values())
    return res


def bhi_ratio(f, g, region: Iterable[int]) -> tuple[float, float]:
    """Extremes of f(x) g(y) / (g(x) f(y)) over region x region."""
    idx = np.array(sorted(int(x) for x in region), dtype=np.int64)
    f = np.asarray(f, dtype=float)[idx]
    g = np.asarray(g, dtype=float)[idx]
    if np.any(f <= 0) or np.any(g <= 0):
        raise PositivityError("functions must be positive on the region")
    h = f / g
    return float(h.min() / h.max()), float(h.max() / h.min())


def bhi_envelope(cert: BoundCertificate) -> tuple[float, float]:
    e = (cert.C2 * cert.k_upper / cert.k_lower) ** 2
    return 1.0 / e, e


def bhi_check(f, g, region, cert: BoundCertificate, band_f=None, band_g=None) -> dict:
    """Double ratios widened by the guard bands, against the certified envelope."""
    idx = np.array(sorted(int(x) for x in region), dtype=np.int64)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    bf = np.zeros_like(f) if band_f is None else np.asarray(band_f)
    bg = np.zeros_like(g) if band_g is None else np.asarray(band_g)
    lo_f, hi_f = (f - bf)[idx], (f + bf)[idx]
    lo_g, hi_g = (g - bg)[idx], (g + bg)[idx]
    if np.any(lo_f <= 0) or np.any(lo_g <= 0):
        raise PositivityError("band-widened functions must stay positive")
    h_lo, h_hi = lo_f / hi_g, hi_f / lo_g
    rmin, rmax = float(h_lo.min() / h_hi.max()), float(h_hi.max() / h_lo.min())
    env = bhi_envelope(cert)
    ok = env[0] <= rmin and rmax <= env[1]
    return {"min_ratio": rmin, "max_ratio": rmax, "envelope": env, "pass": bool(ok)}
