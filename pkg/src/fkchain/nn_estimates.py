"""Product bounds for nearest-neighbour chains and decay-rate tables.

All products of 1/W(i) are carried as log sums (``math.fsum``); the values
reach 1e-300 within a few hundred steps for exponential profiles.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientDataError, PositivityError, PreconditionError
from .kernel import _vectorize
from .space import build_lattice, TruncatedSpace

FAMILIES = ("exp_power", "power", "log_power", "custom")
ROUNDING = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class ProfileW:
    """Increasing radial profile W with log W regularly varying of index rho."""

    rho: float
    family: str
    evaluator: Callable
    log_evaluator: Callable
    label: str = ""

    def __call__(self, n):
        return self.evaluator(np.asarray(n, dtype=float))

    def log(self, n) -> np.ndarray:
        return self.log_evaluator(np.asarray(n, dtype=float))

    @classmethod
    def power(cls, p: float) -> "ProfileW":
        """W(n) = max(n, 1)^p; log W is slowly varying."""
        if p <= 0:
            raise ConfigError("power profile needs p > 0")
        return cls(0.0, "power", lambda n: np.maximum(n, 1.0) ** p,
                   lambda n: p * np.log(np.maximum(n, 1.0)), f"n^{p:g}")

    @classmethod
    def exp_power(cls, c: float, p: float) -> "ProfileW":
        """W(n) = exp(c n^p); log W has index p."""
        if c <= 0 or p <= 0:
            raise ConfigError("exp_power profile needs c, p > 0")
        return cls(float(p), "exp_power", lambda n: np.exp(c * n**p), lambda n: c * n**p,
                   f"exp({c:g} n^{p:g})")

    @classmethod
    def log_power(cls, p: float) -> "ProfileW":
        """W(n) = log(n + e)^p."""
        if p <= 0:
            raise ConfigError("log_power profile needs p > 0")
        return cls(0.0, "log_power", lambda n: np.log(n + math.e) ** p,
                   lambda n: p * np.log(np.log(n + math.e)), f"log(n+e)^{p:g}")

    @classmethod
    def custom(cls, func: Callable, rho: float, log_func: Callable | None = None,
               label: str = "custom") -> "ProfileW":
        f = _vectorize(func)
        lf = _vectorize(log_func) if log_func is not None else (lambda n: np.log(f(n)))
        return cls(float(rho), "custom", f, lf, label)


def _log_sum(W: ProfileW, lo: int, hi: int) -> tuple[float, float]:
    """(sum_{i=lo}^{hi} log W(i), sum of absolute values)."""
    if hi < lo:
        return 0.0, 0.0
    terms = W.log(np.arange(lo, hi + 1))
    return math.fsum(terms), math.fsum(np.abs(terms))


def log_product_upper_bound(W: ProfileW, r: int, n: int, m1: float = 1.0) -> float:
    """log prod_{i=r}^{n} m1 / W(i)."""
    if n < r:
        raise ConfigError("need n >= r")
    if m1 < 1:
        raise ConfigError("m1 must be at least 1")
    s, _ = _log_sum(W, r, n)
    return (n - r + 1) * math.log(m1) - s


def product_upper_bound(W: ProfileW, r: int, n: int, m1: float = 1.0) -> float:
    return math.exp(log_product_upper_bound(W, r, n, m1))


def log_product_lower_bound(W: ProfileW, r: int, n: int, M_nn: float) -> float:
    """log prod_{i=r+1}^{n} M_nn / W(i)."""
    if not M_nn > 0:
        raise PositivityError(f"p0-condition fails: M_nn = {M_nn}")
    if M_nn > 1:
        raise ConfigError("M_nn cannot exceed 1")
    if n < r:
        raise ConfigError("need n >= r")
    s, _ = _log_sum(W, r + 1, n)
    return (n - r) * math.log(M_nn) - s


def product_lower_bound(W: ProfileW, r: int, n: int, M_nn: float) -> float:
    return math.exp(log_product_lower_bound(W, r, n, M_nn))


def nagaev_ratio(g: Callable, rho: float, n: int) -> float:
    """sum_{k<=n} g(k) divided by n g(n) / (1 + rho)."""
    k = np.arange(1, n + 1, dtype=float)
    vals = _vectorize(g)(k)
    if np.any(vals <= 0):
        raise PositivityError("g must be positive on 1..n")
    return math.fsum(vals) / (n * vals[-1] / (1 + rho))


@dataclass(frozen=True)
class DecayCheck:
    expected: float
    classes: list
    means: np.ndarray
    deviations: np.ndarray
    monotone: bool
    band: float
    passes: bool


def asymptotic_decay_check(log_f, space: TruncatedSpace, W: ProfileW, x0: int | None = None,
                           r1: int = 20, r2: int | None = None, band: float = 0.15) -> DecayCheck:
    """log f(x) / (d log W(d)) over dyadic distance classes [r1 2^k, r1 2^(k+1)).

    `log_f` is log f on the window (logs avoid underflow). Passes when the
    class means approach -1/(1 + rho) monotonically and the last one lies
    within `band`.
    """
    x0 = space.origin if x0 is None else x0
    r2 = space.guard_radius if r2 is None else r2
    if not (r2 >= 2 * r1 >= 40):
        raise InsufficientDataError(f"annulus [{r1}, {r2}] too thin; need r2 >= 2 r1 >= 40")
    grid = np.arange(r1, r2 + 1, dtype=float)
    lw = W.log(grid)
    if np.any(np.diff(lw) <= 0) or lw[0] <= 0:
        raise PreconditionError("W must increase (and exceed 1) on the annulus")
    d = space.distances_from(x0)
    log_f = np.asarray(log_f, dtype=float)
    expected = -1.0 / (1.0 + W.rho)
    classes, means = [], []
    lo = r1
    while 2 * lo <= r2 + 1:
        hi = 2 * lo
        sel = (d >= lo) & (d < hi)
        if not sel.any():
            break
        dd = d[sel].astype(float)
        rates = log_f[sel] / (dd * W.log(dd))
        classes.append((lo, hi))
        means.append(float(np.mean(rates)))
        lo = hi
    if len(means) < 2:
        raise InsufficientDataError("fewer than two dyadic classes")
    means = np.asarray(means)
    dev = np.abs(means - expected)
    monotone = bool(np.all(np.diff(dev) <= 0))
    return DecayCheck(expected, classes, means, dev, monotone, band,
                      bool(monotone and dev[-1] <= band))


KERNEL_CLASSES = ("nearest_neighbour", "polynomial", "exponential")


def decay_table(kernel_class: str, W: ProfileW, distances, gamma: float | None = None,
                c: float | None = None) -> list[dict]:
    """Closed-form decay rates of harmonic functions per distance.

    nearest_neighbour: exp(-d log W(d) / (1 + rho));
    polynomial(gamma): d^-gamma / W(d); exponential(c): e^(-c d) / W(d).
    """
    d = np.asarray(list(distances), dtype=float)
    if np.any(d < 1):
        raise ConfigError("distances must be positive")
    lw = W.log(d)
    if kernel_class == "nearest_neighbour":
        lr = -d * lw / (1 + W.rho)
    elif kernel_class == "polynomial":
        if gamma is None or gamma <= 0:
            raise ConfigError("polynomial class needs gamma > 0")
        lr = -gamma * np.log(d) - lw
    elif kernel_class == "exponential":
        if c is None or c <= 0:
            raise ConfigError("exponential class needs c > 0")
        lr = -c * d - lw
    else:
        raise ConfigError(f"unknown kernel class {kernel_class!r}")
    return [{"d": int(di), "rate": float(np.exp(li)), "log_rate": float(li),
             "class": kernel_class, "W_family": W.family} for di, li in zip(d, lr)]


@dataclass(frozen=True)
class NNHarmonic:
    """Harmonic function of the simple walk on a Z^1 window, stored as logs."""

    space: TruncatedSpace
    log_f: np.ndarray
    r: int
    rounding: np.ndarray

    @property
    def f(self) -> np.ndarray:
        return np.exp(self.log_f)


def z1_nn_harmonic(W: ProfileW, r: int, radius: int, boundary, p: float = 0.5) -> NNHarmonic:
    """Solve f = V^-1 P f on r <= |x| <= radius, f given on |x| < r, f = 0 beyond.

    Backward ratios q(x) = f(x)/f(x-1) satisfy q(x) = p / (V(x) - p q(x+1))
    with q(radius + 1) = 0, so log f is a cumulative sum of log q.
    `boundary` maps x in (-r, r) to positive values (callable or array).
    """
    if r < 1 or radius < r:
        raise ConfigError("need 1 <= r <= radius")
    space = build_lattice(1, radius, radius)
    x = space.coords[:, 0]
    V = W(np.abs(x).astype(float))
    inner = np.arange(-(r - 1), r)
    bvals = np.array([float(boundary(int(i))) for i in inner]) if callable(boundary) \
        else np.asarray(boundary, dtype=float)
    if bvals.shape != inner.shape or np.any(bvals <= 0):
        raise ConfigError("boundary data must be positive on |x| < r")
    Vd = W(np.arange(radius + 1, dtype=float))
    logq = np.zeros(radius + 2)
    q = 0.0
    for i in range(radius, r - 1, -1):
        q = p / (Vd[i] - p * q)
        logq[i] = math.log(q)
    log_f = np.empty(space.n)
    band = np.zeros(space.n)
    for xi, val in zip(inner, bvals):
        log_f[space.index((int(xi),))] = math.log(val)
    for side in (1, -1):
        acc = math.log(bvals[-1] if side == 1 else bvals[0])
        absacc = abs(acc)
        for i in range(r, radius + 1):
            acc += logq[i]
            absacc += abs(logq[i])
            k = space.index((side * i,))
            log_f[k] = acc
            # each ratio carries a few roundings; accumulate a relative band
            band[k] = ROUNDING * (absacc + (i - r + 1))
    return NNHarmonic(space, log_f, r, band)


@dataclass(frozen=True)
class SandwichReport:
    points: int
    upper_violations: int
    lower_violations: int
    min_upper_slack: float
    min_lower_slack: float

    @property
    def passes(self) -> bool:
        return self.upper_violations == 0 and self.lower_violations == 0


def nn_sandwich_check(sol: NNHarmonic, W: ProfileW, M_nn: float = 0.5) -> SandwichReport:
    """f(x_r) prod_{r+1}^{d} M/W <= f(x) <= ||f|| prod_{r}^{d} 1/W for |x| >= r.

    Both sides are compared in logs; the rounding bands of the solver and of
    the product are charged against the inequality being checked. The lower
    bound is compared through log f(x) - log f(x_r), which is exactly 0 at
    d = r, where x_r is the point at distance r on the same side.
    """
    sp, r = sol.space, sol.r
    x = sp.coords[:, 0]
    log_norm = float(sol.log_f.max())
    up_v = lo_v = 0
    up_s = lo_s = math.inf
    count = 0
    for k in np.nonzero(np.abs(x) >= r)[0]:
        d = int(abs(x[k]))
        lf, b = sol.log_f[k], sol.rounding[k]
        _, abs_up = _log_sum(W, r, d)
        upper = log_norm + log_product_upper_bound(W, r, d)
        up_gap = upper - (lf + b + ROUNDING * (abs_up + d - r + 1))
        kr = sp.index((int(np.sign(x[k])) * r,))
        _, abs_lo = _log_sum(W, r + 1, d)
        rel = lf - sol.log_f[kr]
        rel_band = (b - sol.rounding[kr]) + ROUNDING * (abs_lo + (d - r) * (1 + abs(math.log(M_nn))))
        lo_gap = (rel - rel_band) - log_product_lower_bound(W, r, d, M_nn)
        up_s, lo_s = min(up_s, up_gap), min(lo_s, lo_gap)
        up_v += int(up_gap < 0)
        lo_v += int(lo_gap < 0)
        count += 1
    return SandwichReport(count, up_v, lo_v, up_s, lo_s)
