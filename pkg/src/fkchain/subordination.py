"""Discrete subordinators and subordinate kernels.

Stable and relativistic stable pmfs are generated by the ratio recurrence
a(k+1)/a(k) = (k - alpha) / ((k + 1)(1 + m^(1/alpha))); no Gamma ratio is
evaluated for the pmf itself. Values are kept twice: as a linear cumulative
product (exactly recurrence consistent while representable) and as logs
(positive for every k, used for long ranges and tempered pmfs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import (CapacityError, ConfigError, DomainError, InsufficientDataError,
                     InsufficientDepthError)
from .kernel import MAX_ENTRIES, Kernel, _store
from .space import TruncatedSpace


@dataclass(frozen=True, eq=False)
class SubordinatorPMF:
    """One-step law a(k), k = 1..K_max, of an increasing integer walk.

    Attributes
    ----------
    alpha, m : float
        Stability index and mass (m = 0 for the stable case). NaN alpha
        marks a user-supplied pmf.
    theta_m, M : float
        (1 + m^(1/alpha))^alpha - m and log(1 + m^(1/alpha)).
    log_values : ndarray
        log a(k); -inf only for user pmfs with zero entries.
    linear : ndarray
        a(k) from the multiplicative recurrence (may underflow to 0).
    tail_bound : float
        Upper bound on sum_{k > K_max} a(k).
    """

    alpha: float
    m: float
    theta_m: float
    M: float
    log_values: np.ndarray
    linear: np.ndarray
    tail_bound: float
    kind: str = "stable"
    meta: dict = field(default_factory=dict)

    @property
    def K_max(self) -> int:
        return int(self.log_values.size)

    @property
    def values(self) -> np.ndarray:
        return self.linear

    def mass(self) -> float:
        return math.fsum(self.linear)

    def tail_after(self, N: int) -> float:
        """Upper bound on sum_{k > N} a(k) for N <= K_max."""
        return math.fsum(self.linear[N:]) + self.tail_bound

    def generating_function(self, s: float) -> float:
        k = np.arange(1, self.K_max + 1)
        with np.errstate(divide="ignore"):
            return math.fsum(np.exp(self.log_values + k * math.log(s)))

    def laplace_exponent(self, lam):
        """phi_m(lam) with sum_k a(k) s^k = 1 - phi_m(1 - s)."""
        lam = np.asarray(lam, dtype=float)
        c = self.m ** (1.0 / self.alpha) if self.m > 0 else 0.0
        return ((lam + c) ** self.alpha - self.m) / self.theta_m


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _log_stable(alpha: float, K: int) -> np.ndarray:
    k = np.arange(1, K)
    steps = np.log((k - alpha) / (k + 1.0))
    return math.log(alpha) + np.concatenate([[0.0], np.cumsum(steps)])


def stable_pmf(alpha: float, K_max: int) -> SubordinatorPMF:
    """a_0(k) = alpha Gamma(k - alpha) / (Gamma(1 - alpha) Gamma(k + 1)).

    The tail bound sum_{k > K} a_0(k) <= K^(-alpha) / ((1 - alpha) Gamma(1 - alpha))
    comes from the upper Wendel bound; the exact tail
    a_0(K)(K - alpha)/alpha is kept in ``meta["tail_exact"]``.
    """
    _check_alpha(alpha)
    if K_max < 1:
        raise ConfigError("K_max must be positive")
    k = np.arange(1, K_max, dtype=float)
    lin = alpha * np.concatenate([[1.0], np.cumprod((k - alpha) / (k + 1.0))])
    tail = K_max ** (-alpha) / ((1 - alpha) * special.gamma(1 - alpha))
    exact = lin[-1] * (K_max - alpha) / alpha
    return SubordinatorPMF(alpha, 0.0, 1.0, 0.0, np.log(lin), lin, float(tail), "stable",
                           {"tail_exact": float(exact)})


def relativistic_pmf(alpha: float, m: float, K_max: int) -> SubordinatorPMF:
    """a_m(k) = theta_m^-1 e^(M(alpha - k)) a_0(k), tempered stable law."""
    _check_alpha(alpha)
    if not m > 0:
        raise DomainError("relativistic pmf needs m > 0; use stable_pmf for m = 0")
    if K_max < 1:
        raise ConfigError("K_max must be positive")
    c = m ** (1.0 / alpha)
    theta = (1.0 + c) ** alpha - m
    M = math.log1p(c)
    la0 = _log_stable(alpha, K_max)
    k = np.arange(1, K_max + 1)
    la = la0 + M * (alpha - k) - math.log(theta)
    kk = np.arange(1, K_max, dtype=float)
    first = alpha * math.exp(M * (alpha - 1)) / theta
    lin = first * np.concatenate([[1.0], np.cumprod((kk - alpha) / ((kk + 1.0) * (1.0 + c)))])
    # a_0 is decreasing, so the tail is dominated by a geometric series
    la0_next = la0[-1] + math.log((K_max - alpha) / (K_max + 1.0))
    geo = math.exp(M * alpha + la0_next - M * (K_max + 1) - math.log(theta)) / -math.expm1(-M)
    tail0 = K_max ** (-alpha) / ((1 - alpha) * special.gamma(1 - alpha))
    via_stable = math.exp(M * alpha - M * (K_max + 1) - math.log(theta)) * tail0
    return SubordinatorPMF(alpha, float(m), float(theta), float(M), la, lin,
                           float(min(geo, via_stable)), "relativistic")


def pmf_from_values(values, tail_bound: float = 0.0, tilt: float = 0.0) -> SubordinatorPMF:
    """Wrap a user pmf on {1, ..., K}; `tilt` is an optional exponential rate."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0 or np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ConfigError("pmf values must be a nonnegative finite vector")
    total = math.fsum(v)
    if total > 1 + 1e-12 or total + tail_bound < 1 - 1e-10:
        raise ConfigError(f"pmf mass {total} with tail {tail_bound} is not a probability")
    with np.errstate(divide="ignore"):
        lv = np.log(v)
    return SubordinatorPMF(float("nan"), 0.0, 1.0, float(tilt), lv, v, float(tail_bound),
                           "user")


def geometric_pmf(q: float, K_max: int) -> SubordinatorPMF:
    """a(k) = (1 - q) q^(k-1); a light-tailed pmf without the DSP."""
    if not 0 < q < 1:
        raise DomainError("q must lie in (0, 1)")
    k = np.arange(1, K_max + 1)
    v = (1 - q) * q ** (k - 1.0)
    return pmf_from_values(v, q ** K_max)


@dataclass(frozen=True)
class ConvolvedPMF:
    """Law of tau_2 on n = 2..K_max with a tail bound."""

    n: np.ndarray
    log_values: np.ndarray
    tail_bound: float

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)


def convolve_pmf(a: SubordinatorPMF, b: SubordinatorPMF) -> ConvolvedPMF:
    """(a*b)(n) = sum_{k=1}^{n-1} a(k) b(n-k) for n = 2..K_max.

    Both sequences are tilted by e^(t k) with t = max(M_a, M_b) before the
    convolution; the tilt factors out exactly and keeps tempered pmfs from
    underflowing.
    """
    if a.K_max != b.K_max:
        raise ConfigError("pmfs must share K_max")
    K = a.K_max
    t = max(a.M, b.M)
    k = np.arange(1, K + 1)
    ea, eb = a.log_values + t * k, b.log_values + t * k
    sa, sb = ea.max(), eb.max()
    conv = np.convolve(np.exp(ea - sa), np.exp(eb - sb))[: K - 1]
    n = np.arange(2, K + 1)
    with np.errstate(divide="ignore"):
        lv = np.log(conv) + sa + sb - t * n
    total = (a.mass() + a.tail_bound) * (b.mass() + b.tail_bound)
    tail = max(total - math.fsum(np.exp(lv)), 0.0)
    return ConvolvedPMF(n, lv, tail)


class WendelReport(NamedTuple):
    lower_violations: int
    upper_violations: int
    lower_margin: float
    upper_margin: float


def wendel_check(alpha: float, K: int) -> WendelReport:
    """k^(-a-1) <= Gamma(k-a)/Gamma(k+1) <= k^(-a-1)/(1-a) for k = 1..K.

    The Gamma ratio is produced by the same ratio recurrence as the pmf.
    """
    _check_alpha(alpha)
    k = np.arange(1, K + 1, dtype=float)
    ratio = np.exp(_log_stable(alpha, K) - math.log(alpha) + special.gammaln(1 - alpha))
    low = k ** (-alpha - 1)
    high = low / (1 - alpha)
    return WendelReport(lower_violations=int(np.sum(ratio < low)),
                        upper_violations=int(np.sum(ratio > high)),
                        lower_margin=float((ratio / low).min()),
                        upper_margin=float((high / ratio).min()))


@dataclass(frozen=True, eq=False)
class HeatKernelSequence:
    """g_n(x, y) = P^n(x, y) / mu(y) for n = 1..N_max on a window.

    ``escaped[n-1, x]`` bounds the mass P^n(x, .) places outside the window.
    """

    kernel: Kernel
    mu: np.ndarray
    g: np.ndarray
    escaped: np.ndarray

    @property
    def N_max(self) -> int:
        return int(self.g.shape[0])

    def asymmetry(self) -> float:
        return float(np.abs(self.g - np.swapaxes(self.g, 1, 2)).max())


def heat_kernel_sequence(Z_walk: Kernel, mu, N_max: int) -> HeatKernelSequence:
    """Iterate the walk kernel and divide by the measure."""
    n = Z_walk.n
    if N_max < 1:
        raise ConfigError("N_max must be positive")
    if N_max * n * n > MAX_ENTRIES:
        raise CapacityError(f"heat kernel table needs {N_max * n * n} entries")
    mu = np.asarray(mu, dtype=float)
    P = Z_walk.dense()
    g = np.empty((N_max, n, n))
    esc = np.empty((N_max, n))
    cur = P.copy()
    for i in range(N_max):
        if i:
            cur = cur @ P
        g[i] = cur / mu[None, :]
        esc[i] = np.maximum(1.0 - cur.sum(axis=1), 0.0)
    return HeatKernelSequence(Z_walk, mu, g, esc)


def required_depth(a: SubordinatorPMF, eps: float) -> int | None:
    """Smallest N with tail(N) <= eps, extrapolated past K_max when needed."""
    tails = np.cumsum(a.linear[::-1])[::-1] + a.tail_bound
    ok = np.nonzero(tails <= eps)[0]
    if ok.size:
        return int(ok[0])
    if a.kind == "stable":
        return int(math.ceil(((1 - a.alpha) * special.gamma(1 - a.alpha) * eps)
                             ** (-1.0 / a.alpha)))
    if a.M > 0:
        extra = math.log(max(a.tail_bound, 1e-300) / eps) / a.M
        return int(a.K_max + math.ceil(max(extra, 0.0)))
    return None


def subordinate_kernel(g: HeatKernelSequence, a: SubordinatorPMF, eps: float = 1e-2) -> Kernel:
    """P(x, y) = sum_{n <= N} g_n(x, y) a(n) mu(y), N = N_max of `g`.

    The row tail adds the mass each P^n leaks from the window to the pmf
    mass beyond N. Entry-wise truncation error is bounded by
    tail(N) * max_z g_N(x, z) * mu(y) (sup_y g_n(x, y) is nonincreasing in n
    for reversible walks) and must not exceed `eps`.
    """
    N = g.N_max
    if N > a.K_max:
        raise ConfigError("pmf shorter than heat kernel sequence")
    w = a.linear[:N]
    P = np.tensordot(w, g.g, axes=(0, 0)) * g.mu[None, :]
    tail_N = a.tail_after(N)
    entry_err = tail_N * float(g.g[-1].max()) * float(g.mu.max())
    if entry_err > eps:
        raise InsufficientDepthError(
            f"pmf tail {tail_N:.3e} leaves entry error {entry_err:.3e} > {eps:.1e}",
            required=required_depth(a, eps / max(float(g.g[-1].max() * g.mu.max()), 1e-300)))
    # the escaped mass never exceeds what the window row leaves
    row_tail = np.minimum(w @ g.escaped + tail_N, np.maximum(1.0 - P.sum(axis=1), 0.0))
    return Kernel(g.kernel.space, _store(P), row_tail, "subordinate",
                  meta={"N_max": N, "pmf_tail": tail_N, "entry_error": entry_err,
                        "alpha": a.alpha, "m": a.m})


def _stable_z1_prefactor(alpha: float) -> float:
    return (2**alpha * special.gamma(0.5 + alpha)
            / (math.sqrt(math.pi) * abs(special.gamma(-alpha))))


def z1_stable_profile(alpha: float, d) -> np.ndarray:
    """p(0, d) for the alpha-stable subordinate of the simple walk on Z^1.

    The kernel is I - (I - P)^alpha; off the diagonal
    p(0, d) = C Gamma(d - alpha) / Gamma(d + 1 + alpha).
    """
    d = np.abs(np.asarray(d, dtype=float))
    C = _stable_z1_prefactor(alpha)
    with np.errstate(invalid="ignore"):
        off = np.exp(math.log(C) + special.gammaln(d - alpha) - special.gammaln(d + 1 + alpha))
    diag = 1.0 - 2**-alpha * special.gamma(1 + 2 * alpha) / special.gamma(1 + alpha) ** 2
    return np.where(d == 0, diag, off)


def z1_stable_tail(alpha: float, R) -> np.ndarray:
    """sum_{d > R} p(0, d), exact by telescoping."""
    R = np.asarray(R, dtype=float)
    C = _stable_z1_prefactor(alpha)
    return C / (2 * alpha) * np.exp(special.gammaln(R + 1 - alpha) - special.gammaln(R + 1 + alpha))


def z1_relativistic_profile(alpha: float, m: float, d_max: int) -> tuple[np.ndarray, float]:
    """p(0, d), d = 0..d_max, for the relativistic subordinate on Z^1.

    Series sum_n a_m(n) binom(n, (n+d)/2) 2^-n in log space. Returns the
    profile and a bound on the series truncation error (absolute).
    """
    a_probe = relativistic_pmf(alpha, m, 8)
    # terms decay like e^{-M n}; go far enough that the remainder is
    # negligible next to the smallest entry (roughly e^{-kappa d_max})
    kappa = math.acosh(1.0 + m ** (1.0 / alpha))
    N = int(d_max + math.ceil((kappa * d_max + 60.0) / a_probe.M)) + 2
    a = relativistic_pmf(alpha, m, N)
    n = np.arange(1, N + 1)
    d = np.arange(d_max + 1)
    nn, dd = np.meshgrid(n, d, indexing="ij")
    ok = (nn >= dd) & ((nn + dd) % 2 == 0)
    with np.errstate(invalid="ignore"):
        lb = (special.gammaln(nn + 1.0) - special.gammaln((nn + dd) / 2 + 1.0)
              - special.gammaln((nn - dd) / 2 + 1.0) - nn * math.log(2.0))
    terms = np.where(ok, a.log_values[:, None] + lb, -np.inf)
    prof = np.exp(special.logsumexp(terms, axis=0))
    return prof, a.tail_bound


def z1_subordinate_kernel(space: TruncatedSpace, alpha: float, m: float = 0.0) -> Kernel:
    """Subordinate simple walk on a Z^1 window, in closed form.

    m = 0 uses the exact Gamma-ratio profile; m > 0 sums the series with
    the tempered pmf. Row tails are exact (m = 0) or bounded by the series
    truncation plus the pmf tail beyond the farthest distance (m > 0).
    """
    _check_alpha(alpha)
    if space.dimension != 1:
        raise ConfigError("z1_subordinate_kernel needs a one-dimensional lattice")
    x = space.coords[:, 0]
    g = space.guard_radius
    dist = np.abs(x[:, None] - x[None, :])
    if m == 0:
        table = z1_stable_profile(alpha, np.arange(2 * g + 1))
        row_tail = z1_stable_tail(alpha, g - x) + z1_stable_tail(alpha, g + x)

        def prof(t):
            return z1_stable_profile(alpha, t)
    elif m > 0:
        far = 2 * g + 200
        full, err = z1_relativistic_profile(alpha, m, far)
        table = full[: 2 * g + 1]
        rest = relativistic_pmf(alpha, m, far).tail_bound
        cum = np.concatenate([np.cumsum(full[::-1])[::-1], [0.0]])

        def T(R):
            return cum[np.asarray(R) + 1] + rest + err

        row_tail = T(g - x) + T(g + x)

        def prof(t):
            return full[np.abs(np.asarray(t, dtype=int))]
    else:
        raise DomainError("m must be nonnegative")
    mat = table[dist]
    envelope = np.maximum.accumulate(table[::-1])[::-1]
    ext = np.minimum(space.distance_to_exterior(), 2 * g)
    col = envelope[ext]
    return Kernel(space, _store(mat), np.minimum(row_tail, 1.0), "subordinate",
                  col_exterior=col, profile=prof, meta={"alpha": alpha, "m": m})


@dataclass(frozen=True)
class DecayFit:
    """Decay of p(0, y) over a range of distance classes."""

    distances: np.ndarray
    values: np.ndarray
    exponent: float
    expected: float
    env_low: float
    env_high: float
    passes: bool
    mode: str
    rate: float | None = None


def verify_subordinate_decay(P: Kernel, alpha: float, m: float, beta: float = 2.0,
                             gamma: float = 1.0, d_range=(20, 300), rel_tol: float = 0.05,
                             envelope: float = 10.0) -> DecayFit:
    """Fit the decay of the origin row.

    m = 0: log-log slope of p against d, expected -(alpha beta + gamma);
    envelopes are min/max of p d^(alpha beta + gamma).
    m > 0: envelopes of p e^(M d) with M = log(1 + m^(1/alpha)), and the
    fitted exponential rate.
    """
    o = P.space.origin
    dist = P.space.distances_from(o)
    row = P.row(o)
    lo, hi = d_range
    ds = np.arange(lo, hi + 1)
    ds = ds[np.isin(ds, dist)]
    if ds.size < 8:
        raise InsufficientDataError(f"only {ds.size} distance classes in range")
    vals = np.array([row[dist == d].mean() for d in ds])
    if np.any(vals <= 0):
        raise InsufficientDataError("kernel vanishes inside the fit range")
    if m == 0:
        slope = float(np.polyfit(np.log(ds), np.log(vals), 1)[0])
        expected = -(alpha * beta + gamma)
        scaled = vals * ds ** (alpha * beta + gamma)
        ok = abs(slope - expected) <= rel_tol * abs(expected)
        return DecayFit(ds, vals, slope, expected, float(scaled.min()), float(scaled.max()),
                        bool(ok), "power")
    M = math.log1p(m ** (1.0 / alpha))
    rate = float(-np.polyfit(ds, np.log(vals), 1)[0])
    scaled = np.exp(np.log(vals) + M * ds)
    lo_env, hi_env = float(scaled.min()), float(scaled.max())
    ok = lo_env > 0 and hi_env / lo_env <= envelope
    return DecayFit(ds, vals, -rate, -M, lo_env, hi_env, bool(ok), "exponential", rate)
