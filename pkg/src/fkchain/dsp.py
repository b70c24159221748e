"""Direct step property: C* estimates and localization constants.

The DSP asks for P_2(x, y) <= C* P(x, y) on all pairs. On a window P_2 is
a truncated sum, so the window maximum is a lower bound for C*. The missing
middle mass sum_{z outside} P(x, z) P(z, y) is bounded by
``row_tail(x) * col_exterior(y)``, which gives the upper end of the reported
interval.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, PositivityError
from .kernel import Kernel, _vectorize

PER_DECADE = 64


@dataclass(frozen=True)
class DSPReport:
    """Window estimate of the DSP constant.

    Attributes
    ----------
    c_star : float
        max of P_2 / P over the scanned pairs (a lower bound for C*).
    tail_caveat : float
        Bound on how much truncation can hide; ``c_star + tail_caveat`` is
        an upper bound for the supremum over the scanned pairs.
    argmax_pair : tuple or None
        Pair attaining `c_star`.
    holds : bool
        Finite interval and upper end within `cap`.
    witness : tuple or None
        Pair with P(x, y) = 0 when assumption (A) fails.
    """

    c_star: float
    tail_caveat: float
    argmax_pair: tuple | None
    holds: bool
    witness: tuple | None = None
    scope: str = "working"
    middle: str = "full"
    cap: float = float("inf")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.c_star, self.c_star + self.tail_caveat)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witness"] = None if self.witness is None else list(self.witness)
        d["argmax_pair"] = None if self.argmax_pair is None else list(self.argmax_pair)
        return d


def dsp_constant(P: Kernel, scope: str = "working", middle: str = "full",
                 cap: float = float("inf")) -> DSPReport:
    """Estimate C* for `P`.

    Parameters
    ----------
    scope : {"working", "window"}
        Pairs (x, y) scanned: working window or whole guard window.
    middle : {"full", "window"}
        ``"full"`` bounds the true two-step sum (caveat from tails);
        ``"window"`` restricts the middle sum to the window, which is the
        exact constant needed for functions supported on the window, and
        the caveat is zero.
    cap : float
        `holds` additionally requires the upper end to be at most `cap`.
    """
    if scope not in ("working", "window") or middle not in ("full", "window"):
        raise ConfigError("bad scope/middle option")
    idx = P.space.working if scope == "working" else np.arange(P.n)
    dense = P.dense()
    sub = dense[np.ix_(idx, idx)]
    two = (dense[idx] @ dense)[:, idx]
    zero = sub <= 0
    if np.any(zero):
        bad = np.argwhere(zero & (two > 0))
        off = bad[bad[:, 0] < bad[:, 1]] if bad.size else bad
        pick = off[0] if off.size else (bad[0] if bad.size else np.argwhere(zero)[0])
        w = (int(idx[pick[0]]), int(idx[pick[1]]))
        return DSPReport(float("inf"), float("inf"), None, False, w, scope, middle, cap)
    ratio = two / sub
    k = int(np.argmax(ratio))
    i, j = divmod(k, len(idx))
    c_star = float(ratio[i, j])
    caveat = 0.0
    if middle == "full":
        col = P.col_exterior[idx] if P.col_exterior is not None else np.ones(len(idx))
        caveat = float((np.outer(P.row_tail[idx], col) / sub).max())
    holds = bool(np.isfinite(c_star + caveat) and c_star + caveat <= cap)
    return DSPReport(c_star, caveat, (int(idx[i]), int(idx[j])), holds, None,
                     scope, middle, cap)


class KBBounds(NamedTuple):
    k_lower: float
    k_upper: float
    env_lower: float | None
    env_upper: float | None


def kb_bounds(P: Kernel, B, rows=None, c_star: float | None = None) -> KBBounds:
    """Localization constants over ``x in rows``, ``y, z in B``.

    k_lower = min P(x,y)/P(x,z), k_upper = max of the same. When `c_star`
    is given, the envelopes inf_{B x B} P / C* and C* / inf_{B x B} P are
    returned as well.
    """
    B = np.array(sorted(int(b) for b in B), dtype=np.int64)
    if B.size == 0:
        raise ConfigError("B must be nonempty")
    rows = np.arange(P.n) if rows is None else np.asarray(sorted(rows), dtype=np.int64)
    dense = P.dense()
    blk = dense[np.ix_(rows, B)]
    if np.any(blk <= 0):
        raise PositivityError("kernel vanishes on some (x, B) pair")
    lo = blk.min(axis=1)
    hi = blk.max(axis=1)
    k_lower = float((lo / hi).min())
    k_upper = float((hi / lo).max())
    env_lo = env_hi = None
    if c_star is not None:
        inf_bb = float(dense[np.ix_(B, B)].min())
        env_lo = inf_bb / c_star
        env_hi = c_star / inf_bb if inf_bb > 0 else float("inf")
    return KBBounds(k_lower, k_upper, env_lo, env_hi)


def _geometric_grid(t_max: float, grid: int) -> np.ndarray:
    j = np.arange(grid)[::-1]
    return t_max * 10.0 ** (-j / PER_DECADE)


class DoublingReport(NamedTuple):
    c_doubling: float
    holds: bool
    diagnosis: str


def check_doubling(J: Callable, t_max: float, grid: int = 4 * PER_DECADE) -> DoublingReport:
    """max of J(t)/J(2t) on a geometric grid ending at `t_max`.

    A maximum that keeps rising through the top decade is diagnosed as
    growth, and the doubling condition is then reported as failing.
    """
    Jv = _vectorize(J)
    t = _geometric_grid(t_max, grid)
    a, b = Jv(t), Jv(2 * t)
    if np.any(a <= 0) or np.any(b <= 0):
        return DoublingReport(float("inf"), False, "profile not positive")
    r = a / b
    c = float(r.max())
    both = np.concatenate([t, 2 * t])
    order = np.argsort(both, kind="stable")
    vals = np.concatenate([a, b])[order]
    monotone = bool(np.all(np.diff(vals) <= 1e-15 * vals[:-1]))
    top = t >= t_max / 10
    growing = bool(top.any() and (~top).any()
                   and r[top].max() > (1 + 1e-9) * r[~top].max()
                   and int(np.argmax(r)) == len(r) - 1)
    if not monotone:
        diag = "not nonincreasing"
    elif not np.isfinite(c):
        diag = "infinite ratio"
    elif growing:
        diag = "growth: ratio increases through the top decade"
    else:
        diag = "bounded"
    return DoublingReport(c, bool(monotone and np.isfinite(c) and not growing), diag)


class SubadditiveReport(NamedTuple):
    c_tilde: float
    holds: bool


def check_subadditive_factor(K: Callable, t_max: float,
                             grid: int = 8 * PER_DECADE) -> SubadditiveReport:
    """max of K(r)K(s)/K(r+s) over grid pairs, with r, s in {0} and a geometric grid.

    Pairs whose K(r+s) underflows cannot be evaluated and are skipped.
    """
    Kv = _vectorize(K)
    t = np.concatenate([[0.0], _geometric_grid(t_max, grid)])
    kr = Kv(t)
    ks = Kv(t[:, None] + t[None, :])
    if np.any(kr <= 0):
        return SubadditiveReport(float("inf"), False)
    ok = ks >= np.finfo(float).tiny
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        ratio = np.where(ok, np.outer(kr, kr) / np.where(ok, ks, 1.0), 0.0)
    c = float(ratio.max())
    return SubadditiveReport(c, bool(np.isfinite(c)))


@dataclass(frozen=True)
class PMFDSPReport:
    """DSP check for a subordinator pmf: ratios a*2(n)/a(n) for n = 2..K."""

    c: float
    holds: bool
    witness: int
    ratios: np.ndarray
    plateau_change: float
    split: dict | None = None


def self_convolution_ratio(log_a: np.ndarray, tilt: float = 0.0) -> np.ndarray:
    """a*2(n)/a(n) for n = 2..K from log a(1..K).

    The sequence is tilted by exp(tilt * k) before convolving, which leaves
    the ratio unchanged but keeps tempered pmfs representable.
    """
    k = np.arange(1, log_a.size + 1)
    e = log_a + tilt * k
    shift = e.max()
    b = np.exp(e - shift)
    conv = np.convolve(b, b)[: log_a.size - 1]
    return conv / b[1:] * np.exp(shift)


def dsp_pmf_check(a, split: tuple[Callable, Callable] | None = None,
                  plateau_tol: float = 0.05) -> PMFDSPReport:
    """Check P(tau_2 = n) <= C P(tau_1 = n) on the stored range.

    Parameters
    ----------
    a : SubordinatorPMF
    split : (j, l), optional
        Factorization a ~ j l with j nonincreasing doubling and l
        submultiplicative; each hypothesis and the comparability of a with
        j l are checked on the range.
    plateau_tol : float
        Allowed relative spread of the ratio over the upper half of the
        range, unless the ratio is nonincreasing there.
    """
    la = np.asarray(a.log_values, dtype=float)
    if not np.all(np.isfinite(la)):
        raise PositivityError("pmf has zero entries in range")
    K = la.size
    tilt = float(a.M) if a.M > 0 else _fitted_tilt(la)
    r = self_convolution_ratio(la, tilt)
    c = float(r.max())
    witness = int(np.argmax(r)) + 2
    upper = r[(K - 1) // 2:]
    change = float((upper.max() - upper.min()) / upper.max())
    nonincreasing = bool(np.all(np.diff(upper) <= 1e-12 * upper[:-1]))
    holds = bool(np.isfinite(c) and (change < plateau_tol or nonincreasing))
    info = None
    if split is not None:
        j, l = (_vectorize(f) for f in split)
        n = np.arange(1, K + 1, dtype=float)
        half = n[: K // 2]
        jd = float((j(half) / j(2 * half)).max())
        m = np.unique(np.geomspace(1, K // 2, 64).astype(int)).astype(float)
        lsub = float((np.outer(l(m), l(m)) / l(m[:, None] + m[None, :])).max())
        comp = np.exp(la) / (j(n) * l(n)) if a.M == 0 else \
            np.exp(la - np.log(j(n)) - np.log(l(n)))
        info = {"j_doubling": jd, "l_submultiplicative": lsub,
                "comparability": (float(comp.min()), float(comp.max()))}
        holds = holds and bool(np.isfinite([jd, lsub, *info["comparability"]]).all()
                               and comp.min() > 0)
    return PMFDSPReport(c, holds, witness, r, change, info)


def _fitted_tilt(la: np.ndarray) -> float:
    K = la.size
    if K < 4:
        return 0.0
    lo = K // 2
    slope = (la[-1] - la[lo]) / (K - 1 - lo)
    return max(0.0, -slope)
