"""Path simulation and Monte Carlo Feynman-Kac estimates.

Uniforms come from a counter-based hash of (seed, path, step, slot), so a
path's randomness does not depend on how paths are chunked or scheduled.
Mass a row does not place inside the window (killing plus exits) ends the
path, which matches the window-truncated operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .kernel import Kernel

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, paths: np.ndarray, step: int, slot: int = 0) -> np.ndarray:
    """U(0, 1) doubles keyed by (seed, path, step, slot); 53 random bits each."""
    key = _mix(np.array([seed & _MASK], dtype=np.uint64))
    h = _mix(key ^ np.asarray(paths, dtype=np.uint64))
    h = _mix(h ^ np.uint64(((step & 0xFFFFFFFFFF) << 8 | (slot & 0xFF)) & _MASK))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n_paths: int
    horizon: int
    start: int
    chunk: int = 1 << 16

    def __post_init__(self):
        if self.n_paths < 1 or self.horizon < 0 or self.chunk < 1:
            raise ConfigError("need n_paths >= 1, horizon >= 0, chunk >= 1")


@dataclass(frozen=True)
class PathBatch:
    """states[p, k] is Y_k of path p, or -1 once the path is dead.

    ``killed_at[p]`` is the first step at which the path was dead (-1 if it
    survived); ``censored[p]`` marks subordinator draws beyond K_max.
    """

    states: np.ndarray
    killed_at: np.ndarray
    censored: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]


def _cumulative_rows(P: Kernel) -> np.ndarray:
    return np.cumsum(P.dense(), axis=1)


def _step(cum: np.ndarray, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF move from states x with uniforms u; -1 marks killing."""
    out = np.full(x.shape, -1, dtype=np.int64)
    alive = x >= 0
    for s in np.unique(x[alive]):
        sel = np.nonzero(x == s)[0]
        row = cum[s]
        y = np.searchsorted(row, u[sel], side="right")
        out[sel] = np.where(u[sel] < row[-1], y, -1)
    return out


def simulate_chain(P: Kernel, cfg: SimConfig) -> PathBatch:
    """Trajectories of length horizon + 1 started at cfg.start."""
    cum = _cumulative_rows(P)
    states = np.empty((cfg.n_paths, cfg.horizon + 1), dtype=np.int64)
    for lo in range(0, cfg.n_paths, cfg.chunk):
        ids = np.arange(lo, min(lo + cfg.chunk, cfg.n_paths))
        x = np.full(ids.size, cfg.start, dtype=np.int64)
        states[ids, 0] = x
        for k in range(cfg.horizon):
            x = _step(cum, x, counter_uniforms(cfg.seed, ids, k, 0))
            states[ids, k + 1] = x
    return PathBatch(states, _killed_at(states), np.zeros(cfg.n_paths, dtype=bool))


def _killed_at(states: np.ndarray) -> np.ndarray:
    dead = states < 0
    first = np.argmax(dead, axis=1)
    return np.where(dead.any(axis=1), first, -1)


def simulate_subordinated(Z: Kernel, a, cfg: SimConfig) -> PathBatch:
    """Y_n = Z_{tau_n} with tau increments drawn from the pmf `a`.

    Draws beyond the stored range (tail mass) end the path and set the
    censored flag.
    """
    cum = _cumulative_rows(Z)
    cdf = np.cumsum(a.linear)
    states = np.empty((cfg.n_paths, cfg.horizon + 1), dtype=np.int64)
    censored = np.zeros(cfg.n_paths, dtype=bool)
    for lo in range(0, cfg.n_paths, cfg.chunk):
        ids = np.arange(lo, min(lo + cfg.chunk, cfg.n_paths))
        x = np.full(ids.size, cfg.start, dtype=np.int64)
        states[ids, 0] = x
        for k in range(cfg.horizon):
            u = counter_uniforms(cfg.seed, ids, k, 0)
            over = (u >= cdf[-1]) & (x >= 0)
            censored[ids[over]] = True
            jumps = np.searchsorted(cdf, u, side="right") + 1
            jumps = np.where(over | (x < 0), 0, jumps)
            x = np.where(over, -1, x)
            for j in range(int(jumps.max(initial=0))):
                move = jumps > j
                if not move.any():
                    break
                sub = np.nonzero(move)[0]
                # walk steps get their own slot and a distinct counter per (k, j)
                uu = counter_uniforms(cfg.seed, ids[sub], k * (a.K_max + 1) + j, 1)
                x[sub] = _step(cum, x[sub], uu)
            states[ids, k + 1] = x
    return PathBatch(states, _killed_at(states), censored)


@dataclass(frozen=True)
class Estimate:
    n: int
    estimate: float
    std_error: float
    n_paths: int
    censored: int

    def row(self) -> tuple:
        return (self.n, self.estimate, self.std_error, self.n_paths, self.censored)


def fk_estimate(P: Kernel, V, f, cfg: SimConfig, convention: str = "U",
                ns=None, batch: PathBatch | None = None) -> list[Estimate]:
    """Monte Carlo estimates of U_n f(start) (or W_n f(start)).

    convention U weights paths by prod_{k=0}^{n-1} 1/V(Y_k), convention W by
    prod_{k=1}^{n} 1/V(Y_k); dead paths contribute 0.
    """
    if convention not in ("U", "W"):
        raise ConfigError("convention must be 'U' or 'W'")
    V = np.asarray(getattr(V, "values", V), dtype=float)
    f = np.asarray(f, dtype=float)
    ns = [cfg.horizon] if ns is None else sorted(int(n) for n in ns)
    if ns and (ns[0] < 0 or ns[-1] > cfg.horizon):
        raise ConfigError("requested n outside [0, horizon]")
    batch = simulate_chain(P, cfg) if batch is None else batch
    S = batch.states
    alive = S >= 0
    inv = np.where(alive, 1.0 / V[np.maximum(S, 0)], 0.0)
    # running log-free products; paths die into exact zeros
    pre = np.cumprod(np.hstack([np.ones((S.shape[0], 1)), inv[:, :-1]]), axis=1)
    post = np.cumprod(np.hstack([np.ones((S.shape[0], 1)), inv[:, 1:]]), axis=1)
    weights = pre if convention == "U" else post
    fval = np.where(alive, f[np.maximum(S, 0)], 0.0)
    out = []
    cens = int(batch.censored.sum())
    for n in ns:
        z = weights[:, n] * fval[:, n]
        se = float(z.std(ddof=1) / math.sqrt(z.size)) if z.size > 1 else 0.0
        out.append(Estimate(n, float(math.fsum(z) / z.size), se, int(z.size), cens))
    return out
