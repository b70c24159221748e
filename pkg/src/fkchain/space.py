"""Finite windows of countable state spaces.

A `TruncatedSpace` enumerates every state within ``guard_radius`` of the
origin. Sums over the infinite space are evaluated over this guard window
for states of the smaller working window; whatever is lost is tracked as
tail mass by the kernel module.

Lattice points are enumerated in lexicographic order, so the index order
agrees with the tuple order of the coordinates.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import (ConfigError, DegreeError, DisconnectedError,
                     PreconditionError, TruncationError)

METRICS = ("l1", "linf", "graph")


@dataclass(frozen=True, eq=False)
class TruncatedSpace:
    """Finite enumeration of a countable space around an origin.

    Parameters
    ----------
    points : tuple of tuple
        Coordinates (integer tuples for lattices, ``(label,)`` for graphs).
    working_radius, guard_radius : int
        Radii of the working and guard windows, ``working <= guard``.
    measure : ndarray
        Strictly positive weights mu(x).
    origin : int
        Index of the distinguished point x0.
    metric : {"l1", "linf", "graph"}
        How distances are computed. ``"graph"`` uses hop counts in
        `adjacency`.
    """

    points: tuple
    working_radius: int
    guard_radius: int
    measure: np.ndarray
    origin: int
    metric: str = "l1"
    adjacency: sparse.csr_matrix | None = None
    meta: dict = field(default_factory=dict)
    working_mask: np.ndarray | None = None
    exterior_distance: np.ndarray | None = None

    def __post_init__(self):
        if self.working_radius < 0 or self.guard_radius < self.working_radius:
            raise ConfigError(
                f"need 0 <= working_radius <= guard_radius, got "
                f"{self.working_radius} and {self.guard_radius}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        pts = tuple(tuple(p) for p in self.points)
        index = {p: i for i, p in enumerate(pts)}
        if len(index) != len(pts):
            raise ConfigError("points must be pairwise distinct")
        mu = np.asarray(self.measure, dtype=float)
        if mu.shape != (len(pts),) or not np.all(mu > 0):
            raise ConfigError("measure must be strictly positive on every state")
        if not 0 <= self.origin < len(pts):
            raise ConfigError("origin index out of range")
        if self.metric == "graph" and self.adjacency is None:
            raise ConfigError("graph metric needs an adjacency structure")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "measure", mu)
        object.__setattr__(self, "_index", index)
        coords = None
        if self.metric != "graph":
            coords = np.array(pts, dtype=np.int64).reshape(len(pts), -1)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "dist_origin", self.distances_from(self.origin))

    def __len__(self):
        return len(self.points)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dimension(self) -> int | None:
        return None if self.coords is None else self.coords.shape[1]

    def index(self, point) -> int:
        """Index of a coordinate tuple (or a bare integer in 1-d / graphs)."""
        key = tuple(point) if isinstance(point, (tuple, list, np.ndarray)) else (point,)
        try:
            return self._index[tuple(int(c) for c in key)]
        except KeyError:
            raise TruncationError(f"point {point} is not in the window") from None

    def indices(self, points: Iterable) -> np.ndarray:
        return np.array([self.index(p) for p in points], dtype=np.int64)

    def distances_from(self, i: int) -> np.ndarray:
        """Metric distance from state `i` to every state of the window."""
        if self.metric == "graph":
            d = csgraph.shortest_path(self.adjacency, unweighted=True, indices=i)
            return np.where(np.isfinite(d), d, -1).astype(np.int64)
        diff = np.abs(self.coords - self.coords[i])
        return diff.sum(axis=1) if self.metric == "l1" else diff.max(axis=1)

    def distance(self, i: int, j: int) -> int:
        return int(self.distances_from(i)[j])

    def distance_matrix(self) -> np.ndarray:
        """All pairwise distances (int32), for lattice metrics."""
        if self.coords is None:
            d = csgraph.shortest_path(self.adjacency, unweighted=True)
            return d.astype(np.int32)
        out = np.zeros((self.n, self.n), dtype=np.int32)
        for k in range(self.coords.shape[1]):
            c = self.coords[:, k].astype(np.int32)
            diff = np.abs(c[:, None] - c[None, :])
            if self.metric == "l1":
                out += diff
            else:
                np.maximum(out, diff, out=out)
        return out

    @property
    def working(self) -> np.ndarray:
        """Indices of the working window."""
        if self.working_mask is not None:
            return np.flatnonzero(self.working_mask)
        return np.flatnonzero(self.dist_origin <= self.working_radius)

    @property
    def shell(self) -> np.ndarray:
        """Indices at exactly the guard radius (the window boundary)."""
        return np.flatnonzero(self.dist_origin == self.guard_radius)

    def distance_to_exterior(self) -> np.ndarray:
        """Lower bound on the distance from each state to the complement
        of the guard window (exact for lattice windows)."""
        if self.exterior_distance is not None:
            return self.exterior_distance
        return self.guard_radius + 1 - self.dist_origin


def build_lattice(dimension: int, guard_radius: int, working_radius: int,
                  measure_profile: Callable | None = None,
                  metric: str = "l1") -> TruncatedSpace:
    """Enumerate the Z^d window ``{x : |x| <= guard_radius}``.

    Parameters
    ----------
    dimension : int
        Lattice dimension d >= 1.
    guard_radius, working_radius : int
        Window radii, ``working_radius <= guard_radius``.
    measure_profile : callable, optional
        Maps a coordinate tuple to mu(x) > 0. Defaults to counting measure.
    metric : {"l1", "linf"}
        Norm used both for the window shape and for distances.
    """
    if dimension < 1:
        raise ConfigError("dimension must be positive")
    if metric not in ("l1", "linf"):
        raise ConfigError("lattice metric must be 'l1' or 'linf'")
    if working_radius > guard_radius or working_radius < 0:
        raise ConfigError(
            f"working radius {working_radius} exceeds guard radius {guard_radius}")
    rng = range(-guard_radius, guard_radius + 1)
    if metric == "l1":
        pts = [p for p in itertools.product(rng, repeat=dimension)
               if sum(abs(c) for c in p) <= guard_radius]
    else:
        pts = list(itertools.product(rng, repeat=dimension))
    if measure_profile is None:
        mu = np.ones(len(pts))
    else:
        mu = np.array([float(measure_profile(p)) for p in pts])
    origin = pts.index((0,) * dimension)
    return TruncatedSpace(tuple(pts), working_radius, guard_radius, mu, origin,
                          metric, meta={"kind": "lattice", "norm": metric})


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Symmetric weighted graph on a window.

    `weights` holds b(x, y) for pairs inside the window; `degree` holds the
    full b(x) = sum_y b(x, y), which for lattice windows also counts edges
    leaving the window. The difference is the escaped weight.
    """

    space: TruncatedSpace
    weights: sparse.csr_matrix
    degree: np.ndarray

    def __post_init__(self):
        w = sparse.csr_matrix(self.weights, dtype=float)
        n = self.space.n
        if w.shape != (n, n):
            raise ConfigError("weight matrix does not match the space")
        if w.nnz and w.data.min() <= 0:
            raise ConfigError("edge weights must be positive")
        if w.nnz and abs(w - w.T).max() > 0:
            raise ConfigError("weights must be symmetric")
        if np.any(w.diagonal() != 0):
            raise ConfigError("self-loops are not allowed")
        deg = np.asarray(self.degree, dtype=float)
        if np.any(deg <= 0):
            raise DegreeError(f"isolated vertex at index {int(np.argmin(deg))}")
        inner = np.asarray(w.sum(axis=1)).ravel()
        if np.any(inner > deg * (1 + 1e-12)):
            raise ConfigError("degree smaller than the in-window weight")
        ncomp, _ = csgraph.connected_components(w, directed=False)
        if ncomp > 1:
            raise DisconnectedError("graph restricted to the window is disconnected")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "degree", deg)

    @property
    def escaped(self) -> np.ndarray:
        """Weight of edges from each state to states outside the window."""
        inner = np.asarray(self.weights.sum(axis=1)).ravel()
        return np.maximum(self.degree - inner, 0.0)

    def neighbours(self, i: int) -> np.ndarray:
        w = self.weights
        return w.indices[w.indptr[i]:w.indptr[i + 1]]


def lattice_graph(space: TruncatedSpace, weight: float = 1.0) -> WeightedGraph:
    """Nearest-neighbour graph of Z^d restricted to a lattice window."""
    if space.coords is None:
        raise ConfigError("lattice_graph needs a lattice space")
    c = space.coords
    g = space.guard_radius
    base = 2 * g + 1
    keys = np.zeros(space.n, dtype=np.int64)
    for k in range(c.shape[1]):
        keys = keys * base + (c[:, k] + g)
    rows, cols = [], []
    for k in range(c.shape[1]):
        shifted = c.copy()
        shifted[:, k] += 1
        ok = np.abs(shifted).sum(axis=1) <= g if space.metric == "l1" else \
            np.abs(shifted).max(axis=1) <= g
        skeys = np.zeros(space.n, dtype=np.int64)
        for j in range(c.shape[1]):
            skeys = skeys * base + (shifted[:, j] + g)
        src = np.flatnonzero(ok)
        dst = np.searchsorted(keys, skeys[src])
        rows += [src, dst]
        cols += [dst, src]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    w = sparse.csr_matrix((np.full(rows.size, float(weight)), (rows, cols)),
                          shape=(space.n, space.n))
    deg = np.full(space.n, 2 * c.shape[1] * float(weight))
    return WeightedGraph(space, w, deg)


def graph_from_edges(n_vertices: int, edges: Iterable, origin: int = 0,
                     working_radius: int | None = None,
                     guard_radius: int | None = None,
                     measure: np.ndarray | None = None) -> WeightedGraph:
    """Finite weighted graph from ``(u, v, weight)`` triples.

    Repeated edges accumulate. The default measure is the degree b(x) and
    the default radii are the eccentricity of `origin`.
    """
    u, v, wt = [], [], []
    for e in edges:
        a, b, w = int(e[0]), int(e[1]), float(e[2])
        if not (0 <= a < n_vertices and 0 <= b < n_vertices):
            raise ConfigError(f"edge ({a}, {b}) references an unknown vertex")
        if a == b:
            raise ConfigError("self-loops are not allowed")
        u += [a, b]
        v += [b, a]
        wt += [w, w]
    w = sparse.csr_matrix((wt, (u, v)), shape=(n_vertices, n_vertices))
    w.sum_duplicates()
    deg = np.asarray(w.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        raise DegreeError(f"isolated vertex {int(np.argmin(deg))}")
    hops = csgraph.shortest_path(w, unweighted=True, indices=origin)
    if not np.all(np.isfinite(hops)):
        raise DisconnectedError("graph is disconnected")
    ecc = int(hops.max())
    guard = ecc if guard_radius is None else guard_radius
    work = guard if working_radius is None else working_radius
    mu = deg.copy() if measure is None else np.asarray(measure, dtype=float)
    adj = (w > 0).astype(float).tocsr()
    space = TruncatedSpace(tuple((i,) for i in range(n_vertices)), work, guard,
                           mu, origin, "graph", adjacency=adj,
                           meta={"kind": "graph"})
    return WeightedGraph(space, w, deg)


def _bfs(graph: WeightedGraph, i: int) -> np.ndarray:
    d = csgraph.shortest_path(graph.weights, unweighted=True, indices=i)
    return d


def geodesic_distance(graph: WeightedGraph, x: int, y: int) -> int:
    """Edge count of a shortest path from `x` to `y` inside the window."""
    d = _bfs(graph, x)[y]
    if not np.isfinite(d):
        raise DisconnectedError(f"no path from {x} to {y} inside the window")
    return int(d)


def geodesic_path(graph: WeightedGraph, x0: int, x: int) -> list[int]:
    """One shortest path ``x0 -> ... -> x``.

    At every layer the lowest-index vertex that still lies on some
    geodesic to `x` is taken.
    """
    d0 = _bfs(graph, x0)
    dx = _bfs(graph, x)
    total = d0[x]
    if not np.isfinite(total):
        raise DisconnectedError(f"no path from {x0} to {x} inside the window")
    path = [int(x0)]
    cur = x0
    for k in range(1, int(total) + 1):
        nb = graph.neighbours(cur)
        ok = nb[(d0[nb] == k) & (d0[nb] + dx[nb] == total)]
        cur = int(ok.min())
        path.append(cur)
    return path


def ball(space: TruncatedSpace, center: int, r: int) -> frozenset:
    """Open ball ``{y : d(center, y) < r}``.

    ``r = 0`` gives the empty set.
    """
    if r < 0:
        raise ConfigError("radius must be nonnegative")
    if r + space.dist_origin[center] > space.guard_radius:
        raise TruncationError(
            f"ball of radius {r} around {center} leaves the guard window")
    d = space.distances_from(center)
    return frozenset(int(i) for i in np.flatnonzero((d >= 0) & (d < r)))


def is_geodesically_convex(graph: WeightedGraph, D: Iterable[int]) -> bool:
    """True iff every geodesic between two points of `D` stays in `D`.

    Geodesics are enumerated through the interval
    ``{w : d(u, w) + d(w, v) = d(u, v)}``; if that interval touches a state
    with edges leaving the window, a geodesic may run outside and the
    question cannot be settled on the window.
    """
    D = sorted(set(int(i) for i in D))
    space = graph.space
    if any(space.dist_origin[i] > space.working_radius for i in D):
        raise PreconditionError("D must lie inside the working window")
    in_d = np.zeros(space.n, dtype=bool)
    in_d[D] = True
    leaky = graph.escaped > 0
    dist = {u: _bfs(graph, u) for u in D}
    for a, u in enumerate(D):
        for v in D[a + 1:]:
            du, dv = dist[u], dist[v]
            inter = np.isclose(du + dv, du[v])
            if np.any(inter & leaky):
                raise TruncationError(
                    f"geodesics between {u} and {v} may leave the guard window")
            if np.any(inter & ~in_d):
                return False
    return True


def random_weighted_graph(n_vertices: int, extra_prob: float, seed: int,
                          weight_range: tuple[float, float] = (0.5, 2.0)) -> WeightedGraph:
    """Connected random graph: a random spanning tree plus Bernoulli extra edges.

    Vertex 0 is the origin; weights are uniform on `weight_range`.
    """
    if n_vertices < 2:
        raise ConfigError("need at least two vertices")
    if not 0 <= extra_prob <= 1:
        raise ConfigError("extra_prob must lie in [0, 1]")
    lo, hi = weight_range
    if not 0 < lo <= hi:
        raise ConfigError("weights must be positive")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_vertices)
    pairs = {tuple(sorted((int(order[i]), int(order[rng.integers(0, i)]))))
             for i in range(1, n_vertices)}
    iu, ju = np.triu_indices(n_vertices, 1)
    pick = rng.random(iu.size) < extra_prob
    pairs |= {(int(a), int(b)) for a, b in zip(iu[pick], ju[pick])}
    pairs = sorted(pairs)
    w = rng.uniform(lo, hi, size=len(pairs))
    return graph_from_edges(n_vertices, [(a, b, wt) for (a, b), wt in zip(pairs, w)])
