"""Readers and writers for graphs, kernels, pmfs and result tables.

CSV bodies are written with shortest round-trip float text and a fixed
newline, so identical inputs give byte-identical files. Anything that varies
between runs (timestamps) belongs in JSON summaries only.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .space import WeightedGraph, graph_from_edges


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> Path:
    """Write rows under `header`; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty")
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_jsonable(v) for v in seq]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable as strings
        return v if math.isfinite(v) else _fmt(v)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_graph(path, origin: int = 0, **kw) -> WeightedGraph:
    """Parse a `vertices N` header followed by `u v weight` lines.

    Blank lines and `#` comments are skipped. Extra keywords go to
    `graph_from_edges`.
    """
    n = None
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "vertices":
                raise ConfigError(f"line {lineno}: expected 'vertices N' header")
            n = int(parts[1])
            if n < 1:
                raise ConfigError("vertex count must be positive")
            continue
        if len(parts) != 3:
            raise ConfigError(f"line {lineno}: expected 'u v weight'")
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as e:
            raise ConfigError(f"line {lineno}: {e}") from e
        if u < 0 or v < 0 or not (w > 0 and math.isfinite(w)):
            raise ConfigError(f"line {lineno}: labels must be >= 0 and weights positive")
        edges.append((u, v, w))
    if n is None:
        raise ConfigError("missing 'vertices N' header")
    return graph_from_edges(n, edges, origin=origin, **kw)


def write_graph(path, graph: WeightedGraph) -> Path:
    W = graph.weights.tocoo() if hasattr(graph.weights, "tocoo") else None
    lines = [f"vertices {graph.space.n}"]
    if W is not None:
        for i, j, w in sorted(zip(W.row.tolist(), W.col.tolist(), W.data.tolist())):
            if i < j:
                lines.append(f"{i} {j} {_fmt(w)}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_kernel(path, P) -> tuple[Path, Path]:
    """Nonzero entries as `x_idx,y_idx,value` plus a JSON sidecar."""
    M = P.dense()
    ii, jj = np.nonzero(M)
    csv_path = write_csv(path, ["x_idx", "y_idx", "value"],
                         zip(ii.tolist(), jj.tolist(), M[ii, jj].tolist()))
    meta = {"kind": P.kind, "n": P.n, "Z": P.meta.get("Z"),
            "row_tail_max": float(P.row_tail.max(initial=0.0)),
            "row_tail": P.row_tail,
            "col_exterior_max": None if P.col_exterior is None
            else float(np.max(P.col_exterior, initial=0.0)),
            "meta": {k: v for k, v in P.meta.items() if k != "Z"}}
    side = write_json(Path(path).with_suffix(".json"), meta)
    return csv_path, side


def read_kernel_entries(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    header, rows = read_csv(path)
    if header != ["x_idx", "y_idx", "value"]:
        raise ConfigError(f"unexpected kernel header {header}")
    a = np.array(rows, dtype=float).reshape(-1, 3)
    return a[:, 0].astype(np.int64), a[:, 1].astype(np.int64), a[:, 2]


def write_pmf(path, a) -> tuple[Path, Path]:
    vals = np.asarray(a.linear)
    csv_path = write_csv(path, ["k", "a_k"], zip(range(1, vals.size + 1), vals.tolist()))
    side = write_json(Path(path).with_suffix(".json"),
                      {"alpha": a.alpha, "m": a.m, "theta_m": a.theta_m, "M": a.M,
                       "tail_bound": a.tail_bound, "K_max": a.K_max, "kind": a.kind})
    return csv_path, side


def write_certificate(prefix, cert) -> tuple[Path, Path | None]:
    """Constants as JSON and, when present, the `x_idx,f,lower,upper,pass` table."""
    prefix = Path(prefix)
    js = write_json(prefix.with_suffix(".json"), cert.to_dict())
    if cert.table is None:
        return js, None
    t = cert.table
    cols = ["x_idx", "f", "lower", "upper", "pass"]
    tab = write_csv(prefix.with_suffix(".csv"), cols, zip(*(np.asarray(t[c]).tolist() for c in cols)))
    return js, tab


def write_spectral(prefix, res) -> tuple[Path, Path]:
    prefix = Path(prefix)
    js = write_json(prefix.with_suffix(".json"),
                    {"lambda0": res.lambda0, "residual": res.residual, "iterations": res.iterations})
    tab = write_csv(prefix.with_suffix(".csv"), ["x_idx", "psi0"], enumerate(res.psi0.tolist()))
    return js, tab


def write_estimates(path, estimates) -> Path:
    return write_csv(path, ["n", "estimate", "std_error", "n_paths", "censored"],
                     (e.row() for e in estimates))


def write_decay_table(path, rows) -> Path:
    cols = ["d", "rate", "log_rate", "class", "W_family"]
    return write_csv(path, cols, ([r[c] for c in cols] for r in rows))
