"""Experiment configuration: JSON schema plus builders for each section."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .feynman_kac import FKOperator, Potential
from .kernel import Kernel, nn_kernel
from .io import read_graph
from .nn_estimates import ProfileW
from .space import (WeightedGraph, build_lattice, graph_from_edges, lattice_graph,
                    random_weighted_graph)
from .subordination import (heat_kernel_sequence, relativistic_pmf, stable_pmf,
                            subordinate_kernel, z1_subordinate_kernel)

TASKS = {
    "decay-table": "closed-form decay rates of harmonic functions per kernel class",
    "dsp-check": "direct step property constant of the configured kernel",
    "ground-state": "Perron pair of U, finite-rank gaps and eigenfunction certificates",
    "harmonic-cert": "solve harmonic Dirichlet problems and certify two-sided bounds and BHI",
    "laplacian-reduce": "check the graph Laplacian to Feynman-Kac reduction on random inputs",
    "mc-validate": "Monte Carlo Feynman-Kac estimates against exact semigroup powers",
    "nn-decay": "product-bound sandwich and decay drift for nearest-neighbour walks on Z^1",
}

_W = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["power", "exp_power", "log_power"]},
        "p": {"type": "number", "exclusiveMinimum": 0},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "shift": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["task"],
    "properties": {
        "task": {
            "oneOf": [
                {"enum": sorted(TASKS)},
                {"type": "object", "required": ["name"],
                 "properties": {"name": {"enum": sorted(TASKS)}}},
            ]
        },
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1, "maximum": 64},
        "space": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["lattice", "graph", "random_graph"]},
                "dimension": {"type": "integer", "minimum": 1, "maximum": 4},
                "guard_radius": {"type": "integer", "minimum": 0},
                "working_radius": {"type": "integer", "minimum": 0},
                "metric": {"enum": ["l1", "linf"]},
                "path": {"type": "string"},
                "vertices": {"type": "integer", "minimum": 1},
                "edges": {"type": "array",
                          "items": {"type": "array", "minItems": 3, "maxItems": 3,
                                    "items": {"type": "number"}}},
                "origin": {"type": "integer", "minimum": 0},
                "extra_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "kernel": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["nearest_neighbour", "z1_subordinate", "subordinate"]},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "m": {"type": "number", "minimum": 0},
                "N_max": {"type": "integer", "minimum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "subordinator": {
            "type": "object",
            "required": ["type", "alpha"],
            "properties": {
                "type": {"enum": ["stable", "relativistic"]},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "m": {"type": "number", "exclusiveMinimum": 0},
                "K_max": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "potential": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["constant", "radial", "values"]},
                "value": {"type": "number", "exclusiveMinimum": 0},
                "W": _W,
                "values": {"type": "array", "items": {"type": "number"}},
                "outside_lower": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    """Schema check plus cross-field consistency."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {e.message}") from e
    sp = cfg.get("space", {})
    if "working_radius" in sp and "guard_radius" in sp and sp["working_radius"] > sp["guard_radius"]:
        raise ConfigError("working_radius must not exceed guard_radius")


def task_name(cfg: dict) -> str:
    t = cfg["task"]
    return t if isinstance(t, str) else t["name"]


def task_params(cfg: dict) -> dict:
    t = cfg["task"]
    return {} if isinstance(t, str) else {k: v for k, v in t.items() if k != "name"}


def _need(cfg: dict, section: str) -> dict:
    if section not in cfg:
        raise ConfigError(f"task {task_name(cfg)!r} needs a '{section}' section")
    return cfg[section]


def build_graph(cfg: dict) -> WeightedGraph:
    sp = _need(cfg, "space")
    kind = sp["type"]
    if kind == "lattice":
        return lattice_graph(build_space(cfg))
    if kind == "random_graph":
        if "vertices" not in sp:
            raise ConfigError("random_graph needs 'vertices'")
        return random_weighted_graph(sp["vertices"], sp.get("extra_prob", 0.05), sp.get("seed", 0))
    origin = sp.get("origin", 0)
    if "path" in sp:
        return read_graph(sp["path"], origin=origin)
    if "vertices" not in sp or "edges" not in sp:
        raise ConfigError("graph space needs 'path' or 'vertices' and 'edges'")
    return graph_from_edges(sp["vertices"], sp["edges"], origin=origin)


def build_space(cfg: dict):
    sp = _need(cfg, "space")
    if sp["type"] != "lattice":
        return build_graph(cfg).space
    for key in ("dimension", "guard_radius"):
        if key not in sp:
            raise ConfigError(f"lattice space needs '{key}'")
    return build_lattice(sp["dimension"], sp["guard_radius"],
                         sp.get("working_radius", sp["guard_radius"]), metric=sp.get("metric", "l1"))


def build_pmf(cfg: dict, K_default: int = 1000):
    s = _need(cfg, "subordinator")
    K = s.get("K_max", K_default)
    if s["type"] == "stable":
        return stable_pmf(s["alpha"], K)
    if "m" not in s:
        raise ConfigError("relativistic subordinator needs m > 0")
    return relativistic_pmf(s["alpha"], s["m"], K)


def build_kernel(cfg: dict) -> Kernel:
    k = _need(cfg, "kernel")
    kind = k["type"]
    if kind == "nearest_neighbour":
        return nn_kernel(build_graph(cfg))
    if kind == "z1_subordinate":
        if "alpha" not in k:
            raise ConfigError("z1_subordinate kernel needs alpha")
        space = build_space(cfg)
        return z1_subordinate_kernel(space, k["alpha"], k.get("m", 0.0))
    graph = build_graph(cfg)
    N = k.get("N_max", 200)
    a = build_pmf(cfg, K_default=N)
    hk = heat_kernel_sequence(nn_kernel(graph), graph.degree, N)
    return subordinate_kernel(hk, a, k.get("eps", 1e-2))


def build_profile(spec: dict) -> ProfileW:
    """Radial profile from a `{family, p, c, shift}` object.

    `power` with a shift s gives W(n) = s + n^p (log W slowly varying).
    """
    fam = spec["family"]
    p = spec.get("p", 1.0)
    if fam == "power":
        s = float(spec.get("shift", 0.0))
        if s == 0:
            return ProfileW.power(p)
        return ProfileW.custom(lambda n: s + n**p, 0.0, lambda n: np.log(s + n**p),
                               f"{s:g}+n^{p:g}")
    if fam == "exp_power":
        return ProfileW.exp_power(spec.get("c", 1.0), p)
    return ProfileW.log_power(p)


def build_potential(cfg: dict, space) -> Potential:
    pot = _need(cfg, "potential")
    kind = pot["type"]
    lower = pot.get("outside_lower")
    if kind == "constant":
        if "value" not in pot:
            raise ConfigError("constant potential needs 'value'")
        return Potential(np.full(space.n, float(pot["value"])), None,
                         float(pot["value"]) if lower is None else lower)
    if kind == "radial":
        if "W" not in pot:
            raise ConfigError("radial potential needs 'W'")
        return Potential.radial(space, build_profile(pot["W"]), outside_lower=lower)
    vals = np.asarray(pot.get("values", []), dtype=float)
    if vals.shape != (space.n,):
        raise ConfigError(f"potential values must list {space.n} entries")
    return Potential(vals, None, lower)


def build_operator(cfg: dict) -> FKOperator:
    P = build_kernel(cfg)
    return FKOperator(P, build_potential(cfg, P.space))


def seed_of(cfg: dict, override: int | None = None) -> int:
    if override is not None:
        return int(override)
    return int(task_params(cfg).get("seed", cfg.get("seed", 0)))
