"""Command-line experiment runner.

    fkchain <task> --config cfg.json --out DIR [--seed N]
    fkchain list-tasks

Every run writes ``summary.json`` plus task CSVs into DIR. Exit status is 0
when every check passes, 1 when a certification check fails and 2 for
configuration or window problems.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import (TASKS, build_graph, build_kernel, build_operator, build_pmf, build_profile,
                     load_config, seed_of, task_name, task_params)
from .dsp import dsp_constant, dsp_pmf_check
from .errors import CertificateError, ConfigError, FKChainError
from .feynman_kac import (FKOperator, apply_conjugate_W, apply_U, bhi_check, bound_constants,
                          conjugate_semigroup_apply, defect_bands, find_B0,
                          proof_iteration_check, semigroup_apply, solve_harmonic,
                          verify_two_sided)
from .montecarlo import SimConfig, fk_estimate, simulate_chain
from .nn_estimates import (asymptotic_decay_check, decay_table, log_product_lower_bound,
                           log_product_upper_bound, nn_sandwich_check, z1_nn_harmonic)
from .schrodinger import (GraphLaplacian, apply_H, eigenfunction_decay_cert, eigenpairs,
                          finite_rank_gap, ground_state, reduce_to_fk)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def list_tasks() -> list[tuple[str, str]]:
    """Alphabetized (name, description) pairs."""
    return sorted(TASKS.items())


def _window_cstar(P, params: dict):
    rep = dsp_constant(P, params.get("scope", "window"), params.get("middle", "window"))
    if not rep.holds:
        raise CertificateError(f"direct step property fails; witness {rep.witness}")
    return rep


# -- tasks ------------------------------------------------------------------
# each returns (summary, passed)

def task_dsp_check(cfg, params, seed, out, workers):
    P = build_kernel(cfg)
    rep = dsp_constant(P, params.get("scope", "working"), params.get("middle", "full"),
                       params.get("cap", math.inf))
    summary = {"dsp": rep.to_dict(), "c_star_interval": list(rep.interval), "n_states": P.n}
    ok = rep.holds
    if "subordinator" in cfg and params.get("pmf_check", True):
        a = build_pmf(cfg)
        pr = dsp_pmf_check(a)
        summary["pmf"] = {"c": pr.c, "holds": pr.holds, "plateau_change": pr.plateau_change,
                          "K_max": a.K_max}
        io.write_pmf(out / "pmf.csv", a)
        ok = ok and pr.holds
    if params.get("dump_kernel", False):
        io.write_kernel(out / "kernel.csv", P)
    return summary, ok


def _boundary_sets(params, nB: int, seed: int):
    specs = params.get("boundary") or [{"type": "constant", "value": 1.0},
                                       {"type": "indicator", "position": 0},
                                       {"type": "random", "low": 0.1, "high": 3.0}]
    rng = np.random.default_rng(seed)
    sets = []
    for s in specs:
        kind = s.get("type")
        if kind == "constant":
            sets.append(np.full(nB, float(s.get("value", 1.0))))
        elif kind == "indicator":
            v = np.zeros(nB)
            v[int(s.get("position", 0)) % nB] = 1.0
            sets.append(v)
        elif kind == "random":
            sets.append(rng.uniform(float(s.get("low", 0.1)), float(s.get("high", 3.0)), nB))
        else:
            raise ConfigError(f"unknown boundary data type {kind!r}")
    return sets


def task_harmonic_cert(cfg, params, seed, out, workers):
    op = build_operator(cfg)
    rep = _window_cstar(op.kernel, params)
    B0 = find_B0(op, rep.interval[1])
    if not B0:
        B0 = frozenset([op.space.origin])
    B = sorted(B0)
    everywhere = range(op.n)
    sets = _boundary_sets(params, len(B), seed)
    eps = float(params.get("eps", 1e-15))

    def one(data):
        sol = solve_harmonic(op, B, everywhere, data, eps=eps)
        cert = bound_constants(op, B0, rep.interval)
        verify_two_sided(op, B, everywhere, sol.f, cert)
        iters = proof_iteration_check(op, B, sol.f, cert, int(params.get("proof_n", 5)))
        bands = defect_bands(op, B, sol.f)
        return sol, cert, iters, bands

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, sets))
    summary = {"c_star_interval": list(rep.interval), "B0": B, "solutions": []}
    ok = True
    for i, (sol, cert, iters, _) in enumerate(results):
        io.write_certificate(out / f"certificate_{i}", cert)
        summary["solutions"].append({
            "sweeps": sol.sweeps, "q": sol.q, "residual": sol.residual,
            "dense_check": sol.dense_check, "certificate": cert.to_dict(),
            "proof_iteration_violations": iters})
        ok = ok and cert.passed
    region = [i for i in range(op.n) if i not in B0 and op.space.working[i]]
    bhi = []
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            fi, ci, _, bi = results[i]
            fj, _, _, bj = results[j]
            r = bhi_check(fi.f, fj.f, region, ci, bi.sub + bi.sup, bj.sub + bj.sup)
            bhi.append({"pair": [i, j], **r})
            ok = ok and r["pass"]
    summary["bhi"] = bhi
    return summary, ok


def task_nn_decay(cfg, params, seed, out, workers):
    Ws = params.get("W") or [{"family": "power", "p": 2, "shift": 1},
                             {"family": "exp_power", "c": 1, "p": 1}]
    rs = params.get("r", [3, 5])
    radius = int(params.get("radius", 320))
    M_nn = float(params.get("M_nn", 0.5))
    r1 = int(params.get("r1", 20))
    rows, reports = [], []
    ok = True
    for spec in Ws:
        W = build_profile(spec)
        for r in rs:
            sol = z1_nn_harmonic(W, int(r), radius, lambda x: 1.0 + 0.1 * x * x)
            sw = nn_sandwich_check(sol, W, M_nn)
            dc = asymptotic_decay_check(sol.log_f, sol.space, W, r1=r1, r2=radius)
            reports.append({"W": W.label, "family": W.family, "rho": W.rho, "r": int(r),
                            "points": sw.points, "upper_violations": sw.upper_violations,
                            "lower_violations": sw.lower_violations,
                            "decay_means": dc.means, "expected": dc.expected,
                            "monotone": dc.monotone, "decay_pass": dc.passes})
            ok = ok and sw.passes and dc.monotone
            x = sol.space.coords[:, 0]
            for k in np.argsort(x, kind="stable"):
                d = int(abs(x[k]))
                if x[k] < r:
                    continue
                rows.append((W.label, int(r), d, sol.log_f[k],
                             sol.log_f.max() + log_product_upper_bound(W, int(r), d),
                             sol.log_f[sol.space.index((int(r),))]
                             + log_product_lower_bound(W, int(r), d, M_nn)))
    io.write_csv(out / "nn_decay.csv", ["W", "r", "d", "log_f", "log_upper", "log_lower"], rows)
    return {"runs": reports}, ok


def task_decay_table(cfg, params, seed, out, workers):
    W = build_profile(params.get("W", {"family": "power", "p": 1}))
    dist = params.get("distances", list(range(1, 101)))
    if isinstance(dist, dict):
        dist = range(int(dist.get("start", 1)), int(dist["stop"]) + 1, int(dist.get("step", 1)))
    kc = params.get("kernel_class", "nearest_neighbour")
    rows = decay_table(kc, W, dist, params.get("gamma"), params.get("c"))
    io.write_decay_table(out / "decay_table.csv", rows)
    return {"kernel_class": kc, "W": W.label, "rows": len(rows)}, True


def _measure(op: FKOperator, params):
    return op.space.measure if params.get("measure") == "space" else np.ones(op.n)


def task_ground_state(cfg, params, seed, out, workers):
    op = build_operator(cfg)
    mu = _measure(op, params)
    gs = ground_state(op, mu, float(params.get("tol", 1e-12)))
    io.write_spectral(out / "ground_state", gs)
    summary = {"lambda0": gs.lambda0, "residual": gs.residual, "iterations": gs.iterations,
               "psi0_positive": bool(gs.psi0.min() > 0)}
    ok = summary["psi0_positive"]
    gaps = []
    for k in params.get("gap_levels", []):
        g = finite_rank_gap(op, mu, float(k))
        gaps.append(g._asdict())
        ok = ok and g.holds
    summary["gaps"] = gaps
    n_exc = int(params.get("excited", 0))
    if params.get("certify", True):
        rep = _window_cstar(op.kernel, params)
        certs = []
        c = eigenfunction_decay_cert(op, gs.lambda0, gs.psi0, rep.interval, lower=True)
        certs.append({"index": 0, "two_sided": True, "passed": c.passed, "C2": c.C2})
        ok = ok and c.passed
        if n_exc:
            vals, vecs = eigenpairs(op, mu, count=n_exc + 1)
            for j in range(1, n_exc + 1):
                c = eigenfunction_decay_cert(op, vals[j], vecs[:, j], rep.interval, lower=False)
                certs.append({"index": j, "lambda": vals[j], "two_sided": False,
                              "passed": c.passed, "C2": c.C2})
                ok = ok and c.passed
        summary["certificates"] = certs
    return summary, ok


_TEST_FUNCTIONS = ("one", "indicator_origin", "inv_V")


def _test_function(name, op):
    if name == "one":
        return np.ones(op.n)
    if name == "indicator_origin":
        e = np.zeros(op.n)
        e[op.space.origin] = 1.0
        return e
    if name == "inv_V":
        return 1.0 / op.V
    raise ConfigError(f"unknown test function {name!r}")


def task_mc_validate(cfg, params, seed, out, workers):
    op = build_operator(cfg)
    n = int(params.get("n", 10))
    paths = int(params.get("n_paths", 100_000))
    zmax = float(params.get("z_max", 3.0))
    sim = SimConfig(seed, paths, n, op.space.origin)
    batch = simulate_chain(op.kernel, sim)
    checks, ok = [], True
    for conv in params.get("conventions", ["U", "W"]):
        ests = []
        for name in params.get("functions", list(_TEST_FUNCTIONS)):
            f = _test_function(name, op)
            est = fk_estimate(op.kernel, op.V, f, sim, conv, [n], batch)[0]
            exact = (semigroup_apply(op, f, n) if conv == "U"
                     else conjugate_semigroup_apply(op, f, n))[op.space.origin]
            dev = abs(est.estimate - exact)
            passed = dev <= zmax * est.std_error or dev == 0.0
            checks.append({"convention": conv, "f": name, "estimate": est.estimate,
                           "exact": exact, "std_error": est.std_error, "pass": passed})
            ests.append(est)
            ok = ok and passed
        io.write_estimates(out / f"estimates_{conv}.csv", ests)
    g = _test_function("indicator_origin", op) + 1.0
    lhs = apply_conjugate_W(op, g) / op.V
    rhs = apply_U(op, g / op.V)
    inter = float(np.abs(lhs - rhs).max() / max(np.abs(rhs).max(), 1e-300))
    ok = ok and inter <= 1e-14
    return {"checks": checks, "intertwining_rel_error": inter, "n": n, "n_paths": paths}, ok


def task_laplacian_reduce(cfg, params, seed, out, workers):
    graph = build_graph(cfg)
    n = graph.space.n
    rng = np.random.default_rng(seed)
    m_spec = params.get("m", "degree")
    m = (graph.degree.copy() if m_spec == "degree" else np.ones(n) if m_spec == "counting"
         else np.asarray(m_spec, dtype=float))
    V_spec = params.get("V", {"low": -0.5, "high": 2.0})
    if isinstance(V_spec, dict):
        V = rng.uniform(float(V_spec["low"]), float(V_spec["high"]), n)
    elif isinstance(V_spec, (int, float)):
        V = np.full(n, float(V_spec))
    else:
        V = np.asarray(V_spec, dtype=float)
    L = GraphLaplacian(graph, m, V)
    op, A, scale = reduce_to_fk(L)
    off = np.ones(n, dtype=bool)
    off[list(A)] = False
    tol = float(params.get("tol", 1e-12))
    worst = 0.0
    for _ in range(int(params.get("n_tests", 20))):
        f = rng.standard_normal(n)
        lhs = apply_H(L, f)
        rhs = -scale * (apply_U(op, f) - f)
        # rounding in H f is proportional to |V| + b/m, not to the signed scale
        err = np.abs(lhs - rhs)[off] / ((np.abs(L.V) + L.b / L.m)[off] * np.abs(f).max())
        worst = max(worst, float(err.max(initial=0.0)))
    io.write_csv(out / "laplacian.csv", ["x_idx", "in_A", "V_tilde", "scale"],
                 ((i, i in A, L.V_tilde[i], scale[i]) for i in range(n)))
    return {"A": sorted(A), "max_rel_error": worst, "tol": tol, "n_states": n}, worst <= tol


RUNNERS = {
    "decay-table": task_decay_table,
    "dsp-check": task_dsp_check,
    "ground-state": task_ground_state,
    "harmonic-cert": task_harmonic_cert,
    "laplacian-reduce": task_laplacian_reduce,
    "mc-validate": task_mc_validate,
    "nn-decay": task_nn_decay,
}


def run(cfg: dict, out, seed: int | None = None) -> tuple[int, dict]:
    """Execute the configured task and write its artefacts; returns (exit code, summary)."""
    name = task_name(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    s = seed_of(cfg, seed)
    started = time.time()
    summary = {"task": name, "seed": s, "version": __version__}
    try:
        body, ok = RUNNERS[name](cfg, task_params(cfg), s, out, int(cfg.get("workers", 1)))
        summary.update(body)
        code = EXIT_OK if ok else EXIT_FAIL
        summary["status"] = "pass" if ok else "fail"
    except CertificateError as e:
        code, summary["status"], summary["error"] = EXIT_FAIL, "fail", str(e)
    except FKChainError as e:
        code, summary["status"] = EXIT_CONFIG, "error"
        summary["error"] = f"{type(e).__name__}: {e}"
    summary["exit_code"] = code
    summary["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started))
    summary["elapsed_s"] = time.time() - started
    io.write_json(out / "summary.json", summary)
    return code, summary


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fkchain", description="Feynman-Kac chain experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("task", help="task name, or 'list-tasks'")
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.task == "list-tasks":
        for name, desc in list_tasks():
            print(f"{name:18s} {desc}")
        return EXIT_OK
    if args.task not in TASKS:
        print(f"fkchain: unknown task {args.task!r}; see 'fkchain list-tasks'", file=sys.stderr)
        return EXIT_CONFIG
    if args.config is None:
        print("fkchain: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if task_name(cfg) != args.task:
            raise ConfigError(f"config is for task {task_name(cfg)!r}, not {args.task!r}")
    except ConfigError as e:
        print(f"fkchain: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.get("output", {}).get("dir", "fkchain-out"))
    code, summary = run(cfg, out, args.seed)
    status = summary.get("status")
    msg = f"{args.task}: {status} (exit {code}) -> {out}"
    if "error" in summary:
        msg += f"\n  {summary['error']}"
    print(msg, file=sys.stderr if code else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
