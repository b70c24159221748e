import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fkchain import io
from fkchain.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, list_tasks, main, run
from fkchain.config import load_config, validate
from fkchain.errors import ConfigError
from fkchain.kernel import profile_kernel
from fkchain.space import build_lattice, random_weighted_graph
from fkchain.subordination import stable_pmf

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_graph_round_trip(tmp_path):
    g = random_weighted_graph(40, 0.1, 9)
    p = io.write_graph(tmp_path / "g.txt", g)
    h = io.read_graph(p)
    assert (abs(g.weights - h.weights) > 0).nnz == 0


@pytest.mark.parametrize("text", [
    "0 1 1.0\n",
    "vertices 3\n0 1\n",
    "vertices 3\n0 1 -2\n",
    "vertices 2\n0 x 1\n",
    "# only a comment\n",
])
def test_graph_parse_errors(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ConfigError):
        io.read_graph(p)


def test_graph_comments(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# triangle\nvertices 3\n0 1 1.0  # edge\n\n1 2 2.0\n2 0 0.5\n")
    g = io.read_graph(p)
    assert np.allclose(g.degree, [1.5, 3.0, 2.5])


def test_kernel_round_trip(tmp_path):
    P = profile_kernel(build_lattice(1, 6, 6), lambda t: np.maximum(t, 1.0) ** -2.0)
    csv_path, side = io.write_kernel(tmp_path / "k.csv", P)
    i, j, v = io.read_kernel_entries(csv_path)
    M = np.zeros((P.n, P.n))
    M[i, j] = v
    assert np.array_equal(M, P.dense())
    meta = json.loads(side.read_text())
    assert meta["n"] == P.n and meta["Z"] == pytest.approx(P.meta["Z"])


def test_pmf_round_trip(tmp_path):
    a = stable_pmf(0.5, 50)
    csv_path, side = io.write_pmf(tmp_path / "a.csv", a)
    header, rows = io.read_csv(csv_path)
    assert header == ["k", "a_k"]
    assert np.array_equal(np.array([float(r[1]) for r in rows]), a.linear)
    assert json.loads(side.read_text())["K_max"] == 50


def test_csv_formatting(tmp_path):
    p = io.write_csv(tmp_path / "t.csv", ["a", "b", "c"], [(True, 0.1, math.inf), (3, 1e-300, False)])
    assert p.read_bytes() == b"a,b,c\ntrue,0.1,inf\n3,1e-300,false\n"


def test_list_tasks():
    names = [n for n, _ in list_tasks()]
    assert len(names) == 7
    assert "dsp-check" in names and "ground-state" in names
    assert names == sorted(names)


def run_cfg(name, tmp_path, seed=None):
    cfg = load_config(CONFIGS / name)
    return run(cfg, tmp_path, seed)


def test_dsp_check_exit_zero(tmp_path):
    code, summary = run_cfg("dsp_check.json", tmp_path)
    assert code == EXIT_OK
    lo, hi = summary["c_star_interval"]
    assert 0 < lo <= hi < math.inf
    assert json.loads((tmp_path / "summary.json").read_text())["exit_code"] == 0


def test_flat_potential_is_config_error(tmp_path):
    code, summary = run_cfg("harmonic_cert_flat.json", tmp_path)
    assert code == EXIT_CONFIG
    assert "InsufficientWindow" in summary["error"] or "confin" in summary["error"]


def test_decay_table_polynomial(tmp_path):
    code, _ = run_cfg("decay_table.json", tmp_path)
    assert code == EXIT_OK
    header, rows = io.read_csv(tmp_path / "decay_table.csv")
    d = np.array([float(r[0]) for r in rows])
    rate = np.array([float(r[1]) for r in rows])
    assert np.allclose(rate, d**-3.0, rtol=1e-13)


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name):
    validate(load_config(CONFIGS / name))


@pytest.mark.parametrize("name,csv", [("mc_validate.json", "estimates_U.csv"),
                                      ("harmonic_cert.json", "certificate_2.csv")])
def test_byte_identical_reruns(tmp_path, name, csv):
    a, b = tmp_path / "a", tmp_path / "b"
    run_cfg(name, a)
    run_cfg(name, b)
    assert (a / csv).read_bytes() == (b / csv).read_bytes()
    for p in a.glob("*.csv"):
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_seed_override(tmp_path):
    run_cfg("mc_validate.json", tmp_path / "a")
    code, summary = run_cfg("mc_validate.json", tmp_path / "b", seed=7)
    assert summary["seed"] == 7 and code == EXIT_OK
    assert (tmp_path / "a" / "estimates_U.csv").read_bytes() != \
        (tmp_path / "b" / "estimates_U.csv").read_bytes()


@pytest.mark.parametrize("doc", [
    {"task": "no-such-task"},
    {"task": "dsp-check", "bogus": 1},
    {"task": "dsp-check", "space": {"type": "lattice", "dimension": 1,
                                    "guard_radius": 5, "working_radius": 9}},
    {"task": "dsp-check", "kernel": {"type": "z1_subordinate", "alpha": "half"}},
])
def test_schema_errors(tmp_path, doc):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_config(p)
    task = doc["task"] if doc["task"] != "no-such-task" else "dsp-check"
    assert main([task, "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_main_argument_errors(tmp_path, capsys):
    assert main(["nope", "--config", "x.json"]) == EXIT_CONFIG
    assert main(["dsp-check"]) == EXIT_CONFIG
    assert main(["ground-state", "--config", str(CONFIGS / "dsp_check.json")]) == EXIT_CONFIG
    assert main(["list-tasks"]) == EXIT_OK
    assert "laplacian-reduce" in capsys.readouterr().out


def test_validation_failure_exit_one(tmp_path):
    # a vanishing z tolerance cannot absorb Monte Carlo noise
    cfg = load_config(CONFIGS / "mc_validate.json")
    cfg["task"].update(n_paths=200, z_max=1e-9)
    code, summary = run(cfg, tmp_path)
    assert code == EXIT_FAIL and summary["status"] == "fail"
    assert not all(c["pass"] for c in summary["checks"])


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fkchain.cli", "decay-table", "--config",
                          str(CONFIGS / "decay_table.json"), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "decay_table.csv").exists()
