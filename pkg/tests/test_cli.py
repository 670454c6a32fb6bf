import csv
import json
import subprocess
import sys

import pytest

from taylorsde.cli import main

CONFIGS = {
    "expand": "field = cubic\na = 0\nb = 1\nt = 0\nxi = 2\n",
    "remainder": "field = t_x2\nt = 0.5\nb = 0\nmean = 1\nsigma = 1\na_points = 11\n",
    "compare": "field = quadratic\nsteps = 50\nn_paths = 200\nseed = 3\n",
    "portfolio": ("mu = 0.08\nsigma = 0.2\ngamma = 2\nn_paths = 4000\nn_fit = 1000\n"
                  "n_outer = 32\nn_inner = 300\nj_steps = 5\n"),
}


def run(tmp_path, sub, text, *extra, name="cfg.txt"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / f"out-{sub}-{len(list(tmp_path.iterdir()))}"
    code = main([sub, "--config", str(cfg), "--out-dir", str(out), *extra])
    return code, out


def _csv_rows(path):
    return list(csv.reader(line for line in path.read_text().splitlines() if not line.startswith("#")))


def test_expand_outputs(tmp_path, capsys):
    code, out = run(tmp_path, "expand", CONFIGS["expand"])
    assert code == 0
    assert capsys.readouterr().out.strip() == str(out / "expand.json")
    doc = json.loads((out / "expand.json").read_text())
    assert doc["report"]["remainder"] == 1.0 and doc["report"]["expansion"] == 7.0
    assert doc["config"]["field"] == "cubic" and doc["seed"] == 0


def test_expand_identity_zero_remainder(tmp_path):
    code, out = run(tmp_path, "expand", "field = identity\na = 0\nb = 0\nt = 1\nxi = 3\n")
    assert code == 0 and json.loads((out / "expand.json").read_text())["report"]["remainder"] == 0.0


def test_missing_key_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "expand", "a = 0\nb = 1\nt = 0\nxi = 2\n")
    assert code == 2
    err = capsys.readouterr()
    assert "'field'" in err.err and err.out == ""


@pytest.mark.parametrize("text, needle", [
    ("field = cubic\na = 0\nb = 1\nt = 0\nxi = 2\nbogus = 1\n", "line 6: unknown key 'bogus'"),
    ("field = cubic\na = 0\na = 1\nb = 1\nt = 0\nxi = 2\n", "line 3: duplicate key 'a'"),
    ("field = cubic\na = zero\nb = 1\nt = 0\nxi = 2\n", "line 2:"),
    ("field = sinc\na = 0\nb = 1\nt = 0\nxi = 2\n", "line 1:"),
    ("field = cubic\na = 0\nb = 1\nt = 0\nxi = nan\n", "line 5:"),
    ("just words\n", "line 1:"),
])
def test_config_errors_name_the_line(tmp_path, capsys, text, needle):
    code, _ = run(tmp_path, "expand", text)
    assert code == 2
    assert needle in capsys.readouterr().err


def test_range_checks(tmp_path, capsys):
    code, _ = run(tmp_path, "portfolio", "mu = 0.08\nsigma = -0.2\n")
    assert code == 2 and "sigma" in capsys.readouterr().err
    code, _ = run(tmp_path, "compare", "field = identity\nt0 = 1\nT = 0.5\n")
    assert code == 2
    code, _ = run(tmp_path, "remainder", "field = cubic\nt = 0\nmean = 0\nnoise = student-t\n")
    assert code == 2
    code, _ = run(tmp_path, "expand", CONFIGS["expand"], "--workers", "0")
    assert code == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "remainder", "field = exp\nt = 0\nmean = 1000\n")
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_remainder_outputs(tmp_path):
    code, out = run(tmp_path, "remainder", CONFIGS["remainder"])
    assert code == 0
    rows = _csv_rows(out / "remainder.csv")
    assert rows[0] == ["a", "ER", "abs_ER", "foc_residual"] and len(rows) == 1 + 11
    side = json.loads((out / "remainder_fit.json").read_text())
    assert abs(side["a_hat"] - 0.5) <= 1e-8
    assert side["fit"]["root_found"] and side["a_hat_locally_optimal"]
    assert side["method"] == "enumeration"


def test_remainder_quadratic_zero(tmp_path):
    code, out = run(tmp_path, "remainder", "field = quadratic\nt = 0.2\nb = 0.5\nmean = -1\nsigma = 2\n")
    assert code == 0
    assert all(abs(float(r[1])) <= 1e-10 for r in _csv_rows(out / "remainder.csv")[1:])


def test_remainder_monte_carlo(tmp_path):
    code, out = run(tmp_path, "remainder", "field = cubic\nt = 0\nmean = 0.5\nnoise = centered-uniform\n"
                                           "n_samples = 5000\n")
    assert code == 0
    assert json.loads((out / "remainder_fit.json").read_text())["method"] == "monte-carlo"


def test_compare_outputs(tmp_path):
    code, out = run(tmp_path, "compare", CONFIGS["compare"] + "dump_paths = true\n")
    assert code == 0
    text = (out / "compare.csv").read_text()
    assert text.startswith("# field = ")
    rows = _csv_rows(out / "compare.csv")
    assert rows[0] == ["scheme", "max_abs_error", "terminal_rmse", "flags"] and len(rows) == 4
    for name in ("paths_xi.csv", "paths_truth.csv", "paths_ito.csv", "paths_new_time_dependent.csv",
                 "paths_new_time_independent.csv"):
        assert (out / name).exists()
    doc = json.loads((out / "compare.json").read_text())
    assert doc["config"]["n_paths"] == 200 and len(doc["rows"]) == 3


def test_compare_identity_exact(tmp_path):
    code, out = run(tmp_path, "compare", "field = identity\nn_paths = 100\nsteps = 200\nmode = marginal\n")
    assert code == 0
    row = json.loads((out / "compare.json").read_text())["rows"][1]
    assert row["scheme"] == "new-time-independent" and row["max_abs_error"] < 1e-12


def test_compare_deterministic_field_flagged(tmp_path):
    code, out = run(tmp_path, "compare", "field = constant\nn_paths = 20\nsteps = 10\nmode = marginal\n")
    assert code == 0
    flags = [r[3] for r in _csv_rows(out / "compare.csv")[1:3]]
    assert all("delta_zero" in f for f in flags)


def test_compare_gbm_three_step_sizes(tmp_path):
    rmse = []
    for steps in (10, 100, 1000):
        code, out = run(tmp_path, "compare", f"field = quadratic\nprocess = gbm\nsigma = 0.2\nsteps = {steps}\n"
                                             "n_paths = 500\n")
        assert code == 0
        rmse.append(json.loads((out / "compare.json").read_text())["rows"][2]["terminal_rmse"])
    assert rmse[0] > rmse[1] > rmse[2]


def test_portfolio_outputs(tmp_path):
    code, out = run(tmp_path, "portfolio", CONFIGS["portfolio"])
    assert code == 0
    doc = json.loads((out / "portfolio.json").read_text())
    assert doc["config"]["pi_lo"] == 0.0 and doc["config"]["pi_hi"] == 3.0 and doc["config"]["pi_step"] == 0.05
    assert doc["report"]["pi_merton"] == pytest.approx(1.0)
    rows = _csv_rows(out / "portfolio.csv")
    assert rows[0][:6] == ["mu", "sigma", "gamma", "T", "n_paths", "seed"] and len(rows) == 2


@pytest.mark.parametrize("sub", sorted(CONFIGS))
def test_byte_identical_reruns(tmp_path, sub):
    outs = []
    for workers in ("1", "1", "4"):
        code, out = run(tmp_path, sub, CONFIGS[sub], "--workers", workers)
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1] == outs[2]


def test_seed_override(tmp_path):
    _, a = run(tmp_path, "compare", CONFIGS["compare"], "--seed", "11")
    _, b = run(tmp_path, "compare", CONFIGS["compare"])
    doc = json.loads((a / "compare.json").read_text())
    assert doc["seed"] == 11 and doc["config"]["seed"] == 11
    assert (a / "compare.csv").read_bytes() != (b / "compare.csv").read_bytes()


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text(CONFIGS["expand"])
    proc = subprocess.run([sys.executable, "-m", "taylorsde", "expand", "--config", str(cfg),
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip().endswith("expand.json")


@pytest.mark.skipif("cython" not in __import__("taylorsde").available_backends(), reason="extension not built")
def test_outputs_identical_across_kernel_backends(tmp_path):
    from taylorsde import kernels

    outs = []
    for backend in ("python", "cython"):
        prev = kernels.set_backend(backend)
        try:
            code, out = run(tmp_path, "compare", CONFIGS["compare"])
        finally:
            kernels.set_backend(prev)
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
