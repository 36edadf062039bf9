import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from midclt import cli
from midclt.conditions import Partition
from midclt.kernels import median_kernel
from midclt.simulate import make_sampler, read_paths_csv, sample_paths


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def run_exit(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    return exc.value.code, capsys.readouterr().err


# --- kernel eval

def test_kernel_eval_examples(capsys):
    code, out, _ = run(["kernel", "eval", "--kernel", "bifbm", "--H", "0.25", "--K", "1", "--s", "1", "--t", "1"], capsys)
    assert code == 0 and out == "1\n"
    code, out, _ = run(["kernel", "eval", "--kernel", "phi", "--phi", "median", "--s", "1", "--t", "1"], capsys)
    assert code == 0 and out.strip() == repr(math.pi / 2)
    code, out, _ = run(["kernel", "eval", "--kernel", "quantile", "--s", "1", "--t", "2"], capsys)
    assert float(out) == pytest.approx(math.sqrt(6) * math.asin(math.sqrt(2 / 3)), abs=1e-9)


def test_kernel_eval_usage_errors(capsys):
    code, err = run_exit(["kernel", "eval", "--kernel", "bifbm", "--H", "0.25", "--s", "1"], capsys)
    assert code == 2 and "usage" in err
    code, err = run_exit(["kernel", "eval", "--kernel", "bifbm", "--s", "1", "--t", "1"], capsys)
    assert code == 2 and "--H" in err


def test_kernel_eval_failure_exit_1(capsys):
    code, out, err = run(["kernel", "eval", "--kernel", "quantile", "--alpha", "1.5", "--s", "1", "--t", "1"], capsys)
    assert code == 1 and out == "" and "InvalidParameters" in err


# --- constants

def test_constants_quantile_coef(capsys):
    code, out, _ = run(["constants", "--which", "quantile-coef"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == "1"
    assert doc["constants"]["quantile_coefficient"] == pytest.approx(1.3437, abs=5e-4)


def test_constants_series_and_pairs(capsys):
    _, out, _ = run(["constants", "--which", "a", "--tol", "1e-12"], capsys)
    a = json.loads(out)["constants"]["a"]
    assert a["tail_bound"] <= 1e-12 and a["value"] == pytest.approx(0.0109138580334, abs=1e-12)
    _, out, _ = run(["constants", "--which", "ck", "--K", "1"], capsys)
    ck = json.loads(out)["constants"]["c_k"]
    assert ck["plus"] > ck["minus"]
    _, out, _ = run(["constants", "--which", "all", "--form", "lattice"], capsys)
    doc = json.loads(out)["constants"]
    assert set(doc) == {"a", "b1", "b2", "quantile_coefficient", "c_k", "c_beta"}
    assert doc["quantile_coefficient"] == pytest.approx(2 + doc["a"]["value"] - doc["b2"]["value"], abs=1e-15)


def test_constants_bad_choice(capsys):
    code, _ = run_exit(["constants", "--which", "zeta"], capsys)
    assert code == 2


# --- audit

def test_audit_report(tmp_path, capsys):
    out = tmp_path / "audit.json"
    code, _, _ = run(["audit", "--kernel", "phi", "--grid-n", "16", "32", "--out", str(out)], capsys)
    doc = json.loads(out.read_text())
    assert code == 0 and doc["command"] == "audit"
    assert [c["condition"] for c in doc["conditions"]] == ["i", "ii", "iii", "iv"]
    assert [r["n"] for r in doc["eta_table"]] == [16, 32]
    assert set(doc["eta_model"]) == {"printed", "lattice"}
    assert doc["verdict"] in ("pass", "fail")


def test_audit_brownian_has_no_eta_model(capsys):
    code, out, _ = run(["audit", "--kernel", "brownian", "--grid-n", "8", "16"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["eta_model"]["printed"] == 0.0


# --- simulate

def test_simulate_csv(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["simulate", "--kernel", "phi", "--n", "16", "--paths", "25", "--seed", "5"]
    assert run(argv + ["--out", str(a)], capsys)[0] == 0
    assert run(["--threads", "3"] + argv + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    ref = sample_paths(make_sampler(median_kernel(), Partition(16, 1.0)), 25, 5).values
    assert np.array_equal(read_paths_csv(a), ref)


# --- clt

SMALL = ["clt", "--kernel", "bifbm", "--H", "0.25", "--test-function", "cubic", "--n-list", "16,32,64",
         "--paths", "300", "--t-list", "0.5,1"]


def test_clt_flags_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(SMALL + ["--out", str(out)], capsys)
    doc = json.loads(out.read_text())
    assert code == (0 if doc["gates"]["pass"] else 1)
    assert len(doc["ks"]) == 6 and {"p_value", "joint_p_value", "statistic"} <= set(doc["ks"][0])
    assert doc["identity"]["pass"] and doc["identity"]["max_residual"] <= 1e-9
    assert doc["remainder_decay"]["n_values"] == [16, 32, 64]
    assert doc["invocation"]["experiment"]["seed"] == cli.DEFAULT_SEED
    assert "timings" not in doc
    assert {m["sample"] for m in doc["moments"]} == {"phi_n", "limit"}


def test_clt_byte_identical_and_thread_invariant(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["--threads", "1"] + SMALL + ["--out", str(a)], capsys)
    run(["--threads", "4"] + SMALL + ["--out", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_clt_gate_follows_threshold(capsys):
    code, out, _ = run(SMALL + ["--correction-scale", "2"], capsys)
    doc = json.loads(out)
    finest = [r["p_value"] for r in doc["ks"] if r["n"] == 64]
    assert doc["gates"]["ks_pass"] == all(p > 0.01 for p in finest)
    assert doc["eta_model"]["correction_scale"] == 2.0


def test_clt_timings_flag(capsys):
    _, out, _ = run(SMALL + ["--paths", "10", "--timings"], capsys)
    assert set(json.loads(out)["timings"]) == {"simulation_s", "total_s"}


def test_clt_zero_paths(capsys):
    code, out, _ = run(SMALL + ["--paths", "0"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["moments"] == [] and "p_value" not in doc["ks"][0]


def write(tmp_path, text):
    p = tmp_path / "cfg.ini"
    p.write_text(text)
    return str(p)


GOOD = """[kernel]
family = brownian

[experiment]
test_function = quadratic
n_list = 8, 16
num_paths = 50
t_list = 1.0
"""


def test_clt_config_and_override(tmp_path, capsys):
    cfg = write(tmp_path, GOOD)
    code, out, _ = run(["clt", "--config", cfg, "--paths", "20"], capsys)
    doc = json.loads(out)
    assert code in (0, 1)
    assert doc["invocation"]["experiment"]["num_paths"] == 20
    assert doc["invocation"]["kernel"]["family"] == "brownian"
    assert doc["eta_model"]["form"] == "zero"


@pytest.mark.parametrize(
    "text, needle",
    [
        (GOOD + "bogus = 1\n", ":9: unknown field experiment.bogus"),
        (GOOD.replace("num_paths = 50", "num_paths = abc"), ":7: bad value for experiment.num_paths"),
        ("family = brownian\n", ":1: expected a [section] header"),
        (GOOD + "[extra]\nx = 1\n", ":9: unknown section [extra]"),
        (GOOD.replace("n_list = 8, 16", "n_list = 16, 8"), "n_list must be non-empty and ascending"),
        (GOOD.replace("t_list = 1.0", "t_list = 0"), "t_list must lie in (0, T]"),
        (GOOD.replace("brownian", "levy"), "kernel.family must be one of"),
    ],
)
def test_clt_malformed_config(tmp_path, capsys, text, needle):
    code, err = run_exit(["clt", "--config", write(tmp_path, text)], capsys)
    assert code == 2 and needle in err


def test_clt_missing_config(capsys):
    code, err = run_exit(["clt", "--config", "/nonexistent/cfg.ini"], capsys)
    assert code == 2 and "cannot read" in err


def test_shipped_configs_parse():
    for name in ("brownian", "fbm_cubic"):
        cfg = cli.load_config(str(Path(__file__).parent.parent / "configs" / f"{name}.ini"))
        cli._validate_config(cfg)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "midclt", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "clt" in r.stdout
    r = subprocess.run([sys.executable, "-m", "midclt", "kernel", "eval", "--kernel", "brownian", "--s", "1", "--t", "2"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout == "1\n"
