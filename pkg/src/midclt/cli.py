"""Command-line entry point: kernel evaluation, audits, constants, simulation, CLT runs."""
from __future__ import annotations

import argparse
import configparser
import re
import sys
import time
from typing import List, Optional

import numpy as np

from . import constants as K
from .conditions import audit_all, eta_estimate
from .errors import ConfigError, MidCLTError, UnsupportedKernel
from .kernels import (
    CovarianceKernel,
    QuantileKernelSpec,
    bifbm_kernel,
    brownian_kernel,
    median_kernel,
    quantile_kernel,
)
from .report import SCHEMA_VERSION, dumps, fmt_float
from .riemann import TEST_FUNCTIONS, clt_experiment, test_function
from .simulate import PATHS, THREADS_ENV, default_threads, make_sampler, sample_paths, write_paths_csv
from .conditions import Partition
from .stats import decay_fit, ks_two_sample, moment_summary

DEFAULT_SEED = 20240601
FAMILIES = ("bifbm", "brownian", "phi", "quantile")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# kernel construction

def make_kernel(family, H=None, K_=None, phi="median", density="normal", alpha=0.5) -> CovarianceKernel:
    if family == "brownian":
        return brownian_kernel()
    if family == "bifbm":
        if H is None:
            raise UsageError("bifbm needs --H")
        return bifbm_kernel(float(H), 1.0 if K_ is None else float(K_))
    if family == "phi":
        if phi != "median":
            raise UsageError(f"unknown phi kernel {phi!r}; only 'median' is built in")
        return median_kernel()
    if family == "quantile":
        if density == "normal":
            spec = QuantileKernelSpec.standard_normal(alpha=float(alpha))
        elif density == "uniform":
            spec = QuantileKernelSpec.uniform(alpha=float(alpha))
        else:
            raise UsageError(f"unknown density {density!r}; choose normal or uniform")
        return quantile_kernel(spec)
    raise UsageError(f"unknown kernel family {family!r}")


def _kernel_args(p):
    p.add_argument("--kernel", required=True, choices=FAMILIES)
    p.add_argument("--H", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--phi", default="median")
    p.add_argument("--density", default="normal", choices=("normal", "uniform"))
    p.add_argument("--alpha", type=float, default=0.5)


def _kernel_from(args) -> CovarianceKernel:
    return make_kernel(args.kernel, args.H, args.K, args.phi, args.density, args.alpha)


def _kernel_echo(args) -> dict:
    return {"family": args.kernel, "H": args.H, "K": args.K, "phi": args.phi, "density": args.density, "alpha": args.alpha}


def eta_model(kernel: CovarianceKernel, form: str):
    if kernel.name == "brownian":
        return K.zero_eta_model()
    return K.eta_model_for(kernel, form)


def _emit(doc: dict, out: Optional[str]) -> None:
    text = dumps(doc)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands

def cmd_kernel_eval(args) -> int:
    v = _kernel_from(args).cov(args.s, args.t)
    print(fmt_float(float(v)))
    return 0


def cmd_audit(args) -> int:
    kernel = _kernel_from(args)
    grid = sorted(args.grid_n)
    reports = audit_all(kernel, grid, args.T)
    table = []
    for n in grid:
        est = eta_estimate(kernel, n, args.T)
        table.append({"n": n, "t": args.T, "eta_plus": est.eta_plus, "eta_minus": est.eta_minus, "eta": est.eta})
    models = {}
    for form in K.FORMS:
        try:
            models[form] = K.eta_eval(eta_model(kernel, form), args.T)
        except UnsupportedKernel:
            models[form] = None
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "audit",
        "invocation": {"kernel": _kernel_echo(args), "T": args.T, "grid_n": grid},
        "conditions": [r.to_dict() for r in reports],
        "eta_table": table,
        "eta_model": models,
        "verdict": "pass" if all(r.verdict for r in reports) else "fail",
    }
    _emit(doc, args.out)
    return 0


def _series_doc(sv: K.SeriesValue) -> dict:
    return {"value": sv.value, "truncation_M": sv.truncation_M, "tail_bound": sv.tail_bound}


def cmd_constants(args) -> int:
    which = args.which
    out = {}
    if which in ("a", "all"):
        out["a"] = _series_doc(K.series_a(args.tol))
    if which in ("b1", "all"):
        out["b1"] = _series_doc(K.series_b1(args.tol))
    if which in ("b2", "all"):
        out["b2"] = _series_doc(K.series_b2(args.tol))
    if which in ("quantile-coef", "all"):
        out["quantile_coefficient"] = K.quantile_coefficient(args.tol, form=args.form)
    if which in ("ck", "all"):
        out["c_k"] = {"K": args.K, "plus": K.c_k_plus(args.K), "minus": K.c_k_minus(args.K, args.form)}
    if which in ("cbeta", "all"):
        out["c_beta"] = {
            "kappa": args.kappa,
            "plus": K.c_beta_plus(args.kappa),
            "minus": K.c_beta_minus(args.kappa, args.form),
        }
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "constants",
        "invocation": {"which": which, "tol": args.tol, "form": args.form, "K": args.K, "kappa": args.kappa},
        "constants": out,
    }
    _emit(doc, args.out)
    return 0


def cmd_simulate(args) -> int:
    kernel = _kernel_from(args)
    grid = Partition(args.n, args.T)
    batch = sample_paths(make_sampler(kernel, grid), args.paths, args.seed, PATHS, args.threads)
    write_paths_csv(batch, args.out)
    return 0


# ---------------------------------------------------------------------------
# experiment configuration

CONFIG_SCHEMA = {
    "kernel": {"family": str, "H": float, "K": float, "phi": str, "density": str, "alpha": float},
    "experiment": {
        "test_function": str,
        "n_list": "ints",
        "num_paths": int,
        "t_list": "floats",
        "T": float,
        "seed": int,
        "eta_constants": str,
        "correction_scale": float,
    },
    "gates": {"ks_min_p": float, "identity_tol": float, "joint": bool},
    "output": {"report": str},
}

DEFAULTS = {
    "kernel": {"family": None, "H": None, "K": 1.0, "phi": "median", "density": "normal", "alpha": 0.5},
    "experiment": {
        "test_function": "cubic",
        "n_list": [128, 512],
        "num_paths": 2000,
        "t_list": [1.0],
        "T": None,
        "seed": DEFAULT_SEED,
        "eta_constants": "printed",
        "correction_scale": 1.0,
    },
    "gates": {"ks_min_p": 0.01, "identity_tol": 1e-9, "joint": False},
    "output": {"report": None},
}


def _field_line(text: str, section: str, key: str) -> int:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return no
    return 0


def _convert(kind, raw: str):
    if kind is str:
        return raw.strip()
    if kind is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "ints":
        return [int(p) for p in re.split(r"[,\s]+", raw.strip()) if p]
    if kind == "floats":
        return [float(p) for p in re.split(r"[,\s]+", raw.strip()) if p]
    return kind(raw.strip())


def load_config(path: str) -> dict:
    """Parse an INI experiment file into nested dicts; raises ConfigError."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 0
        raise ConfigError(f"{path}:{lineno}: cannot parse line") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc.message}") from None
    cfg = {s: dict(v) for s, v in DEFAULTS.items()}
    for section in cp.sections():
        if section not in CONFIG_SCHEMA:
            line = _field_line(text, section, "") or next(
                (i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), 0
            )
            raise ConfigError(f"{path}:{line}: unknown section [{section}]")
        for key, raw in cp.items(section):
            line = _field_line(text, section, key)
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"{path}:{line}: unknown field {section}.{key}")
            try:
                cfg[section][key] = _convert(CONFIG_SCHEMA[section][key], raw)
            except ValueError:
                raise ConfigError(f"{path}:{line}: bad value for {section}.{key}: {raw!r}") from None
    return cfg


def _validate_config(cfg: dict, where: str = "config") -> None:
    k, e = cfg["kernel"], cfg["experiment"]
    if k["family"] not in FAMILIES:
        raise ConfigError(f"{where}: kernel.family must be one of {FAMILIES}")
    if e["test_function"] not in TEST_FUNCTIONS:
        raise ConfigError(f"{where}: experiment.test_function must be one of {sorted(TEST_FUNCTIONS)}")
    if not e["n_list"] or sorted(e["n_list"]) != e["n_list"]:
        raise ConfigError(f"{where}: experiment.n_list must be non-empty and ascending")
    if e["eta_constants"] not in K.FORMS:
        raise ConfigError(f"{where}: experiment.eta_constants must be one of {K.FORMS}")
    if e["num_paths"] < 0:
        raise ConfigError(f"{where}: experiment.num_paths must be non-negative")
    T = e["T"] if e["T"] is not None else max(e["t_list"] or [0.0])
    if not e["t_list"] or any(t <= 0 or t > T for t in e["t_list"]):
        raise ConfigError(f"{where}: experiment.t_list must lie in (0, T]")


def _apply_overrides(cfg: dict, args) -> None:
    pairs = {
        ("kernel", "family"): args.kernel,
        ("kernel", "H"): args.H,
        ("kernel", "K"): args.K,
        ("kernel", "alpha"): args.alpha,
        ("kernel", "density"): args.density,
        ("experiment", "test_function"): args.test_function,
        ("experiment", "n_list"): args.n_list,
        ("experiment", "num_paths"): args.paths,
        ("experiment", "t_list"): args.t_list,
        ("experiment", "T"): args.T,
        ("experiment", "seed"): args.seed,
        ("experiment", "eta_constants"): args.eta_constants,
        ("experiment", "correction_scale"): args.correction_scale,
        ("output", "report"): args.out,
    }
    for (s, k), v in pairs.items():
        if v is not None:
            cfg[s][k] = v


def run_clt(cfg: dict, threads=None, timings=False) -> dict:
    k, e, g = cfg["kernel"], cfg["experiment"], cfg["gates"]
    t0 = time.perf_counter()
    kernel = make_kernel(k["family"], k["H"], k["K"], k["phi"], k["density"], k["alpha"])
    model = eta_model(kernel, e["eta_constants"])
    tf = test_function(e["test_function"])
    res = clt_experiment(
        kernel, tf, model, e["n_list"], e["num_paths"], e["t_list"], e["seed"],
        T=e["T"], threads=threads, correction_scale=e["correction_scale"],
    )
    t1 = time.perf_counter()
    P = res.num_paths
    ks, moments, boundary = [], [], []
    for n in res.n_list:
        m = res.meshes[n]
        for c, t in enumerate(res.t_list):
            row = {"n": n, "t": t}
            if P:
                r = ks_two_sample(m.phi[:, c], res.limit[:, c])
                rj = ks_two_sample(m.w[:, c] + m.phi[:, c], res.limit_w[:, c] + res.limit[:, c])
                row.update(statistic=r.statistic, p_value=r.p_value, effective_n=r.effective_n,
                           joint_statistic=rj.statistic, joint_p_value=rj.p_value)
            ks.append(row)
            if P >= 4:
                moments.append({"sample": "phi_n", "n": n, "t": t, **moment_summary(m.phi[:, c])})
                boundary.append({"n": n, "t": t, "variance": float(np.var(m.boundary_diff[:, c], ddof=1))})
    if P >= 4:
        for c, t in enumerate(res.t_list):
            moments.append({"sample": "limit", "n": res.n_list[-1], "t": t, **moment_summary(res.limit[:, c])})
    max_res = max((float(np.max(np.abs(m.identity_residual))) for m in res.meshes.values() if P), default=0.0)
    decay = None
    t_last = len(res.t_list) - 1
    if P >= 2 and len(res.n_list) >= 3:
        var_r = [float(np.var(res.meshes[n].r[:, t_last], ddof=1)) for n in res.n_list]
        if all(v > 0 for v in var_r):
            fit = decay_fit(res.n_list, var_r)
            decay = {"t": res.t_list[t_last], "n_values": res.n_list, "variances": var_r,
                     "slope": fit.slope, "intercept": fit.intercept, "residual_norm": fit.residual_norm}
    finest = [r for r in ks if r["n"] == res.n_list[-1]]
    ks_pass = all(r.get("p_value", 1.0) > g["ks_min_p"] for r in finest)
    if g["joint"]:
        ks_pass = ks_pass and all(r.get("joint_p_value", 1.0) > g["ks_min_p"] for r in finest)
    id_pass = max_res <= g["identity_tol"]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "clt",
        "invocation": {"kernel": dict(k), "experiment": dict(e), "gates": dict(g)},
        "eta_model": {"form": model.form, "coefficient": model.coefficient, "label": model.label,
                      "correction_scale": res.correction_scale},
        "ks": ks,
        "moments": moments,
        "identity": {"max_residual": max_res, "tolerance": g["identity_tol"], "pass": id_pass},
        "remainder_decay": decay,
        "boundary": boundary,
        "gates": {"ks_min_p": g["ks_min_p"], "ks_pass": ks_pass, "identity_pass": id_pass,
                  "pass": bool(ks_pass and id_pass)},
    }
    if timings:
        doc["timings"] = {"simulation_s": t1 - t0, "total_s": time.perf_counter() - t0}
    return doc


def cmd_clt(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = {s: dict(v) for s, v in DEFAULTS.items()}
    _apply_overrides(cfg, args)
    _validate_config(cfg, args.config or "flags")
    doc = run_clt(cfg, threads=args.threads, timings=args.timings)
    _emit(doc, cfg["output"]["report"])
    return 0 if doc["gates"]["pass"] else 1


# ---------------------------------------------------------------------------
# parser

def _csv_list(kind):
    def parse(s):
        try:
            return [kind(p) for p in re.split(r"[,\s]+", s.strip()) if p]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {s!r}") from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="midclt", description=__doc__)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker cap (default: ${THREADS_ENV} or CPU count)")
    sub = p.add_subparsers(dest="command", required=True)

    kp = sub.add_parser("kernel", help="kernel utilities")
    ksub = kp.add_subparsers(dest="kernel_command", required=True)
    ev = ksub.add_parser("eval", help="print R(s, t)")
    _kernel_args(ev)
    ev.add_argument("--s", type=float, required=True)
    ev.add_argument("--t", type=float, required=True)
    ev.set_defaults(func=cmd_kernel_eval)

    au = sub.add_parser("audit", help="audit the bound conditions and tabulate eta_n")
    _kernel_args(au)
    au.add_argument("--T", type=float, default=1.0)
    au.add_argument("--grid-n", type=int, nargs="+", default=[64, 128])
    au.add_argument("--out")
    au.set_defaults(func=cmd_audit)

    co = sub.add_parser("constants", help="series constants and eta coefficients")
    co.add_argument("--which", default="all", choices=("a", "b1", "b2", "quantile-coef", "ck", "cbeta", "all"))
    co.add_argument("--tol", type=float, default=1e-12)
    co.add_argument("--K", type=float, default=1.0)
    co.add_argument("--kappa", type=float, default=0.5)
    co.add_argument("--form", default="printed", choices=K.FORMS)
    co.add_argument("--out")
    co.set_defaults(func=cmd_constants)

    si = sub.add_parser("simulate", help="write sample paths as CSV")
    _kernel_args(si)
    si.add_argument("--n", type=int, required=True)
    si.add_argument("--T", type=float, default=1.0)
    si.add_argument("--paths", type=int, required=True)
    si.add_argument("--seed", type=int, default=DEFAULT_SEED)
    si.add_argument("--out", required=True)
    si.set_defaults(func=cmd_simulate)

    cl = sub.add_parser("clt", help="run a CLT experiment")
    cl.add_argument("--config")
    cl.add_argument("--kernel", choices=FAMILIES)
    cl.add_argument("--H", type=float)
    cl.add_argument("--K", type=float)
    cl.add_argument("--alpha", type=float)
    cl.add_argument("--density", choices=("normal", "uniform"))
    cl.add_argument("--test-function", choices=sorted(TEST_FUNCTIONS))
    cl.add_argument("--n-list", type=_csv_list(int))
    cl.add_argument("--paths", type=int)
    cl.add_argument("--t-list", type=_csv_list(float))
    cl.add_argument("--T", type=float)
    cl.add_argument("--seed", type=int)
    cl.add_argument("--eta-constants", choices=K.FORMS)
    cl.add_argument("--correction-scale", type=float)
    cl.add_argument("--timings", action="store_true", help="add wall-clock timings to the report")
    cl.add_argument("--out")
    cl.set_defaults(func=cmd_clt)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.exit(2, f"midclt: error: {exc}\n")
    except MidCLTError as exc:
        sys.stderr.write(f"midclt: {type(exc).__name__}: {exc}\n")
        return 1
    except (OSError, ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"midclt: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
