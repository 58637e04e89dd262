"""Command-line entry point: ``qsampleflow {plan,simulate,verify,estimate,sweep}``.

Every run validates its configuration before touching the output directory,
writes ``report.json`` (with the resolved configuration embedded and all
wall-clock figures under a top-level ``timing`` key) plus CSV tables, and
exits 0 when all checks pass, 1 when a check fails and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import copy
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import BudgetError, ParameterError, QSampleFlowError
from .estimation import (
    coordinate_observable,
    continuous_mean_var,
    cosine_observable,
    end_to_end_mean_experiment,
    estimate_lipschitz,
    prepare_state,
    tanh_observable,
)
from .evolution import evolve, fixed_plan, local_error_bound_from_norms, plan, reference_evolve
from .grid import GridSpec
from .io import load_config, read_potential_table, write_csv, write_report, write_samples_csv, write_state
from .models import DDPMFlow, GaussianLinear, TabulatedPotential, TrigTerm, TrigTorus, default_trig_torus
from .qsample import ideal_state, l2_distance
from .spectral import DENSE_CAP, StateVector
from .suites import SUITES, loglog_slope, named_family, run_suite, local_bound_cell

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "run": _section({"seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                         "jobs": _POS_INT, "dense_cap": _POS_INT}),
        "grid": _section({"L_length": {"type": "number", "exclusiveMinimum": 0}, "N_points": _POS_INT,
                          "d_dims": _POS_INT}),
        "plan": _section({"T_time": _NUM, "eps_error": _NUM, "s_order": _INT, "cs_constant": _NUM,
                          "Vmax_potential": _NUM, "Vdotmax_potential_per_time": _NUM, "state_prep_error": _NUM}),
        "family": _section({
            "kind": {"enum": ["named", "trig_torus", "gaussian_linear", "ddpm", "tabulated"]},
            "name": {"type": "string"},
            "L_length": {"type": "number", "exclusiveMinimum": 0},
            "T_time": {"type": "number", "exclusiveMinimum": 0},
            "d_dims": _POS_INT,
            "target_mean": {"oneOf": [_NUM, {"type": "array", "items": _NUM}]},
            "target_std": {"type": "number", "exclusiveMinimum": 0},
            "beta_min_per_time": _NUM,
            "beta_max_per_time": _NUM,
            "kappa": _NUM,
            "terms": {"type": "array", "items": {
                "type": "object", "additionalProperties": False, "required": ["k", "a0"],
                "properties": {"k": {"type": "array", "items": _INT}, "a0": _NUM, "a1_per_time": _NUM,
                               "phase_rad": _NUM}}},
            "table_path": {"type": "string"},
        }),
        "simulate": _section({"r_steps": _POS_INT, "reference_tol": _NUM, "samples": {"type": "integer", "minimum": 0}}),
        "estimate": _section({"m_samples": _POS_INT, "delta_failure": _NUM, "trials": _POS_INT, "r_steps": _POS_INT,
                              "observable": {"enum": ["x", "cos", "tanh"]}, "C_constant": _NUM}),
        "sweep": _section({"families": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                           "log2_dt": {"type": "array", "items": _INT, "minItems": 2},
                           "t0_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                           "window": {"type": "integer", "minimum": 2}}),
    },
}

DEFAULTS = {
    "run": {"seed": 0, "jobs": 1, "dense_cap": DENSE_CAP},
    "plan": {"T_time": 1.0, "eps_error": 0.1, "s_order": 2, "cs_constant": 2.0, "Vmax_potential": 1.0,
             "Vdotmax_potential_per_time": 0.0, "state_prep_error": 0.0},
    "grid": {"L_length": 1.0, "d_dims": 1},
    "family": {"kind": "named", "name": "trig1d"},
    "simulate": {"r_steps": 1000, "reference_tol": 1e-9, "samples": 0},
    "estimate": {"m_samples": 10_000, "delta_failure": 0.01, "trials": 20, "r_steps": 1000, "observable": "x",
                 "C_constant": 4.0},
    "sweep": {"families": ["trig1d", "gauss", "ddpm"], "log2_dt": [-6, -7, -8, -9, -10, -11, -12, -13],
              "t0_fraction": 0.25, "window": 4},
}


class UsageError(QSampleFlowError):
    pass


# ---------------------------------------------------------------- configuration

def resolve_config(raw: dict, args) -> dict:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"config error at {where}: {exc.message}") from None
    cfg = copy.deepcopy(DEFAULTS)
    for key, section in raw.items():
        cfg.setdefault(key, {}).update(section)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if args.jobs is not None:
        cfg["run"]["jobs"] = args.jobs
    if args.dense_cap is not None:
        cfg["run"]["dense_cap"] = args.dense_cap
    if getattr(args, "suite", None):
        cfg["verify"] = {"suite": args.suite}
    cfg["command"] = args.command
    if cfg["run"]["jobs"] < 1 or cfg["run"]["dense_cap"] < 1 or not (0 <= cfg["run"]["seed"] < 2 ** 64):
        raise UsageError("seed must be a u64 and jobs, dense-cap positive")
    return cfg


def build_family(section: dict):
    kind = section["kind"]
    if kind == "named":
        return named_family(section.get("name", "trig1d"))
    L = section.get("L_length")
    if kind == "gaussian_linear":
        return GaussianLinear(section.get("target_mean", 0.0), section.get("target_std", 1.0), L=L or 16.0,
                              d=section.get("d_dims", 1))
    if kind == "ddpm":
        return DDPMFlow(section.get("beta_min_per_time", 0.1), section.get("beta_max_per_time", 10.0),
                        section.get("target_mean", 0.0), section.get("target_std", 1.0),
                        T=section.get("T_time", 1.0), L=L or 16.0, d=section.get("d_dims", 1))
    if kind == "trig_torus":
        extra = {k: v for k, v in (("L", L), ("T", section.get("T_time")), ("kappa", section.get("kappa")))
                 if v is not None}
        if "terms" not in section:
            return default_trig_torus(section.get("d_dims", 1), **extra)
        terms = [TrigTerm(tuple(t["k"]), t["a0"], t.get("a1_per_time", 0.0), t.get("phase_rad", 0.0))
                 for t in section["terms"]]
        return TrigTorus(terms, **extra)
    if kind == "tabulated":
        if "table_path" not in section:
            raise UsageError("a tabulated family needs table_path")
        values, L_tab, d, T = read_potential_table(section["table_path"])
        return TabulatedPotential(values, L_tab, d, T)
    raise UsageError(f"unknown family kind {kind!r}")


def _family_grid(cfg: dict, family, raw_grid: dict | None = None) -> GridSpec:
    g = cfg["grid"]
    N = g.get("N_points")
    if N is None:
        raise UsageError("[grid] N_points is required for this command")
    if raw_grid and "L_length" in raw_grid and not math.isclose(raw_grid["L_length"], family.L):
        raise UsageError(f"grid L_length {raw_grid['L_length']} disagrees with the family's L = {family.L}")
    if raw_grid and "d_dims" in raw_grid and raw_grid["d_dims"] != family.d:
        raise UsageError(f"grid d_dims {raw_grid['d_dims']} disagrees with the family's d = {family.d}")
    return GridSpec(family.L, N, family.d)


def _observable(name: str, L: float):
    if name == "x":
        return coordinate_observable(L)
    if name == "cos":
        return cosine_observable(L, 1)
    return tanh_observable(L, L / 2, L / 8)


def _check(check_id, op, claim, value, bound, passed, **params):
    return {"id": check_id, "op": op, "claim": claim, "value": value, "bound": bound, "passed": bool(passed),
            "ok": bool(passed), "params": params}


# ---------------------------------------------------------------- pipelines

def run_plan(cfg: dict, out: Path):
    """Each pipeline returns (result with a ``checks`` list, timing dict, {relative path: writer})."""
    p = cfg["plan"]
    g = cfg["grid"]
    sp = plan(p["T_time"], p["eps_error"], p["s_order"], p["cs_constant"], p["Vmax_potential"],
              p["Vdotmax_potential_per_time"], g["L_length"], g["d_dims"], p["state_prep_error"])
    checks = [_check("plan/feasible", "evolution.plan", "spatial error delta does not exceed T", sp.delta, sp.T,
                     sp.feasible)]
    # an infeasible plan is reported, not failed
    checks[0]["ok"] = True
    return {"plan": sp.to_dict(), "checks": checks}, {}, {}


def run_simulate(cfg: dict, out: Path):
    family = build_family(cfg["family"])
    grid = _family_grid(cfg, family)
    sim = cfg["simulate"]
    r = sim["r_steps"]
    has_path = hasattr(family, "sqrt_density")
    if has_path:
        psi0, _ = ideal_state(family, 0.0, grid)
    else:
        psi0 = StateVector(np.full(grid.size, grid.size ** -0.5, dtype=complex), grid)
    t0 = time.perf_counter()
    report = evolve(fixed_plan(grid, family.T, r), family, psi0)
    t_evolve = time.perf_counter() - t0
    final = report.final
    t0 = time.perf_counter()
    ref = reference_evolve(family, grid, psi0, 0.0, family.T, tol=sim["reference_tol"],
                           cap=cfg["run"]["dense_cap"])
    t_ref = time.perf_counter() - t0
    ref_dist = l2_distance(final, ref)
    summed = r * local_error_bound_from_norms(grid.L, grid.N, grid.d, report.dt, family.V_max, family.Vdot_max)
    checks = [
        _check("simulate/norm", "evolution.evolve", "product-formula norm drift at most 1e-10 r",
               report.max_norm_drift, 1e-10 * r, report.max_norm_drift <= 1e-10 * r, r=r),
        _check("simulate/reference", "evolution.evolve",
               "distance to the reference evolution within the summed local error bound (plus reference tol)",
               ref_dist, summed + sim["reference_tol"], ref_dist <= summed + sim["reference_tol"], r=r),
    ]
    result = {"grid": grid.to_dict(), "r": r, "dt": report.dt, "reference_distance": ref_dist,
              "summed_local_bound": summed, "max_norm_drift": report.max_norm_drift}
    if has_path:
        target, _ = ideal_state(family, family.T, grid)
        result["distance_to_ideal_final"] = l2_distance(final, target)
        result["reference_distance_to_ideal_final"] = l2_distance(ref, target)
    artifacts = {
        "states/initial.bin": lambda p: write_state(p, psi0),
        "states/final.bin": lambda p: write_state(p, final),
        "states/reference.bin": lambda p: write_state(p, ref),
        "tables/norms.csv": lambda p: write_csv(p, ["step", "norm"], enumerate(report.norms.tolist())),
    }
    if sim["samples"]:
        idx = np.searchsorted(np.cumsum(np.abs(final.amplitudes) ** 2 / np.sum(np.abs(final.amplitudes) ** 2)),
                              _uniforms(cfg["run"]["seed"], sim["samples"]), side="right")
        idx = np.minimum(idx, grid.size - 1)
        artifacts["tables/samples.csv"] = lambda p: write_samples_csv(p, grid, idx)
    result["checks"] = checks
    return result, {"evolve_seconds": t_evolve, "reference_seconds": t_ref}, artifacts


def _uniforms(seed: int, count: int):
    from .rng import make_rng

    return make_rng(seed).random(count)


def run_verify(cfg: dict, out: Path):
    suite = cfg["verify"]["suite"]
    t0 = time.perf_counter()
    checks = run_suite(suite, jobs=cfg["run"]["jobs"])
    elapsed = time.perf_counter() - t0
    table = ["id", "op", "value", "bound", "passed", "expected_pass"]
    rows = [[c["id"], c["op"], _cell(c["value"]), _cell(c["bound"]), c["passed"], c["expected_pass"]] for c in checks]
    return {"suite": suite, "checks": checks}, {"suite_seconds": elapsed}, {
        "tables/checks.csv": lambda p: write_csv(p, table, rows)}


def _cell(v):
    return repr(float(v)) if isinstance(v, (int, float, np.floating)) else str(v)


def run_estimate(cfg: dict, out: Path):
    family = build_family(cfg["family"])
    grid = _family_grid(cfg, family)
    est = cfg["estimate"]
    f = _observable(est["observable"], family.L)
    t0 = time.perf_counter()
    prepared = prepare_state(family, family, grid, est["r_steps"])
    truth = continuous_mean_var(family, family.T, f)
    lp = estimate_lipschitz(lambda x: family.density(family.T, x), family.L, family.d)
    seed = cfg["run"]["seed"]
    trials = [end_to_end_mean_experiment(family, family, grid, f, est["m_samples"], est["delta_failure"], seed + i,
                                         C=est["C_constant"], prepared=prepared, lp=lp, truth=truth)
              for i in range(est["trials"])]
    elapsed = time.perf_counter() - t0
    passes = sum(t.passed for t in trials)
    need = math.ceil((1 - 2 * est["delta_failure"]) * est["trials"])
    checks = [_check("estimate/coverage", "estimation.end_to_end_mean_experiment",
                     "deviation bound with budget terms holds in at least (1 - 2 delta) of the trials",
                     passes, need, passes >= need, trials=est["trials"], delta=est["delta_failure"])]
    header = ["seed", "estimate", "mu_true", "deviation", "bound", "passed"]
    rows = [[t.seed, repr(t.estimate), repr(t.mu_true), repr(t.deviation), repr(t.bound), t.passed] for t in trials]
    result = {"grid": grid.to_dict(), "observable": f.name, "prep_error": prepared.prep_error,
              "mu_true": truth[0], "var_true": truth[1], "lipschitz_density": lp,
              "budget": trials[0].budget.to_dict(), "passes": passes,
              "trials": [{k: v for k, v in t.to_dict().items() if k != "budget"} for t in trials], "checks": checks}
    return result, {"estimate_seconds": elapsed}, {"tables/trials.csv": lambda p: write_csv(p, header, rows)}


def _sweep_cell(args):
    name, k, frac, cap = args
    return local_bound_cell(name, k, frac, cap=cap)


def run_sweep(cfg: dict, out: Path):
    sw = cfg["sweep"]
    for name in sw["families"]:
        named_family(name)
    cells = [(name, k, sw["t0_fraction"], cfg["run"]["dense_cap"]) for name in sw["families"] for k in sw["log2_dt"]]
    t0 = time.perf_counter()
    jobs = cfg["run"]["jobs"]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    elapsed = time.perf_counter() - t0
    width = sw["window"]
    rows, slopes, checks = [], [], []
    for name in sw["families"]:
        mine = sorted((r for r in results if r["family"] == name), key=lambda r: -r["dt"])
        for start in range(0, len(mine) - width + 1):
            win = mine[start:start + width]
            slopes.append({"family": name, "window": f"{name}:w{start}", "dt_max": win[0]["dt"],
                           "dt_min": win[-1]["dt"],
                           "slope": loglog_slope([c["dt"] for c in win], [c["measured_error"] for c in win])})
        for i, cell in enumerate(mine):
            window = f"{name}:w{max(0, min(i, len(mine) - width))}"
            rows.append([name, cell["N"], cell["d"], repr(cell["dt"]), repr(cell["measured_error"]),
                         repr(cell["theorem2_bound"]), window])
            checks.append(_check(f"sweep/{name}/dt={cell['dt']:.6g}", "evolution.local_error_bound",
                                 "one product-formula step within the local error bound", cell["measured_error"],
                                 cell["theorem2_bound"], cell["measured_error"] <= cell["theorem2_bound"]))
    header = ["family", "N", "d", "dt", "measured_error", "theorem2_bound", "slope_window"]
    slope_rows = [[s["family"], s["window"], repr(s["dt_min"]), repr(s["dt_max"]), repr(s["slope"])] for s in slopes]
    artifacts = {
        "tables/sweep.csv": lambda p: write_csv(p, header, rows),
        "tables/slopes.csv": lambda p: write_csv(p, ["family", "window", "dt_min", "dt_max", "slope"], slope_rows),
    }
    return {"cells": results, "slopes": slopes, "checks": checks}, {"sweep_seconds": elapsed}, artifacts


PIPELINES = {"plan": run_plan, "simulate": run_simulate, "verify": run_verify, "estimate": run_estimate,
             "sweep": run_sweep}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--seed", type=int, help="u64 master seed")
    common.add_argument("--jobs", type=int, help="worker processes for independent cells")
    common.add_argument("--out", type=Path, default=Path("qsampleflow-out"), help="output directory")
    common.add_argument("--dense-cap", type=int, dest="dense_cap", help="largest dense matrix dimension")
    parser = argparse.ArgumentParser(prog="qsampleflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("plan", parents=[common], help="grid size, qubit count and step count for a target error")
    sub.add_parser("simulate", parents=[common], help="product-formula evolution of a family's initial qsample")
    v = sub.add_parser("verify", parents=[common], help="run a regression suite")
    v.add_argument("--suite", required=True, choices=SUITES)
    sub.add_parser("estimate", parents=[common], help="end-to-end mean estimation trials")
    sub.add_parser("sweep", parents=[common], help="one-step error against the local bound over a dt sweep")
    return parser


def execute(argv=None) -> tuple:
    """Run the CLI and return (exit code, report or None)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else {}
        cfg = resolve_config(raw, args)
        if args.command in ("simulate", "estimate"):
            family = build_family(cfg["family"])
            _family_grid(cfg, family, raw.get("grid"))
            if args.command == "estimate" and not hasattr(family, "sqrt_density"):
                raise UsageError("estimate needs a family with a known probability path")
        if args.command == "sweep":
            for name in cfg["sweep"]["families"]:
                named_family(name)
    except (QSampleFlowError, ValueError) as exc:
        print(f"qsampleflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE, None
    started = time.perf_counter()
    # nothing is written until the pipeline has finished
    try:
        result, timing, artifacts = PIPELINES[args.command](cfg, args.out)
    except (ParameterError, BudgetError) as exc:
        print(f"qsampleflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE, None
    except QSampleFlowError as exc:
        print(f"qsampleflow: run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED, None
    timing["total_seconds"] = time.perf_counter() - started
    failed = [c["id"] for c in result["checks"] if not c["ok"]]
    report = {"command": args.command, "version": __version__, "config": cfg, "result": result,
              "passed": not failed, "failed_checks": failed, "n_checks": len(result["checks"]),
              "timing": timing}
    args.out.mkdir(parents=True, exist_ok=True)
    for rel, writer in artifacts.items():
        target = args.out / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        writer(target)
    write_report(args.out / "report.json", report)
    if failed:
        print(f"qsampleflow: {len(failed)} check(s) failed:", file=sys.stderr)
        for cid in failed:
            print(f"  {cid}", file=sys.stderr)
        return EXIT_FAILED, report
    print(f"qsampleflow {args.command}: {len(result['checks'])} check(s) passed; report at {args.out / 'report.json'}")
    return EXIT_OK, report


def main(argv=None) -> int:
    code, _ = execute(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
