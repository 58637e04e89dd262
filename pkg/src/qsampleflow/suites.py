"""Regression checks grouped into suites and driven by a text manifest.

Every check returns a dict with an ``id``, the ``op`` that produced it, a
short ``claim``, the measured ``value``, the ``bound`` it is compared with,
and ``passed``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ConfigurationError
from .estimation import coordinate_observable, cosine_observable, estimate_lipschitz, lemma_d_checks, tanh_observable
from .evolution import local_error_bound, pf_matrix, reference_propagator
from .grid import GridSpec
from .lemmas import (
    TrigPolynomial,
    aliasing_error,
    exp_sine,
    group_commutator_check,
    lattice_sum_check,
    laplacian_relative_error,
    parseval_relative_error,
    projection_error_check,
    refinement_improves,
    theorem1_experiment,
    time_freeze_check,
    vector_de_bound_check,
)
from .models import ConstantPotential, DDPMFlow, GaussianLinear, TrigTerm, TrigTorus, default_trig_torus
from .rng import make_rng
from .spectral import DENSE_CAP, spectral_norm

SUITES = ("appendix-b", "appendix-c", "appendix-d", "theorem1", "theorem2", "trotter-order")


# ---------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ManifestEntry:
    suite: str
    check_id: str
    kind: str
    seed: int
    expect: str
    params: tuple

    def kwargs(self) -> dict:
        return dict(self.params)


def _parse_value(text: str):
    if "," in text:
        return tuple(_parse_value(v) for v in text.split(",") if v)
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_manifest(text: str) -> list:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 5:
            raise ConfigurationError(f"manifest line {lineno}: expected at least 5 columns")
        suite, check_id, kind, seed, expect = parts[:5]
        params = []
        for item in parts[5:]:
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigurationError(f"manifest line {lineno}: bad parameter {item!r}")
            params.append((key, _parse_value(val)))
        entries.append(ManifestEntry(suite, check_id, kind, int(seed), expect, tuple(params)))
    return entries


def default_manifest() -> list:
    text = resources.files("qsampleflow").joinpath("data/regression_manifest.txt").read_text()
    return parse_manifest(text)


def _as_tuple(v):
    return v if isinstance(v, tuple) else (v,)


# ---------------------------------------------------------------- shared families

@lru_cache(maxsize=None)
def named_family(name: str):
    if name == "trig1d":
        return default_trig_torus(1)
    if name == "trig2d":
        return default_trig_torus(2, ref_N=64)
    if name == "gauss":
        return GaussianLinear(0.5, 1.0, L=16.0)
    if name == "gauss_static":
        return GaussianLinear(0.0, 1.0, L=16.0)
    if name == "gauss2d":
        return GaussianLinear((0.5, -0.25), 1.0, L=16.0, d=2)
    if name == "ddpm":
        return DDPMFlow(0.1, 10.0, target_mean=1.0, target_std=0.5, L=16.0)
    if name == "ddpm_stationary":
        return DDPMFlow(0.1, 10.0, target_mean=0.0, target_std=1.0, L=16.0)
    raise ConfigurationError(f"unknown family {name!r}")


DENSE_GRIDS = {"trig1d": 16, "trig2d": 8, "gauss": 32, "gauss_static": 32, "gauss2d": 8, "ddpm": 32,
               "ddpm_stationary": 32}


def family_grid(name: str, N: int | None = None) -> GridSpec:
    fam = named_family(name)
    return GridSpec(fam.L, DENSE_GRIDS[name] if N is None else N, fam.d)


def random_trig_potential(seed: int, L: float = 2 * math.pi, band: int = 2, n_terms: int = 3) -> TrigTorus:
    rng = make_rng(seed)
    terms = []
    for _ in range(n_terms):
        k = (int(rng.integers(1, band + 1)),)
        terms.append(TrigTerm(k, float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3)),
                              float(rng.uniform(0, 2 * math.pi))))
    return TrigTorus(terms, L=L)


def _check(check_id, op, claim, value, bound, passed, **params):
    return {"id": check_id, "op": op, "claim": claim, "value": value, "bound": bound, "passed": bool(passed),
            "params": params}


# ---------------------------------------------------------------- appendix-b style checks

def _random_polys(seed, d, band, count, L=None):
    rng = make_rng(seed)
    out = []
    for _ in range(count):
        length = float(rng.uniform(0.5, 8.0)) if L is None else L
        n_modes = int(rng.integers(1, 12))
        out.append(TrigPolynomial.random(rng, length, d, band, n_modes))
    return out


def check_laplacian(check_id, seed, d, N, band, count, tol=1e-10):
    errs = []
    for f in _random_polys(seed, d, band, count):
        errs.append(laplacian_relative_error(f, GridSpec(f.L, N, d)))
    worst = max(errs)
    return [_check(check_id, "spectral_ops.apply_K", "K applied to samples equals samples of -lap/2 (relative)",
                   worst, tol, worst <= tol, d=d, N=N, band=band, count=count, seed=seed)]


def check_parseval(check_id, seed, d, N, band, count, tol=1e-10):
    errs = [parseval_relative_error(f, GridSpec(f.L, N, d)) for f in _random_polys(seed, d, band, count)]
    worst = max(errs)
    return [_check(check_id, "grid.GridSpec", "sample norm equals (N/L)^{d/2} times the L2 norm (relative)",
                   worst, tol, worst <= tol, d=d, N=N, band=band, count=count, seed=seed)]


def check_aliasing(check_id, seed, d, N, band, count, tol=1e-12):
    errs = []
    for f in _random_polys(seed, d, band, count):
        scale = max(1.0, max(abs(c) for c in f.coefficients.values()))
        errs.append(aliasing_error(f, GridSpec(f.L, N, d)) / scale)
    worst = max(errs)
    return [_check(check_id, "bounds_lemmas.oblique_project", "projection coefficients equal folded coefficient sums",
                   worst, tol, worst <= tol, d=d, N=N, band=band, count=count, seed=seed)]


def check_aliasing_fold(check_id, seed, N, L, tol=1e-12):
    f = TrigPolynomial({(N,): 1.0}, L, 1)
    grid = GridSpec(L, N, 1)
    err = aliasing_error(f, grid)
    from .lemmas import oblique_project

    proj = oblique_project(f, grid)
    pts = np.linspace(0, L, 17)[:, None]
    const_err = float(np.max(np.abs(proj(pts) - 1.0)))
    worst = max(err, const_err)
    return [_check(check_id, "bounds_lemmas.oblique_project", "mode N folds onto the constant mode", worst, tol,
                   worst <= tol, N=N, L=L)]


def check_lattice_sum(check_id, seed, d, q, y):
    rep = lattice_sum_check(d, q, list(_as_tuple(y)))
    return [_check(check_id, "bounds_lemmas.lattice_sum_check", "lattice sum with certified tail below the bound",
                   rep.upper_estimate, rep.bound, rep.passed, d=d, q=q, y=rep.y, partial=rep.partial_sum,
                   tail=rep.tail_bound)]


def check_projection_error(check_id, seed, N, m, s):
    out = []
    for n in _as_tuple(N):
        for mm in _as_tuple(m):
            rep = projection_error_check(exp_sine(1.0), GridSpec(1.0, n, 1), mm, s)
            out.append(_check(f"{check_id}/N{n}/m{mm}", "bounds_lemmas.projection_error_check",
                              "projection error and commutator within their bounds", rep.measured, rep.bound,
                              rep.passed, N=n, m=mm, s=s, commutator=rep.commutator_measured,
                              commutator_bound=rep.commutator_bound))
    return out


def check_projection_bandlim(check_id, seed, N, m, s):
    f = TrigPolynomial.random(make_rng(seed), 1.0, 1, N // 2, 6)
    rep = projection_error_check(f, GridSpec(1.0, N, 1), m, s)
    return [_check(check_id, "bounds_lemmas.projection_error_check", "band-limited input has zero projection error",
                   rep.measured, 1e-9, rep.measured <= 1e-9 and rep.passed, N=N, m=m, s=s)]


def check_vector_de(check_id, seed, dim, count):
    out = []
    for i in range(count):
        rep = vector_de_bound_check(dim, seed + i)
        out.append(_check(f"{check_id}/{seed + i}", "bounds_lemmas.vector_de_bound_check",
                          "forced evolution norm below initial norm plus forcing integral", rep.final_norm, rep.bound,
                          rep.passed, dim=dim, seed=seed + i, slack=rep.slack))
    return out


def check_vector_de_trivial(check_id, seed, dim):
    rep = vector_de_bound_check(dim, seed, forcing=False)
    unforced = abs(rep.final_norm - rep.initial_norm)
    rep2 = vector_de_bound_check(dim, seed + 1, hamiltonian=False, degree=0)
    return [
        _check(f"{check_id}/unforced", "bounds_lemmas.vector_de_bound_check", "unforced evolution preserves the norm",
               unforced, 1e-10, unforced <= 1e-10, dim=dim, seed=seed),
        _check(f"{check_id}/aligned", "bounds_lemmas.vector_de_bound_check",
               "zero Hamiltonian with constant forcing stays within the bound", rep2.final_norm, rep2.bound,
               rep2.passed, dim=dim, seed=seed + 1),
    ]


# ---------------------------------------------------------------- appendix-c style checks

def check_time_freeze(check_id, seed, dim, count):
    out = []
    for i in range(count):
        rep = time_freeze_check(dim, seed + i)
        out.append(_check(f"{check_id}/{seed + i}", "evolution.reference_propagator",
                          "time-ordered propagator within dt^2/2 max|H'| of the frozen exponential",
                          rep.measured, rep.bound, rep.passed, dim=dim, dt=rep.dt, seed=seed + i))
    return out


def check_group_commutator(check_id, seed, dim, count):
    out = []
    for i in range(count):
        rep = group_commutator_check(dim, seed + i)
        out.append(_check(f"{check_id}/{seed + i}", "evolution.pf_step",
                          "group-commutator product within its quartic-norm bound", rep.measured, rep.bound,
                          rep.passed, dim=dim, dt=rep.dt, seed=seed + i))
    return out


def check_pf_trivial(check_id, seed, dim):
    rng = make_rng(seed)
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    A = (a + a.conj().T) / 2
    same = group_commutator_check(dim, seed, dt=0.01, A=A, B=A)
    zero_b = group_commutator_check(dim, seed, dt=0.01, A=A, B=np.zeros((dim, dim)))
    frozen = time_freeze_check(dim, seed, dt=0.1, A=A, B=np.zeros((dim, dim)))
    grid = GridSpec(2 * math.pi, 16, 1)
    zero_v = ConstantPotential(0.0, grid.L, 1, 1.0)
    W = pf_matrix(zero_v, grid, 0.0, 0.01)
    pf_err = float(np.max(np.abs(W - np.eye(grid.size))))
    tol = 1e-12
    return [
        _check(f"{check_id}/A=B", "evolution.pf_step", "equal generators give zero product-formula error",
               same.measured, tol, same.measured <= tol),
        _check(f"{check_id}/B=0", "evolution.pf_step", "vanishing potential generator gives zero error",
               zero_b.measured, tol, zero_b.measured <= tol),
        _check(f"{check_id}/static", "evolution.reference_propagator",
               "time-independent Hamiltonian has zero freezing error", frozen.measured, tol, frozen.measured <= tol),
        _check(f"{check_id}/V=0", "evolution.pf_step", "product formula is the identity for V = 0", pf_err, tol,
               pf_err <= tol),
    ]


# ---------------------------------------------------------------- appendix-d

def _observables(L):
    return [coordinate_observable(L), cosine_observable(L, 1), tanh_observable(L, L / 2, L / 8)]


@lru_cache(maxsize=None)
def _density_lipschitz(name: str) -> float:
    fam = named_family(name)
    return estimate_lipschitz(lambda x: fam.density(fam.T, x), fam.L, fam.d)


def check_moment_bounds(check_id, seed, families, N):
    out = []
    for name in _as_tuple(families):
        fam = named_family(name)
        lp = _density_lipschitz(name)
        for f in _observables(fam.L):
            for n in _as_tuple(N):
                rep = lemma_d_checks(fam, fam.T, f, GridSpec(fam.L, n, fam.d), lp=lp)
                out.append(_check(f"{check_id}/{name}/{f.name}/N{n}", "estimation.lemma_d_checks",
                                  "grid mean/variance gaps and TV perturbation gaps within their bounds",
                                  rep.mean_gap, rep.mean_bound, rep.passed, family=name, observable=f.name, N=n,
                                  var_gap=rep.var_gap, var_bound=rep.var_bound, lp=lp,
                                  tv_cases=rep.tv_cases))
    return out


# ---------------------------------------------------------------- theorems

def check_spatial_bound(check_id, seed, family, s, N):
    fam = named_family(family)
    rep = theorem1_experiment(fam, s, _as_tuple(N))
    out = []
    for row in rep.rows:
        out.append(_check(f"{check_id}/N{row.N}", "bounds_lemmas.theorem1_experiment",
                          "spatial discretization error below delta when delta <= T", row.measured, row.delta,
                          row.passed, N=row.N, feasible=row.feasible, asserted=row.asserted, c_s=rep.c_s, s=s))
    if len(rep.rows) >= 2:
        first, last = rep.rows[0], rep.rows[-1]
        out.append(_check(f"{check_id}/refinement", "bounds_lemmas.theorem1_experiment",
                          "finest-grid error below coarsest-grid error", last.measured, first.measured,
                          refinement_improves(first.measured, last.measured)))
    return out


def local_bound_cell(name: str, log2dt: int, t0_frac: float, tol: float = 1e-12, N: int | None = None,
                  cap: int = DENSE_CAP) -> dict:
    """Dense one-step error of the product formula against the local bound for a named family."""
    fam = named_family(name)
    grid = family_grid(name, N)
    dt = fam.T * 2.0 ** log2dt
    t0 = t0_frac * fam.T
    U = reference_propagator(fam, grid, t0, t0 + dt, tol=tol, cap=cap)
    W = pf_matrix(fam, grid, t0, dt, cap=cap)
    err = spectral_norm(U - W, method="svd")
    return {"family": name, "N": grid.N, "d": grid.d, "dt": dt, "t0": t0, "measured_error": err,
            "theorem2_bound": local_error_bound(fam, grid, t0, dt)}


def check_local_bound(check_id, seed, families, log2dt, t0):
    out = []
    for name in _as_tuple(families):
        for k in _as_tuple(log2dt):
            for frac in _as_tuple(t0):
                cell = local_bound_cell(name, k, frac)
                out.append(_check(f"{check_id}/{name}/dt2^{k}/t0={frac:g}", "evolution.local_error_bound",
                                  "one product-formula step within the local error bound", cell["measured_error"],
                                  cell["theorem2_bound"], cell["measured_error"] <= cell["theorem2_bound"],
                                  **{k2: v for k2, v in cell.items() if k2 not in ("measured_error", "theorem2_bound")}))
    return out


def trotter_instances(count: int):
    models = [default_trig_torus(1)]
    models += [random_trig_potential(500 + i) for i in range(count - 1)]
    return models


def trotter_errors(model, N: int, log2dt, t0_frac: float, tol: float = 1e-13):
    grid = GridSpec(model.L, N, model.d)
    t0 = t0_frac * model.T
    dts = [model.T * 2.0 ** k for k in log2dt]
    errs = []
    for dt in dts:
        U = reference_propagator(model, grid, t0, t0 + dt, tol=tol)
        errs.append(spectral_norm(U - pf_matrix(model, grid, t0, dt), method="svd"))
    return np.array(dts), np.array(errs)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def check_trotter_order(check_id, seed, instances, N, log2dt, t0, lo=1.9, hi=2.2):
    out = []
    for i, model in enumerate(trotter_instances(instances)):
        dts, errs = trotter_errors(model, N, _as_tuple(log2dt), t0)
        slope = loglog_slope(dts, errs)
        out.append(_check(f"{check_id}/instance{i}", "evolution.pf_step",
                          "log-log slope of the one-step error against dt lies in [1.9, 2.2]", slope, [lo, hi],
                          lo <= slope <= hi, N=N, dts=dts.tolist(), errors=errs.tolist()))
    return out


KINDS = {
    "laplacian": check_laplacian,
    "parseval": check_parseval,
    "aliasing": check_aliasing,
    "aliasing_fold": check_aliasing_fold,
    "lattice_sum": check_lattice_sum,
    "projection_error": check_projection_error,
    "projection_bandlim": check_projection_bandlim,
    "vector_de": check_vector_de,
    "vector_de_trivial": check_vector_de_trivial,
    "time_freeze": check_time_freeze,
    "group_commutator": check_group_commutator,
    "pf_trivial": check_pf_trivial,
    "moment_bounds": check_moment_bounds,
    "spatial_bound": check_spatial_bound,
    "local_bound": check_local_bound,
    "trotter_order": check_trotter_order,
}


def run_entry(entry: ManifestEntry) -> list:
    fn = KINDS.get(entry.kind)
    if fn is None:
        raise ConfigurationError(f"unknown check kind {entry.kind!r}")
    checks = fn(entry.check_id, entry.seed, **entry.kwargs())
    want = entry.expect == "pass"
    for c in checks:
        c["expected_pass"] = want
        c["ok"] = c["passed"] == want
    return checks


def run_suite(suite: str, manifest: list | None = None, jobs: int = 1) -> list:
    if suite not in SUITES:
        raise ConfigurationError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    entries = [e for e in (manifest or default_manifest()) if e.suite == suite]
    if jobs > 1 and len(entries) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_entry, entries))
    else:
        results = [run_entry(e) for e in entries]
    return [c for chunk in results for c in chunk]
