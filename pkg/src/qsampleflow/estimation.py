"""Mean estimation from qsamples: grid moments, median of means, the
discretization/preparation error budget, and empirical checks of the
moment-perturbation lemmas."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

from .errors import InsufficientSamplesError, OracleError, ParameterError
from .grid import GridSpec
from .qsample import DiscretizedDistribution, discretize_density, ideal_state, l2_distance, sample_points
from .rng import make_rng

LIPSCHITZ_SAFETY = 1.05


@dataclass
class ObservableSpec:
    """Real observable on [0, L]^d with sup norm ``M`` and Lipschitz constant ``lipschitz``."""

    fn: Callable
    M: float
    lipschitz: float
    name: str = "f"

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def validate(self, L: float, d: int, per_axis: int = 257) -> bool:
        """Sampled |f| <= M and difference quotients <= lipschitz (1 + 1e-6)."""
        axis = np.linspace(0, L, per_axis)
        mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
        vals = self(mesh)
        if np.max(np.abs(vals)) > self.M * (1 + 1e-12):
            return False
        h = axis[1] - axis[0]
        for a in range(d):
            if np.max(np.abs(np.diff(vals, axis=a))) / h > self.lipschitz * (1 + 1e-6):
                return False
        return True


def coordinate_observable(L: float, axis: int = 0, offset: float = 0.0) -> ObservableSpec:
    """f(x) = x_axis - offset on [0, L]^d."""
    return ObservableSpec(lambda x: x[..., axis] - offset, max(abs(offset), abs(L - offset)), 1.0,
                          name=f"x{axis}-{offset:g}")


def constant_observable(c: float) -> ObservableSpec:
    return ObservableSpec(lambda x: np.full(x.shape[:-1], float(c)), abs(c), 0.0, name=f"const{c:g}")


def cosine_observable(L: float, mode: int = 1, axis: int = 0) -> ObservableSpec:
    w = 2 * np.pi * mode / L
    return ObservableSpec(lambda x: np.cos(w * x[..., axis]), 1.0, w, name=f"cos{mode}")


def tanh_observable(L: float, center: float, width: float, axis: int = 0) -> ObservableSpec:
    return ObservableSpec(lambda x: np.tanh((x[..., axis] - center) / width), math.tanh(max(center, L - center) / width),
                          1.0 / width, name=f"tanh{width:g}")


# ---------------------------------------------------------------- moments

def grid_mean_var(dist: DiscretizedDistribution, f: ObservableSpec):
    vals = f(dist.grid.points())
    mu = float(np.dot(dist.masses, vals))
    var = float(np.dot(dist.masses, (vals - mu) ** 2))
    return mu, var


def _mean_var_of_masses(masses, vals):
    mu = float(np.dot(masses, vals))
    return mu, float(np.dot(masses, (vals - mu) ** 2))


def _gauss_nodes(L: float, panels: int, order: int = 16):
    x, w = roots_legendre(order)
    edges = np.linspace(0, L, panels + 1)
    half = np.diff(edges) / 2
    mid = edges[:-1] + half
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def continuous_mean_var(path, t: float, f: ObservableSpec, panels: int | None = None, rtol: float = 1e-9):
    """Mean and variance of f under p_t on [0, L]^d by composite Gauss-Legendre
    quadrature, checked against a run with half the panels."""
    d, L = path.d, path.L
    if panels is None:
        panels = 64 if d == 1 else 16

    def moments(n):
        nodes, weights = _gauss_nodes(L, n)
        mesh = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
        w = weights
        for _ in range(d - 1):
            w = np.multiply.outer(w, weights)
        w = np.asarray(w).ravel()
        p = path.density(t, mesh)
        vals = f(mesh)
        z = float(np.dot(w, p))
        m1 = float(np.dot(w, p * vals))
        m2 = float(np.dot(w, p * vals ** 2))
        return z, m1, m2 - m1 ** 2

    coarse = moments(panels // 2)
    fine = moments(panels)
    scale = max(1.0, abs(fine[1]), abs(fine[2]))
    if max(abs(a - b) for a, b in zip(coarse, fine)) > rtol * scale:
        raise OracleError(f"quadrature did not converge: {coarse} vs {fine}")
    z, mu, var = fine
    if abs(z - 1) > 1e-6:
        raise OracleError(f"density integrates to {z}, not 1")
    return mu, var


def estimate_lipschitz(fn: Callable, L: float, d: int, per_axis: int = 1025, safety: float = LIPSCHITZ_SAFETY) -> float:
    """Max Euclidean norm of forward-difference gradients on a fine lattice of [0, L]^d, padded."""
    if d > 1:
        per_axis = min(per_axis, 257)
    axis = np.linspace(0, L, per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
    vals = np.asarray(fn(mesh.reshape(-1, d))).reshape(mesh.shape[:-1])
    h = axis[1] - axis[0]
    sq = np.zeros(tuple(per_axis - 1 for _ in range(d)))
    for a in range(d):
        diff = np.diff(vals, axis=a) / h
        sl = tuple(slice(0, per_axis - 1) for _ in range(d))
        sq = sq + diff[sl] ** 2
    return safety * float(np.sqrt(sq.max()))


# ---------------------------------------------------------------- median of means

def mom_groups(delta: float) -> int:
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    return math.ceil(8 * math.log(1 / delta))


def median_of_means(samples, delta: float, seed: int = 0) -> float:
    """Median of group means over ceil(8 ln(1/delta)) groups.

    Samples are sorted and then dealt into groups by a fixed seeded permutation,
    which makes the estimate a function of the sample multiset only.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    k = mom_groups(delta)
    if x.size < k:
        raise InsufficientSamplesError(f"{x.size} samples cannot fill {k} groups")
    x = x[make_rng(seed).permutation(x.size)]
    means = [g.mean() for g in np.array_split(x, k)]
    return float(np.median(means))


def sub_gaussian_radius(sigma: float, m: int, delta: float, C: float = 4.0) -> float:
    return C * sigma * math.sqrt(math.log(1 / delta) / m)


# ---------------------------------------------------------------- error budget

@dataclass
class ErrorBudget:
    eps_mean: float
    eps_var: float
    M: float
    lp: float
    lf: float
    d: int
    L: float
    N: int
    eps: float

    def to_dict(self) -> dict:
        return asdict(self)


def error_budget(M: float, lp: float, lf: float, d: int, L: float, N: int, eps: float) -> ErrorBudget:
    """Bias terms on the mean and variance from grid discretization plus a
    preparation error ``eps`` (Euclidean distance to the ideal qsample)."""
    if min(M, lp, lf, L, eps) < 0 or d < 1:
        raise ParameterError("budget inputs must be nonnegative")
    if N < 1:
        raise ParameterError("N must be >= 1")
    rd = math.sqrt(d)
    density_term = lp * rd * L ** (d + 1) / N
    field_term = lf * rd * L / N
    eps_mean = 2 * M * density_term + field_term + 2 * eps * M
    eps_var = 6 * M ** 2 * density_term + 4 * M * field_term + 6 * eps * M ** 2
    return ErrorBudget(eps_mean, eps_var, M, lp, lf, d, L, N, eps)


# ---------------------------------------------------------------- lemma checks

@dataclass
class MomentBoundReport:
    N: int
    t: float
    observable: str
    mu_continuous: float
    var_continuous: float
    mu_grid: float
    var_grid: float
    mean_gap: float
    var_gap: float
    mean_bound: float
    var_bound: float
    lp: float
    lf: float
    M: float
    tv_cases: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        ok = self.mean_gap <= self.mean_bound and self.var_gap <= self.var_bound
        return ok and all(c["passed"] for c in self.tv_cases)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def tv_perturbation_cases(dist: DiscretizedDistribution, f: ObservableSpec, eps_values=(0.0, 0.01, 0.1, 0.5)) -> list:
    """Mix the distribution with a point mass at argmax |f| and check the TV moment bounds."""
    vals = f(dist.grid.points())
    spike = np.zeros_like(dist.masses)
    spike[int(np.argmax(np.abs(vals)))] = 1.0
    mu_p, var_p = _mean_var_of_masses(dist.masses, vals)
    cases = []
    for eps in eps_values:
        q = (1 - eps) * dist.masses + eps * spike
        tv = 0.5 * float(np.abs(q - dist.masses).sum())
        mu_q, var_q = _mean_var_of_masses(q, vals)
        mean_gap, var_gap = abs(mu_p - mu_q), abs(var_p - var_q)
        mean_bound, var_bound = 2 * f.M * eps, 6 * f.M ** 2 * eps
        cases.append({"eps": eps, "tv": tv, "mean_gap": mean_gap, "var_gap": var_gap,
                      "mean_bound": mean_bound, "var_bound": var_bound,
                      "passed": tv <= eps + 1e-15 and mean_gap <= mean_bound and var_gap <= var_bound})
    return cases


def lemma_d_checks(path, t: float, f: ObservableSpec, grid: GridSpec, lp: float | None = None,
                   lf: float | None = None, panels: int | None = None) -> MomentBoundReport:
    """Compare continuous and grid moments of f against the discretization bounds,
    then run the total-variation perturbation checks on the grid distribution."""
    if lp is None:
        lp = estimate_lipschitz(lambda x: path.density(t, x), path.L, path.d)
    if lf is None:
        lf = f.lipschitz
    mu_c, var_c = continuous_mean_var(path, t, f, panels)
    dist = discretize_density(path, t, grid)
    mu_g, var_g = grid_mean_var(dist, f)
    rd = math.sqrt(grid.d)
    L, N, d, M = grid.L, grid.N, grid.d, f.M
    mean_bound = 2 * M * lp * rd * L ** (d + 1) / N + lf * rd * L / N
    var_bound = 6 * M ** 2 * lp * rd * L ** (d + 1) / N + 4 * M * lf * rd * L / N
    return MomentBoundReport(N=N, t=t, observable=f.name, mu_continuous=mu_c, var_continuous=var_c, mu_grid=mu_g,
                        var_grid=var_g, mean_gap=abs(mu_c - mu_g), var_gap=abs(var_c - var_g),
                        mean_bound=mean_bound, var_bound=var_bound, lp=lp, lf=lf, M=M,
                        tv_cases=tv_perturbation_cases(dist, f))


# ---------------------------------------------------------------- end to end

@dataclass
class PreparedState:
    """Output of the simulated preparation plus the ideal target it approximates."""

    state: object
    target: object
    prep_error: float
    grid: GridSpec
    r: int


def prepare_state(path, model, grid: GridSpec, r: int) -> PreparedState:
    """Evolve the exact initial qsample with the product formula for ``r`` steps."""
    from .evolution import evolve, fixed_plan

    psi0, _ = ideal_state(path, 0.0, grid)
    target, _ = ideal_state(path, path.T, grid)
    report = evolve(fixed_plan(grid, path.T, r), model, psi0)
    final = report.final.normalize()
    return PreparedState(final, target, l2_distance(final, target), grid, r)


@dataclass
class MeanExperimentReport:
    seed: int
    m: int
    delta: float
    estimate: float
    mu_true: float
    var_true: float
    deviation: float
    radius: float
    budget: ErrorBudget
    bound: float
    prep_error: float
    C: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def end_to_end_mean_experiment(path, model, grid: GridSpec, f: ObservableSpec, m: int, delta: float, seed: int,
                               r: int = 1000, C: float = 4.0, prepared: PreparedState | None = None,
                               lp: float | None = None, truth=None) -> MeanExperimentReport:
    """Born-sample the prepared state, estimate E f by median of means and test
    the deviation against sqrt(sigma^2 + eps_var) C sqrt(ln(1/delta)/m) + eps_mean."""
    if prepared is None:
        prepared = prepare_state(path, model, grid, r)
    if truth is None:
        truth = continuous_mean_var(path, path.T, f)
    mu, var = truth
    if lp is None:
        lp = estimate_lipschitz(lambda x: path.density(path.T, x), path.L, path.d)
    ss = np.random.SeedSequence(int(seed)).spawn(2)
    pts = sample_points(prepared.state, m, seed=ss[0])
    est = median_of_means(f(pts), delta, seed=int(ss[1].generate_state(1)[0]))
    budget = error_budget(f.M, lp, f.lipschitz, grid.d, grid.L, grid.N, prepared.prep_error)
    radius = sub_gaussian_radius(math.sqrt(var + budget.eps_var), m, delta, C)
    return MeanExperimentReport(seed=seed, m=m, delta=delta, estimate=est, mu_true=mu, var_true=var,
                                deviation=abs(est - mu), radius=radius, budget=budget,
                                bound=radius + budget.eps_mean, prep_error=prepared.prep_error, C=C)
