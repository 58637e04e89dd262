"""Time integration: the 8-factor group-commutator step, composed evolution,
reference propagators, and the resource planner."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import BudgetError, ParameterError, ShapeError, ToleranceError
from .grid import GridSpec
from .spectral import (
    DENSE_CAP,
    StateVector,
    _diag_mul,
    dense_hamiltonian,
    dense_kinetic,
    hamiltonian_apply,
    kinetic_exp_apply,
    potential_values,
)

DEFAULT_WORK_BUDGET = 5e10
MAX_HALVINGS = 20


# ---------------------------------------------------------------- planner

@dataclass
class SimulationPlan:
    T: float
    eps: float
    s: int
    c_s: float
    L: float
    d: int
    N: int
    n: int
    r: int
    V_max: float
    Vdot_max: float
    N_lower_bound: float
    delta: float
    feasible: bool
    state_prep_error: float = 0.0

    @property
    def dt(self) -> float:
        return self.T / self.r

    def angles(self, dt: float | None = None):
        return pf_angles(self.L, self.N, self.d, self.dt if dt is None else dt)

    def grid(self, cap: int | None = None) -> GridSpec:
        if cap is None:
            return GridSpec(self.L, self.N, self.d)
        return GridSpec(self.L, self.N, self.d, cap=cap)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dt"] = self.dt
        out["cs"] = self.c_s
        return out


def _smallest_power_of_two_at_least(x: float) -> int:
    n = 2
    while n < x:
        n *= 2
    return n


def step_count_bound(T, eps, s, c_s, V_max, Vdot_max, d) -> int:
    """Smallest integer r satisfying the product-formula step-count sufficiency bound."""
    ratio = 2 * T * c_s / eps
    bracket = 3 * math.pi ** 2 * (1 + V_max) ** 4 * d ** 6 * ratio ** (2 / s) + Vdot_max * d ** 3 * ratio ** (1 / s)
    return math.ceil(4 * math.pi ** 2 * bracket * T ** 2 / eps)


def spatial_error_delta(T, c_s, L, d, N, s, state_prep_error=0.0) -> float:
    return state_prep_error + T * c_s * (L * d / N) ** (2 * s)


def plan(T: float, eps: float, s: int, c_s: float, V_max: float, Vdot_max: float, L: float, d: int,
         state_prep_error: float = 0.0) -> SimulationPlan:
    """Derive grid size, qubit count and step count from the target error ``eps``."""
    if not (T > 0):
        raise ParameterError("T must be positive")
    if not (0 < eps <= 2 * T):
        raise ParameterError(f"eps must lie in (0, 2T], got {eps}")
    if int(s) != s or s < (d + 7) / 4:
        raise ParameterError(f"s must be an integer >= (d + 7)/4 = {(d + 7) / 4}")
    if c_s < 1:
        raise ParameterError("c_s is at least 1 by construction")
    if V_max < 0 or Vdot_max < 0:
        raise ParameterError("potential norms must be nonnegative")
    s = int(s)
    n_bound = L * d * (2 * T * c_s / eps) ** (1 / (2 * s))
    N = _smallest_power_of_two_at_least(n_bound)
    n = d * (N.bit_length() - 1)
    r = step_count_bound(T, eps, s, c_s, V_max, Vdot_max, d)
    delta = spatial_error_delta(T, c_s, L, d, N, s, state_prep_error)
    return SimulationPlan(T=T, eps=eps, s=s, c_s=c_s, L=L, d=d, N=N, n=n, r=r, V_max=V_max, Vdot_max=Vdot_max,
                          N_lower_bound=n_bound, delta=delta, feasible=delta <= T,
                          state_prep_error=state_prep_error)


def fixed_plan(grid: GridSpec, T: float, r: int) -> SimulationPlan:
    """Plan for a chosen grid and step count, bypassing the error-driven formulas."""
    return SimulationPlan(T=T, eps=float("nan"), s=0, c_s=float("nan"), L=grid.L, d=grid.d, N=grid.N, n=grid.n_qubits,
                          r=int(r), V_max=float("nan"), Vdot_max=float("nan"), N_lower_bound=float("nan"),
                          delta=float("nan"), feasible=False)


# ---------------------------------------------------------------- product formula

def pf_angles(L: float, N: int, d: int, dt: float):
    if dt <= 0:
        raise ParameterError("dt must be positive")
    alpha = L / (math.pi * N) * math.sqrt(dt / d)
    beta = math.pi * N / (2 * L) * math.sqrt(d * dt)
    return alpha, beta


def _pf_apply(amps: np.ndarray, grid: GridSpec, v: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    ep = np.exp(1j * beta * v)
    em = ep.conj()
    # rightmost factor first
    x = kinetic_exp_apply(amps, grid, alpha)
    x = _diag_mul(ep, x)
    x = kinetic_exp_apply(x, grid, -alpha)
    x = _diag_mul(em, x)
    x = kinetic_exp_apply(x, grid, -alpha)
    x = _diag_mul(em, x)
    x = kinetic_exp_apply(x, grid, alpha)
    return _diag_mul(ep, x)


def pf_step(state: StateVector, model, t0: float, dt: float) -> StateVector:
    """One step of the 8-factor product formula with the potential frozen at ``t0``."""
    grid = state.grid
    alpha, beta = pf_angles(grid.L, grid.N, grid.d, dt)
    v = potential_values(model, grid, t0)
    return StateVector(_pf_apply(state.amplitudes, grid, v, alpha, beta), grid)


def pf_matrix(model, grid: GridSpec, t0: float, dt: float, cap: int = DENSE_CAP) -> np.ndarray:
    from .spectral import dense

    return dense(lambda s: pf_step(s, model, t0, dt), grid, cap)


@dataclass
class EvolutionReport:
    final: StateVector
    norms: np.ndarray
    r: int
    dt: float
    distances: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def max_norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - self.norms[0]))) if len(self.norms) else 0.0


def evolve(plan: SimulationPlan, model, initial: StateVector, r: int | None = None,
           references: dict | None = None, budget: float = DEFAULT_WORK_BUDGET) -> EvolutionReport:
    """Apply W((r-1) dt) ... W(dt) W(0) to ``initial``; ``r`` overrides the planned step count."""
    r = plan.r if r is None else int(r)
    if r < 1:
        raise ParameterError("r must be >= 1")
    grid = initial.grid
    if (grid.L, grid.N, grid.d) != (plan.L, plan.N, plan.d):
        raise ShapeError("initial state is not on the plan's grid")
    if r * grid.size > budget:
        raise BudgetError(f"r * N^d = {r * grid.size:.3g} exceeds the work budget {budget:.3g}; "
                          "pass a smaller r override for sweeps")
    dt = plan.T / r
    alpha, beta = pf_angles(grid.L, grid.N, grid.d, dt)
    started = time.perf_counter()
    amps = initial.amplitudes.copy()
    norms = np.empty(r + 1)
    norms[0] = np.linalg.norm(amps)
    v_static = potential_values(model, grid, 0.0) if getattr(model, "time_independent", False) else None
    for step in range(r):
        v = v_static if v_static is not None else potential_values(model, grid, step * dt)
        amps = _pf_apply(amps, grid, v, alpha, beta)
        norms[step + 1] = np.linalg.norm(amps)
    final = StateVector(amps, grid)
    report = EvolutionReport(final=final, norms=norms, r=r, dt=dt,
                             timings={"evolve_seconds": time.perf_counter() - started})
    for name, ref in (references or {}).items():
        report.distances[name] = float(np.linalg.norm(amps - ref.amplitudes))
    return report


# ---------------------------------------------------------------- reference propagation

_GL_NODES = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)


def _dense_step_propagator(H, a: float, h: float, method: str) -> np.ndarray:
    if method == "magnus4":
        H1, H2 = H(a + _GL_NODES[0] * h), H(a + _GL_NODES[1] * h)
        omega = -0.5j * h * (H1 + H2) + (math.sqrt(3) / 12) * h * h * (H1 @ H2 - H2 @ H1)
        return expm(omega)
    if method == "midpoint":
        return expm(-1j * h * H(a + 0.5 * h))
    raise ParameterError(f"unknown dense method {method!r}")


def time_ordered_propagator(H, t0: float, t1: float, dim: int, tol: float = 1e-10, method: str = "magnus4",
                            max_halvings: int = MAX_HALVINGS, start_steps: int = 1) -> np.ndarray:
    """Dense time-ordered exponential of -i H(t) over [t0, t1].

    Micro-steps use frozen-generator exact exponentials (two-point Gauss
    Magnus or midpoint rule); the micro-step count doubles until successive
    propagators agree to ``tol / 10`` in Frobenius norm.
    """
    span = t1 - t0
    if span == 0:
        return np.eye(dim, dtype=complex)

    def propagate(m):
        h = span / m
        U = np.eye(dim, dtype=complex)
        for i in range(m):
            U = _dense_step_propagator(H, t0 + i * h, h, method) @ U
        return U

    m = max(1, int(start_steps))
    prev = propagate(m)
    for _ in range(max_halvings):
        m *= 2
        cur = propagate(m)
        if np.linalg.norm(cur - prev) < tol / 10:
            return cur
        prev = cur
    raise ToleranceError(f"propagator did not reach tol={tol} after {max_halvings} halvings")


def reference_propagator(model, grid: GridSpec, t0: float, t1: float, tol: float = 1e-10,
                         method: str = "magnus4", cap: int = DENSE_CAP, max_halvings: int = MAX_HALVINGS) -> np.ndarray:
    """Dense U(t1, t0) of the discrete continuity Hamiltonian i[K, D_V]."""
    K = dense_kinetic(grid, cap)

    def H(t):
        return dense_hamiltonian(grid, potential_values(model, grid, t), K)

    if getattr(model, "time_independent", False):
        return expm(-1j * (t1 - t0) * H(t0))
    return time_ordered_propagator(H, t0, t1, grid.size, tol, method, max_halvings)


def _ode_evolve(model, grid: GridSpec, amps: np.ndarray, t0: float, t1: float, rtol: float) -> np.ndarray:
    static_v = potential_values(model, grid, t0) if getattr(model, "time_independent", False) else None

    def rhs(t, y):
        v = static_v if static_v is not None else potential_values(model, grid, t)
        return -1j * hamiltonian_apply(y, grid, v)

    sol = solve_ivp(rhs, (t0, t1), amps.astype(complex), method="DOP853", rtol=rtol, atol=rtol * 1e-2)
    if not sol.success:
        raise ToleranceError(f"ODE reference failed: {sol.message}")
    return sol.y[:, -1]


def reference_evolve(model, grid: GridSpec, initial: StateVector, t0: float, t1: float, tol: float = 1e-10,
                     method: str = "auto", cap: int = DENSE_CAP, max_halvings: int = MAX_HALVINGS) -> StateVector:
    """High-accuracy U(t1, t0) applied to ``initial``.

    ``method``: "magnus4" or "midpoint" build the dense propagator;
    "ode" integrates matrix-free with an adaptive 8th-order Runge-Kutta
    scheme, tightening its tolerance until successive results agree to
    ``tol / 10``; "auto" picks dense for small grids and "ode" otherwise.
    """
    if initial.grid != grid and (initial.grid.L, initial.grid.N, initial.grid.d) != (grid.L, grid.N, grid.d):
        raise ShapeError("initial state is not on the requested grid")
    if method == "auto":
        method = "magnus4" if grid.size <= 256 else "ode"
    amps = initial.amplitudes
    if t1 == t0:
        return StateVector(amps.copy(), grid)
    if method in ("magnus4", "midpoint"):
        U = reference_propagator(model, grid, t0, t1, tol, method, cap, max_halvings)
        return StateVector(U @ amps, grid)
    if method != "ode":
        raise ParameterError(f"unknown method {method!r}")
    rtol = max(tol, 1e-13)
    prev = _ode_evolve(model, grid, amps, t0, t1, rtol)
    scale = max(np.linalg.norm(amps), 1e-300)
    for _ in range(max_halvings):
        rtol = max(rtol / 16, 2.3e-14)
        cur = _ode_evolve(model, grid, amps, t0, t1, rtol)
        if np.linalg.norm(cur - prev) < scale * tol / 10:
            return StateVector(cur, grid)
        if rtol <= 2.3e-14:
            # at the integrator's precision floor; accept if within tol
            if np.linalg.norm(cur - prev) < scale * tol:
                return StateVector(cur, grid)
            break
        prev = cur
    raise ToleranceError(f"ODE reference did not reach tol={tol}")


# ---------------------------------------------------------------- bounds

def potential_norms_near(model, grid: GridSpec, t0: float, dt: float, n_time: int = 17, refine: int = 4):
    """(sup |V_{t0}|, max over [t0, t0+dt] of sup |dV/dt|) on a ``refine``-times finer grid."""
    per_axis = grid.N * refine
    pts = GridSpec(grid.L, per_axis, grid.d, cap=max(grid.cap, per_axis ** grid.d)).points()
    v0 = float(np.max(np.abs(model.V(t0, pts))))
    vdot = 0.0
    for t in np.linspace(t0, min(t0 + dt, model.T), n_time):
        vdot = max(vdot, float(np.max(np.abs(model.dVdt(t, pts)))))
    return v0, vdot


def local_error_bound_from_norms(L: float, N: int, d: int, dt: float, V_sup: float, Vdot_sup: float) -> float:
    first = 3 * math.pi ** 4 / 4 * d ** 2 * N ** 4 / L ** 4 * (1 + V_sup) ** 4
    second = math.pi ** 2 / 2 * d * N ** 2 / L ** 2 * Vdot_sup
    return (first + second) * dt ** 2


def local_error_bound(model, grid: GridSpec, t0: float, dt: float) -> float:
    """Upper bound on ||U(t0 + dt, t0) - W(t0)|| in spectral norm."""
    v0, vdot = potential_norms_near(model, grid, t0, dt)
    return local_error_bound_from_norms(grid.L, grid.N, grid.d, dt, v0, vdot)
