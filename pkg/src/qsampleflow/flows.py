"""Flow-model primitives: continuity-equation residuals, the flow ODE, and the
flow-matching / conditional-flow-matching gradient identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import EvaluationError, InsufficientSamplesError, ParameterError, StiffnessError
from .grid import GridSpec
from .models import GaussianLinear, _points
from .rng import make_rng

# one-sided and central fourth-order first-derivative stencils (offsets in units of h)
_CENTRAL = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))
_FORWARD = ((0, -25 / 12), (1, 4.0), (2, -3.0), (3, 4 / 3), (4, -1 / 4))


def _time_derivative(fn, t: float, T: float, h: float):
    if t - 2 * h >= 0 and t + 2 * h <= T:
        stencil, sign = _CENTRAL, 1
    elif t + 4 * h <= T:
        stencil, sign = _FORWARD, 1
    else:
        stencil, sign = tuple((-o, w) for o, w in _FORWARD), -1
    return sign * sum(w * fn(t + o * h) for o, w in stencil) / h


def spectral_divergence(field: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Divergence of a sampled vector field of shape (N**d, d), differentiated spectrally."""
    k = np.fft.fftfreq(grid.N, d=grid.L / grid.N) * 2 * np.pi
    k[grid.N // 2] = 0.0  # the unpaired Nyquist mode has no real derivative
    out = np.zeros(grid.shape)
    for a in range(grid.d):
        comp = field[:, a].reshape(grid.shape)
        shape = [1] * grid.d
        shape[a] = grid.N
        out = out + np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(comp, axis=a), axis=a).real
    return out.reshape(grid.size)


def continuity_residual(path, model, t: float, probe: GridSpec, h: float | None = None) -> float:
    """max over probe points of |dp/dt + div(p grad V)|."""
    pts = probe.points()
    T = path.T
    h = 1e-3 * T if h is None else h
    p = path.density(t, pts)
    dpdt = _time_derivative(lambda s: path.density(s, pts), t, T, h)
    flux = p[:, None] * model.grad(t, pts)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(flux)) and np.all(np.isfinite(dpdt))):
        raise EvaluationError(f"non-finite values in the continuity residual at t={t}")
    return float(np.max(np.abs(dpdt + spectral_divergence(flux, probe))))


@dataclass
class FlowTrajectory:
    times: np.ndarray
    positions: np.ndarray  # shape (len(times), n_particles, d)

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]


def solve_flow_ode(model, x0, T: float | None = None, tol: float = 1e-8, times=None, field=None,
                   t0: float = 0.0) -> FlowTrajectory:
    """Integrate x' = v_t(x) for a batch of starting points with an adaptive RK scheme.

    ``field`` overrides the velocity (signature ``field(t, x)`` on arrays of shape
    ``(n, d)``); by default ``model.grad`` is used.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    d = model.d
    T = model.T if T is None else T
    x0 = _points(x0, d).reshape(-1, d)
    vel = model.grad if field is None else field
    n = x0.shape[0]

    def rhs(t, y):
        return np.asarray(vel(t, y.reshape(n, d)), dtype=float).reshape(-1)

    t_eval = None if times is None else np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (t0, T), x0.reshape(-1), method="RK45", rtol=tol, atol=tol, t_eval=t_eval)
    if sol.status != 0:
        raise StiffnessError(f"flow ODE integration failed: {sol.message}")
    return FlowTrajectory(sol.t, sol.y.T.reshape(len(sol.t), n, d))


# ---------------------------------------------------------------- FM / CFM

class AffineAnsatz:
    """v(t, y) = b0 + W0 y (+ t (b1 + W1 y) when ``time_features``), parameters flattened."""

    def __init__(self, d: int = 1, time_features: bool = True):
        self.d = d
        self.time_features = time_features
        self.n_params = (d + d * d) * (2 if time_features else 1)
        if self.n_params > 8:
            raise ParameterError(f"ansatz has {self.n_params} parameters; at most 8 are supported")

    def features(self, t, y):
        """Per-sample Jacobian dv/dtheta, shape (n, d, n_params)."""
        n, d = y.shape
        blocks = [np.broadcast_to(np.eye(d), (n, d, d)), np.einsum("ij,nk->nijk", np.eye(d), y).reshape(n, d, d * d)]
        if self.time_features:
            blocks += [b * t[:, None, None] for b in blocks]
        return np.concatenate(blocks, axis=-1)

    def __call__(self, theta, t, y):
        return np.einsum("nip,p->ni", self.features(t, y), theta)


class ScaledFieldAnsatz:
    """v(t, y) = theta * u_t(y) for the interpolant's ground-truth field u; theta = 1 is the minimizer."""

    n_params = 1

    def __init__(self, target: GaussianLinear):
        self.target = target
        self.d = target.d

    def features(self, t, y):
        return _true_field(self.target, t, y)[:, :, None]

    def __call__(self, theta, t, y):
        return theta[0] * _true_field(self.target, t, y)


def _true_field(target: GaussianLinear, t, y):
    """Marginal field of x_t = (1 - t) x0 + t x1 with independent x0 ~ N(0, I), x1 ~ target.

    Its variance is (1 - t)^2 + t^2 sigma*^2, which differs from the
    GaussianLinear path itself; only the target's moments are used here.
    """
    md = target.target_mean
    s2 = target.target_std ** 2
    var = (1 - t) ** 2 + t ** 2 * s2
    g = (-(1 - t) + t * s2) / var
    return md + g[:, None] * (y - t[:, None] * md)


@dataclass
class CFMReport:
    grad_fm: np.ndarray
    grad_cfm: np.ndarray
    difference: np.ndarray
    standard_error: np.ndarray
    M: int
    seed: int

    @property
    def z_scores(self) -> np.ndarray:
        se = np.where(self.standard_error > 0, self.standard_error, np.inf)
        return np.abs(self.difference) / se

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.difference) <= 3 * self.standard_error))

    def to_dict(self) -> dict:
        return {"grad_fm": self.grad_fm.tolist(), "grad_cfm": self.grad_cfm.tolist(),
                "difference": self.difference.tolist(), "standard_error": self.standard_error.tolist(),
                "M": self.M, "seed": self.seed, "passed": self.passed}


def cfm_gradient_check(target: GaussianLinear, ansatz, theta, M: int, seed: int = 0) -> CFMReport:
    """Monte Carlo gradients of the FM and CFM losses with shared samples (t, x0, x1).

    Coordinates are relative to the target's center. The per-sample difference
    of the two gradient integrands is 2 (u_t(x_t) - (x1 - x0)) . dv/dtheta,
    whose mean is zero; the report carries its standard error.
    """
    if M < 100:
        raise InsufficientSamplesError(f"M={M} is below the minimum of 100 samples")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (ansatz.n_params,):
        raise ParameterError(f"theta must have {ansatz.n_params} entries")
    rng = make_rng(seed)
    d = target.d
    t = rng.uniform(0.0, 1.0, size=M)
    x0 = rng.standard_normal((M, d))
    x1 = target.target_mean + target.target_std * rng.standard_normal((M, d))
    xt = (1 - t)[:, None] * x0 + t[:, None] * x1
    jac = ansatz.features(t, xt)
    pred = ansatz(theta, t, xt)
    fm = 2 * np.einsum("ni,nip->np", pred - _true_field(target, t, xt), jac)
    cfm = 2 * np.einsum("ni,nip->np", pred - (x1 - x0), jac)
    diff = fm - cfm
    return CFMReport(grad_fm=fm.mean(axis=0), grad_cfm=cfm.mean(axis=0), difference=diff.mean(axis=0),
                     standard_error=diff.std(axis=0, ddof=1) / np.sqrt(M), M=M, seed=seed)
