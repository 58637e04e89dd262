"""Potential and probability-path families with known ground truth.

All positions are torus coordinates in ``[0, L)^d``. Gaussian families live
around ``center`` (default ``L/2`` on every axis) and are wrapped onto the
torus; ``boundary_mass`` reports how much probability sits near the seam.

Points are passed as arrays of shape ``(..., d)``; scalar-valued evaluations
return shape ``(...)`` and gradients return ``(..., d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0e, ndtr

from .errors import ConfigurationError, DomainError, EvaluationError, ParameterError
from .grid import GridSpec

SAFETY_FACTOR = 1.1
TIME_SLACK = 1e-12


def _points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ParameterError(f"points must have trailing dimension {d}, got shape {x.shape}")
    return x


def wrap(z, L: float):
    """Map displacements into the centered cell [-L/2, L/2)."""
    return (np.asarray(z) + L / 2) % L - L / 2


# ---------------------------------------------------------------- spectral helpers

def fourier_coefficients(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Coefficients c_k of the band-limited interpolant, indexed like the grid (centered band)."""
    t = np.asarray(samples).reshape(grid.shape)
    c = np.fft.fftn(t) / grid.size
    return np.fft.fftshift(c)


def trig_interpolate(samples: np.ndarray, grid: GridSpec, x) -> np.ndarray:
    """Evaluate the band-limited interpolant of grid samples at arbitrary points."""
    x = _points(x, grid.d)
    flat = x.reshape(-1, grid.d)
    c = fourier_coefficients(samples, grid)
    k = grid.axis_wavenumbers()
    out = c
    for a in range(grid.d):
        e = np.exp(1j * np.outer(flat[:, a], k))
        if a == 0:
            out = np.tensordot(e, out, axes=([1], [0]))
        else:
            out = np.einsum("pj,pj...->p...", e, out)
    return out.reshape(x.shape[:-1])


def laplacian_power_norm(samples: np.ndarray, grid: GridSpec, power: int) -> float:
    """L2 norm on the torus of (nabla^2)^power applied to the band-limited interpolant."""
    c = fourier_coefficients(samples, grid)
    k2 = np.zeros(grid.shape)
    kax = grid.axis_wavenumbers() ** 2
    for a in range(grid.d):
        shape = [1] * grid.d
        shape[a] = grid.N
        k2 = k2 + kax.reshape(shape)
    return float(math.sqrt(grid.L ** grid.d) * np.linalg.norm(k2 ** power * c))


def smoothness_oracle(samples: np.ndarray, grid: GridSpec, s: int, safety: float = SAFETY_FACTOR) -> float:
    """Safety-padded estimate of the L2 norm of nabla^{2(s+1)} g from fine-grid samples."""
    return safety * laplacian_power_norm(samples, grid, s + 1)


# ---------------------------------------------------------------- base classes

class PotentialModel:
    """Time-dependent scalar potential on the torus; subclasses fill in V, dVdt, grad."""

    L: float
    d: int
    T: float
    time_independent = False

    def V(self, t, x):
        raise NotImplementedError

    def dVdt(self, t, x):
        raise NotImplementedError

    def grad(self, t, x):
        raise NotImplementedError

    def check_time(self, t):
        if not (-TIME_SLACK <= t <= self.T + TIME_SLACK):
            raise DomainError(f"t={t} outside [0, {self.T}]")

    def norm_grid(self, per_axis: int | None = None) -> GridSpec:
        if per_axis is None:
            per_axis = 256 if self.d == 1 else 64 if self.d == 2 else 16
        return GridSpec(self.L, per_axis, self.d)

    def norms(self, n_time: int = 33, per_axis: int | None = None, t0: float = 0.0, t1: float | None = None):
        """(max |V|, max |dV/dt|) over a fine space grid and ``n_time`` times in [t0, t1]."""
        t1 = self.T if t1 is None else t1
        pts = self.norm_grid(per_axis).points()
        vmax = vdot = 0.0
        for t in np.linspace(t0, t1, n_time):
            v = np.asarray(self.V(t, pts))
            vd = np.asarray(self.dVdt(t, pts))
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(vd))):
                raise EvaluationError(f"non-finite potential at t={t}")
            vmax = max(vmax, float(np.max(np.abs(v))))
            vdot = max(vdot, float(np.max(np.abs(vd))))
        return vmax, vdot

    @property
    def V_max(self) -> float:
        return self.norms()[0]

    @property
    def Vdot_max(self) -> float:
        return self.norms()[1]


class ProbabilityPath:
    L: float
    d: int
    T: float
    kind = "analytic"
    boundary_tol = 0.0
    residual_tol = 1e-6

    def sqrt_density(self, t, x):
        raise NotImplementedError

    def density(self, t, x):
        return self.sqrt_density(t, x) ** 2

    def boundary_mass(self, t) -> float:
        return 0.0

    def total_mass(self, t, per_axis: int = 256) -> float:
        grid = GridSpec(self.L, per_axis if self.d == 1 else 64, self.d)
        return float(np.sum(self.density(t, grid.points())) * grid.spacing ** self.d)


def eval_velocity(model: PotentialModel, t: float, x) -> np.ndarray:
    """Velocity field grad V_t at ``x``; raises DomainError outside the horizon."""
    model.check_time(t)
    x = _points(x, model.d)
    if np.any(x < 0) or np.any(x >= model.L):
        raise DomainError("points must lie in [0, L)^d")
    return model.grad(t, x)


# ---------------------------------------------------------------- simple families

@dataclass
class ConstantPotential(PotentialModel):
    value: float = 0.0
    L: float = 1.0
    d: int = 1
    T: float = 1.0
    time_independent = True

    def V(self, t, x):
        x = _points(x, self.d)
        return np.full(x.shape[:-1], float(self.value))

    def dVdt(self, t, x):
        x = _points(x, self.d)
        return np.zeros(x.shape[:-1])

    def grad(self, t, x):
        x = _points(x, self.d)
        return np.zeros(x.shape)


@dataclass
class UniformPath(ProbabilityPath):
    L: float = 1.0
    d: int = 1
    T: float = 1.0

    def sqrt_density(self, t, x):
        x = _points(x, self.d)
        return np.full(x.shape[:-1], self.L ** (-self.d / 2))


@dataclass
class PlaneWavePotential(PotentialModel):
    """V_t(x) = (a0 + a1 t) cos(2 pi k.x / L + phase) for one integer mode vector k."""

    k: tuple = (1,)
    a0: float = 1.0
    a1: float = 0.0
    phase: float = 0.0
    L: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        self.k = tuple(int(v) for v in np.atleast_1d(self.k))
        self.d = len(self.k)
        self.time_independent = self.a1 == 0

    def _arg(self, x):
        x = _points(x, self.d)
        return 2 * np.pi / self.L * (x @ np.array(self.k, dtype=float)) + self.phase

    def V(self, t, x):
        return (self.a0 + self.a1 * t) * np.cos(self._arg(x))

    def dVdt(self, t, x):
        return self.a1 * np.cos(self._arg(x))

    def grad(self, t, x):
        kvec = 2 * np.pi / self.L * np.array(self.k, dtype=float)
        return -(self.a0 + self.a1 * t) * np.sin(self._arg(x))[..., None] * kvec


class SumPotential(PotentialModel):
    def __init__(self, terms):
        self.terms = list(terms)
        first = self.terms[0]
        self.L, self.d, self.T = first.L, first.d, first.T
        self.time_independent = all(t.time_independent for t in self.terms)

    def V(self, t, x):
        return sum(term.V(t, x) for term in self.terms)

    def dVdt(self, t, x):
        return sum(term.dVdt(t, x) for term in self.terms)

    def grad(self, t, x):
        return sum(term.grad(t, x) for term in self.terms)


# ---------------------------------------------------------------- Gaussian families

class GaussianFlow(PotentialModel, ProbabilityPath):
    """Isotropic Gaussian path N(m_t, v_t I) transported by the affine field
    v(y) = m'(t) + g(t) (y - m_t) with g = v'/(2v), wrapped onto the torus.

    Subclasses provide the mean and variance schedules with two time derivatives.
    """

    boundary_tol = 1e-8
    images = 2

    def __init__(self, L: float, d: int, T: float, center=None):
        if L <= 0 or d < 1 or T <= 0:
            raise ParameterError("L, T must be positive and d >= 1")
        self.L, self.d, self.T = float(L), int(d), float(T)
        self.center = np.full(self.d, self.L / 2) if center is None else np.broadcast_to(np.asarray(center, float), (self.d,)).copy()

    # schedules: mean vector (d,), variance scalar
    def mean(self, t):
        raise NotImplementedError

    def mean_dot(self, t):
        raise NotImplementedError

    def mean_ddot(self, t):
        raise NotImplementedError

    def var(self, t):
        raise NotImplementedError

    def var_dot(self, t):
        raise NotImplementedError

    def var_ddot(self, t):
        raise NotImplementedError

    def std(self, t):
        return math.sqrt(self.var(t))

    def rate(self, t) -> float:
        """g(t) = sigma'/sigma."""
        return self.var_dot(t) / (2 * self.var(t))

    def rate_dot(self, t) -> float:
        v, vd, vdd = self.var(t), self.var_dot(t), self.var_ddot(t)
        return (vdd * v - vd ** 2) / (2 * v ** 2)

    def _z(self, t, x):
        x = _points(x, self.d)
        return wrap(x - self.center - self.mean(t), self.L)

    def V(self, t, x):
        z = self._z(t, x)
        return z @ self.mean_dot(t) + 0.5 * self.rate(t) * np.sum(z * z, axis=-1)

    def dVdt(self, t, x):
        z = self._z(t, x)
        md = self.mean_dot(t)
        g = self.rate(t)
        return z @ self.mean_ddot(t) - md @ md - g * (z @ md) + 0.5 * self.rate_dot(t) * np.sum(z * z, axis=-1)

    def grad(self, t, x):
        z = self._z(t, x)
        return self.mean_dot(t) + self.rate(t) * z

    def physical_velocity(self, t, y):
        """Unwrapped field on R^d in coordinates relative to ``center``."""
        y = _points(y, self.d)
        return self.mean_dot(t) + self.rate(t) * (y - self.mean(t))

    def sqrt_density(self, t, x):
        return np.sqrt(self.density(t, x))

    def density(self, t, x):
        x = _points(x, self.d)
        y = x - self.center - self.mean(t)
        s = self.std(t)
        out = np.ones(x.shape[:-1])
        shifts = self.L * np.arange(-self.images, self.images + 1)
        for a in range(self.d):
            ya = y[..., a, None] + shifts
            out = out * np.sum(np.exp(-0.5 * (ya / s) ** 2), axis=-1) / (s * math.sqrt(2 * math.pi))
        return out

    def boundary_mass(self, t) -> float:
        """Mass within L/10 of the seam x_a = 0 on any axis."""
        s = self.std(t)
        lo, hi = self.L / 10, 9 * self.L / 10
        inside = 1.0
        mu = self.center + self.mean(t)
        for a in range(self.d):
            p = 0.0
            for n in range(-self.images, self.images + 1):
                p += ndtr((hi - mu[a] + n * self.L) / s) - ndtr((lo - mu[a] + n * self.L) / s)
            inside *= p
        return float(max(0.0, 1.0 - inside))

    def norms(self, n_time: int = 33, per_axis: int | None = None, t0: float = 0.0, t1: float | None = None):
        return PotentialModel.norms(self, n_time, per_axis, t0, t1)


class GaussianLinear(GaussianFlow):
    """Gaussian path from N(0, I) to N(mu*, sigma*^2 I) over t in [0, 1] with
    mean t mu* and standard deviation (1 - t) + t sigma*.

    Both moments interpolate linearly, so mu* = 0, sigma* = 1 is exactly static.
    """

    def __init__(self, target_mean=0.0, target_std: float = 1.0, L: float = 16.0, d: int = 1, center=None):
        if target_std <= 0:
            raise ParameterError("target_std must be positive")
        super().__init__(L, d, 1.0, center)
        self.target_mean = np.broadcast_to(np.asarray(target_mean, float), (self.d,)).copy()
        self.target_std = float(target_std)

    def mean(self, t):
        return t * self.target_mean

    def mean_dot(self, t):
        return self.target_mean

    def mean_ddot(self, t):
        return np.zeros(self.d)

    def std(self, t):
        return (1 - t) + t * self.target_std

    def var(self, t):
        return self.std(t) ** 2

    def var_dot(self, t):
        return 2 * self.std(t) * (self.target_std - 1)

    def var_ddot(self, t):
        return 2 * (self.target_std - 1) ** 2


class DDPMFlow(GaussianFlow):
    """Probability-flow potential of the variance-preserving diffusion with an
    affine noise rate beta(tau) = beta_min + (beta_max - beta_min) tau / T and a
    Gaussian data distribution N(m0, s0^2 I).

    In diffusion time the marginals have mean m0 exp(-B/2) and variance
    1 + (s0^2 - 1) exp(-B), B = int_0^tau beta. With ``reverse=True`` (default)
    the model runs in generation time t = T - tau, from near N(0, I) to the data.
    """

    def __init__(self, beta_min: float = 0.1, beta_max: float = 10.0, target_mean=0.0, target_std: float = 1.0,
                 T: float = 1.0, L: float = 16.0, d: int = 1, center=None, reverse: bool = True,
                 schedule: str = "affine"):
        if schedule != "affine":
            raise ConfigurationError(f"only affine noise schedules are supported, got {schedule!r}")
        if not (0 <= beta_min <= beta_max) or not np.isfinite(beta_max):
            raise ConfigurationError("noise schedule must be nonnegative and nondecreasing")
        if target_std <= 0:
            raise ParameterError("target_std must be positive")
        super().__init__(L, d, T, center)
        self.beta_min, self.beta_max = float(beta_min), float(beta_max)
        self.target_mean = np.broadcast_to(np.asarray(target_mean, float), (self.d,)).copy()
        self.target_std = float(target_std)
        self.reverse = reverse

    def beta(self, tau):
        return self.beta_min + (self.beta_max - self.beta_min) * tau / self.T

    def beta_dot(self, tau):
        return (self.beta_max - self.beta_min) / self.T

    def integrated_beta(self, tau):
        return self.beta_min * tau + 0.5 * (self.beta_max - self.beta_min) * tau ** 2 / self.T

    # diffusion-time moments
    def _m(self, tau):
        return self.target_mean * math.exp(-0.5 * self.integrated_beta(tau))

    def _md(self, tau):
        return -0.5 * self.beta(tau) * self._m(tau)

    def _mdd(self, tau):
        b = self.beta(tau)
        return (-0.5 * self.beta_dot(tau) + 0.25 * b * b) * self._m(tau)

    def _v(self, tau):
        return 1 + (self.target_std ** 2 - 1) * math.exp(-self.integrated_beta(tau))

    def _vd(self, tau):
        return -self.beta(tau) * (self._v(tau) - 1)

    def _vdd(self, tau):
        b = self.beta(tau)
        return (-self.beta_dot(tau) + b * b) * (self._v(tau) - 1)

    def _tau(self, t):
        return self.T - t if self.reverse else t

    def _sign(self):
        return -1.0 if self.reverse else 1.0

    def mean(self, t):
        return self._m(self._tau(t))

    def mean_dot(self, t):
        return self._sign() * self._md(self._tau(t))

    def mean_ddot(self, t):
        return self._mdd(self._tau(t))

    def var(self, t):
        return self._v(self._tau(t))

    def var_dot(self, t):
        return self._sign() * self._vd(self._tau(t))

    def var_ddot(self, t):
        return self._vdd(self._tau(t))

    def drift_minus_score(self, t, y):
        """f(y) - beta/2 * score(y) in diffusion-time orientation, physical coordinates.

        Independent route to the probability-flow velocity from the drift
        -beta y / 2 and the Gaussian score -(y - m)/v.
        """
        tau = self._tau(t)
        y = _points(y, self.d)
        b = self.beta(tau)
        score = -(y - self._m(tau)) / self._v(tau)
        return -0.5 * b * y - 0.5 * b * score


def ddpm_flow_potential(beta_min: float, beta_max: float, target_mean=0.0, target_std: float = 1.0, **kwargs) -> DDPMFlow:
    return DDPMFlow(beta_min, beta_max, target_mean, target_std, **kwargs)


# ---------------------------------------------------------------- trig torus family

@dataclass
class TrigTerm:
    """(a0 + a1 t) cos(2 pi k.x / L + phase)."""

    k: tuple
    a0: float
    a1: float = 0.0
    phase: float = 0.0


class TrigTorus(PotentialModel, ProbabilityPath):
    """Trigonometric-polynomial potential with an affine coefficient schedule.

    The initial density is a product of von Mises bumps centered at ``L/2``
    with concentration ``kappa``; later densities are produced by the
    reference propagator on a grid of ``ref_N`` points per axis and
    interpolated spectrally.
    """

    kind = "reference-computed"

    def __init__(self, terms, L: float = 2 * math.pi, T: float = 1.0, kappa: float = 0.5,
                 ref_N: int | None = None, ref_tol: float = 1e-11):
        self.terms = [t if isinstance(t, TrigTerm) else TrigTerm(*t) for t in terms]
        if not self.terms:
            raise ParameterError("at least one trigonometric term is required")
        ks = [tuple(int(v) for v in np.atleast_1d(t.k)) for t in self.terms]
        dims = {len(k) for k in ks}
        if len(dims) != 1:
            raise ParameterError("all mode vectors must share one dimension")
        for term, k in zip(self.terms, ks):
            term.k = k
        self.d = dims.pop()
        self.L, self.T, self.kappa = float(L), float(T), float(kappa)
        self.time_independent = all(t.a1 == 0 for t in self.terms)
        self.modes = np.array(ks, dtype=float)
        self.a0 = np.array([t.a0 for t in self.terms], dtype=float)
        self.a1 = np.array([t.a1 for t in self.terms], dtype=float)
        self.phase = np.array([t.phase for t in self.terms], dtype=float)
        self.band_limit = int(np.max(np.abs(self.modes)))
        if ref_N is None:
            ref_N = 256 if self.d == 1 else 64
        self.ref_grid = GridSpec(self.L, ref_N, self.d)
        self.ref_tol = ref_tol
        self._cache = {}

    # potential
    def _args(self, x):
        x = _points(x, self.d)
        return 2 * np.pi / self.L * x @ self.modes.T + self.phase

    def V(self, t, x):
        return np.cos(self._args(x)) @ (self.a0 + self.a1 * t)

    def dVdt(self, t, x):
        return np.cos(self._args(x)) @ self.a1

    def grad(self, t, x):
        amp = (self.a0 + self.a1 * t)
        s = -np.sin(self._args(x)) * amp
        return s @ (2 * np.pi / self.L * self.modes)

    def norms(self, n_time: int = 33, per_axis: int | None = None, t0: float = 0.0, t1: float | None = None):
        return PotentialModel.norms(self, n_time, per_axis, t0, t1)

    # path
    def initial_sqrt_density(self, x):
        x = _points(x, self.d)
        c = self.L / 2
        z = 2 * np.pi / self.L * (x - c)
        # exp(kappa cos z) / (L I0(kappa)), written with the scaled Bessel function
        log_norm = math.log(self.L) + math.log(i0e(self.kappa)) + self.kappa
        return np.exp(0.5 * np.sum(self.kappa * np.cos(z) - log_norm, axis=-1))

    def reference_samples(self, t: float) -> np.ndarray:
        """sqrt(p_t) sampled on the reference grid, cached by time."""
        from .evolution import reference_evolve
        from .spectral import StateVector

        self.check_time(t)
        key = float(t)
        if key in self._cache:
            return self._cache[key]
        if key == 0.0:
            vals = self.initial_sqrt_density(self.ref_grid.points()).astype(complex)
        else:
            earlier = [s for s in self._cache if s < key]
            start = max(earlier) if earlier else 0.0
            init = self.reference_samples(start)
            out = reference_evolve(self, self.ref_grid, StateVector(init, self.ref_grid), start, key,
                                   tol=self.ref_tol, method="ode")
            vals = out.amplitudes
        self._cache[key] = vals
        return vals

    def sqrt_density(self, t, x):
        vals = self.reference_samples(t).real
        return trig_interpolate(vals, self.ref_grid, x).real

    def density(self, t, x):
        return self.sqrt_density(t, x) ** 2


def default_trig_torus(d: int = 1, **kwargs) -> TrigTorus:
    """Smooth two-mode (per axis) family used by the regression and acceptance suites."""
    if d == 1:
        terms = [TrigTerm((1,), 0.15, 0.1), TrigTerm((2,), 0.02, -0.02, math.pi / 2)]
    else:
        terms = [TrigTerm((1, 0), 0.15, 0.1), TrigTerm((0, 1), 0.1, 0.0, 0.3),
                 TrigTerm((1, 1), 0.02, -0.02, math.pi / 2)]
    return TrigTorus(terms, **kwargs)


# ---------------------------------------------------------------- tabulated potential

class TabulatedPotential(PotentialModel):
    """Potential given by samples on an (n_t, N_tab^d) lattice.

    Space: band-limited interpolation through the samples (exactly periodic).
    Time: piecewise-linear between ``n_t`` equally spaced slices over [0, T].
    """

    def __init__(self, values, L: float, d: int, T: float):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ParameterError("values must have shape (n_t, N_tab**d)")
        n_t, size = values.shape
        n_tab = round(size ** (1 / d))
        if n_tab ** d != size:
            raise ParameterError("slice length is not a perfect d-th power")
        if n_t < 1 or not np.all(np.isfinite(values)):
            raise EvaluationError("table must contain finite values")
        self.values = values
        self.L, self.d, self.T = float(L), int(d), float(T)
        self.grid = GridSpec(self.L, n_tab, self.d)
        self.times = np.linspace(0, self.T, n_t) if n_t > 1 else np.array([0.0])
        self.time_independent = n_t == 1
        self._coef = [fourier_coefficients(v, self.grid) for v in values]

    def _bracket(self, t):
        if len(self.times) == 1:
            return 0, 0, 0.0
        t = min(max(t, 0.0), self.T)
        i = min(int(np.searchsorted(self.times, t, side="right")) - 1, len(self.times) - 2)
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return i, i + 1, w

    def V(self, t, x):
        i, j, w = self._bracket(t)
        a = trig_interpolate(self.values[i], self.grid, x).real
        if w == 0.0:
            return a
        b = trig_interpolate(self.values[j], self.grid, x).real
        return (1 - w) * a + w * b

    def dVdt(self, t, x):
        i, j, _ = self._bracket(t)
        if i == j:
            return np.zeros(_points(x, self.d).shape[:-1])
        a = trig_interpolate(self.values[i], self.grid, x).real
        b = trig_interpolate(self.values[j], self.grid, x).real
        return (b - a) / (self.times[j] - self.times[i])

    def _grad_slice(self, idx, x):
        x = _points(x, self.d)
        flat = x.reshape(-1, self.d)
        out = np.empty(flat.shape)
        k = self.grid.axis_wavenumbers()
        for a in range(self.d):
            shape = [1] * self.d
            shape[a] = self.grid.N
            # differentiate the spectrum along axis a; drop the unpaired Nyquist mode
            mult = 1j * k.copy()
            mult[0] = 0.0
            dc = self._coef[idx] * mult.reshape(shape)
            samples = np.fft.ifftn(np.fft.ifftshift(dc)) * self.grid.size
            out[:, a] = trig_interpolate(samples, self.grid, flat).real
        return out.reshape(x.shape)

    def grad(self, t, x):
        i, j, w = self._bracket(t)
        g = self._grad_slice(i, x)
        if w == 0.0:
            return g
        return (1 - w) * g + w * self._grad_slice(j, x)
