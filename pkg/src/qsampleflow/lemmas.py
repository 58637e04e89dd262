"""Numerical checks of the Fourier-analytic and product-formula lemmas:
band-limited projection and aliasing, lattice sums, projection error,
the forced Schrodinger-equation norm bound, the spatial discretization
theorem, and the time-freeze and group-commutator bounds."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import expm

from .errors import ParameterError, ToleranceError
from .evolution import reference_evolve, time_ordered_propagator
from .grid import GridSpec
from .models import fourier_coefficients, laplacian_power_norm, smoothness_oracle
from .qsample import ideal_state, l2_distance
from .rng import make_rng
from .spectral import StateVector, potential_values


# ---------------------------------------------------------------- test functions

@dataclass
class TrigPolynomial:
    """f(x) = sum_n c_n exp(2 pi i n.x / L) over a finite set of integer mode vectors n."""

    coefficients: dict
    L: float
    d: int

    def __post_init__(self):
        self.coefficients = {tuple(int(v) for v in np.atleast_1d(k)): complex(c) for k, c in self.coefficients.items()}
        for k in self.coefficients:
            if len(k) != self.d:
                raise ParameterError(f"mode {k} does not have {self.d} components")

    @classmethod
    def random(cls, rng, L: float, d: int, band: int, n_modes: int, real: bool = False) -> "TrigPolynomial":
        """Random coefficients on ``n_modes`` distinct modes with components in [-band, band - 1]."""
        pool = list(product(range(-band, band), repeat=d))
        pick = rng.choice(len(pool), size=min(n_modes, len(pool)), replace=False)
        coeffs = {}
        for i in pick:
            coeffs[pool[i]] = rng.standard_normal() + (0 if real else 1j * rng.standard_normal())
        return cls(coeffs, L, d)

    def _modes(self):
        modes = np.array(list(self.coefficients), dtype=float).reshape(-1, self.d)
        coefs = np.array(list(self.coefficients.values()), dtype=complex)
        return modes, coefs

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        modes, coefs = self._modes()
        return np.exp(2j * np.pi / self.L * x @ modes.T) @ coefs

    def laplacian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        modes, coefs = self._modes()
        k2 = np.sum((2 * np.pi / self.L * modes) ** 2, axis=1)
        return np.exp(2j * np.pi / self.L * x @ modes.T) @ (-k2 * coefs)

    def l2_norm(self) -> float:
        return self.laplacian_power_norm(0)

    def laplacian_power_norm(self, power: int) -> float:
        """L2 norm of (nabla^2)^power f, from the coefficients."""
        modes, coefs = self._modes()
        k2 = np.sum((2 * np.pi / self.L * modes) ** 2, axis=1)
        return float(math.sqrt(self.L ** self.d) * np.linalg.norm(k2 ** power * coefs))

    def band_limited(self, grid: GridSpec) -> bool:
        lo, hi = -grid.N // 2, grid.N // 2 - 1
        return all(lo <= v <= hi for k in self.coefficients for v in k)


@dataclass
class SmoothPeriodic:
    """Closed-form smooth periodic function; norms come from a fine-grid spectrum."""

    fn: object
    L: float
    d: int
    fine_N: int = 512

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float).reshape(-1, self.d)), dtype=complex)

    def fine_grid(self) -> GridSpec:
        return GridSpec(self.L, self.fine_N if self.d == 1 else min(self.fine_N, 128), self.d)

    def laplacian_power_norm(self, power: int) -> float:
        g = self.fine_grid()
        return laplacian_power_norm(self(g.points()), g, power)


def exp_sine(L: float) -> SmoothPeriodic:
    return SmoothPeriodic(lambda x: np.exp(np.sin(2 * np.pi * x[:, 0] / L)), L, 1)


# ---------------------------------------------------------------- projection and aliasing

def oblique_project(f, grid: GridSpec) -> TrigPolynomial:
    """Band-limited interpolant through the grid samples of ``f``."""
    c = fourier_coefficients(f(grid.points()), grid)
    coeffs = {}
    for idx in np.ndindex(*grid.shape):
        val = c[idx]
        if val != 0:
            coeffs[tuple(i - grid.N // 2 for i in idx)] = val
    return TrigPolynomial(coeffs, grid.L, grid.d)


def fold_mode(mode, N: int) -> tuple:
    """The in-band representative of an integer mode vector modulo N."""
    return tuple(((m + N // 2) % N) - N // 2 for m in mode)


def aliased_coefficients(f: TrigPolynomial, grid: GridSpec) -> dict:
    """Coefficients of the projection predicted by summing all modes congruent modulo N."""
    out = {}
    for k, c in f.coefficients.items():
        key = fold_mode(k, grid.N)
        out[key] = out.get(key, 0) + c
    return out


def aliasing_error(f: TrigPolynomial, grid: GridSpec) -> float:
    """max |coefficient of the projection - folded coefficient sum| over the band."""
    proj = oblique_project(f, grid).coefficients
    pred = aliased_coefficients(f, grid)
    keys = set(proj) | set(pred)
    return max((abs(proj.get(k, 0) - pred.get(k, 0)) for k in keys), default=0.0)


def laplacian_relative_error(f: TrigPolynomial, grid: GridSpec) -> float:
    """||K samples(f) - samples(-lap f / 2)|| / ||samples(-lap f / 2)||."""
    from .spectral import kinetic_apply

    pts = grid.points()
    lhs = kinetic_apply(f(pts).astype(complex), grid)
    rhs = -0.5 * f.laplacian(pts)
    denom = np.linalg.norm(rhs)
    if denom == 0:
        return float(np.linalg.norm(lhs))
    return float(np.linalg.norm(lhs - rhs) / denom)


def parseval_relative_error(f: TrigPolynomial, grid: GridSpec) -> float:
    """Relative mismatch between ||samples|| and (N/L)^{d/2} ||f||_{L2}."""
    samples = np.linalg.norm(f(grid.points()))
    expected = (grid.N / grid.L) ** (grid.d / 2) * f.l2_norm()
    return float(abs(samples - expected) / expected)


# ---------------------------------------------------------------- lattice sums

@dataclass
class LatticeSumReport:
    d: int
    q: float
    y: list
    R: int
    partial_sum: float
    tail_bound: float
    bound: float

    @property
    def upper_estimate(self) -> float:
        return self.partial_sum + self.tail_bound

    @property
    def passed(self) -> bool:
        return self.upper_estimate <= self.bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(upper_estimate=self.upper_estimate, passed=self.passed)
        return out


def lattice_sum_check(d: int, q: float, y=None, R: int | None = None) -> LatticeSumReport:
    """Partial sum of ||x + y||^{-q} over 0 < ||x||_inf <= R with a certified tail.

    Shell rho (||x||_inf = rho) has at most 2d (2 rho + 1)^{d-1} points, each
    with ||x + y|| >= rho - 1/2; shells up to 4R are summed explicitly and the
    rest are bounded by an integral.
    """
    if q < d + 2 * math.pi:
        raise ParameterError(f"q must be >= d + 2 pi = {d + 2 * math.pi:.4f}")
    y = np.zeros(d) if y is None else np.asarray(y, dtype=float).reshape(d)
    if np.max(np.abs(y)) > 0.5:
        raise ParameterError("y must satisfy ||y||_inf <= 1/2")
    if R is None:
        R = {1: 2000, 2: 60, 3: 12}.get(d, 6)
    axis = np.arange(-R, R + 1)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    mesh = mesh[np.any(mesh != 0, axis=1)]
    partial = float(np.sum(np.linalg.norm(mesh + y, axis=1) ** (-q)))
    rho = np.arange(R + 1, 4 * R + 1, dtype=float)
    tail = float(np.sum(2 * d * (2 * rho + 1) ** (d - 1) * (rho - 0.5) ** (-q)))
    # for rho >= 4R + 1 >= 3, 2 rho + 1 <= 3 (rho - 1/2); sum over rho >= r0 <= integral from r0 - 1
    r0 = 4 * R + 1
    tail += 2 * d * 3 ** (d - 1) * (r0 - 1.5) ** (d - q) / (q - d)
    bound = ((1 + math.sqrt(d)) * math.sqrt(d + 3)) ** q
    return LatticeSumReport(d, q, y.tolist(), R, partial, tail, bound)


# ---------------------------------------------------------------- projection error

@dataclass
class ProjectionErrorReport:
    N: int
    m: int
    s: int
    measured: float
    bound: float
    commutator_measured: float
    commutator_bound: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound and self.commutator_measured <= self.commutator_bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _spectrum(f, fine: GridSpec) -> np.ndarray:
    return fourier_coefficients(f(fine.points()), fine)


def _project_spectrum(c_fine: np.ndarray, fine: GridSpec, N: int) -> np.ndarray:
    """Spectrum (on the fine band) of the coarse projection of a function with fine spectrum c_fine."""
    r = fine.N // N
    coarse = GridSpec(fine.L, N, fine.d)
    t = np.fft.ifftn(np.fft.ifftshift(c_fine)) * fine.size  # samples on the fine grid
    sub = t[(slice(None, None, r),) * fine.d]
    cc = fourier_coefficients(sub, coarse)
    out = np.zeros_like(c_fine)
    off = (fine.N - N) // 2
    out[(slice(off, off + N),) * fine.d] = cc
    return out


def _k2(grid: GridSpec) -> np.ndarray:
    kax = grid.axis_wavenumbers() ** 2
    k2 = np.zeros(grid.shape)
    for a in range(grid.d):
        shape = [1] * grid.d
        shape[a] = grid.N
        k2 = k2 + kax.reshape(shape)
    return k2


def projection_error_check(f, grid: GridSpec, m: int, s: int, fine_factor: int = 16,
                           smoothness: int | None = None) -> ProjectionErrorReport:
    """Measured ||lap^m (P f - f)|| and ||[lap^m, P] f|| against their bounds.

    Norms use the spectrum of f on a grid ``fine_factor`` times finer, which
    represents a trigonometric polynomial within that band exactly.
    ``smoothness`` declares f in C^k; k < 2(m + s) is rejected.
    """
    if smoothness is not None and smoothness < 2 * (m + s):
        raise ParameterError(f"f must be C^{2 * (m + s)}; declared C^{smoothness}")
    if s < (grid.d + 7) / 4:
        raise ParameterError("s must be >= (d + 7)/4")
    fine = GridSpec(grid.L, grid.N * fine_factor, grid.d, cap=max(grid.cap, (grid.N * fine_factor) ** grid.d))
    if isinstance(f, TrigPolynomial):
        limit = max(abs(v) for k in f.coefficients for v in k)
        if limit >= fine.N // 2:
            raise ParameterError("fine grid does not resolve the polynomial's modes")
    c = _spectrum(f, fine)
    k2 = _k2(fine)
    scale = math.sqrt(fine.L ** fine.d)
    pc = _project_spectrum(c, fine, grid.N)
    measured = scale * float(np.linalg.norm(k2 ** m * (pc - c)))
    # commutator: lap^m P f - P lap^m f
    lap_c = (-k2) ** m * c
    commutator = scale * float(np.linalg.norm((-k2) ** m * pc - _project_spectrum(lap_c, fine, grid.N)))
    top = scale * float(np.linalg.norm(k2 ** (m + s) * c))
    factor = (grid.L * grid.d / grid.N) ** (2 * s)
    return ProjectionErrorReport(grid.N, m, s, measured, factor * top, commutator, 2 * factor * top)


# ---------------------------------------------------------------- forced Schrodinger bound

@dataclass
class VectorDEReport:
    dim: int
    seed: int
    final_norm: float
    initial_norm: float
    forcing_integral: float

    @property
    def bound(self) -> float:
        return self.initial_norm + self.forcing_integral

    @property
    def slack(self) -> float:
        return self.bound - self.final_norm

    @property
    def passed(self) -> bool:
        return self.final_norm <= self.bound * (1 + 1e-10)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(bound=self.bound, slack=self.slack, passed=self.passed)
        return out


def _random_hermitian(rng, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def vector_de_bound_check(dim: int, seed: int, T: float = 1.0, degree: int = 2, forcing: bool = True,
                          hamiltonian: bool = True, tol: float = 1e-11) -> VectorDEReport:
    """Integrate i z' = H_t z + b_t with polynomial-in-t H and b; compare ||z_T|| with ||z_0|| + int ||b||."""
    if dim > 64:
        raise ParameterError("dim must be <= 64")
    rng = make_rng(seed)
    Hs = [_random_hermitian(rng, dim) / math.sqrt(dim) if hamiltonian else np.zeros((dim, dim)) for _ in range(degree + 1)]
    bs = [(rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) if forcing else np.zeros(dim) for _ in range(degree + 1)]
    z0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    z0 /= np.linalg.norm(z0)

    def H(t):
        return sum(h * t ** i for i, h in enumerate(Hs))

    def b(t):
        return sum(v * t ** i for i, v in enumerate(bs))

    sol = solve_ivp(lambda t, z: -1j * (H(t) @ z + b(t)), (0, T), z0.astype(complex), method="DOP853",
                    rtol=tol, atol=tol)
    if not sol.success:
        raise ToleranceError(f"integration failed: {sol.message}")
    integral, err = quad(lambda t: float(np.linalg.norm(b(t))), 0, T, epsabs=1e-13, epsrel=1e-13, limit=200)
    return VectorDEReport(dim, seed, float(np.linalg.norm(sol.y[:, -1])), float(np.linalg.norm(z0)), integral)


# ---------------------------------------------------------------- spatial discretization theorem

@dataclass
class SpatialErrorRow:
    N: int
    measured: float
    delta: float
    feasible: bool
    asserted: bool
    passed: bool


ROUNDOFF_FLOOR = 1e-13


def refinement_improves(coarse: float, fine: float) -> bool:
    """Finer grid strictly better, unless both errors already sit at rounding level."""
    return fine < coarse or max(coarse, fine) <= ROUNDOFF_FLOOR


@dataclass
class SpatialBoundReport:
    s: int
    T: float
    c_s: float
    rows: list = field(default_factory=list)
    excluded: str = ""

    @property
    def passed(self) -> bool:
        if self.excluded:
            return True
        ok = all(r.passed for r in self.rows)
        if len(self.rows) >= 2:
            ok = ok and refinement_improves(self.rows[0].measured, self.rows[-1].measured)
        return ok

    def to_dict(self) -> dict:
        return {"s": self.s, "T": self.T, "c_s": self.c_s, "excluded": self.excluded, "passed": self.passed,
                "rows": [asdict(r) for r in self.rows]}


def smoothness_constant(family, s: int, fine: GridSpec, n_times: int = 9) -> float:
    """3 max_t [(||V||_inf + 1) ||lap^{s+1} sqrt p|| + ||lap^{s+1}(V sqrt p)||] + 1 over sampled times."""
    pts = fine.points()
    worst = 0.0
    for t in np.linspace(0.0, family.T, n_times):
        root = np.asarray(family.sqrt_density(t, pts), dtype=float)
        v = potential_values(family, fine, t)
        term = (np.max(np.abs(v)) + 1) * smoothness_oracle(root, fine, s) + smoothness_oracle(v * root, fine, s)
        worst = max(worst, float(term))
    return 3 * worst + 1


def theorem1_experiment(family, s: int, N_list, fine: GridSpec | None = None, n_times: int = 9,
                        tol: float = 1e-11, boundary_limit: float = 1e-3) -> SpatialBoundReport:
    """Compare the discrete evolution of the exact initial qsample with the ideal
    final qsample on each coarse grid, against delta = T c_s (Ld/N)^{2s}."""
    T = family.T
    N_list = sorted(int(n) for n in N_list)
    if fine is None:
        fine = getattr(family, "ref_grid", None) or GridSpec(family.L, 4 * N_list[-1], family.d)
    if fine.N < 4 * N_list[-1]:
        raise ParameterError("the fine grid must be at least 4x the largest working grid")
    worst_mass = max(family.boundary_mass(t) for t in np.linspace(0, T, 5))
    if worst_mass > boundary_limit:
        return SpatialBoundReport(s, T, float("nan"), excluded=f"boundary mass {worst_mass:.3g} violates periodicity")
    c_s = smoothness_constant(family, s, fine, n_times)
    report = SpatialBoundReport(s, T, c_s)
    for N in N_list:
        grid = GridSpec(family.L, N, family.d)
        psi0, _ = ideal_state(family, 0.0, grid)
        psiT, _ = ideal_state(family, T, grid)
        phiT = reference_evolve(family, grid, psi0, 0.0, T, tol=tol)
        measured = l2_distance(psiT, phiT)
        delta = T * c_s * (family.L * family.d / N) ** (2 * s)
        feasible = delta <= T
        report.rows.append(SpatialErrorRow(N, measured, delta, feasible, feasible,
                                           (measured <= delta) if feasible else True))
    return report


# ---------------------------------------------------------------- product-formula lemmas

@dataclass
class MatrixBoundReport:
    kind: str
    seed: int
    dim: int
    dt: float
    measured: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def time_freeze_check(dim: int, seed: int, dt: float | None = None, A=None, B=None, tol: float = 1e-12) -> MatrixBoundReport:
    """||U(t0 + dt, t0) - exp(-i H(t0) dt)|| against dt^2/2 max ||H'|| for H(t) = A + t B."""
    rng = make_rng(seed)
    A = _random_hermitian(rng, dim) if A is None else np.asarray(A, dtype=complex)
    B = _random_hermitian(rng, dim) if B is None else np.asarray(B, dtype=complex)
    t0 = float(rng.uniform(0, 1))
    dt = float(10 ** rng.uniform(-3, -0.5)) if dt is None else dt
    U = time_ordered_propagator(lambda t: A + t * B, t0, t0 + dt, dim, tol=tol)
    frozen = expm(-1j * dt * (A + t0 * B))
    measured = float(np.linalg.norm(U - frozen, 2))
    bound = 0.5 * dt ** 2 * float(np.linalg.norm(B, 2))
    return MatrixBoundReport("time-freeze", seed, dim, dt, measured, bound)


def group_commutator_error(A: np.ndarray, B: np.ndarray, dt: float) -> float:
    H = 1j * (A @ B - B @ A)

    def S(t):
        return expm(1j * t * B) @ expm(1j * t * A) @ expm(-1j * t * B) @ expm(-1j * t * A)

    tau = math.sqrt(dt / 2)
    return float(np.linalg.norm(S(tau) @ S(-tau) - expm(-1j * H * dt), 2))


def group_commutator_bound(A: np.ndarray, B: np.ndarray, dt: float) -> float:
    H = 1j * (A @ B - B @ A)
    nA, nB, nH = (float(np.linalg.norm(M, 2)) for M in (A, B, H))
    return (8 / 3 * (nA + nB) ** 4 + 0.5 * nH ** 2) * dt ** 2


def group_commutator_check(dim: int, seed: int, dt: float | None = None, A=None, B=None) -> MatrixBoundReport:
    rng = make_rng(seed)
    A = _random_hermitian(rng, dim) if A is None else np.asarray(A, dtype=complex)
    B = _random_hermitian(rng, dim) if B is None else np.asarray(B, dtype=complex)
    dt = float(10 ** rng.uniform(-4, -1)) if dt is None else dt
    return MatrixBoundReport("group-commutator", seed, dim, dt, group_commutator_error(A, B, dt),
                             group_commutator_bound(A, B, dt))
