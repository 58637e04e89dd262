import math

import mpmath
import numpy as np
import pytest

from qsampleflow.errors import ConfigurationError, DomainError, EvaluationError
from qsampleflow.flows import continuity_residual
from qsampleflow.grid import GridSpec
from qsampleflow.models import (
    ConstantPotential,
    DDPMFlow,
    GaussianLinear,
    PlaneWavePotential,
    TabulatedPotential,
    TrigTerm,
    TrigTorus,
    UniformPath,
    ddpm_flow_potential,
    default_trig_torus,
    eval_velocity,
    smoothness_oracle,
)
from qsampleflow.spectral import potential_values

FAMILIES = {
    "gauss": lambda: GaussianLinear(0.5, 1.0, L=16.0),
    "gauss2d": lambda: GaussianLinear((0.5, -0.25), 0.8, L=16.0, d=2),
    "ddpm": lambda: DDPMFlow(0.1, 10.0, target_mean=1.0, target_std=0.5, L=16.0),
    "trig1d": lambda: default_trig_torus(1),
}


def test_static_gaussian_has_zero_velocity():
    fam = GaussianLinear(0.0, 1.0, L=16.0)
    x = np.linspace(0, 16, 32, endpoint=False)
    for t in (0.0, 0.3, 1.0):
        assert np.allclose(eval_velocity(fam, t, x), 0.0)
        assert np.allclose(fam.density(t, x), fam.density(0.0, x))


def test_cosine_potential_gradient_vanishes_at_peak():
    V = PlaneWavePotential((1,), 0.8, L=2 * math.pi)
    assert np.allclose(eval_velocity(V, 0.5, [0.0]), 0.0)


def test_gaussian_velocity_at_mean():
    fam = GaussianLinear(0.5, 1.0, L=16.0)
    x = fam.center + fam.mean(0.5)
    assert eval_velocity(fam, 0.5, x) == pytest.approx([0.5])


def test_time_domain():
    fam = GaussianLinear(0.5, 1.0)
    with pytest.raises(DomainError):
        eval_velocity(fam, 1.5, [1.0])


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_gradient_matches_finite_differences(name):
    fam = FAMILIES[name]()
    rng = np.random.default_rng(7)
    # stay away from the seam where the wrapped Gaussian potential has a kink
    x = fam.L * rng.uniform(0.3, 0.7, size=(6, fam.d))
    t = 0.4 * fam.T
    g = fam.grad(t, x)

    def fd(h):
        out = np.empty_like(x)
        for a in range(fam.d):
            e = np.zeros(fam.d)
            e[a] = h
            out[:, a] = (fam.V(t, x + e) - fam.V(t, x - e)) / (2 * h)
        return np.max(np.abs(out - g))

    coarse, fine = fd(0.2), fd(0.1)
    assert fine < 1e-2
    if coarse > 1e-9:
        assert coarse / fine >= 3.9
    else:
        # quadratic potentials: central differences are exact up to rounding
        assert fine < 1e-9


@pytest.mark.parametrize("name", ["trig1d", "ddpm", "gauss"])
def test_time_derivative_matches_finite_differences(name):
    fam = FAMILIES[name]()
    x = np.linspace(0.35, 0.65, 7)[:, None] * fam.L
    t, h = 0.5 * fam.T, 1e-4 * fam.T
    fd = (fam.V(t + h, x) - fam.V(t - h, x)) / (2 * h)
    assert np.allclose(fam.dVdt(t, x), fd, atol=1e-5)


def test_trig_torus_is_periodic():
    fam = default_trig_torus(2)
    rng = np.random.default_rng(2)
    x = rng.uniform(0, fam.L, size=(20, 2))
    for a in range(2):
        shift = np.zeros(2)
        shift[a] = fam.L
        assert np.max(np.abs(fam.V(0.7, x + shift) - fam.V(0.7, x))) < 1e-13


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_continuity_residual(name):
    fam = FAMILIES[name]()
    probe = GridSpec(fam.L, 128 if fam.d == 1 else 64, fam.d)
    for t in np.linspace(0.1, 0.9, 5) * fam.T:
        assert continuity_residual(fam, fam, t, probe) <= 1e-6


def test_continuity_residual_flags_mismatch():
    path = GaussianLinear(1.0, 1.0, L=16.0)
    zero = ConstantPotential(0.0, L=16.0)
    assert continuity_residual(path, zero, 0.5, GridSpec(16.0, 128, 1)) > 0.01
    assert continuity_residual(UniformPath(), ConstantPotential(1.0), 0.5, GridSpec(1.0, 16, 1)) < 1e-12


def test_ddpm_stationary_target_is_static():
    fam = ddpm_flow_potential(0.1, 10.0, 0.0, 1.0)
    y = np.linspace(-5, 5, 21)
    for t in (0.0, 0.5, 1.0):
        assert np.allclose(fam.physical_velocity(t, y), 0.0)
        assert np.allclose(fam.drift_minus_score(t, y), 0.0)


def test_ddpm_constant_rate_coefficient():
    beta, sigma = 2.0, 0.5
    fam = DDPMFlow(beta, beta, 0.0, sigma, reverse=False)
    y = np.linspace(-3, 3, 7)
    for tau in (0.1, 0.5, 0.9):
        var = 1 + (sigma ** 2 - 1) * math.exp(-beta * tau)
        expected = -(beta / 2) * (1 - 1 / var) * y
        assert np.allclose(fam.physical_velocity(tau, y)[..., 0], expected)
        assert np.allclose(fam.drift_minus_score(tau, y)[..., 0], expected)


def test_ddpm_generation_time_matches_drift_minus_score():
    fam = DDPMFlow(0.1, 10.0, target_mean=1.0, target_std=0.5)
    y = np.linspace(-3, 3, 13)
    for t in (0.05, 0.5, 0.95):
        # generation time runs the diffusion backwards, so the velocity flips sign
        assert np.allclose(fam.physical_velocity(t, y), -fam.drift_minus_score(t, y))


def test_ddpm_rejects_bad_schedules():
    with pytest.raises(ConfigurationError):
        DDPMFlow(0.1, 10.0, schedule="cosine")
    with pytest.raises(ConfigurationError):
        DDPMFlow(5.0, 1.0)


def test_gaussian_boundary_mass():
    assert GaussianLinear(0.5, 1.0, L=16.0).boundary_mass(1.0) < 1e-8
    assert GaussianLinear(0.0, 3.0, L=16.0).boundary_mass(1.0) > 1e-3


def _mp_sqrt_density(kappa, L):
    norm = mpmath.sqrt(L * mpmath.besseli(0, kappa))
    return lambda x: mpmath.exp(kappa / 2 * mpmath.cos(2 * mpmath.pi / L * (x - L / 2))) / norm


def test_smoothness_norms_against_symbolic_oracle():
    fam = default_trig_torus(1)
    fine = fam.ref_grid
    s = 2
    samples = fam.sqrt_density(0.0, fine.points())
    v = potential_values(fam, fine, 0.0)
    got_root = smoothness_oracle(samples, fine, s) / 1.1
    got_prod = smoothness_oracle(v * samples, fine, s) / 1.1
    mpmath.mp.dps = 50
    root = _mp_sqrt_density(fam.kappa, fam.L)

    def V0(x):
        return sum(term.a0 * mpmath.cos(2 * mpmath.pi / fam.L * term.k[0] * x + term.phase) for term in fam.terms)

    def norm_of_derivative(fn):
        def d6(x):
            return mpmath.diff(fn, x, 6)

        return float(mpmath.sqrt(mpmath.quad(lambda x: d6(x) ** 2, [0, fam.L / 2, fam.L])))

    # exp((kappa/2) cos z) = sum_n I_n(kappa/2) e^{inz}, so the sixth derivative norm is a Bessel series
    series = mpmath.sqrt(2 * mpmath.pi / (fam.L * mpmath.besseli(0, fam.kappa))
                         * sum(2 * n ** 12 * mpmath.besseli(n, fam.kappa / 2) ** 2 for n in range(1, 60)))
    assert float(series) == pytest.approx(norm_of_derivative(root), rel=1e-12)
    # FFT rounding in the top modes is amplified by |k|^6, hence the looser match
    assert got_root == pytest.approx(float(series), rel=1e-6)
    assert got_prod == pytest.approx(norm_of_derivative(lambda x: V0(x) * root(x)), rel=1e-6)


def test_trig_density_stays_normalized():
    fam = default_trig_torus(1)
    for t in (0.0, 0.5, 1.0):
        assert fam.total_mass(t) == pytest.approx(1.0, abs=1e-9)


def test_trig_custom_terms_and_errors():
    fam = TrigTorus([TrigTerm((1,), 0.2)], L=2 * math.pi)
    assert fam.time_independent
    with pytest.raises(Exception):
        TrigTorus([TrigTerm((1,), 0.2), TrigTerm((1, 1), 0.1)])


def test_tabulated_potential_reproduces_samples():
    src = PlaneWavePotential((2,), 0.3, a1=0.2, L=4.0)
    tab_grid = GridSpec(4.0, 16, 1)
    times = np.linspace(0, 1, 5)
    values = np.stack([potential_values(src, tab_grid, t) for t in times])
    tab = TabulatedPotential(values, 4.0, 1, 1.0)
    x = np.linspace(0, 4, 23)[:, None]
    for t in (0.0, 0.37, 1.0):
        assert np.allclose(tab.V(t, x), src.V(t, x), atol=1e-12)
    assert np.allclose(tab.grad(0.5, x), src.grad(0.5, x), atol=1e-11)
    assert np.allclose(tab.dVdt(0.5, x), src.dVdt(0.5, x), atol=1e-12)


def test_non_finite_potential_is_rejected():
    class Bad(ConstantPotential):
        def V(self, t, x):
            return np.full(np.asarray(x).shape[0], np.nan)

    with pytest.raises(EvaluationError):
        potential_values(Bad(), GridSpec(1.0, 4, 1), 0.0)
