import math

import mpmath
import numpy as np
import pytest
from scipy.linalg import expm

from qsampleflow.errors import BudgetError, ParameterError, ShapeError, ToleranceError
from qsampleflow.evolution import (
    evolve,
    fixed_plan,
    local_error_bound,
    local_error_bound_from_norms,
    pf_angles,
    pf_matrix,
    pf_step,
    plan,
    reference_evolve,
    reference_propagator,
    time_ordered_propagator,
)
from qsampleflow.grid import GridSpec
from qsampleflow.models import ConstantPotential, GaussianLinear, PlaneWavePotential, default_trig_torus
from qsampleflow.qsample import ideal_state
from qsampleflow.spectral import StateVector, dense_kinetic, potential_values, spectral_norm


def random_state(grid, seed=0, real=False):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(grid.size) + (0 if real else 1j * rng.standard_normal(grid.size))
    return StateVector(a.astype(complex), grid).normalize()


def mp_step_count(T, eps, s, c_s, V_max, Vdot_max, d):
    mpmath.mp.dps = 50
    T, eps, c_s, V_max, Vdot_max = (mpmath.mpf(v) for v in (T, eps, c_s, V_max, Vdot_max))
    ratio = 2 * T * c_s / eps
    bracket = (3 * mpmath.pi ** 2 * (1 + V_max) ** 4 * d ** 6 * ratio ** (mpmath.mpf(2) / s)
               + Vdot_max * d ** 3 * ratio ** (mpmath.mpf(1) / s))
    return int(mpmath.ceil(4 * mpmath.pi ** 2 * bracket * T ** 2 / eps))


def test_angles_example():
    alpha, beta = pf_angles(1.0, 8, 1, 0.01)
    assert alpha == pytest.approx(0.1 / (8 * math.pi), rel=1e-14)
    assert alpha == pytest.approx(3.9789e-3, rel=1e-4)
    assert beta == pytest.approx(4 * math.pi * 0.1, rel=1e-14)


def test_planner_worked_example():
    p = plan(T=1, eps=0.1, s=2, c_s=2, V_max=1, Vdot_max=0, L=1, d=1)
    assert p.N_lower_bound == pytest.approx(40 ** 0.25)
    assert (p.N, p.n) == (4, 2)
    assert p.r == mp_step_count(1, 0.1, 2, 2, 1, 0, 1)
    # the closed form 4 pi^2 * 3 pi^2 * 16 * 40 * 10 is about 7.48 million
    assert p.r == math.ceil(12 * math.pi ** 4 * 16 * 40 * 10)
    assert p.feasible and p.delta == pytest.approx(2 * (1 / 4) ** 4)


@pytest.mark.parametrize("args", [
    dict(T=1, eps=0.3, s=3, c_s=5.0, V_max=2.0, Vdot_max=1.5, L=2.0, d=2),
    dict(T=2, eps=0.05, s=2, c_s=17.0, V_max=0.3, Vdot_max=0.2, L=6.28, d=1),
])
def test_planner_matches_high_precision(args):
    p = plan(**args)
    assert p.r == mp_step_count(args["T"], args["eps"], args["s"], args["c_s"], args["V_max"], args["Vdot_max"],
                                args["d"])
    assert p.N >= p.N_lower_bound > p.N / 2 or p.N == 2
    assert p.n == args["d"] * int(math.log2(p.N))


def test_planner_errors():
    with pytest.raises(ParameterError):
        plan(T=1, eps=3, s=2, c_s=2, V_max=1, Vdot_max=0, L=1, d=1)
    with pytest.raises(ParameterError):
        plan(T=1, eps=0.1, s=2, c_s=2, V_max=1, Vdot_max=0, L=1, d=2)
    with pytest.raises(ParameterError):
        plan(T=1, eps=0.1, s=2, c_s=0.5, V_max=1, Vdot_max=0, L=1, d=1)


def test_local_bound_examples():
    assert local_error_bound_from_norms(1.0, 8, 1, 1e-3, 1.0, 0.0) == pytest.approx(
        0.75 * math.pi ** 4 * 4096 * 16 * 1e-6)
    assert local_error_bound_from_norms(1.0, 8, 1, 1e-3, 1.0, 0.0) == pytest.approx(4.79, abs=5e-3)
    b1 = local_error_bound_from_norms(2.0, 16, 1, 1e-3, 0.4, 0.2)
    assert local_error_bound_from_norms(2.0, 16, 1, 2e-3, 0.4, 0.2) == pytest.approx(4 * b1)
    g = GridSpec(1.0, 8, 1)
    zero = ConstantPotential(0.0)
    assert local_error_bound(zero, g, 0.0, 1e-3) == pytest.approx(0.75 * math.pi ** 4 * 4096 * 1e-6)


def test_zero_potential_gives_identity():
    g = GridSpec(2.0, 16, 1)
    assert np.allclose(pf_matrix(ConstantPotential(0.0, L=2.0), g, 0.0, 0.01), np.eye(16), atol=1e-13)
    psi = random_state(g)
    rep = evolve(fixed_plan(g, 1.0, 50), ConstantPotential(0.0, L=2.0), psi)
    assert np.allclose(rep.final.amplitudes, psi.amplitudes, atol=1e-12)


def test_static_gaussian_evolution_is_trivial():
    fam = GaussianLinear(0.0, 1.0, L=16.0)
    g = GridSpec(16.0, 64, 1)
    psi0, _ = ideal_state(fam, 0.0, g)
    rep = evolve(fixed_plan(g, 1.0, 200), fam, psi0)
    assert np.linalg.norm(rep.final.amplitudes - psi0.amplitudes) < 1e-12


def test_pf_step_matches_explicit_factor_product():
    V = PlaneWavePotential((1,), 0.6, a1=0.3, L=1.5)
    g = GridSpec(1.5, 8, 1)
    t0, dt = 0.2, 0.01
    a, b = pf_angles(g.L, g.N, g.d, dt)
    K = dense_kinetic(g)
    D = np.diag(potential_values(V, g, t0))
    eK = lambda phi: expm(1j * phi * K)  # noqa: E731
    eD = lambda phi: expm(1j * phi * D)  # noqa: E731
    W = eD(b) @ eK(a) @ eD(-b) @ eK(-a) @ eD(-b) @ eK(-a) @ eD(b) @ eK(a)
    assert np.allclose(pf_matrix(V, g, t0, dt), W, atol=1e-13)
    psi = random_state(g, 4)
    assert np.allclose(pf_step(psi, V, t0, dt).amplitudes, W @ psi.amplitudes, atol=1e-13)


def test_local_error_below_bound_dense():
    fam = default_trig_torus(1)
    g = GridSpec(fam.L, 8, 1)
    for t0, dt in [(0.0, 0.05), (0.4, 0.01), (0.7, 1e-3)]:
        U = reference_propagator(fam, g, t0, t0 + dt, tol=1e-12)
        err = spectral_norm(U - pf_matrix(fam, g, t0, dt), method="svd")
        assert err <= local_error_bound(fam, g, t0, dt)


def test_global_triangle_inequality_and_unitarity():
    fam = default_trig_torus(1)
    g = GridSpec(fam.L, 32, 1)
    psi0, _ = ideal_state(fam, 0.0, g)
    r = 4096
    rep = evolve(fixed_plan(g, fam.T, r), fam, psi0)
    ref = reference_evolve(fam, g, psi0, 0.0, fam.T, tol=1e-10)
    summed = r * local_error_bound_from_norms(g.L, g.N, g.d, fam.T / r, fam.V_max, fam.Vdot_max)
    assert np.linalg.norm(rep.final.amplitudes - ref.amplitudes) <= summed
    assert rep.max_norm_drift <= 1e-10 * r
    x = random_state(g, 9)
    assert abs(evolve(fixed_plan(g, fam.T, 64), fam, x).final.norm() - 1) < 1e-10


def test_reference_constant_potential_is_identity():
    g = GridSpec(2.0, 16, 1)
    psi = random_state(g, 1)
    out = reference_evolve(ConstantPotential(3.0, L=2.0), g, psi, 0.0, 0.8)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-12)


def test_reference_matches_exponential_when_static():
    V = PlaneWavePotential((2,), 0.5, L=3.0)
    g = GridSpec(3.0, 16, 1)
    psi = random_state(g, 2)
    K = dense_kinetic(g)
    v = potential_values(V, g, 0.0)
    H = 1j * (K * (v[None, :] - v[:, None]))
    expected = expm(-1j * 0.6 * H) @ psi.amplitudes
    for method in ("magnus4", "midpoint", "ode"):
        out = reference_evolve(V, g, psi, 0.0, 0.6, tol=1e-10, method=method)
        assert np.allclose(out.amplitudes, expected, atol=1e-9)


@pytest.mark.parametrize("method", ["magnus4", "midpoint", "ode"])
def test_reference_methods_agree_and_stay_real(method):
    fam = default_trig_torus(1)
    g = GridSpec(fam.L, 16, 1)
    psi = random_state(g, 3, real=True)
    # the second-order midpoint rule is too slow for the tightest tolerance
    tol = 1e-8 if method == "midpoint" else 1e-10
    out = reference_evolve(fam, g, psi, 0.1, 0.9, tol=tol, method=method)
    assert np.max(np.abs(out.amplitudes.imag)) <= 10 * tol
    assert abs(out.norm() - 1) < 1e-10
    base = reference_evolve(fam, g, psi, 0.1, 0.9, tol=1e-11, method="magnus4")
    assert np.linalg.norm(out.amplitudes - base.amplitudes) < 10 * tol


def test_time_ordered_propagator_failure():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6))
    A = A + A.T
    with pytest.raises(ToleranceError):
        time_ordered_propagator(lambda t: A * math.sin(40 * t), 0.0, 1.0, 6, tol=1e-14, max_halvings=2)


def test_evolve_guards():
    g = GridSpec(1.0, 16, 1)
    psi = random_state(g)
    with pytest.raises(BudgetError):
        evolve(fixed_plan(g, 1.0, 10), ConstantPotential(0.0), psi, r=10 ** 6, budget=1e6)
    with pytest.raises(ShapeError):
        evolve(fixed_plan(GridSpec(1.0, 8, 1), 1.0, 10), ConstantPotential(0.0), psi)
