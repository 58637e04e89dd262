import math

import numpy as np
import pytest

from qsampleflow.errors import SizeError
from qsampleflow.grid import GridSpec
from qsampleflow.models import ConstantPotential, PlaneWavePotential, default_trig_torus
from qsampleflow.spectral import (
    StateVector,
    apply_centered_dft,
    apply_diag_potential,
    apply_H,
    apply_K,
    apply_sign,
    dense,
    dense_hamiltonian,
    dense_kinetic,
    exp_diag_potential,
    exp_K,
    potential_values,
    spectral_norm,
)


class Linear:
    """V(x) = x, for the pointwise-product example."""
    L, d, T = 1.0, 1, 1.0

    def V(self, t, x):
        return np.asarray(x)[..., 0]


def plane_wave(grid, k):
    x = grid.points()[:, 0]
    return StateVector(np.exp(1j * k * x) / math.sqrt(grid.N), grid)


def test_dft_examples():
    g = GridSpec(1.0, 4, 1)
    out = apply_centered_dft(StateVector.basis(g, 0), 0)
    assert np.allclose(out.amplitudes, 0.5)
    out = apply_centered_dft(StateVector.basis(g, 1), 0)
    assert np.allclose(out.amplitudes, np.array([1, 1j, -1, -1j]) / 2)


def test_dft_inverse_roundtrip():
    g = GridSpec(1.0, 8, 2)
    rng = np.random.default_rng(0)
    psi = StateVector(rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size), g)
    for axis in range(2):
        back = apply_centered_dft(apply_centered_dft(psi, axis), axis, inverse=True)
        assert np.allclose(back.amplitudes, psi.amplitudes, atol=1e-12)


def test_sign_examples():
    g2 = GridSpec(1.0, 2, 1)
    out = apply_sign(StateVector(np.ones(2) / math.sqrt(2), g2), 0)
    assert np.allclose(out.amplitudes, np.array([1, -1]) / math.sqrt(2))
    g4 = GridSpec(1.0, 4, 1)
    assert np.allclose(apply_sign(StateVector.basis(g4, 3), 0).amplitudes, -StateVector.basis(g4, 3).amplitudes)
    psi = StateVector(np.arange(4.0) + 1j, g4)
    assert np.array_equal(apply_sign(apply_sign(psi, 0), 0).amplitudes, psi.amplitudes)


def test_kinetic_eigenvectors():
    g = GridSpec(2 * math.pi, 8, 1)
    const = StateVector(np.ones(8) / math.sqrt(8), g)
    assert np.allclose(apply_K(const).amplitudes, 0, atol=1e-14)
    wave = plane_wave(g, 2)
    assert np.allclose(apply_K(wave).amplitudes, 2 * wave.amplitudes, atol=1e-13)
    x = g.points()[:, 0]
    cosine = StateVector(math.sqrt(2) * np.cos(2 * x), g)
    assert np.allclose(apply_K(cosine).amplitudes, 2 * cosine.amplitudes, atol=1e-13)
    # independent route: dense K eigen-decomposition
    K = dense_kinetic(g)
    assert np.allclose(K, K.conj().T)
    assert np.allclose(K @ wave.amplitudes, 2 * wave.amplitudes, atol=1e-13)


def test_dense_kinetic_two_point_grid():
    # K = 1/2 S F diag(k^2) F^dagger S with k = (-1, 0); the sign flip makes the off-diagonal negative
    K = dense_kinetic(GridSpec(2 * math.pi, 2, 1))
    assert np.allclose(K, 0.25 * np.array([[1, -1], [-1, 1]]), atol=1e-15)
    # oracle built directly from the matrix definitions
    F = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    S = np.diag([1, -1])
    oracle = 0.5 * S @ F @ np.diag([1.0, 0.0]) @ F.conj().T @ S
    assert np.allclose(K, oracle)


def test_diag_potential_examples():
    g = GridSpec(1.0, 4, 1)
    psi = StateVector(np.full(4, 0.5 + 0j), g)
    assert np.allclose(apply_diag_potential(psi, ConstantPotential(0.0), 0.0).amplitudes, 0)
    assert np.allclose(apply_diag_potential(psi, ConstantPotential(2.5), 0.0).amplitudes, 2.5 * psi.amplitudes)
    out = apply_diag_potential(psi, Linear(), 0.0)
    assert np.allclose(out.amplitudes, 0.5 * np.array([0, 0.25, 0.5, 0.75]))


def test_hamiltonian_properties():
    fam = default_trig_torus(1)
    g = GridSpec(fam.L, 16, 1)
    rng = np.random.default_rng(3)
    real = StateVector(rng.standard_normal(16) + 0j, g)
    out = apply_H(real, fam, 0.3)
    assert np.max(np.abs(out.amplitudes.real)) < 1e-13
    H = dense_hamiltonian(g, potential_values(fam, g, 0.3), dense_kinetic(g))
    assert np.allclose(H, H.conj().T, atol=1e-13)
    assert np.max(np.abs(H.real)) < 1e-13
    assert np.allclose(dense(lambda s: apply_H(s, fam, 0.3), g), H, atol=1e-12)
    assert np.allclose(apply_H(real, ConstantPotential(1.7, L=fam.L), 0.0).amplitudes, 0, atol=1e-13)
    assert np.allclose(dense_hamiltonian(g, np.full(16, 3.0)), 0, atol=1e-13)


def test_exponentials():
    g = GridSpec(2 * math.pi, 8, 1)
    rng = np.random.default_rng(1)
    psi = StateVector(rng.standard_normal(8) + 1j * rng.standard_normal(8), g).normalize()
    assert np.allclose(exp_K(psi, 0.0).amplitudes, psi.amplitudes)
    wave = plane_wave(g, 3)
    assert np.allclose(exp_K(wave, 0.4).amplitudes, np.exp(0.4j * 4.5) * wave.amplitudes, atol=1e-13)
    assert np.allclose(exp_diag_potential(psi, ConstantPotential(2.0, L=g.L), 0.0, 0.3).amplitudes,
                       np.exp(0.6j) * psi.amplitudes)
    V = PlaneWavePotential((1,), 0.7, L=g.L)
    there = exp_diag_potential(exp_diag_potential(psi, V, 0.0, 0.9), V, 0.0, -0.9)
    assert np.max(np.abs(there.amplitudes - psi.amplitudes)) < 1e-15
    for op in (lambda s: exp_K(s, 1.3), lambda s: exp_diag_potential(s, V, 0.0, 1.3)):
        assert abs(op(psi).norm() - 1) < 1e-12


def test_dense_cap_and_norms():
    g = GridSpec(1.0, 8, 2)
    with pytest.raises(SizeError):
        dense(apply_K, g, cap=32)
    rng = np.random.default_rng(5)
    A = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
    exact = np.linalg.norm(A, 2)
    assert spectral_norm(A, method="svd") == pytest.approx(exact, rel=1e-12)
    assert spectral_norm(A) == pytest.approx(exact, rel=2e-3)
