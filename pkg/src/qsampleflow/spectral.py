"""Pseudospectral operators on the periodic grid.

Transforms use the unitary DFT with a positive exponent,
``F[j, l] = exp(+2 pi i j l / N) / sqrt(N)``, so ``F`` is numpy's orthonormal
``ifft`` and ``F^dagger`` is the orthonormal ``fft``.

Every operator accepts amplitudes of shape ``(N**d,)`` or a batch of shape
``(N**d, B)``; the public functions wrap these in :class:`StateVector`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import EvaluationError, InvalidIndexError, NormalizationError, ShapeError, SizeError
from .grid import GridSpec

DENSE_CAP = 4096


@dataclass
class StateVector:
    amplitudes: np.ndarray
    grid: GridSpec
    normalized: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape[0] != self.grid.size or amps.ndim > 2:
            raise ShapeError(f"amplitudes of shape {amps.shape} do not fit grid with {self.grid.size} points")
        if not np.all(np.isfinite(amps)):
            raise EvaluationError("state contains non-finite amplitudes")
        self.amplitudes = amps

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0:
            raise NormalizationError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / nrm, self.grid, normalized=True)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to ``(N,) * d`` (plus batch axis if any)."""
        return self.amplitudes.reshape(self.grid.shape + self.amplitudes.shape[1:])

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.grid, self.normalized)

    @classmethod
    def basis(cls, grid: GridSpec, flat_index: int) -> "StateVector":
        amps = np.zeros(grid.size, dtype=complex)
        amps[flat_index] = 1.0
        return cls(amps, grid, normalized=True)


@dataclass(frozen=True)
class DiagonalOperator:
    """Real diagonal: potential values on all grid points, or per-axis kinetic values."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("potential", "kinetic-phase"):
            raise ValueError(f"unknown diagonal kind {self.kind!r}")
        vals = np.asarray(self.values)
        if np.iscomplexobj(vals) or not np.all(np.isfinite(vals)):
            raise EvaluationError("diagonal values must be finite reals")


# ---------------------------------------------------------------- tables

@lru_cache(maxsize=64)
def _tables(grid: GridSpec):
    """(sign tensor, half squared-wavenumber tensor), each of shape grid.shape."""
    j = np.arange(grid.N)
    sign_axis = np.where(j % 2 == 0, 1.0, -1.0)
    dk_axis = grid.axis_wavenumbers() ** 2
    sign = np.ones(grid.shape)
    half_k2 = np.zeros(grid.shape)
    for a in range(grid.d):
        shape = [1] * grid.d
        shape[a] = grid.N
        sign = sign * sign_axis.reshape(shape)
        half_k2 = half_k2 + 0.5 * dk_axis.reshape(shape)
    sign.setflags(write=False)
    half_k2.setflags(write=False)
    return sign, half_k2


def kinetic_diagonal(grid: GridSpec) -> DiagonalOperator:
    """Per-axis values (2 pi / L)^2 (j - N/2)^2."""
    return DiagonalOperator(grid.axis_wavenumbers() ** 2, "kinetic-phase")


def _expand(arr: np.ndarray, table: np.ndarray) -> np.ndarray:
    return table.reshape(table.shape + (1,) * (arr.ndim - table.ndim))


def _spectral_multiply(amps: np.ndarray, grid: GridSpec, symbol: np.ndarray) -> np.ndarray:
    """Apply S F diag(symbol) F^dagger S (all axes at once) to flat amplitudes."""
    sign, _ = _tables(grid)
    batch = amps.shape[1:]
    t = amps.reshape(grid.shape + batch)
    axes = tuple(range(grid.d))
    t = _expand(t, sign) * t
    t = np.fft.fftn(t, axes=axes, norm="ortho")
    t = _expand(t, symbol) * t
    t = np.fft.ifftn(t, axes=axes, norm="ortho")
    t = _expand(t, sign) * t
    return t.reshape(amps.shape)


def kinetic_apply(amps: np.ndarray, grid: GridSpec) -> np.ndarray:
    _, half_k2 = _tables(grid)
    return _spectral_multiply(amps, grid, half_k2)


def kinetic_exp_apply(amps: np.ndarray, grid: GridSpec, phi: float) -> np.ndarray:
    _, half_k2 = _tables(grid)
    return _spectral_multiply(amps, grid, np.exp(1j * phi * half_k2))


def _diag_mul(values: np.ndarray, amps: np.ndarray) -> np.ndarray:
    return values.reshape(values.shape + (1,) * (amps.ndim - 1)) * amps


def hamiltonian_apply(amps: np.ndarray, grid: GridSpec, v: np.ndarray) -> np.ndarray:
    """i (K D - D K) amps for potential samples ``v``."""
    k_dv = kinetic_apply(_diag_mul(v, amps), grid)
    dv_k = _diag_mul(v, kinetic_apply(amps, grid))
    return 1j * (k_dv - dv_k)


def potential_values(model, grid: GridSpec, t: float) -> np.ndarray:
    """Potential sampled on the grid, with a finiteness check."""
    v = np.asarray(model.V(t, grid.points()), dtype=float).reshape(grid.size)
    if not np.all(np.isfinite(v)):
        raise EvaluationError(f"potential is not finite on the grid at t={t}")
    return v


def potential_diagonal(model, grid: GridSpec, t: float) -> DiagonalOperator:
    return DiagonalOperator(potential_values(model, grid, t), "potential")


# ---------------------------------------------------------------- public ops

def _check_axis(state: StateVector, axis: int):
    if not 0 <= axis < state.grid.d:
        raise InvalidIndexError(f"axis {axis} outside [0, {state.grid.d})")


def apply_centered_dft(state: StateVector, axis: int, inverse: bool = False) -> StateVector:
    """Apply F (or F^dagger when ``inverse``) along one axis."""
    _check_axis(state, axis)
    t = state.tensor()
    t = np.fft.fft(t, axis=axis, norm="ortho") if inverse else np.fft.ifft(t, axis=axis, norm="ortho")
    return StateVector(t.reshape(state.amplitudes.shape), state.grid)


def apply_sign(state: StateVector, axis: int, adjoint: bool = False) -> StateVector:
    # S is real and diagonal, hence self-adjoint; ``adjoint`` is accepted for symmetry.
    _check_axis(state, axis)
    grid = state.grid
    shape = [1] * grid.d
    shape[axis] = grid.N
    sign = np.where(np.arange(grid.N) % 2 == 0, 1.0, -1.0).reshape(shape)
    t = state.tensor()
    t = _expand(t, sign) * t
    return StateVector(t.reshape(state.amplitudes.shape), grid)


def apply_K(state: StateVector) -> StateVector:
    return StateVector(kinetic_apply(state.amplitudes, state.grid), state.grid)


def apply_diag_potential(state: StateVector, model, t: float) -> StateVector:
    v = potential_values(model, state.grid, t)
    return StateVector(_diag_mul(v, state.amplitudes), state.grid)


def apply_H(state: StateVector, model, t: float) -> StateVector:
    v = potential_values(model, state.grid, t)
    return StateVector(hamiltonian_apply(state.amplitudes, state.grid, v), state.grid)


def exp_K(state: StateVector, phi: float) -> StateVector:
    """exp(i phi K) applied exactly."""
    if not np.isfinite(phi):
        raise EvaluationError("phi must be finite")
    return StateVector(kinetic_exp_apply(state.amplitudes, state.grid, phi), state.grid)


def exp_diag_potential(state: StateVector, model, t: float, phi: float) -> StateVector:
    if not np.isfinite(phi):
        raise EvaluationError("phi must be finite")
    v = potential_values(model, state.grid, t)
    return StateVector(_diag_mul(np.exp(1j * phi * v), state.amplitudes), state.grid)


def dense(op: Callable[[StateVector], StateVector], grid: GridSpec, cap: int = DENSE_CAP) -> np.ndarray:
    """Materialize a linear operator by applying it to every basis vector.

    The basis is passed as a single batched state, so ``op`` must accept
    amplitude arrays of shape ``(N**d, B)``.
    """
    if grid.size > cap:
        raise SizeError(f"dense materialization of {grid.size} amplitudes exceeds cap {cap}")
    eye = StateVector(np.eye(grid.size, dtype=complex), grid)
    return np.asarray(op(eye).amplitudes)


def dense_kinetic(grid: GridSpec, cap: int = DENSE_CAP) -> np.ndarray:
    return dense(apply_K, grid, cap)


def dense_hamiltonian(grid: GridSpec, v: np.ndarray, K: np.ndarray | None = None, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense i[K, D_V]; entry (x, y) equals i K[x, y] (v[y] - v[x])."""
    if K is None:
        K = dense_kinetic(grid, cap)
    return 1j * K * (v[None, :] - v[:, None])


def spectral_norm(A: np.ndarray, method: str = "power", tol: float = 1e-3, max_iter: int = 500, seed: int = 0) -> float:
    """Largest singular value of a dense matrix.

    ``power`` runs power iteration on A^dagger A and stops when successive
    estimates agree to ``tol`` relative; ``svd`` is the exact LAPACK route.
    """
    A = np.asarray(A)
    if method == "svd":
        return float(np.linalg.norm(A, 2)) if A.size else 0.0
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.standard_normal(A.shape[1]) + 1j * rng.standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = A.conj().T @ (A @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        new = float(np.sqrt(nrm))
        x = y / nrm
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est
