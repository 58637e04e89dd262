"""Periodic grids on the torus [0, L)^d.

Flat indices are axis-major with axis 1 most significant, i.e. numpy C order
on an array of shape ``(N,) * d``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InvalidIndexError, ParameterError, SizeError

DEFAULT_DENSE_CAP = 2 ** 22


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with ``N`` points per axis on a ``d``-torus of edge ``L``."""

    L: float
    N: int
    d: int
    cap: int = DEFAULT_DENSE_CAP

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ParameterError(f"L must be positive and finite, got {self.L}")
        if int(self.N) != self.N or int(self.d) != self.d:
            raise ParameterError("N and d must be integers")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "L", float(self.L))
        if self.d < 1:
            raise ParameterError(f"d must be >= 1, got {self.d}")
        if self.N < 2 or not is_power_of_two(self.N):
            raise ParameterError(f"N must be a power of 2 and >= 2, got {self.N}")
        if self.N ** self.d > self.cap:
            raise SizeError(f"N^d = {self.N ** self.d} exceeds the cap {self.cap}")

    @property
    def size(self) -> int:
        return self.N ** self.d

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def spacing(self) -> float:
        return self.L / self.N

    @property
    def n_qubits(self) -> int:
        return self.d * (self.N.bit_length() - 1)

    def to_dict(self) -> dict:
        return {"L": self.L, "N": self.N, "d": self.d}

    @classmethod
    def from_dict(cls, data: dict, cap: int = DEFAULT_DENSE_CAP) -> "GridSpec":
        return cls(L=float(data["L"]), N=int(data["N"]), d=int(data["d"]), cap=cap)

    def refined(self, factor: int) -> "GridSpec":
        """Same torus with ``factor`` times more points per axis."""
        return GridSpec(self.L, self.N * factor, self.d, cap=max(self.cap, (self.N * factor) ** self.d))

    def axis_points(self) -> np.ndarray:
        return np.arange(self.N) * (self.L / self.N)

    def axis_wavenumbers(self) -> np.ndarray:
        """Centered band (2 pi / L) * {-N/2, ..., N/2 - 1}, indexed by j in [0, N)."""
        return (2 * np.pi / self.L) * (np.arange(self.N) - self.N // 2)

    @cached_property
    def _points(self) -> np.ndarray:
        axes = np.meshgrid(*([self.axis_points()] * self.d), indexing="ij")
        pts = np.stack([a.ravel() for a in axes], axis=-1)
        pts.setflags(write=False)
        return pts

    def points(self) -> np.ndarray:
        """All grid points, shape ``(N**d, d)``, in flat-index order."""
        return self._points

    @cached_property
    def _wavevectors(self) -> np.ndarray:
        axes = np.meshgrid(*([self.axis_wavenumbers()] * self.d), indexing="ij")
        kv = np.stack([a.ravel() for a in axes], axis=-1)
        kv.setflags(write=False)
        return kv

    def wavevectors(self) -> np.ndarray:
        """The full set K_N^d, shape ``(N**d, d)``, in flat-index order."""
        return self._wavevectors


def _check_index(spec: GridSpec, idx) -> tuple:
    idx = tuple(int(i) for i in np.atleast_1d(idx))
    if len(idx) != spec.d:
        raise InvalidIndexError(f"expected {spec.d} components, got {len(idx)}")
    for i in idx:
        if not 0 <= i < spec.N:
            raise InvalidIndexError(f"index component {i} outside [0, {spec.N})")
    return idx


def grid_point(spec: GridSpec, idx: Sequence[int] | int) -> np.ndarray:
    idx = _check_index(spec, idx)
    return np.array(idx, dtype=float) * spec.spacing


def wave_vector(spec: GridSpec, j: Sequence[int] | int) -> np.ndarray:
    j = _check_index(spec, j)
    return (2 * np.pi / spec.L) * (np.array(j, dtype=float) - spec.N // 2)


def flatten(spec: GridSpec, idx: Sequence[int] | int) -> int:
    idx = _check_index(spec, idx)
    flat = 0
    for i in idx:
        flat = flat * spec.N + i
    return flat


def unflatten(spec: GridSpec, i: int) -> tuple:
    i = int(i)
    if not 0 <= i < spec.size:
        raise InvalidIndexError(f"flat index {i} outside [0, {spec.size})")
    out = []
    for _ in range(spec.d):
        i, r = divmod(i, spec.N)
        out.append(r)
    return tuple(reversed(out))
