"""Discrete Hamiltonian: per-l field-free blocks and the dipole coupling.

The field-free block for partial wave l is the tridiagonal matrix

    -(1/2) d^2/dr^2  +  l(l+1)/(2 r^2)  -  1/r   [ - i gamma(r) optionally ]

with 3-point central stencils and Dirichlet boundaries. The laser enters in
velocity gauge as A(t) * p_z; for reduced radial functions p_z couples
adjacent partial waves only:

    (p_z Psi)_l = -i [ c_l (d/dr - l/r) f_{l-1} + c_{l+1} (d/dr + (l+1)/r) f_{l+1} ]

with c_l = sqrt((l^2 - m^2) / ((2l-1)(2l+1))). The antisymmetric central
first-derivative stencil makes the assembled p_z exactly Hermitian on the
grid, so propagation with the CAP factored out is norm conserving.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import CapParams, PartialWaveState, RadialGrid, SimulationConfig, cap_profile, vector_potential

__all__ = [
    "FieldFreeBlock",
    "DipoleCoupling",
    "HamiltonianOperator",
    "build_field_free_block",
    "build_operator",
    "apply_hamiltonian",
    "coupling_coefficients",
]


@dataclass(frozen=True)
class FieldFreeBlock:
    ell: int
    matrix: np.ndarray
    include_cap: bool


def build_field_free_block(
    grid: RadialGrid, ell: int, cap: CapParams | None = None, include_cap: bool = False
) -> FieldFreeBlock:
    """Dense N x N block for partial wave ell.

    Without the CAP the matrix is real symmetric; with it the anti-Hermitian
    part is exactly -i*diag(gamma(r_i)).
    """
    if ell < 0:
        raise ValueError("ell must be non-negative")
    r = grid.r
    h = grid.h
    N = grid.N
    main = 1.0 / h**2 + ell * (ell + 1) / (2.0 * r**2) - 1.0 / r
    off = -0.5 / h**2
    if include_cap:
        if cap is None:
            raise ValueError("include_cap requires CAP parameters")
        mat = np.zeros((N, N), dtype=complex)
        mat[np.arange(N), np.arange(N)] = main - 1j * cap_profile(r, cap)
    else:
        mat = np.zeros((N, N), dtype=float)
        mat[np.arange(N), np.arange(N)] = main
    mat[np.arange(N - 1), np.arange(1, N)] = off
    mat[np.arange(1, N), np.arange(N - 1)] = off
    return FieldFreeBlock(ell=ell, matrix=mat, include_cap=include_cap)


def coupling_coefficients(L: int, m: int = 0) -> np.ndarray:
    """c_l for l = 0..L (c_0 = 0 by convention; index l couples l-1 <-> l)."""
    ell = np.arange(L + 1, dtype=float)
    c = np.zeros(L + 1)
    if L >= 1:
        num = ell[1:] ** 2 - m**2
        den = (2 * ell[1:] - 1) * (2 * ell[1:] + 1)
        c[1:] = np.sqrt(np.maximum(num, 0.0) / den)
    return c


@dataclass(frozen=True)
class DipoleCoupling:
    """Velocity-gauge p_z action between adjacent partial-wave columns."""

    grid: RadialGrid
    L: int
    m: int = 0

    @property
    def coefficients(self) -> np.ndarray:
        return coupling_coefficients(self.L, self.m)

    def apply_pz(self, data: np.ndarray) -> np.ndarray:
        """p_z acting on an N x (L+1) matrix of reduced partial waves."""
        h = self.grid.h
        inv_r = 1.0 / self.grid.r
        c = self.coefficients
        L = self.L
        d = np.zeros_like(data, dtype=complex)
        d[:-1, :] = data[1:, :]
        d[1:, :] -= data[:-1, :]
        d *= 1.0 / (2.0 * h)
        u = inv_r[:, None] * data
        out = np.zeros_like(data, dtype=complex)
        if L >= 1:
            ells = np.arange(1, L + 1, dtype=float)
            out[:, 1:] += c[1:] * (d[:, :-1] - ells * u[:, :-1])
            out[:, :-1] += c[1:] * (d[:, 1:] + ells * u[:, 1:])
        return -1j * out


class HamiltonianOperator:
    """Precomputed action of H(t) = field-free blocks + A(t) * p_z (CAP excluded;
    the absorber is applied separately in the propagator's diagonal factors)."""

    def __init__(self, grid: RadialGrid, L: int, pulse, m: int = 0):
        self.grid = grid
        self.L = L
        self.m = m
        self.pulse = pulse
        r = grid.r
        ells = np.arange(L + 1, dtype=float)
        self.main = (
            1.0 / grid.h**2
            + ells[None, :] * (ells[None, :] + 1) / (2.0 * r[:, None] ** 2)
            - 1.0 / r[:, None]
        )
        self.off = -0.5 / grid.h**2
        self.coupling = DipoleCoupling(grid, L, m)

    def vector_potential(self, t: float) -> float:
        return vector_potential(t, self.pulse)

    def apply(self, data: np.ndarray, t: float) -> np.ndarray:
        out = self.main * data
        out[1:, :] += self.off * data[:-1, :]
        out[:-1, :] += self.off * data[1:, :]
        a = self.vector_potential(t)
        if a != 0.0:
            out = out + a * self.coupling.apply_pz(data)
        return out


@lru_cache(maxsize=8)
def build_operator(config: SimulationConfig) -> HamiltonianOperator:
    return HamiltonianOperator(config.grid, config.L_max, config.pulse)


def apply_hamiltonian(state: PartialWaveState, t: float, config: SimulationConfig) -> np.ndarray:
    """H(t) * state for a full config; returns a state-shaped matrix."""
    op = build_operator(config)
    if state.data.shape != (config.grid.N, config.L_max + 1):
        raise ValueError("state shape does not match config")
    return op.apply(state.data, t)
