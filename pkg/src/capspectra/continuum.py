"""Energy-normalized continuum states of the radial Coulomb problem.

The regular solution of

    u'' = [l(l+1)/r^2 - 2Z/r - k^2] u,   k = sqrt(2*energy),

is integrated outward with Numerov on a refined lattice (the radial
production grid is far too coarse for oscillatory waves at eV..hartree
energies), seeded by the power series u = r^(l+1) * sum_j a_j r^j near
the origin, and scaled to the energy-normalized asymptotic amplitude
sqrt(2/(pi*k)) by a two-point WKB match at a radius far outside both the
simulation box and the classical turning point.  No root-bracketing of
asymptotic oscillations is involved, so the match works at arbitrary
phase and down to quite small k.

Sign conventions: Z = +1 is the attractive hydrogen case.  The phase
returned by coulomb_phase is arg Gamma(l + 1 + i*Z/k); the radial wave
behaves asymptotically as

    u ~ sqrt(2/(pi k)) sin(k r + (Z/k) ln(2kr) - l pi/2 - coulomb_phase).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import eval_legendre, loggamma

from .core import RadialGrid

__all__ = [
    "EnergyGrid",
    "ContinuumBasis",
    "coulomb_phase",
    "coulomb_wave",
    "fitted_phase",
    "legendre_spherical",
]

# Numerov control: target k*delta for the fine lattice, safe-start bound on
# |delta^2 q / 12|, series length for the origin seeds.
_K_DELTA_TARGET = 0.0085
_SAFE_START = 0.05
_SERIES_TERMS = 10


def coulomb_phase(ell: int, k, z: float = 1.0) -> np.ndarray:
    """arg Gamma(ell + 1 + i z / k), vectorized over k."""
    k = np.asarray(k, dtype=float)
    return loggamma(ell + 1 + 1j * z / k).imag


def legendre_spherical(ell: int, costheta) -> np.ndarray:
    """m = 0 spherical harmonic sqrt((2l+1)/4pi) * P_l(cos theta)."""
    x = np.asarray(costheta, dtype=float)
    return np.sqrt((2 * ell + 1) / (4.0 * np.pi)) * eval_legendre(ell, x)


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform photoelectron energy grid (hartree)."""

    e_min: float
    e_max: float
    step: float

    def __post_init__(self) -> None:
        if not (0.0 < self.e_min < self.e_max):
            raise ValueError("need 0 < e_min < e_max")
        if self.step <= 0:
            raise ValueError("step must be positive")

    @property
    def energies(self) -> np.ndarray:
        n = int(round((self.e_max - self.e_min) / self.step)) + 1
        return self.e_min + self.step * np.arange(n)

    @property
    def k(self) -> np.ndarray:
        return np.sqrt(2.0 * self.energies)

    def __len__(self) -> int:
        return int(round((self.e_max - self.e_min) / self.step)) + 1


def _series_coeffs(ell: int, z: float, k2: np.ndarray) -> list[np.ndarray]:
    """Coefficients a_j of u = r^(l+1) sum a_j r^j, batched over k^2."""
    a = [np.ones_like(k2), np.full_like(k2, -2.0 * z / (2.0 * ell + 2.0))]
    for j in range(2, _SERIES_TERMS):
        a.append((-2.0 * z * a[j - 1] - k2 * a[j - 2]) / (j * (2 * ell + 1 + j)))
    return a


def _series_eval(ell: int, a: list[np.ndarray], r: float) -> np.ndarray:
    s = np.zeros_like(a[0])
    for j in range(len(a) - 1, -1, -1):
        s = s * r + a[j]
    return s * r ** (ell + 1)


def _q_of_r(r, ell: int, z: float, k2: np.ndarray):
    return k2 + 2.0 * z / r - ell * (ell + 1) / r**2


def _fine_step(grid_h: float, k_hi: float) -> tuple[float, int]:
    """Fine lattice step: an integer subdivision of h with k*delta small."""
    n_sub = max(1, int(np.ceil(grid_h * k_hi / _K_DELTA_TARGET)))
    return grid_h / n_sub, n_sub


def _octave_groups(k: np.ndarray) -> list[tuple[np.ndarray, float]]:
    """Split a batch of wavenumbers into octaves below k.max().

    Each group gets its own fine lattice sized for the group's top k.  A
    single lattice sized for the batch maximum makes the low-k rows walk
    ~10x more steps than their phase resolution needs, and the roundoff
    accumulated over those extra steps is what limits accuracy there.
    """
    remaining = np.ones(k.shape[0], dtype=bool)
    hi = float(k.max())
    out = []
    while remaining.any():
        sel = remaining & (k > 0.5 * hi)
        if sel.any():
            out.append((np.nonzero(sel)[0], hi))
            remaining &= ~sel
        hi *= 0.5
    return out


def _numerov_sweep(ell: int, z: float, k2: np.ndarray, delta: float,
                   n_fine: int, coarse_every: int, n_coarse: int):
    """Outward Numerov over r = delta .. n_fine*delta for a batch of energies.

    Returns (u_coarse, tail) where u_coarse[e, i] samples r = (i+1)*h on the
    production grid (unnormalized) and tail[e, j] holds the last five fine
    values, centered on r_match = (n_fine - 2) * delta.
    """
    n_e = k2.shape[0]
    r_fine = delta * np.arange(1, n_fine + 1)
    # where the recurrence is trustworthy for the whole batch; q is linear
    # in k^2, so the batch max of |q| sits at an endpoint energy
    k2_ends = np.array([k2.min(), k2.max()])
    qmax = np.abs(_q_of_r(r_fine[:, None], ell, z, k2_ends[None, :])).max(axis=1)
    start = int(np.argmax(delta**2 * qmax / 12.0 <= _SAFE_START))
    if delta**2 * qmax[start] / 12.0 > _SAFE_START:
        raise ValueError("no trustworthy Numerov start; refine the lattice")

    coeffs = _series_coeffs(ell, z, k2)
    u_prev = _series_eval(ell, coeffs, r_fine[start])
    u_here = _series_eval(ell, coeffs, r_fine[start + 1])

    u_coarse = np.zeros((n_e, n_coarse))
    tail = np.zeros((n_e, 5))

    # Numerov weight for u'' = -q(r) u
    def w_at(idx: int) -> np.ndarray:
        return 1.0 + delta**2 * _q_of_r(r_fine[idx], ell, z, k2) / 12.0

    w_prev, w_here = w_at(start), w_at(start + 1)
    for idx in (start, start + 1):
        j, rem = divmod(idx + 1, coarse_every)
        if rem == 0 and 1 <= j <= n_coarse:
            u_coarse[:, j - 1] = u_prev if idx == start else u_here
        if idx >= n_fine - 5:
            tail[:, idx - (n_fine - 5)] = u_prev if idx == start else u_here

    for idx in range(start + 2, n_fine):
        w_next = w_at(idx)
        u_next = ((12.0 - 10.0 * w_here) * u_here - w_prev * u_prev) / w_next
        u_prev, u_here = u_here, u_next
        w_prev, w_here = w_here, w_next
        j, rem = divmod(idx + 1, coarse_every)
        if rem == 0 and j <= n_coarse:
            u_coarse[:, j - 1] = u_next
        if idx >= n_fine - 5:
            tail[:, idx - (n_fine - 5)] = u_next
    return u_coarse, tail


def _wkb_amplitude_phase(ell: int, z: float, k2: np.ndarray, tail: np.ndarray,
                         r_m: float, delta: float):
    """Squared amplitude C^2 and local phase Theta of the WKB form
    u = (C / sqrt(k_loc)) sin(Theta) at r_m, from five fine samples."""
    q = _q_of_r(r_m, ell, z, k2)
    k_loc = np.sqrt(q)
    dq = -2.0 * z / r_m**2 + 2.0 * ell * (ell + 1) / r_m**3
    dk = dq / (2.0 * k_loc)
    u = tail[:, 2]
    du = (tail[:, 0] - 8.0 * tail[:, 1] + 8.0 * tail[:, 3] - tail[:, 4]) / (12.0 * delta)
    v = du + dk * u / (2.0 * k_loc)
    c_sq = k_loc * u**2 + v**2 / k_loc
    theta = np.arctan2(k_loc * u, v)
    return c_sq, theta


def _integrate(ell: int, z: float, energies: np.ndarray, grid: RadialGrid,
               r_match: float | None, k_hi: float | None = None):
    """Shared driver: sweep, then return everything the callers need."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if np.any(energies <= 0):
        raise ValueError("continuum energies must be positive")
    k2 = 2.0 * energies
    if k_hi is None:
        k_hi = float(np.sqrt(k2.max()))
    delta, n_sub = _fine_step(grid.h, k_hi)
    if r_match is None:
        r_match = max(2.0 * grid.R, 400.0)
    # land r_match on the fine lattice, keep two points beyond for the stencil
    n_fine = int(np.ceil(r_match / delta)) + 2
    r_m = (n_fine - 2) * delta
    u_coarse, tail = _numerov_sweep(ell, z, k2, delta, n_fine, n_sub, grid.N)
    c_sq, theta = _wkb_amplitude_phase(ell, z, k2, tail, r_m, delta)
    return u_coarse, c_sq, theta, r_m, k2


def coulomb_wave(ell: int, energies, grid: RadialGrid, z: float = 1.0,
                 r_match: float | None = None) -> np.ndarray:
    """Energy-normalized regular radial waves sampled on the production grid.

    Returns an (n_energies, grid.N) float array; row e holds u_{ell, energy_e}
    at r = h, 2h, .., Nh with asymptotic amplitude sqrt(2/(pi k)).
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if np.any(energies <= 0):
        raise ValueError("continuum energies must be positive")
    out = np.empty((energies.shape[0], grid.N))
    for idx, k_hi in _octave_groups(np.sqrt(2.0 * energies)):
        u_coarse, c_sq, _, _, _ = _integrate(
            ell, z, energies[idx], grid, r_match, k_hi=k_hi)
        out[idx] = (np.sqrt(2.0 / np.pi) / np.sqrt(c_sq))[:, None] * u_coarse
    return out


def fitted_phase(ell: int, energy: float, grid: RadialGrid, z: float = 1.0,
                 r_match: float | None = None) -> float:
    """Asymptotic phase of the regular wave relative to the reference
    k r + (z/k) ln(2 k r) - l pi/2, extrapolated from the match radius with
    two WKB tail integrals.  Returns a value in (-pi, pi]."""
    _, _, theta, r_m, k2 = _integrate(ell, z, np.array([energy]), grid, r_match)
    k = float(np.sqrt(k2[0]))

    def excess(r):
        return np.sqrt(_q_of_r(r, ell, z, k2[:1]))[0] - k - z / (k * r)

    def curvature(r):
        q = _q_of_r(r, ell, z, k2[:1])[0]
        dq = -2.0 * z / r**2 + 2.0 * ell * (ell + 1) / r**3
        ddq = 4.0 * z / r**3 - 6.0 * ell * (ell + 1) / r**4
        return ddq / (8.0 * q**1.5) - 5.0 * dq**2 / (32.0 * q**2.5)

    # substitute x = 1/r so quad sees a finite interval
    t1 = quad(lambda x: excess(1.0 / x) / x**2, 1e-12, 1.0 / r_m, limit=200)[0]
    t2 = quad(lambda x: curvature(1.0 / x) / x**2, 1e-12, 1.0 / r_m, limit=200)[0]
    ref = k * r_m + (z / k) * np.log(2.0 * k * r_m) - ell * np.pi / 2.0
    phase = float(theta[0]) + t1 + t2 - ref
    return float((phase + np.pi) % (2.0 * np.pi) - np.pi)


@dataclass
class ContinuumBasis:
    """Lazy per-partial-wave store of continuum waves and phases.

    waves(ell) is an (n_energies, N) array of energy-normalized radial
    values on the production grid; phase(ell) the matching arg-Gamma phases.
    """

    grid: RadialGrid
    energy_grid: EnergyGrid
    L_max: int
    z: float = 1.0
    _waves: dict = field(default_factory=dict, repr=False)

    def waves(self, ell: int) -> np.ndarray:
        if not 0 <= ell <= self.L_max:
            raise ValueError(f"ell={ell} outside 0..{self.L_max}")
        if ell not in self._waves:
            self._waves[ell] = coulomb_wave(
                ell, self.energy_grid.energies, self.grid, z=self.z)
        return self._waves[ell]

    def phase(self, ell: int) -> np.ndarray:
        if self.z == 0.0:
            return np.zeros(len(self.energy_grid))
        return coulomb_phase(ell, self.energy_grid.k, self.z)

    def build_all(self) -> "ContinuumBasis":
        for ell in range(self.L_max + 1):
            self.waves(ell)
        return self

    # optional cache so repeated runs skip the Numerov sweeps
    def save(self, path) -> None:
        payload = {f"ell_{l}": self.waves(l) for l in range(self.L_max + 1)}
        np.savez(path,
                 meta=np.array([self.grid.N, self.grid.h, self.energy_grid.e_min,
                                self.energy_grid.e_max, self.energy_grid.step,
                                self.L_max, self.z]),
                 **payload)

    @classmethod
    def load(cls, path) -> "ContinuumBasis":
        with np.load(path) as archive:
            meta = archive["meta"]
            basis = cls(grid=RadialGrid(N=int(meta[0]), h=float(meta[1])),
                        energy_grid=EnergyGrid(float(meta[2]), float(meta[3]),
                                               float(meta[4])),
                        L_max=int(meta[5]), z=float(meta[6]))
            for ell in range(basis.L_max + 1):
                basis._waves[ell] = archive[f"ell_{ell}"]
        return basis
