"""Energy-normalized Coulomb waves, phases, and the partial-wave basis store."""

import numpy as np
import pytest

from capspectra.core import RadialGrid
from capspectra.continuum import (ContinuumBasis, EnergyGrid, coulomb_phase,
                                  coulomb_wave, fitted_phase,
                                  legendre_spherical)

# arg Gamma(1 + i), frozen from mpmath at 30 digits
ARG_GAMMA_1_PLUS_I = -0.30164032046753286


@pytest.fixture(scope="module")
def box60():
    return RadialGrid.from_box(0.2, 60.0)


@pytest.fixture(scope="module")
def box150():
    return RadialGrid.from_box(0.2, 150.0)


class TestZeroChargeReduction:
    def test_l0_free_wave_both_boxes(self, box60, box150):
        """Z = 0, l = 0 must be sqrt(2/(pi k)) sin(kr) to 1e-8 pointwise."""
        eg = EnergyGrid(0.01, 1.5, 1e-3)
        for grid in (box60, box150):
            u = coulomb_wave(0, eg.energies, grid, z=0.0)
            ref = (np.sqrt(2.0 / np.pi) / np.sqrt(eg.k))[:, None] \
                * np.sin(np.outer(eg.k, grid.r))
            assert np.abs(u - ref).max() < 1e-8

    def test_l2_spherical_bessel(self, box60):
        from scipy.special import spherical_jn
        e = np.array([0.05, 0.3, 0.9])
        k = np.sqrt(2 * e)
        u = coulomb_wave(2, e, box60, z=0.0)
        kr = np.outer(k, box60.r)
        ref = (np.sqrt(2.0 / np.pi) / np.sqrt(k))[:, None] * kr * spherical_jn(2, kr)
        assert np.abs(u - ref).max() < 1e-6


class TestCoulombAmplitude:
    def test_against_mpmath(self, box60):
        """Energy-normalized amplitude within 1e-4 relative of the exact
        regular Coulomb function (spot grid over l and energy)."""
        mp = pytest.importorskip("mpmath")
        worst = 0.0
        for ell in (0, 1, 4, 9):
            for e in (0.02, 0.14, 0.7, 1.5):
                k = np.sqrt(2 * e)
                u = coulomb_wave(ell, np.array([e]), box60)[0]
                for ri in (99, 200, 298):
                    r = box60.r[ri]
                    ref = float(mp.coulombf(ell, -1.0 / k, k * r)) \
                        * np.sqrt(2.0 / (np.pi * k))
                    scale = max(abs(ref), 1e-3 * np.sqrt(2.0 / (np.pi * k)))
                    worst = max(worst, abs(u[ri] - ref) / scale)
        assert worst < 1e-4

    def test_regular_at_origin(self):
        # u / (r^(l+1) (1 - r/(l+1))) tends to a finite nonzero constant;
        # the divisor strips the first-order Coulomb correction so the
        # residual variation between adjacent samples is O(r^2).  The
        # safe-start rule may leave the very first points exactly zero
        # for higher l (centrifugal term too stiff there), so the check
        # begins at the first computed sample.  A wrong leading power
        # would show up as a ~(r2/r1) sized ratio error, far above 5e-3.
        grid = RadialGrid(N=400, h=0.02)
        for ell in (0, 1, 3):
            u = coulomb_wave(ell, np.array([0.3]), grid)[0]
            i0 = int(np.argmax(u != 0.0))
            assert grid.r[i0] < 0.5
            r = grid.r[i0:i0 + 2]
            lead = u[i0:i0 + 2] / (r ** (ell + 1) * (1.0 - r / (ell + 1)))
            assert np.all(np.abs(lead) > 0)
            assert abs(lead[1] / lead[0] - 1.0) < 5e-3


class TestPhases:
    def test_frozen_value(self):
        assert coulomb_phase(0, np.array([1.0]))[0] == pytest.approx(
            ARG_GAMMA_1_PLUS_I, abs=1e-14)

    def test_recurrence(self):
        """sigma_(l+1) - sigma_l = atan2(eta, l+1) with eta = Z/k."""
        k = np.linspace(0.1, 1.8, 57)
        for ell in range(12):
            lhs = coulomb_phase(ell + 1, k) - coulomb_phase(ell, k)
            rhs = np.arctan2(1.0 / k, ell + 1)
            assert np.abs(lhs - rhs).max() < 1e-12

    def test_zero_charge_phase_is_zero(self):
        basis = ContinuumBasis(RadialGrid(N=30, h=0.2),
                               EnergyGrid(0.1, 0.5, 0.1), L_max=2, z=0.0)
        assert np.all(basis.phase(1) == 0.0)

    @pytest.mark.slow
    def test_fitted_phase_matches_arg_gamma(self, box60):
        """The integrated wave's asymptotic phase equals -arg Gamma(l+1+i/k)
        relative to the free reference, within 1e-4."""
        for ell, e in ((0, 0.05), (1, 0.3), (2, 1.0), (5, 0.5)):
            k = np.sqrt(2 * e)
            r_m = max(2 * box60.R, 400.0, 90.0 / k**1.5)
            got = fitted_phase(ell, e, box60, r_match=r_m)
            want = -coulomb_phase(ell, np.array([k]))[0]
            dev = abs((got - want + np.pi) % (2 * np.pi) - np.pi)
            assert dev < 1e-4


class TestOrthogonality:
    @pytest.mark.slow
    def test_discrete_delta_normalization(self):
        """On a long box the overlap matrix approximates delta(e - e'):
        off-diagonal couplings < 1e-2 of diagonal for |e - e'| > 10 de."""
        grid = RadialGrid.from_box(0.2, 2000.0)
        e = np.arange(0.1, 0.2001, 0.005)
        u = coulomb_wave(0, e, grid)
        overlap = grid.h * (u @ u.T)
        diag = np.diag(overlap)
        de = 0.005
        for i in range(len(e)):
            for j in range(len(e)):
                if abs(e[i] - e[j]) > 10 * de:
                    assert abs(overlap[i, j]) < 1e-2 * min(diag[i], diag[j])

    def test_energy_normalization_scale(self):
        # h * sum u_e u_e' ~ 1/de on the diagonal once the box is long:
        # the discrete delta has height ~ 1/(pi * dk * speed) in our units.
        grid = RadialGrid.from_box(0.2, 2000.0)
        e = np.array([0.3, 0.3 + 1e-4])
        u = coulomb_wave(0, e, grid)
        cross = grid.h * np.dot(u[0], u[1])
        assert cross > 100.0  # far above any off-diagonal coupling


class TestEnergyGrid:
    def test_values(self):
        eg = EnergyGrid(0.01, 1.5, 1e-3)
        assert len(eg) == 1491
        assert eg.energies[0] == pytest.approx(0.01)
        assert eg.energies[-1] == pytest.approx(1.5)
        np.testing.assert_allclose(eg.k, np.sqrt(2 * eg.energies))

    def test_invalid(self):
        with pytest.raises(ValueError):
            EnergyGrid(0.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            EnergyGrid(0.5, 0.1, 0.1)


class TestBatching:
    def test_batch_matches_single_energy(self, box60):
        """The per-octave fine lattices must not introduce seams: a batched
        call and one-energy calls agree to the method's roundoff floor.
        (They use different step sizes, so bitwise equality is not expected;
        a seam bug would show up orders of magnitude above this bound.)"""
        energies = np.array([0.011, 0.04, 0.17, 0.52, 1.38])
        batch = coulomb_wave(1, energies, box60)
        for i, e in enumerate(energies):
            single = coulomb_wave(1, np.array([e]), box60)[0]
            np.testing.assert_allclose(batch[i], single, rtol=0, atol=5e-8)

    def test_rejects_nonpositive_energy(self, box60):
        with pytest.raises(ValueError):
            coulomb_wave(0, np.array([0.0, 0.1]), box60)
        with pytest.raises(ValueError):
            coulomb_wave(-1, np.array([0.1]), box60)


class TestBasisStore:
    def test_lazy_and_cached(self, box60):
        basis = ContinuumBasis(box60, EnergyGrid(0.1, 0.5, 0.1), L_max=2)
        w1 = basis.waves(1)
        assert w1.shape == (5, box60.N)
        assert basis.waves(1) is w1

    def test_bounds_checked(self, box60):
        basis = ContinuumBasis(box60, EnergyGrid(0.1, 0.5, 0.1), L_max=2)
        with pytest.raises(ValueError):
            basis.waves(3)

    def test_save_load_round_trip(self, box60, tmp_path):
        basis = ContinuumBasis(box60, EnergyGrid(0.1, 0.5, 0.1), L_max=1)
        basis.build_all()
        path = tmp_path / "basis.npz"
        basis.save(path)
        again = ContinuumBasis.load(path)
        assert again.grid == box60
        assert again.L_max == 1
        np.testing.assert_array_equal(again.waves(0), basis.waves(0))


def test_legendre_spherical_values():
    # Y_00 = 1/sqrt(4 pi); Y_10(0) = sqrt(3/4pi)
    assert legendre_spherical(0, np.array([0.3]))[0] == pytest.approx(
        1.0 / np.sqrt(4 * np.pi))
    assert legendre_spherical(1, np.array([1.0]))[0] == pytest.approx(
        np.sqrt(3.0 / (4 * np.pi)))
    # parity: P_l(-x) = (-1)^l P_l(x)
    x = np.linspace(-1, 1, 11)
    for ell in range(5):
        np.testing.assert_allclose(legendre_spherical(ell, -x),
                                   (-1.0) ** ell * legendre_spherical(ell, x),
                                   atol=1e-14)
