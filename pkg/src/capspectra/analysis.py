"""Photoelectron spectra from the flux removed by the absorbing potential.

Two contributions are assembled and summed coherently per partial wave:

* during the pulse, time integrals of absorber brackets against the
  wavefunction are accumulated on the energy grid (BeforeAccumulator);
* after the pulse, the remaining wavefunction is expanded in the
  eigenbasis of the non-Hermitian field-free block H - i*gamma_eff and
  the remaining time integral is done in closed form, which turns the
  infinite tail into finite sums over eigenpair products.

Everywhere below gamma_eff denotes the absorber strength the split
propagator actually applied per unit time (twice the nominal profile
unless the halved-factor variant is configured); see the propagator
module docstring.  All radial brackets carry the quadrature weight h.

Angular distributions come in two flavors deliberately kept apart: the
ejection angle (momentum direction, built from energy-normalized
continuum states with their Coulomb phases) and the absorption angle
(position-space direction at which flux entered the absorber, no
continuum states involved).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig as _dense_eig
from scipy.linalg import get_lapack_funcs

from .core import PartialWaveState, SimulationConfig, cap_profile, config_hash, ground_state
from .continuum import ContinuumBasis, EnergyGrid, legendre_spherical
from .hamiltonian import build_field_free_block
from .propagator import AbsorptionLedger, propagate_pulse

__all__ = [
    "BeforeAccumulator",
    "EffectiveBlockDecomposition",
    "AfterInputs",
    "SpectraBundle",
    "accumulate_step",
    "eigendecompose_field_free",
    "build_after_inputs",
    "after_pair_spectra",
    "after_energy_spectrum",
    "after_doubly_differential",
    "after_absorption_pairs",
    "after_absorption_angle",
    "after_total_absorption",
    "ati_peaks",
    "eigendecompose_all",
    "before_energy_spectrum",
    "before_doubly_differential",
    "before_absorption_angle",
    "run_before_stage",
    "assemble",
    "gauss_costheta",
    "write_spectra_csvs",
]

_trapz = getattr(np, "trapezoid", None) or np.trapz

# condition-number threshold above which the eigenvector matrix is
# inverted by Moore-Penrose pseudoinverse instead of LU
COND_LIMIT = 1e12


def _real_mm_complex(a_real: np.ndarray, b_complex: np.ndarray) -> np.ndarray:
    """a @ b for real a, complex b without upcasting (and copying) a."""
    return a_real @ b_complex.real + 1j * (a_real @ b_complex.imag)


def gauss_costheta(order: int):
    """Gauss-Legendre nodes/weights in cos(theta) for solid-angle integrals:
    integral over the sphere of F(theta) = 2*pi * sum_j w_j F(arccos x_j)."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


# --- during-pulse accumulation ------------------------------------------------

class BeforeAccumulator:
    """Running time integrals over the pulse.

    C[l, lp, e] approximates the integral of g_l(e, t) * conj(a_lp(e, t)) dt
    with g = (psi_e | gamma_eff | f_l) and a = (psi_e | f_l); M[l, lp]
    approximates the integral of (f_lp | gamma_eff | f_l) dt.

    accumulate_step adds one weighted sample (composite quadrature is the
    caller's business via the weights).  The production pipeline afterwards
    replaces M with the absorption ledger's exact per-factor tally, which
    telescopes to the truly absorbed norm instead of carrying a quadrature
    error; C has no such exact form and keeps its trapezoid value.
    """

    def __init__(self, config: SimulationConfig):
        n_l = config.L_max + 1
        self.h = config.grid.h
        self.gamma_eff = cap_profile(config.grid.r, config.cap_effective())
        self.C = np.zeros((n_l, n_l, len(config.energies())), dtype=np.complex128)
        self.M = np.zeros((n_l, n_l), dtype=np.complex128)
        self.n_samples = 0
        self.t_last = 0.0

    def brackets(self, state: PartialWaveState, basis: ContinuumBasis):
        """(g, a): (n_energies, L+1) continuum brackets of the current state."""
        n_l = state.L + 1
        n_e = self.C.shape[2]
        g = np.empty((n_e, n_l), dtype=np.complex128)
        a = np.empty((n_e, n_l), dtype=np.complex128)
        for ell in range(n_l):
            f = state.data[:, ell]
            both = np.column_stack([self.gamma_eff * f, f])
            res = self.h * _real_mm_complex(basis.waves(ell), both)
            g[:, ell] = res[:, 0]
            a[:, ell] = res[:, 1]
        return g, a


def accumulate_step(acc: BeforeAccumulator, state: PartialWaveState, t: float,
                    weight: float, basis: ContinuumBasis) -> None:
    """Add one weighted time sample to acc (linear in weight and in the
    absorber profile baked into acc)."""
    g, a = acc.brackets(state, basis)
    acc.C += weight * np.einsum("el,em->lme", g, a.conj())
    acc.M += weight * acc.h * (
        (acc.gamma_eff[:, None] * state.data).T @ state.data.conj())
    acc.n_samples += 1
    acc.t_last = t


def _sample_weights(t0: float, dt: float, n_steps: int, stride: int):
    """Post-step sample schedule (mirroring propagate_pulse's hook firing)
    plus composite-trapezoid weights including the t0 seed sample."""
    steps = sorted(set(range(stride, n_steps + 1, stride)) | {n_steps})
    times = np.array([t0] + [t0 + s * dt for s in steps])
    w = np.empty_like(times)
    w[0] = (times[1] - times[0]) / 2.0
    w[-1] = (times[-1] - times[-2]) / 2.0
    if len(times) > 2:
        w[1:-1] = (times[2:] - times[:-2]) / 2.0
    return times, w


def run_before_stage(config: SimulationConfig, basis: ContinuumBasis, *,
                     initial: PartialWaveState | None = None,
                     t_final: float | None = None, progress=None):
    """Ground state -> propagate through the pulse, accumulating the
    during-pulse integrals and the exact absorption tally.

    Returns (final_state, accumulator, ledger).
    """
    if initial is None:
        _, initial = ground_state(config.grid, L=config.L_max)
    stop = config.pulse.T if t_final is None else float(t_final)
    n_steps = int(round((stop - initial.t) / config.dt))
    acc = BeforeAccumulator(config)
    _, weights = _sample_weights(initial.t, config.dt, n_steps,
                                 config.analysis_stride)
    accumulate_step(acc, initial, initial.t, weights[0], basis)
    counter = {"i": 0}

    def hook(state: PartialWaveState, t: float) -> None:
        counter["i"] += 1
        accumulate_step(acc, state, t, weights[counter["i"]], basis)

    ledger = AbsorptionLedger.for_config(config)
    final = propagate_pulse(initial, config, hooks=(hook,), t_final=stop,
                            ledger=ledger, progress=progress)
    # exact absorbed-flux matrix; see class docstring
    acc.M = ledger.matrix.copy()
    return final, acc, ledger


# --- field-free non-Hermitian eigenproblem -------------------------------------

@dataclass
class EffectiveBlockDecomposition:
    """Eigendecomposition of one partial-wave block of H - i*gamma_eff.

    right holds the right eigenvectors column-wise, scaled to unit h-norm;
    inverse is right^-1 (LU) or its pseudoinverse when the condition
    estimate exceeds COND_LIMIT.  The bi-orthogonal partners are the rows
    of inverse; as columns, left_dual = inverse^H / h satisfies
    h * left_dual^H @ right = I.
    """

    ell: int
    eigenvalues: np.ndarray
    right: np.ndarray
    inverse: np.ndarray
    pinv_used: bool
    cond_1norm: float
    max_residual: float
    biorth_error: float

    _h: float = field(default=1.0, repr=False)

    @property
    def left_dual(self) -> np.ndarray:
        return self.inverse.conj().T / self._h

    @property
    def max_imag(self) -> float:
        return float(self.eigenvalues.imag.max())

    def diagnostics(self) -> dict:
        return {
            "ell": self.ell,
            "cond_1norm": self.cond_1norm,
            "pinv_used": self.pinv_used,
            "max_residual": self.max_residual,
            "biorth_error": self.biorth_error,
            "max_imag_eigenvalue": self.max_imag,
        }


def eigendecompose_field_free(grid, ell: int, cap) -> EffectiveBlockDecomposition:
    """Dense eigendecomposition of the field-free block with the absorber.

    cap must already carry the effective strength the propagator applied
    (SimulationConfig.cap_effective), not the nominal profile.
    """
    h_block = np.asarray(
        build_field_free_block(grid, ell, cap=cap, include_cap=True).matrix,
        dtype=np.complex128)
    vals, vecs = _dense_eig(h_block)
    order = np.argsort(vals.real, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / (np.sqrt(grid.h) * np.linalg.norm(vecs, axis=0))

    getrf, gecon, getri = get_lapack_funcs(("getrf", "gecon", "getri"), (vecs,))
    anorm = np.linalg.norm(vecs, 1)
    lu, piv, info = getrf(vecs, overwrite_a=False)
    pinv_used = False
    cond = np.inf
    if info == 0:
        rcond, _ = gecon(lu, anorm, norm="1")
        cond = float(1.0 / rcond) if rcond > 0 else np.inf
    if info != 0 or cond > COND_LIMIT:
        inverse = np.linalg.pinv(vecs)
        pinv_used = True
    else:
        inverse, info_i = getri(lu, piv)
        if info_i != 0:
            inverse = np.linalg.pinv(vecs)
            pinv_used = True

    resid = h_block @ vecs - vecs * vals[None, :]
    max_residual = float(
        (np.linalg.norm(resid, axis=0) / np.linalg.norm(vecs, axis=0)).max())
    biorth = inverse @ vecs
    np.fill_diagonal(biorth, biorth.diagonal() - 1.0)
    biorth_error = float(np.abs(biorth).max())

    return EffectiveBlockDecomposition(
        ell=ell, eigenvalues=vals, right=vecs, inverse=inverse,
        pinv_used=pinv_used, cond_1norm=cond, max_residual=max_residual,
        biorth_error=biorth_error, _h=grid.h)


def eigendecompose_all(config: SimulationConfig) -> dict[int, EffectiveBlockDecomposition]:
    cap = config.cap_effective()
    return {ell: eigendecompose_field_free(config.grid, ell, cap)
            for ell in range(config.L_max + 1)}


# --- after-pulse closed form ---------------------------------------------------

@dataclass
class AfterInputs:
    """Everything the closed-form after-pulse sums consume, per partial wave:
    eigenvalues, expansion coefficients of the final state, continuum
    brackets of the eigenvectors, active-set masks, Coulomb phases."""

    h: float
    energies: np.ndarray
    eps: list
    coef: list
    g: list
    q: list
    active: list
    phases: list
    gamma_eff: np.ndarray
    cutoff_c: float
    restrict_re_positive: bool

    @property
    def L(self) -> int:
        return len(self.eps) - 1

    def active_sizes(self) -> list[int]:
        return [int(m.sum()) for m in self.active]

    def with_restriction(self, restrict: bool) -> "AfterInputs":
        """Same inputs with the Re eps > 0 active-set restriction toggled."""
        active = []
        for ell in range(self.L + 1):
            mask = self.eps[ell].imag < -self.cutoff_c
            if restrict:
                mask = mask & (self.eps[ell].real > 0)
            active.append(mask)
        return AfterInputs(
            h=self.h, energies=self.energies, eps=self.eps, coef=self.coef,
            g=self.g, q=self.q, active=active, phases=self.phases,
            gamma_eff=self.gamma_eff, cutoff_c=self.cutoff_c,
            restrict_re_positive=restrict)


def build_after_inputs(state: PartialWaveState,
                       decomps: dict[int, EffectiveBlockDecomposition],
                       basis: ContinuumBasis, gamma_eff: np.ndarray,
                       cutoff_c: float = 1e-12,
                       restrict_re_positive: bool = False) -> AfterInputs:
    """Expand the end-of-pulse state in each block's eigenbasis and take the
    continuum brackets of every eigenvector.

    The active mask keeps eigenpairs with Im eps < -cutoff_c (those that
    actually decay); the optional restriction additionally requires
    Re eps > 0.  Masks apply to the decaying index of the closed-form sums
    only, never to the partner index.
    """
    n_l = state.L + 1
    eps, coef, g, q, active, phases = [], [], [], [], [], []
    for ell in range(n_l):
        dec = decomps[ell]
        u = basis.waves(ell)
        p_mat = dec.right
        eps.append(dec.eigenvalues)
        coef.append(dec.inverse @ state.data[:, ell])
        g.append(state.grid.h * _real_mm_complex(u * gamma_eff[None, :], p_mat))
        q.append(state.grid.h * _real_mm_complex(u, p_mat))
        mask = dec.eigenvalues.imag < -cutoff_c
        if restrict_re_positive:
            mask = mask & (dec.eigenvalues.real > 0)
        active.append(mask)
        phases.append(basis.phase(ell))
    return AfterInputs(h=state.grid.h, energies=basis.energy_grid.energies,
                       eps=eps, coef=coef, g=g, q=q, active=active,
                       phases=phases, gamma_eff=gamma_eff, cutoff_c=cutoff_c,
                       restrict_re_positive=restrict_re_positive)


def _pair_S(inputs: AfterInputs, ell: int, ell_p: int) -> np.ndarray:
    """S_{l,lp}(e) = sum_{n active in l, np in lp}
    c_n conj(c_np) / (eps_n - conj(eps_np)) * g_n(e) * conj(q_np(e))."""
    mask = inputs.active[ell]
    if not mask.any():
        return np.zeros(len(inputs.energies), dtype=np.complex128)
    c_act = inputs.coef[ell][mask]
    e_act = inputs.eps[ell][mask]
    kernel = (c_act[:, None] * inputs.coef[ell_p].conj()[None, :]) / (
        e_act[:, None] - inputs.eps[ell_p].conj()[None, :])
    return ((inputs.g[ell][:, mask] @ kernel) * inputs.q[ell_p].conj()).sum(axis=1)


def after_pair_spectra(inputs: AfterInputs) -> np.ndarray:
    """All (L+1)^2 pair spectra S_{l,lp}(e); the expensive step."""
    n_l = inputs.L + 1
    s_mat = np.zeros((n_l, n_l, len(inputs.energies)), dtype=np.complex128)
    for ell in range(n_l):
        for ell_p in range(n_l):
            s_mat[ell, ell_p] = _pair_S(inputs, ell, ell_p)
    return s_mat


def after_energy_spectrum(inputs: AfterInputs, s_mat: np.ndarray | None = None) -> np.ndarray:
    """dP/de of the after-pulse part: 2 Im sum_l S_{l,l}(e)."""
    if s_mat is not None:
        diag = np.einsum("lle->e", s_mat)
    else:
        diag = sum(_pair_S(inputs, ell, ell) for ell in range(inputs.L + 1))
    return 2.0 * diag.imag


def _pair_phase(phases: list, ell: int, ell_p: int) -> np.ndarray:
    """Cross-channel momentum-space phase i^(lp - l) * exp(-i(sigma_l - sigma_lp))."""
    return (1j) ** (ell_p - ell) * np.exp(-1j * (phases[ell] - phases[ell_p]))


def _harmonics(n_l: int, thetas: np.ndarray) -> np.ndarray:
    x = np.cos(thetas)
    return np.stack([legendre_spherical(ell, x) for ell in range(n_l)])


def after_doubly_differential(inputs: AfterInputs, thetas: np.ndarray,
                              s_mat: np.ndarray | None = None) -> np.ndarray:
    """d2P/(de dOmega_k) of the after-pulse part on (energies x thetas)."""
    if s_mat is None:
        s_mat = after_pair_spectra(inputs)
    n_l = inputs.L + 1
    y = _harmonics(n_l, thetas)
    out = np.zeros((len(inputs.energies), len(thetas)))
    for ell in range(n_l):
        for ell_p in range(n_l):
            z = _pair_phase(inputs.phases, ell, ell_p) * s_mat[ell, ell_p]
            out += 2.0 * np.outer(z.imag, y[ell] * y[ell_p])
    return out


def after_absorption_pairs(inputs: AfterInputs,
                           decomps: dict[int, EffectiveBlockDecomposition]) -> np.ndarray:
    """A[l, lp] = sum_{n active in l, np in lp}
    c_n conj(c_np) / (eps_n - conj(eps_np)) * (phi_np^lp | gamma_eff | phi_n^l)."""
    n_l = inputs.L + 1
    a_mat = np.zeros((n_l, n_l), dtype=np.complex128)
    for ell in range(n_l):
        mask = inputs.active[ell]
        if not mask.any():
            continue
        c_act = inputs.coef[ell][mask]
        e_act = inputs.eps[ell][mask]
        gp = inputs.gamma_eff[:, None] * decomps[ell].right
        for ell_p in range(n_l):
            gram = inputs.h * (decomps[ell_p].right.conj().T @ gp)
            kernel = (c_act[:, None] * inputs.coef[ell_p].conj()[None, :]) / (
                e_act[:, None] - inputs.eps[ell_p].conj()[None, :])
            a_mat[ell, ell_p] = (kernel * gram.T[mask]).sum()
    return a_mat


def after_absorption_angle(inputs: AfterInputs, thetas: np.ndarray,
                           a_mat: np.ndarray | None = None,
                           decomps: dict | None = None) -> np.ndarray:
    """dP/dOmega of the after-pulse part (absorption angle, position space)."""
    if a_mat is None:
        a_mat = after_absorption_pairs(inputs, decomps)
    y = _harmonics(a_mat.shape[0], thetas)
    return 2.0 * np.einsum("lt,lm,mt->t", y, a_mat.imag, y)


# --- during-pulse spectra -------------------------------------------------------

def before_energy_spectrum(acc: BeforeAccumulator) -> np.ndarray:
    return 2.0 * np.einsum("lle->e", acc.C).real


def before_doubly_differential(acc: BeforeAccumulator, thetas: np.ndarray,
                               phases: list) -> np.ndarray:
    n_l = acc.C.shape[0]
    y = _harmonics(n_l, thetas)
    out = np.zeros((acc.C.shape[2], len(thetas)))
    for ell in range(n_l):
        for ell_p in range(n_l):
            z = _pair_phase(phases, ell, ell_p) * acc.C[ell, ell_p]
            out += 2.0 * np.outer(z.real, y[ell] * y[ell_p])
    return out


def before_absorption_angle(acc: BeforeAccumulator, thetas: np.ndarray) -> np.ndarray:
    y = _harmonics(acc.M.shape[0], thetas)
    return 2.0 * np.einsum("lt,lm,mt->t", y, acc.M, y).real


# --- bundle + CSV ----------------------------------------------------------------

@dataclass
class SpectraBundle:
    """Assembled spectra plus audit scalars, ready for serialization."""

    energies: np.ndarray
    thetas: np.ndarray
    dpde_before: np.ndarray
    dpde_after: np.ndarray
    d2p_before: np.ndarray
    d2p_after: np.ndarray
    domega_k_before: np.ndarray
    domega_k_after: np.ndarray
    domega_abs_before: np.ndarray
    domega_abs_after: np.ndarray
    totals: dict
    meta: dict

    @property
    def dpde_total(self) -> np.ndarray:
        return self.dpde_before + self.dpde_after

    @property
    def d2p_total(self) -> np.ndarray:
        return self.d2p_before + self.d2p_after

    @property
    def domega_k_total(self) -> np.ndarray:
        return self.domega_k_before + self.domega_k_after

    @property
    def domega_abs_total(self) -> np.ndarray:
        return self.domega_abs_before + self.domega_abs_after


def assemble(acc: BeforeAccumulator, inputs: AfterInputs,
             decomps: dict[int, EffectiveBlockDecomposition],
             config: SimulationConfig, *,
             final_norm_sq: float | None = None,
             split_time: float | None = None) -> SpectraBundle:
    """Put the pieces together: spectra on the output grids, solid-angle and
    energy integrals, the absorbed-norm audit, and eigensolver diagnostics."""
    energies = config.energies()
    thetas = config.thetas()

    s_mat = after_pair_spectra(inputs)
    a_mat = after_absorption_pairs(inputs, decomps)

    dpde_before = before_energy_spectrum(acc)
    dpde_after = after_energy_spectrum(inputs, s_mat)
    d2p_before = before_doubly_differential(acc, thetas, inputs.phases)
    d2p_after = after_doubly_differential(inputs, thetas, s_mat)
    domega_abs_before = before_absorption_angle(acc, thetas)
    domega_abs_after = after_absorption_angle(inputs, thetas, a_mat)
    domega_k_before = _trapz(d2p_before, energies, axis=0)
    domega_k_after = _trapz(d2p_after, energies, axis=0)

    dpde_total = dpde_before + dpde_after
    peak = float(np.abs(dpde_total).max()) or 1.0
    absorbed_before = float(2.0 * np.real(np.trace(acc.M)))
    absorbed_after = float(2.0 * np.imag(np.trace(a_mat)))
    # both active-set flavors of the after-pulse total, for onset-scan tables
    absorbed_after_plain = after_total_absorption(
        inputs.with_restriction(False), decomps)
    absorbed_after_restricted = after_total_absorption(
        inputs.with_restriction(True), decomps)

    totals = {
        "ionization_integral": float(_trapz(dpde_total, energies)),
        "ionization_integral_before": float(_trapz(dpde_before, energies)),
        "ionization_integral_after": float(_trapz(dpde_after, energies)),
        "absorbed_norm_before": absorbed_before,
        "absorbed_norm_after": absorbed_after,
        "absorbed_norm_total": absorbed_before + absorbed_after,
        "absorbed_norm_after_unrestricted": absorbed_after_plain,
        "absorbed_norm_after_re_positive": absorbed_after_restricted,
        "min_dpde_over_peak": float(dpde_total.min() / peak),
        "active_sizes": inputs.active_sizes(),
        "final_norm_sq": final_norm_sq,
        "split_time": split_time,
    }
    if final_norm_sq is not None:
        totals["norm_audit_gap"] = absorbed_before - (1.0 - final_norm_sq)

    meta = {
        "config": config_hash(config),
        "R_c": config.cap.R_c,
        "cutoff_c": inputs.cutoff_c,
        "restrict_re_positive": inputs.restrict_re_positive,
        "gamma0": config.cap.gamma0,
        "diagnostics": [decomps[ell].diagnostics() for ell in sorted(decomps)],
    }
    return SpectraBundle(
        energies=energies, thetas=thetas,
        dpde_before=dpde_before, dpde_after=dpde_after,
        d2p_before=d2p_before, d2p_after=d2p_after,
        domega_k_before=domega_k_before, domega_k_after=domega_k_after,
        domega_abs_before=domega_abs_before, domega_abs_after=domega_abs_after,
        totals=totals, meta=meta)


def after_total_absorption(inputs: AfterInputs,
                           decomps: dict[int, EffectiveBlockDecomposition]) -> float:
    """Solid-angle integral of the after-pulse absorption distribution;
    only the diagonal pair blocks survive the Y_l Y_lp orthogonality."""
    total = 0.0
    for ell in range(inputs.L + 1):
        mask = inputs.active[ell]
        if not mask.any():
            continue
        c_act = inputs.coef[ell][mask]
        e_act = inputs.eps[ell][mask]
        gp = inputs.gamma_eff[:, None] * decomps[ell].right
        gram = inputs.h * (decomps[ell].right.conj().T @ gp)
        kernel = (c_act[:, None] * inputs.coef[ell].conj()[None, :]) / (
            e_act[:, None] - inputs.eps[ell].conj()[None, :])
        total += 2.0 * float((kernel * gram.T[mask]).sum().imag)
    return total


def ati_peaks(energies: np.ndarray, spectrum: np.ndarray, *,
              min_height_fraction: float = 1e-4,
              min_spacing: float | None = None) -> np.ndarray:
    """Indices of above-threshold-ionization maxima in a dP/de curve.

    Peaks below min_height_fraction of the global maximum are ignored;
    min_spacing (energy units) suppresses sub-structure between peaks.
    """
    from scipy.signal import find_peaks

    height = min_height_fraction * float(np.max(spectrum))
    distance = None
    if min_spacing is not None and len(energies) > 1:
        de = float(energies[1] - energies[0])
        distance = max(1, int(round(min_spacing / de)))
    idx, _ = find_peaks(spectrum, height=height, distance=distance)
    return idx


def _fmt(x: float) -> str:
    return repr(float(x))


def _meta_block(bundle: SpectraBundle) -> str:
    m = bundle.meta
    flag = "true" if m["restrict_re_positive"] else "false"
    return (f"# config: {m['config']}\n"
            f"# R_c: {_fmt(m['R_c'])}\n"
            f"# cutoff_c: {_fmt(m['cutoff_c'])}\n"
            f"# restrict_re_positive: {flag}\n"
            f"# gamma0: {_fmt(m['gamma0'])}\n")


def write_spectra_csvs(bundle: SpectraBundle, outdir) -> dict[str, str]:
    """Write dPdE.csv, d2P.csv, dPdOmegaK.csv, dPdOmegaAbs.csv into outdir.

    UTF-8, '#'-prefixed metadata block, then a header row.  Values are
    shortest round-trip float64 representations, so identical inputs give
    byte-identical files.
    """
    import os

    os.makedirs(outdir, exist_ok=True)
    head = _meta_block(bundle)
    paths = {}

    def _write(name: str, text: str) -> None:
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths[name] = path

    rows = [head + "energy,before,after,total"]
    for i, e in enumerate(bundle.energies):
        rows.append(f"{_fmt(e)},{_fmt(bundle.dpde_before[i])},"
                    f"{_fmt(bundle.dpde_after[i])},{_fmt(bundle.dpde_total[i])}")
    _write("dPdE.csv", "\n".join(rows) + "\n")

    total = bundle.d2p_total
    parts = [head + "energy,theta_k,value\n"]
    for i, e in enumerate(bundle.energies):
        e_s = _fmt(e)
        parts.append("\n".join(
            f"{e_s},{_fmt(th)},{_fmt(total[i, j])}"
            for j, th in enumerate(bundle.thetas)))
        parts.append("\n")
    _write("d2P.csv", "".join(parts))

    rows = [head + "theta,before,after,total"]
    for j, th in enumerate(bundle.thetas):
        rows.append(f"{_fmt(th)},{_fmt(bundle.domega_k_before[j])},"
                    f"{_fmt(bundle.domega_k_after[j])},{_fmt(bundle.domega_k_total[j])}")
    _write("dPdOmegaK.csv", "\n".join(rows) + "\n")

    rows = [head + "theta,before,after,total"]
    for j, th in enumerate(bundle.thetas):
        rows.append(f"{_fmt(th)},{_fmt(bundle.domega_abs_before[j])},"
                    f"{_fmt(bundle.domega_abs_after[j])},{_fmt(bundle.domega_abs_total[j])}")
    _write("dPdOmegaAbs.csv", "\n".join(rows) + "\n")
    return paths
