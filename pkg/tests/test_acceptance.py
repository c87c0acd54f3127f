"""Release acceptance suite: one test per criterion, one verdict line each.

The expensive tests drive the two production presets through the real
pipeline (continuum basis, propagation, eigendecomposition, assembly,
CSV output), so a full pass costs about 45 minutes on one core.  Cheap
criteria run unmarked; everything needing a preset-scale propagation is
marked slow.  Verdict lines are collected by conftest and echoed in the
terminal summary; stated runtimes from the release checklist are
reported in the detail fields rather than asserted, since wall clock
depends on the host.

Preset-scale runs pin the active-set cutoff at 1e-8 instead of the
package default 1e-12.  The absorber gives nominally bound eigenmodes
tiny widths that sweep through 1e-12..1e-10 as the onset moves outward
(the n = 4 shell straddles the default threshold at R_c = 80, n = 5 at
R_c = 120), and a mode landing barely above threshold enters the
after-pulse sum with 1/(2|Im eps|) ~ 5e10 amplification, swamping the
physical spectrum.  Results are flat across cutoff 1e-10..1e-7; see
README "Choosing the active-set cutoff".
"""
import time
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import record_criterion, rel_l2

from capspectra.analysis import (BeforeAccumulator, assemble, ati_peaks,
                                 before_energy_spectrum, build_after_inputs,
                                 eigendecompose_all, eigendecompose_field_free,
                                 run_before_stage)
from capspectra.cli import main, run_one
from capspectra.continuum import ContinuumBasis, EnergyGrid, coulomb_phase, coulomb_wave
from capspectra.core import (CapParams, PulseParams, RadialGrid,
                             SimulationConfig, default_box_for_rc, dumps_config,
                             ground_state, preset_config)
from capspectra.hamiltonian import HamiltonianOperator
from capspectra.propagator import load_checkpoint, propagate_pulse

RC_MEMBERS = (40, 60, 80, 100, 120)
RC_CONVERGED = (60, 80, 100, 120)
CUTOFF = 1e-8
OMEGA_400 = 0.114


def _run_preset(name, outdir, basis_cache):
    cfg = preset_config(name, **{"after.cutoff_c": CUTOFF})
    key = (cfg.grid.N, cfg.grid.h, cfg.energy_grid, cfg.L_max)
    if key not in basis_cache:
        basis = ContinuumBasis(cfg.grid, EnergyGrid(*cfg.energy_grid), cfg.L_max)
        basis.build_all()
        basis_cache[key] = basis
    bundle, manifest = run_one(cfg, str(outdir), basis=basis_cache[key],
                               quiet=True)
    return SimpleNamespace(cfg=cfg, bundle=bundle, manifest=manifest,
                           outdir=str(outdir), basis=basis_cache[key])


@pytest.fixture(scope="session")
def scan400(tmp_path_factory):
    """The 400 nm absorber-onset scan, one member per R_c."""
    root = tmp_path_factory.mktemp("scan400")
    cache = {}
    return {rc: _run_preset(f"400nm-rc{rc}", root / f"rc{rc}", cache)
            for rc in RC_MEMBERS}


@pytest.fixture(scope="session")
def scan200(tmp_path_factory):
    """Two 200 nm members: enough for the lobe-prominence comparison and
    the onset/restriction trend checks at the shorter wavelength."""
    root = tmp_path_factory.mktemp("scan200")
    cache = {}
    return {rc: _run_preset(f"200nm-rc{rc}", root / f"rc{rc}", cache)
            for rc in (60, 100)}


def _total_dpde(member):
    return member.bundle.dpde_before + member.bundle.dpde_after


def _total_domega_k(member):
    return member.bundle.domega_k_before + member.bundle.domega_k_after


def _total_domega_abs(member):
    return member.bundle.domega_abs_before + member.bundle.domega_abs_after


def _side_lobe_max(member):
    """Largest absorption-angle value away from the polar caps; the side
    lobes live around theta = pi/2 +- pi/6, well inside [pi/4, 3pi/4]."""
    thetas = member.bundle.thetas
    dist = _total_domega_abs(member)
    window = (thetas > np.pi / 4) & (thetas < 3 * np.pi / 4)
    return float(dist[window].max())


def _absorption_gaps(member):
    """(unrestricted, Re-restricted) distance of the absorbed-norm total
    from the energy-integrated spectrum, for one run."""
    t = member.bundle.totals
    ion = t["ionization_integral"]
    unres = t["absorbed_norm_before"] + t["absorbed_norm_after_unrestricted"]
    restr = t["absorbed_norm_before"] + t["absorbed_norm_after_re_positive"]
    return abs(unres - ion), abs(restr - ion)


# --- cheap criteria -----------------------------------------------------------


def test_c01_stationary_ground_state():
    """No field, no absorber: the discrete ground state only picks up a
    phase over a ten-cycle-long propagation."""
    cfg = SimulationConfig(
        grid=RadialGrid.from_box(0.2, 60.0),
        pulse=PulseParams(E0=0.0, omega=OMEGA_400, n_cycles=10),
        cap=CapParams(gamma0=0.0, R_c=30.0),
        L_max=0,
        steps_per_cycle=500,
    )
    _, psi0 = ground_state(cfg.grid, L=cfg.L_max)
    t0 = time.perf_counter()
    final = propagate_pulse(psi0.copy(), cfg)
    wall = time.perf_counter() - t0
    norm_drift = abs(final.norm_sq() - 1.0)
    survival = abs(cfg.grid.h * np.vdot(psi0.data, final.data)) ** 2
    ok = norm_drift < 1e-8 and survival > 1.0 - 1e-6
    assert record_criterion(
        1, "stationary ground state: unitary, phase-only evolution", ok,
        f"|norm-1|={norm_drift:.1e} 1-survival={1 - survival:.1e} wall={wall:.0f}s")


def test_c02_bound_spectrum_second_order():
    """l=0 eigenvalues hit -1/(2 n^2) within 5e-3 at h=0.2 and improve
    about fourfold at h=0.1."""
    from scipy.linalg import eigh_tridiagonal

    errs = {}
    pulse = PulseParams(E0=0.0, omega=OMEGA_400, n_cycles=1)
    for h in (0.2, 0.1):
        grid = RadialGrid.from_box(h, 150.0)
        op = HamiltonianOperator(grid, 0, pulse)
        vals = eigh_tridiagonal(op.main[:, 0],
                                np.full(grid.N - 1, op.off),
                                select="i", select_range=(0, 2),
                                eigvals_only=True)
        errs[h] = np.array([abs(vals[n - 1] + 0.5 / n**2) for n in (1, 2, 3)])
    ratios = errs[0.2] / errs[0.1]
    ok = bool(np.all(errs[0.2] < 5e-3) and np.all((ratios > 3.0) & (ratios < 5.0)))
    assert record_criterion(
        2, "bound spectrum: 5e-3 at h=0.2, ~4x better at h=0.1", ok,
        f"errs={np.array2string(errs[0.2], precision=2)} "
        f"ratios={np.array2string(ratios, precision=2)}")


def test_c03_eigenvalue_half_plane():
    """All effective-Hamiltonian eigenvalues stay in the lower half-plane
    for every partial wave at both extreme onsets."""
    worst = -np.inf
    t0 = time.perf_counter()
    for rc in (40, 120):
        cfg = preset_config(f"400nm-rc{rc}")
        for ell in range(cfg.L_max + 1):
            dec = eigendecompose_field_free(cfg.grid, ell, cfg.cap_effective())
            worst = max(worst, float(dec.eigenvalues.imag.max()))
    wall = time.perf_counter() - t0
    ok = worst <= 1e-10
    assert record_criterion(
        3, "eigenvalues confined to lower half-plane", ok,
        f"max Im={worst:.1e} wall={wall:.0f}s")


def test_c04_biorthonormality():
    """Left/right eigenvector pairing reproduces the identity on
    well-conditioned blocks; pseudoinverse fallbacks are reported.

    Well-conditioned means cond <= 1e8: the pairing residual scales as
    machine epsilon times the eigenvector condition number, so 1e-8 is
    only meaningful below that.  A wide absorber window (onset 40 in the
    150-bohr box) drives cond past 1e15 and must take the flagged
    pseudoinverse route instead."""
    grid = RadialGrid.from_box(0.2, 60.0)
    cap = CapParams(gamma0=1e-4, R_c=30.0).scaled(2.0)
    checked, worst = 0, 0.0
    for ell in range(4):
        dec = eigendecompose_field_free(grid, ell, cap)
        assert not dec.pinv_used and dec.cond_1norm < 1e8
        checked += 1
        worst = max(worst, dec.biorth_error)

    wide = preset_config("400nm-rc40")
    fallback = eigendecompose_field_free(wide.grid, 0, wide.cap_effective())
    ok = checked >= 2 and worst < 1e-8 and fallback.pinv_used
    assert record_criterion(
        4, "bi-orthonormal identity on well-conditioned blocks", ok,
        f"checked={checked} worst={worst:.1e} "
        f"fallback_flagged={fallback.pinv_used} "
        f"(cond={fallback.cond_1norm:.0e})")


def test_c13_continuum_wave_suite():
    """Continuum-wave cross-checks: free-field reduction, absolute
    amplitude against an independent special-function library, and the
    phase recurrence."""
    import mpmath as mp

    grid = RadialGrid.from_box(0.2, 60.0)
    egrid = EnergyGrid(0.01, 1.5, 0.01)

    # charge 0: exact sine waves with the energy-normalized amplitude
    free = coulomb_wave(0, egrid.energies, grid, z=0.0)
    k = egrid.k
    ref = np.sqrt(2.0 / (np.pi * k))[:, None] * np.sin(k[:, None] * grid.r[None, :])
    worst_free = float(np.max(np.abs(free - ref)))

    # attractive charge: spot values against mpmath's regular function
    worst_amp = 0.0
    for ell in (0, 2):
        for e in (0.1, 0.7):
            kk = np.sqrt(2 * e)
            u = coulomb_wave(ell, np.array([e]), grid)[0]
            for ri in (149, 290):
                r = grid.r[ri]
                refv = float(mp.coulombf(ell, -1.0 / kk, kk * r)) \
                    * np.sqrt(2.0 / (np.pi * kk))
                scale = max(abs(refv), 1e-3 * np.sqrt(2.0 / (np.pi * kk)))
                worst_amp = max(worst_amp, abs(u[ri] - refv) / scale)

    # sigma_{l+1} - sigma_l = atan2(eta, l+1) with eta = z/k in this
    # package's phase convention (arg of Gamma(l+1+i eta))
    ks = np.array([0.2, 0.5, 1.0, 1.7])
    worst_rec = 0.0
    for ell in range(12):
        lhs = coulomb_phase(ell + 1, ks) - coulomb_phase(ell, ks)
        rhs = np.arctan2(1.0 / ks, ell + 1.0)
        worst_rec = max(worst_rec, float(np.max(np.abs(lhs - rhs))))

    ok = worst_free < 1e-8 and worst_amp < 1e-4 and worst_rec < 1e-12
    assert record_criterion(
        13, "continuum waves: reduction, amplitude, phase recurrence", ok,
        f"free={worst_free:.1e} amp={worst_amp:.1e} rec={worst_rec:.1e}")


def test_c14_determinism(tmp_path):
    """Two identical run invocations produce byte-identical CSVs."""
    cfg_text = dumps_config(SimulationConfig(
        grid=RadialGrid.from_box(0.2, 30.0),
        pulse=PulseParams(E0=0.1, omega=0.57, n_cycles=2),
        cap=CapParams(gamma0=1e-3, R_c=15.0),
        L_max=2,
        steps_per_cycle=200,
        analysis_stride=2,
        energy_grid=(0.05, 1.0, 0.01),
        theta_points=91,
        krylov_dim=12,
    ))
    cfg_file = tmp_path / "mini.cfg"
    cfg_file.write_text(cfg_text)
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = main(["run", "--config", str(cfg_file), "--out", str(out),
                     "--no-progress"])
        assert code == 0
        outs.append(out)
    names = ("dPdE.csv", "d2P.csv", "dPdOmegaK.csv", "dPdOmegaAbs.csv")
    same = [(outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
            for n in names]
    ok = all(same)
    assert record_criterion(
        14, "byte-identical CSVs across identical runs", ok,
        f"identical={sum(same)}/{len(names)}")


# --- preset-scale criteria ------------------------------------------------------


@pytest.mark.slow
def test_c05_closed_form_matches_long_propagation():
    """After-pulse closed form against brute force: keep propagating with
    the absorber on for 2000 a.u. past the pulse and accumulate the flux
    integrals over that window; both are the post-pulse spectrum."""
    cfg = SimulationConfig(
        grid=RadialGrid.from_box(0.2, 60.0),
        pulse=PulseParams(E0=0.1, omega=0.228, n_cycles=3),
        cap=CapParams(gamma0=1e-4, R_c=30.0),
        L_max=3,
        cutoff_c=CUTOFF,
    )
    t0 = time.perf_counter()
    basis = ContinuumBasis(cfg.grid, EnergyGrid(*cfg.energy_grid), cfg.L_max)
    basis.build_all()
    state, acc, _ = run_before_stage(cfg, basis)
    decomps = eigendecompose_all(cfg)
    inputs = build_after_inputs(state, decomps, basis, acc.gamma_eff,
                                cutoff_c=CUTOFF)
    bundle = assemble(acc, inputs, decomps, cfg,
                      final_norm_sq=state.norm_sq(), split_time=state.t)
    closed = bundle.dpde_after

    _, win_acc, _ = run_before_stage(cfg, basis, initial=state.copy(),
                                     t_final=cfg.pulse.T + 2000.0)
    brute = before_energy_spectrum(win_acc)
    wall = time.perf_counter() - t0

    e = bundle.energies
    sel = (e >= 0.05) & (e <= 1.0)
    err = rel_l2(closed[sel], brute[sel])
    ok = err < 1e-2
    assert record_criterion(
        5, "closed-form after-pulse spectrum vs long propagation", ok,
        f"rel_l2={err:.2e} wall={wall:.0f}s")


@pytest.mark.slow
def test_c06_partition_invariance(scan400):
    """Moving the before/after split 50 a.u. past the pulse end leaves
    the total spectrum unchanged at its maxima to 1e-3 relative."""
    member = scan400[60]
    cfg, basis = member.cfg, member.basis
    total1 = _total_dpde(member)

    state, _ = load_checkpoint(member.outdir + "/checkpoint.bin")
    with np.load(member.outdir + "/checkpoint.bin.acc.npz") as arch:
        c_before, m_before = arch["C"], arch["M"]
    win_final, win_acc, _ = run_before_stage(cfg, basis, initial=state.copy(),
                                             t_final=cfg.pulse.T + 50.0)
    comb = BeforeAccumulator(cfg)
    comb.C = c_before + win_acc.C
    comb.M = m_before + win_acc.M

    decomps = eigendecompose_all(cfg)
    inputs = build_after_inputs(win_final, decomps, basis, comb.gamma_eff,
                                cutoff_c=CUTOFF)
    bundle2 = assemble(comb, inputs, decomps, cfg,
                       final_norm_sq=win_final.norm_sq(),
                       split_time=win_final.t)
    total2 = bundle2.dpde_before + bundle2.dpde_after

    # the comb teeth well above the artifact floor; at floor-dominated
    # points a relative comparison measures the floor, not the partition
    e = member.bundle.energies
    idx = ati_peaks(e, total1, min_height_fraction=1e-3, min_spacing=0.08)
    worst = float(np.max(np.abs(total2[idx] - total1[idx]) / total1[idx]))
    ok = len(idx) >= 3 and worst < 1e-3
    assert record_criterion(
        6, "split-time invariance at spectrum maxima", ok,
        f"worst rel change={worst:.1e} over {len(idx)} maxima")


@pytest.mark.slow
def test_c07_energy_spectrum_onset_invariance(scan400):
    """Total energy spectra for onsets >= 60 agree at the ATI maxima to
    5 percent; the innermost onset is allowed to deviate.

    Peak heights are compared (each member's local maximum around a comb
    tooth) so sub-grid peak-position shifts do not masquerade as height
    disagreement.  Teeth down at the log-visibility bar ride on the
    during-pulse artifact floor (about 1e-3 of peak at onset 60), which
    caps the attainable relative agreement there; the detail line keeps
    the per-tooth numbers."""
    e = scan400[120].bundle.energies
    ref_total = _total_dpde(scan400[120])
    idx = ati_peaks(e, ref_total, min_spacing=0.08)
    idx = idx[e[idx] <= 1.4]
    de = float(e[1] - e[0])
    half = int(round(0.03 / de))
    heights = {rc: np.array([_total_dpde(scan400[rc])[max(0, i - half):i + half + 1].max()
                             for i in idx])
               for rc in RC_CONVERGED}
    stack = np.stack([heights[rc] for rc in RC_CONVERGED])
    spread = (stack.max(axis=0) - stack.min(axis=0)) / stack.mean(axis=0)
    worst = float(spread.max())
    ok = len(idx) >= 4 and worst < 0.05
    assert record_criterion(
        7, "onset invariance of energy spectra at ATI maxima", ok,
        f"worst spread={worst:.1%} over {len(idx)} maxima, onsets>=60; "
        f"per tooth {np.array2string(spread, precision=3)}")


@pytest.mark.slow
def test_c08_ati_comb_structure(scan400):
    """Detected peaks form a photon-energy comb: spacing matches the
    carrier within 5 percent, with at least three log-visible peaks."""
    member = scan400[120]
    e = member.bundle.energies
    total = _total_dpde(member)
    idx = ati_peaks(e, total, min_height_fraction=1e-4, min_spacing=0.08)
    spacings = np.diff(e[idx])
    med = float(np.median(spacings)) if len(spacings) else np.nan
    ok = len(idx) >= 3 and abs(med - OMEGA_400) / OMEGA_400 < 0.05
    assert record_criterion(
        8, "ATI comb: spacing equals photon energy", ok,
        f"{len(idx)} peaks, median spacing={med:.4f} vs {OMEGA_400}")


@pytest.mark.slow
def test_c09_ejection_angle_invariance(scan400):
    """Ejection-angle distributions for onsets >= 60 are pointwise within
    2 percent of peak of each other and concentrate along the
    polarization axis."""
    ref = _total_domega_k(scan400[120])
    peak = float(ref.max())
    worst = 0.0
    for rc in (60, 80, 100):
        cur = _total_domega_k(scan400[rc])
        worst = max(worst, float(np.max(np.abs(cur - ref))) / peak)
    thetas = scan400[120].bundle.thetas
    polar = ref[np.argmin(np.abs(thetas))], ref[np.argmin(np.abs(thetas - np.pi))]
    equator = float(ref[np.argmin(np.abs(thetas - np.pi / 2))])
    polar_dominated = max(polar) == peak and equator < 0.5 * peak
    ok = worst < 0.02 and polar_dominated
    assert record_criterion(
        9, "onset invariance of ejection-angle distribution", ok,
        f"worst pointwise={worst:.1%} of peak; equator/peak={equator / peak:.2f}")


@pytest.mark.slow
def test_c10_absorption_angle_trends(scan400):
    """Absorption-angle side lobes shrink as the onset moves outward; the
    absorbed-norm total decreases toward the energy-integrated spectrum;
    restricting to Re eps > 0 moves every total closer to it."""
    lobes = [_side_lobe_max(scan400[rc]) for rc in RC_MEMBERS]
    lobes_shrink = all(b <= a * 1.02 for a, b in zip(lobes, lobes[1:])) \
        and lobes[-1] < lobes[1]

    totals = [scan400[rc].bundle.totals["absorbed_norm_total"]
              for rc in RC_MEMBERS]
    ions = [scan400[rc].bundle.totals["ionization_integral"]
            for rc in RC_MEMBERS]
    gaps = [t - i for t, i in zip(totals, ions)]
    monotone = all(b < a for a, b in zip(totals, totals[1:])) \
        and all(b < a for a, b in zip(gaps, gaps[1:])) and min(gaps) > 0

    gap_pairs = [_absorption_gaps(scan400[rc]) for rc in RC_MEMBERS]
    restriction_helps = all(restr < unres for unres, restr in gap_pairs)

    ok = lobes_shrink and monotone and restriction_helps
    assert record_criterion(
        10, "absorption-angle lobes and totals vs onset", ok,
        f"lobes={['%.3f' % v for v in lobes]} gaps={['%.3f' % g for g in gaps]} "
        f"restriction_helps={restriction_helps}")


@pytest.mark.slow
def test_c11_short_wavelength_lobes(scan400, scan200):
    """At 200 nm the side lobes are more prominent than at 400 nm, with
    the same onset dependence and the same restriction improvement."""
    def prominence(member):
        dist = _total_domega_abs(member)
        return _side_lobe_max(member) / float(dist.max())

    p200 = prominence(scan200[60])
    p400 = prominence(scan400[60])
    lobes_shrink = _side_lobe_max(scan200[100]) < _side_lobe_max(scan200[60])
    restriction_helps = all(r < u for u, r in
                            (_absorption_gaps(scan200[rc]) for rc in (60, 100)))
    ok = p200 > p400 and lobes_shrink and restriction_helps
    assert record_criterion(
        11, "short wavelength: stronger side lobes, same trends", ok,
        f"prominence 200nm={p200:.3f} vs 400nm={p400:.3f}; "
        f"lobes_shrink={lobes_shrink} restriction_helps={restriction_helps}")


@pytest.mark.slow
def test_c12_negative_probability_guard(scan400, scan200):
    """Total dP/de stays above -1e-4 of its peak at every onset >= 60.

    Known red at R_c = 60: the during-pulse part carries a small genuine
    negativity at the fourth ATI minimum (flux-operator cross terms are
    indefinite at finite onset; it shrinks roughly tenfold per +20 bohr
    of onset and is independent of stride and cutoff).  Reported
    honestly rather than masked; see README."""
    members = [(f"400nm rc{rc}", scan400[rc]) for rc in RC_CONVERGED]
    members += [(f"200nm rc{rc}", scan200[rc]) for rc in (60, 100)]
    floors = {name: m.bundle.totals["min_dpde_over_peak"] for name, m in members}
    ok = all(v >= -1e-4 for v in floors.values())
    assert record_criterion(
        12, "spectrum floor above -1e-4 of peak at onsets >= 60", ok,
        " ".join(f"{n}={v:+.1e}" for n, v in floors.items()))
