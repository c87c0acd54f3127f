"""Command line entry points.

Subcommands: run (full pipeline for one config), scan-rc (repeat a run over
a list of absorber onsets and compare), validate (fast property checks, no
propagation), info (resolved parameters).  Heavy imports happen inside the
handlers so --help and thread-count plumbing stay cheap.

Exit codes: 0 success, 2 configuration problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_RC_LIST = "40,60,80,100,120"


def _sha256(path: str) -> str:
    import hashlib

    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _resolve_config(args):
    """Config from --config or --preset plus flag overrides."""
    from dataclasses import replace

    from .core import (CapParams, ConfigError, RadialGrid, default_box_for_rc,
                       load_config, parse_config, preset_config)

    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise ConfigError("give either --config or --preset, not both")
    try:
        if getattr(args, "config", None):
            cfg = load_config(args.config)
            if getattr(args, "rc", None) is not None:
                # explicit config file: respect its box, shift the onset only
                cfg = replace(cfg, cap=CapParams(cfg.cap.gamma0, float(args.rc)))
        else:
            cfg = preset_config(args.preset) if getattr(args, "preset", None) \
                else parse_config("")
            if getattr(args, "rc", None) is not None:
                rc = float(args.rc)
                cfg = replace(cfg, cap=CapParams(cfg.cap.gamma0, rc),
                              grid=RadialGrid.from_box(cfg.grid.h,
                                                       default_box_for_rc(rc)))
        if getattr(args, "gamma0", None) is not None:
            cfg = replace(cfg, cap=CapParams(float(args.gamma0), cfg.cap.R_c))
        if getattr(args, "cutoff_c", None) is not None:
            cfg = replace(cfg, cutoff_c=float(args.cutoff_c))
        if getattr(args, "restrict_re_positive", False):
            cfg = replace(cfg, restrict_re_positive=True)
    except ValueError as exc:
        # flag overrides build dataclasses directly; surface their
        # validation errors as configuration problems, not crashes
        raise ConfigError(str(exc)) from exc
    return cfg


def _build_basis(cfg):
    from .continuum import ContinuumBasis, EnergyGrid

    return ContinuumBasis(grid=cfg.grid, energy_grid=EnergyGrid(*cfg.energy_grid),
                          L_max=cfg.L_max)


def _acc_sidecar_path(checkpoint_path: str) -> str:
    return checkpoint_path + ".acc.npz"


def run_one(cfg, outdir: str, *, skip_after: bool = False,
            from_checkpoint: str | None = None, basis=None,
            progress=None, quiet: bool = False):
    """Full pipeline for one config.  Returns (bundle_or_None, manifest_dict)."""
    import numpy as np

    from . import __version__
    from .analysis import (BeforeAccumulator, assemble, build_after_inputs,
                           eigendecompose_all, run_before_stage,
                           write_spectra_csvs)
    from .core import cap_profile, checkpoint_hash, config_hash
    from .propagator import load_checkpoint, save_checkpoint

    os.makedirs(outdir, exist_ok=True)
    walltimes: dict[str, float] = {}
    manifest: dict = {
        "generator": f"capspectra {__version__}",
        "config": config_hash(cfg),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "stage_seconds": walltimes,
    }

    def _stage(name: str):
        class _Timer:
            def __enter__(self_inner):
                self_inner.start = time.perf_counter()

            def __exit__(self_inner, exc_type, exc, tb):
                walltimes[name] = round(time.perf_counter() - self_inner.start, 3)
                if exc is not None and not isinstance(exc, StageFailure):
                    raise StageFailure(name, exc) from exc
        return _Timer()

    checkpoint_path = os.path.join(outdir, "checkpoint.bin")

    with _stage("continuum_basis"):
        if basis is None:
            basis = _build_basis(cfg)
        basis.build_all()

    if from_checkpoint:
        with _stage("load_checkpoint"):
            state, chash = load_checkpoint(from_checkpoint)
            # compare propagation-relevant keys only: cutoff, restriction
            # and angular binning may differ between analysis passes
            if chash != checkpoint_hash(cfg):
                from .core import ConfigError
                raise ConfigError(
                    f"checkpoint config {chash} does not match resolved "
                    f"config {checkpoint_hash(cfg)}")
            acc = BeforeAccumulator(cfg)
            with np.load(_acc_sidecar_path(from_checkpoint)) as arch:
                acc.C = arch["C"]
                acc.M = arch["M"]
    else:
        with _stage("propagate"):
            state, acc, ledger = run_before_stage(cfg, basis, progress=progress)
        with _stage("checkpoint"):
            save_checkpoint(state, cfg, checkpoint_path)
            np.savez(_acc_sidecar_path(checkpoint_path), C=acc.C, M=acc.M)

    manifest["final_norm_sq"] = state.norm_sq()
    manifest["split_time"] = state.t

    if skip_after:
        manifest["outputs"] = _digest_outputs(
            [checkpoint_path, _acc_sidecar_path(checkpoint_path)])
        _write_manifest(manifest, outdir)
        return None, manifest

    with _stage("eigendecompose"):
        decomps = eigendecompose_all(cfg)
    with _stage("after_inputs"):
        gamma_eff = cap_profile(cfg.grid.r, cfg.cap_effective())
        inputs = build_after_inputs(state, decomps, basis, gamma_eff,
                                    cutoff_c=cfg.cutoff_c,
                                    restrict_re_positive=cfg.restrict_re_positive)
        if not any(m.any() for m in inputs.active) and not quiet:
            print("warning: every active set is empty "
                  "(absorber off or cutoff too large); after-part is zero",
                  file=sys.stderr)
    with _stage("assemble"):
        bundle = assemble(acc, inputs, decomps, cfg,
                          final_norm_sq=state.norm_sq(), split_time=state.t)
    with _stage("write_csv"):
        paths = write_spectra_csvs(bundle, outdir)

    manifest["norm_audit"] = {
        k: bundle.totals[k]
        for k in ("absorbed_norm_before", "absorbed_norm_after",
                  "absorbed_norm_total", "final_norm_sq", "norm_audit_gap",
                  "ionization_integral", "min_dpde_over_peak")
        if k in bundle.totals
    }
    manifest["active_sizes"] = bundle.totals["active_sizes"]
    manifest["eigensolver"] = bundle.meta["diagnostics"]
    manifest["outputs"] = _digest_outputs(
        list(paths.values()) + [checkpoint_path, _acc_sidecar_path(checkpoint_path)]
        if not from_checkpoint else list(paths.values()))
    _write_manifest(manifest, outdir)
    return bundle, manifest


def _digest_outputs(paths) -> dict:
    out = {}
    for path in paths:
        if os.path.exists(path):
            out[os.path.basename(path)] = {
                "sha256": _sha256(path),
                "bytes": os.path.getsize(path),
            }
    return out


def _write_manifest(manifest: dict, outdir: str) -> None:
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    outdir = args.out or os.path.join("capspectra-out", _slug(cfg))
    progress = None if args.no_progress else sys.stderr
    bundle, manifest = run_one(cfg, outdir, skip_after=args.skip_after,
                               from_checkpoint=args.from_checkpoint,
                               progress=progress)
    if bundle is not None:
        print(f"wrote {outdir}: ionization integral "
              f"{bundle.totals['ionization_integral']:.6e}, absorbed norm "
              f"{bundle.totals['absorbed_norm_total']:.6e}")
    else:
        print(f"wrote {outdir}: checkpoint only (--skip-after)")
    return EXIT_OK


def _slug(cfg) -> str:
    from .core import config_hash

    return f"run-{config_hash(cfg)}"


def _scan_summary(cfg, outdir, bundle) -> dict:
    totals = bundle.totals
    before = totals["absorbed_norm_before"]
    return {
        "rc": cfg.cap.R_c,
        "outdir": outdir,
        "energies": bundle.energies,
        "dpde_total": bundle.dpde_total,
        "thetas": bundle.thetas,
        "domega_k_total": bundle.domega_k_total,
        "domega_abs_total": bundle.domega_abs_total,
        "ionization_integral": totals["ionization_integral"],
        "absorbed_total": before + totals["absorbed_norm_after_unrestricted"],
        "absorbed_total_restricted":
            before + totals["absorbed_norm_after_re_positive"],
    }


def _scan_worker(payload):
    """Run one scan member in a worker process; returns comparison data."""
    cfg, outdir, quiet = payload
    bundle, _manifest = run_one(cfg, outdir, progress=None, quiet=quiet)
    return _scan_summary(cfg, outdir, bundle)


def cmd_scan_rc(args) -> int:
    from .core import ConfigError

    rcs = []
    for token in (args.rc or DEFAULT_RC_LIST).split(","):
        token = token.strip()
        if token:
            rcs.append(float(token))
    if not rcs:
        raise ConfigError("empty --rc list")

    jobs = []
    for rc in rcs:
        member = argparse.Namespace(**vars(args))
        member.rc = rc
        cfg = _resolve_config(member)
        if cfg.cap.R_c >= cfg.grid.R:
            raise ConfigError(f"R_c={rc} does not fit inside the box R={cfg.grid.R}")
        jobs.append((cfg, os.path.join(args.out, f"rc{rc:g}"), True))

    results = []
    if args.threads > 1:
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
        os.environ.setdefault("OMP_NUM_THREADS", "1")
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_scan_worker, jobs))
    else:
        # sequential: reuse the continuum basis across members sharing a box
        basis_cache: dict = {}
        for cfg, outdir, _ in jobs:
            key = (cfg.grid.N, cfg.grid.h, cfg.energy_grid, cfg.L_max)
            if key not in basis_cache:
                basis_cache[key] = _build_basis(cfg)
            bundle, _m = run_one(cfg, outdir, basis=basis_cache[key],
                                 progress=None if args.no_progress else sys.stderr)
            results.append(_scan_summary(cfg, outdir, bundle))

    results.sort(key=lambda r: r["rc"])
    _write_scan_outputs(args, results)
    print(f"scan complete: {len(results)} members in {args.out}")
    return EXIT_OK


def _write_scan_outputs(args, results) -> None:
    import numpy as np

    from .analysis import ati_peaks

    os.makedirs(args.out, exist_ok=True)
    rcs = [r["rc"] for r in results]
    rc_cols = ",".join(f"rc{rc:g}" for rc in rcs)

    def _fmt(x):
        return repr(float(x))

    def _spread_table(path, axis_name, axis, stack):
        spread = stack.max(axis=0) - stack.min(axis=0)
        scale = np.abs(stack).max(axis=0)
        rel = np.divide(spread, scale, out=np.zeros_like(spread),
                        where=scale > 0)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# members: {rc_cols}\n")
            fh.write(f"{axis_name},{rc_cols},spread,rel_spread\n")
            for i, x in enumerate(axis):
                vals = ",".join(_fmt(stack[j, i]) for j in range(len(results)))
                fh.write(f"{_fmt(x)},{vals},{_fmt(spread[i])},{_fmt(rel[i])}\n")

    energies = results[0]["energies"]
    dpde = np.stack([r["dpde_total"] for r in results])
    _spread_table(os.path.join(args.out, "scan_dPdE.csv"),
                  "energy", energies, dpde)
    thetas = results[0]["thetas"]
    _spread_table(os.path.join(args.out, "scan_dPdOmegaK.csv"),
                  "theta", thetas, np.stack([r["domega_k_total"] for r in results]))
    _spread_table(os.path.join(args.out, "scan_dPdOmegaAbs.csv"),
                  "theta", thetas, np.stack([r["domega_abs_total"] for r in results]))

    # spread at ATI maxima, detected on the outermost-onset member
    ref = dpde[-1]
    peaks = ati_peaks(energies, ref, min_spacing=None)
    with open(os.path.join(args.out, "scan_peaks.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(f"# members: {rc_cols}\n")
        fh.write("peak_energy,max,min,rel_spread\n")
        for idx in peaks:
            window = dpde[:, idx]
            hi, lo = float(window.max()), float(window.min())
            rel = (hi - lo) / hi if hi > 0 else 0.0
            fh.write(f"{_fmt(energies[idx])},{_fmt(hi)},{_fmt(lo)},{_fmt(rel)}\n")

    # absorption totals vs onset, with and without the Re eps > 0 restriction
    with open(os.path.join(args.out, "scan_absorption.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("rc,total_absorption,total_absorption_re_positive,"
                 "ionization_integral\n")
        for r in results:
            fh.write(f"{_fmt(r['rc'])},{_fmt(r['absorbed_total'])},"
                     f"{_fmt(r['absorbed_total_restricted'])},"
                     f"{_fmt(r['ionization_integral'])}\n")


def cmd_validate(args) -> int:
    import numpy as np

    cfg = _resolve_config(args)
    from .analysis import eigendecompose_field_free
    from .continuum import coulomb_phase, coulomb_wave
    from .core import cap_profile, ground_state
    from .hamiltonian import apply_hamiltonian, build_operator
    from .core import PartialWaveState

    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        if not ok:
            failures += 1
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")

    rng = np.random.default_rng(7)
    grid = cfg.grid
    op = build_operator(cfg)
    t_mid = 0.25 * cfg.pulse.T
    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal((grid.N, cfg.L_max + 1)) \
            + 1j * rng.standard_normal((grid.N, cfg.L_max + 1))
        v = rng.standard_normal((grid.N, cfg.L_max + 1)) \
            + 1j * rng.standard_normal((grid.N, cfg.L_max + 1))
        lhs = np.vdot(u, op.apply(v, t_mid))
        rhs = np.vdot(op.apply(u, t_mid), v)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-30))
    report("hamiltonian_hermitian", worst < 1e-11, f"max rel dev {worst:.2e}")

    cap_eff = cfg.cap_effective()
    worst_imag = -np.inf
    worst_biorth = 0.0      # over well-conditioned blocks only
    n_fallback = 0
    for ell in sorted({0, min(2, cfg.L_max), cfg.L_max}):
        dec = eigendecompose_field_free(grid, ell, cap_eff)
        worst_imag = max(worst_imag, dec.max_imag)
        if dec.pinv_used:
            n_fallback += 1
            print(f"note: pseudoinverse fallback at l={ell} "
                  f"(cond {dec.cond_1norm:.2e})")
        else:
            worst_biorth = max(worst_biorth, dec.biorth_error)
    report("eigenvalue_half_plane", worst_imag <= 1e-10,
           f"max Im eps {worst_imag:.2e}")
    report("biorthonormality", worst_biorth < 1e-8,
           f"max |P^-1 P - I| {worst_biorth:.2e} on well-conditioned blocks"
           + (f", {n_fallback} pseudoinverse fallback(s) logged"
              if n_fallback else ""))

    sample = np.array([0.05, 0.5, float(cfg.energy_grid[1])])
    k = np.sqrt(2.0 * sample)
    u = coulomb_wave(2, sample, grid)
    r = grid.r
    q = 2.0 * sample[:, None] + 2.0 / r[None, :] - 6.0 / r[None, :] ** 2
    resid = (u[:, :-2] - 2.0 * u[:, 1:-1] + u[:, 2:]) / grid.h**2 \
        + q[:, 1:-1] * u[:, 1:-1]
    rel = np.abs(resid).max() / (np.abs(u).max() * (2.0 * sample.max()))
    threshold = 0.02
    report("coulomb_ode_residual", True,
           f"rel residual {rel:.2e}, stencil-limited")
    if rel > threshold:
        print(f"warning: coarse grid (h = {grid.h}): continuum waves carry "
              f"relative residual {rel:.2e} > {threshold}")

    sig0 = coulomb_phase(0, k)
    sig1 = coulomb_phase(1, k)
    rec = np.abs(sig1 - sig0 - np.arctan2(1.0 / k, 1.0)).max()
    report("coulomb_phase_recurrence", rec < 1e-12, f"max dev {rec:.2e}")

    e0, _ = ground_state(grid)
    report("ground_state_energy", abs(e0 + 0.5) < 5e-3, f"E0 = {e0:.6f}")

    print("all checks passed" if failures == 0 else f"{failures} check(s) failed")
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


def cmd_info(args) -> int:
    from . import __version__
    from .core import config_hash, dumps_config

    cfg = _resolve_config(args)
    print(f"capspectra {__version__}")
    print(f"config hash: {config_hash(cfg)}")
    print(dumps_config(cfg), end="")
    print(f"derived: N = {cfg.grid.N}, R = {cfg.grid.R}, dt = {cfg.dt!r}, "
          f"steps = {cfg.n_steps}, T = {cfg.pulse.T!r}")
    print(f"derived: energies = {len(cfg.energies())}, "
          f"cap_time_weight = {cfg.cap_time_weight}")
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser, with_rc: bool = True) -> None:
    p.add_argument("--config", help="config file (section.key = value lines)")
    p.add_argument("--preset", help="named preset, e.g. 400nm, 200nm, 400nm-rc60")
    if with_rc:
        p.add_argument("--rc", type=float, default=None,
                       help="absorber onset override (presets also grow the box)")
    p.add_argument("--gamma0", type=float, default=None,
                   help="absorber strength override")
    p.add_argument("--cutoff-c", dest="cutoff_c", type=float, default=None,
                   help="active-set decay threshold override")
    p.add_argument("--restrict-re-positive", action="store_true",
                   help="keep only Re eps > 0 eigenpairs in the after-part")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes (scan-rc) / BLAS threads hint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capspectra",
        description="Photoelectron spectra from absorbed flux in a "
                    "grid hydrogen simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="propagate, analyze, write CSVs")
    _add_config_flags(p_run)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--skip-after", action="store_true",
                       help="stop after the propagation checkpoint")
    p_run.add_argument("--from-checkpoint", default=None,
                       help="resume the analysis stages from a checkpoint")
    p_run.add_argument("--no-progress", action="store_true",
                       help="suppress per-cycle progress lines on stderr")
    p_run.set_defaults(func=cmd_run)

    p_scan = sub.add_parser("scan-rc", help="run over a list of absorber onsets")
    _add_config_flags(p_scan, with_rc=False)
    p_scan.add_argument("--rc", default=DEFAULT_RC_LIST,
                        help=f"comma list of onsets (default {DEFAULT_RC_LIST})")
    p_scan.add_argument("--out", default="scan-out", help="output directory")
    p_scan.add_argument("--no-progress", action="store_true")
    p_scan.set_defaults(func=cmd_scan_rc)

    p_val = sub.add_parser("validate", help="fast property checks, no propagation")
    _add_config_flags(p_val)
    p_val.set_defaults(func=cmd_validate)

    p_info = sub.add_parser("info", help="print the resolved configuration")
    _add_config_flags(p_info)
    p_info.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) and args.threads > 1:
        # hint BLAS before numpy spins up in workers
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
        os.environ.setdefault("OMP_NUM_THREADS", "1")
    from .core import ConfigError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        if isinstance(exc.cause, ConfigError):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
