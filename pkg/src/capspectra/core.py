"""Shared value types: radial grid, pulse, CAP profile, config, initial state.

Everything is in Hartree atomic units (hbar = m_e = e = a0 = 1). The wave
function is stored as a matrix of reduced radial partial waves f_l(r_i),
one column per l, on a uniform grid r_i = i*h with Dirichlet boundaries
at r = 0 and r = R = (N+1)*h.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "RadialGrid",
    "PartialWaveState",
    "PulseParams",
    "CapParams",
    "SimulationConfig",
    "ConfigError",
    "vector_potential",
    "cap_profile",
    "ground_state",
    "load_config",
    "parse_config",
    "dumps_config",
    "config_hash",
    "checkpoint_hash",
    "preset_config",
    "PRESETS",
]


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values, or violated invariants."""


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid with N interior points, spacing h, box size R.

    r_i = i*h for i = 1..N and R = (N+1)*h exactly; reduced radial
    functions are implicitly zero at r = 0 and r = R.
    """

    N: int
    h: float

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("grid needs at least two interior points")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def R(self) -> float:
        return (self.N + 1) * self.h

    @property
    def r(self) -> np.ndarray:
        return self.h * np.arange(1, self.N + 1)

    @staticmethod
    def from_box(h: float, R: float) -> "RadialGrid":
        """Grid from spacing and requested box size; R snaps to (N+1)*h."""
        if h <= 0 or R <= 0:
            raise ValueError("h and R must be positive")
        N = int(round(R / h)) - 1
        return RadialGrid(N=N, h=h)


@dataclass
class PartialWaveState:
    """Reduced radial partial waves f_l(r_i; t) as an N x (L+1) complex matrix.

    Column l holds f_l; the full wave function is (1/r) sum_l f_l Y_{l,m}.
    m is fixed (only m = 0 is exercised: linear polarization from an s state).
    """

    grid: RadialGrid
    data: np.ndarray
    m: int = 0
    t: float = 0.0

    @property
    def L(self) -> int:
        return self.data.shape[1] - 1

    def norm_sq(self) -> float:
        return float(self.grid.h * np.sum(np.abs(self.data) ** 2))

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def copy(self) -> "PartialWaveState":
        return PartialWaveState(self.grid, self.data.copy(), self.m, self.t)

    @staticmethod
    def zeros(grid: RadialGrid, L: int, m: int = 0, t: float = 0.0) -> "PartialWaveState":
        return PartialWaveState(grid, np.zeros((grid.N, L + 1), dtype=complex), m, t)


@dataclass(frozen=True)
class PulseParams:
    """sin^2-envelope vector potential along z, compact support on [0, T]."""

    E0: float
    omega: float
    n_cycles: int

    def __post_init__(self):
        if self.E0 < 0 or self.omega <= 0 or self.n_cycles < 1:
            raise ValueError("invalid pulse parameters")

    @property
    def T(self) -> float:
        return self.n_cycles * 2.0 * math.pi / self.omega

    @property
    def cycle(self) -> float:
        return 2.0 * math.pi / self.omega


@dataclass(frozen=True)
class CapParams:
    """Quadratic complex absorbing potential gamma(r) = gamma0*(r - R_c)^2 for r > R_c."""

    gamma0: float
    R_c: float

    def __post_init__(self):
        if self.gamma0 < 0 or self.R_c <= 0:
            raise ValueError("invalid CAP parameters")

    def scaled(self, factor: float) -> "CapParams":
        return CapParams(self.gamma0 * factor, self.R_c)


def vector_potential(t, pulse: PulseParams):
    """A(t) = (E0/omega) sin^2(pi t/T) cos(omega t) on 0 <= t <= T, else 0."""
    t = np.asarray(t, dtype=float)
    T = pulse.T
    inside = (t > 0.0) & (t < T)
    a = np.zeros_like(t)
    ti = t[inside] if t.ndim else (t if inside else None)
    if t.ndim == 0:
        if not inside:
            return 0.0
        return float(
            pulse.E0 / pulse.omega * math.sin(math.pi * t / T) ** 2 * math.cos(pulse.omega * t)
        )
    a[inside] = pulse.E0 / pulse.omega * np.sin(np.pi * ti / T) ** 2 * np.cos(pulse.omega * ti)
    return a


def cap_profile(r, cap: CapParams):
    """gamma(r): zero up to R_c, gamma0*(r - R_c)^2 beyond."""
    r = np.asarray(r, dtype=float)
    out = np.where(r > cap.R_c, cap.gamma0 * (r - cap.R_c) ** 2, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def ground_state(grid: RadialGrid, L: int = 0) -> tuple[float, PartialWaveState]:
    """Hydrogen 1s on the grid: lowest eigenvector of the Hermitian l=0 block.

    Returns (energy, state) with the eigenvector in column l=0, unit norm
    under the h-weighted inner product, and a positive-mean sign convention.
    """
    from scipy.linalg import eigh_tridiagonal

    r = grid.r
    h = grid.h
    main = 1.0 / h**2 - 1.0 / r
    off = np.full(grid.N - 1, -0.5 / h**2)
    vals, vecs = eigh_tridiagonal(main, off, select="i", select_range=(0, 0))
    psi = vecs[:, 0]
    if psi.sum() < 0:
        psi = -psi
    psi = psi / (math.sqrt(h) * np.linalg.norm(psi))
    state = PartialWaveState.zeros(grid, L)
    state.data[:, 0] = psi
    return float(vals[0]), state


# ---------------------------------------------------------------------------
# Configuration

_DEFAULTS = {
    "grid.h": 0.2,
    "grid.R": 150.0,
    "pulse.E0": 0.075,
    "pulse.omega": 0.114,
    "pulse.n_cycles": 10,
    "cap.gamma0": 1e-4,
    "cap.R_c": 60.0,
    "waves.L_max": 12,
    "time.steps_per_cycle": 1000,
    "time.analysis_stride": 5,
    "energy.min": 0.01,
    "energy.max": 1.5,
    "energy.step": 1e-3,
    "angles.theta_points": 721,
    "krylov.dim": 20,
    "after.cutoff_c": 1e-12,
    "after.restrict_re_positive": False,
    "split.halved_cap": False,
}

_INT_KEYS = {
    "pulse.n_cycles",
    "waves.L_max",
    "time.steps_per_cycle",
    "time.analysis_stride",
    "angles.theta_points",
    "krylov.dim",
}
_BOOL_KEYS = {"after.restrict_re_positive", "split.halved_cap"}


@dataclass(frozen=True)
class SimulationConfig:
    """Full run description. Built from a key-value document, see load_config."""

    grid: RadialGrid
    pulse: PulseParams
    cap: CapParams
    L_max: int = 12
    steps_per_cycle: int = 1000
    analysis_stride: int = 5
    energy_grid: tuple[float, float, float] = (0.01, 1.5, 1e-3)
    theta_points: int = 721
    krylov_dim: int = 20
    cutoff_c: float = 1e-12
    restrict_re_positive: bool = False
    halved_cap: bool = False

    def __post_init__(self):
        if self.L_max < 0:
            raise ValueError("L_max must be non-negative")
        if self.steps_per_cycle < 1 or self.analysis_stride < 1:
            raise ValueError("step counts must be positive")
        emin, emax, estep = self.energy_grid
        if not (0 < emin < emax) or estep <= 0:
            raise ValueError("energy grid must satisfy 0 < min < max, step > 0")
        if self.theta_points < 2:
            raise ValueError("theta_points must be at least 2")
        if self.krylov_dim < 2:
            raise ValueError("krylov_dim must be at least 2")
        if self.cutoff_c < 0:
            raise ValueError("cutoff_c must be non-negative")
        if not (0 < self.cap.R_c < self.grid.R):
            raise ValueError("CAP onset must lie inside the box")

    @property
    def dt(self) -> float:
        return self.pulse.cycle / self.steps_per_cycle

    @property
    def n_steps(self) -> int:
        return self.pulse.n_cycles * self.steps_per_cycle

    @property
    def cap_time_weight(self) -> float:
        """Effective CAP multiplier realized by the split-operator stepping.

        The default stepping applies exp(-gamma*dt) on both sides of each
        Hermitian substep, so the simulated dynamics carries an effective
        absorber of 2*gamma(r); every analysis quantity uses the same
        effective strength. With halved_cap the conventional exp(-gamma*dt/2)
        factors are used and the multiplier is 1.
        """
        return 1.0 if self.halved_cap else 2.0

    def cap_effective(self) -> CapParams:
        return self.cap.scaled(self.cap_time_weight)

    def energies(self) -> np.ndarray:
        emin, emax, estep = self.energy_grid
        n = int(math.floor((emax - emin) / estep + 0.5)) + 1
        return emin + estep * np.arange(n)

    def thetas(self) -> np.ndarray:
        return np.linspace(0.0, math.pi, self.theta_points)


def _parse_value(key: str, raw: str, lineno: int):
    raw = raw.strip()
    try:
        if key in _BOOL_KEYS:
            lw = raw.lower()
            if lw in ("true", "1", "yes"):
                return True
            if lw in ("false", "0", "no"):
                return False
            raise ValueError("expected boolean")
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r} ({exc})") from None


def parse_config(text: str) -> SimulationConfig:
    """Parse a `section.key = value` document; '#' starts a comment."""
    values = dict(_DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in values:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, lineno)
    return _config_from_values(values)


def _config_from_values(values: dict) -> SimulationConfig:
    def positive(key):
        v = values[key]
        if v <= 0:
            raise ConfigError(f"{key} must be positive, got {v}")
        return v

    try:
        grid = RadialGrid.from_box(positive("grid.h"), positive("grid.R"))
        pulse = PulseParams(
            E0=float(values["pulse.E0"]),
            omega=positive("pulse.omega"),
            n_cycles=int(positive("pulse.n_cycles")),
        )
        cap = CapParams(gamma0=float(values["cap.gamma0"]), R_c=positive("cap.R_c"))
        return SimulationConfig(
            grid=grid,
            pulse=pulse,
            cap=cap,
            L_max=int(values["waves.L_max"]),
            steps_per_cycle=int(positive("time.steps_per_cycle")),
            analysis_stride=int(positive("time.analysis_stride")),
            energy_grid=(
                positive("energy.min"),
                positive("energy.max"),
                positive("energy.step"),
            ),
            theta_points=int(positive("angles.theta_points")),
            krylov_dim=int(positive("krylov.dim")),
            cutoff_c=float(values["after.cutoff_c"]),
            restrict_re_positive=bool(values["after.restrict_re_positive"]),
            halved_cap=bool(values["split.halved_cap"]),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path_or_text) -> SimulationConfig:
    """Load a config from a file path, or parse directly if given text."""
    import os

    text = path_or_text
    if isinstance(path_or_text, (str, bytes, os.PathLike)):
        try:
            is_file = os.path.exists(path_or_text)
        except (TypeError, ValueError):
            is_file = False
        if is_file:
            with open(path_or_text, "r", encoding="utf-8") as fh:
                text = fh.read()
        elif isinstance(path_or_text, str) and ("=" in path_or_text or not path_or_text.strip()):
            text = path_or_text
        else:
            raise ConfigError(f"no such config file: {path_or_text!r}")
    return parse_config(text)


def dumps_config(config: SimulationConfig) -> str:
    """Canonical serialization; parse(dumps(c)) == c."""
    emin, emax, estep = config.energy_grid
    values = {
        "grid.h": config.grid.h,
        "grid.R": config.grid.R,
        "pulse.E0": config.pulse.E0,
        "pulse.omega": config.pulse.omega,
        "pulse.n_cycles": config.pulse.n_cycles,
        "cap.gamma0": config.cap.gamma0,
        "cap.R_c": config.cap.R_c,
        "waves.L_max": config.L_max,
        "time.steps_per_cycle": config.steps_per_cycle,
        "time.analysis_stride": config.analysis_stride,
        "energy.min": emin,
        "energy.max": emax,
        "energy.step": estep,
        "angles.theta_points": config.theta_points,
        "krylov.dim": config.krylov_dim,
        "after.cutoff_c": config.cutoff_c,
        "after.restrict_re_positive": config.restrict_re_positive,
        "split.halved_cap": config.halved_cap,
    }
    lines = []
    for key in _DEFAULTS:
        v = values[key]
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, int):
            s = str(v)
        else:
            s = repr(float(v))
        lines.append(f"{key} = {s}")
    return "\n".join(lines) + "\n"


def config_hash(config: SimulationConfig) -> str:
    """Short digest of the canonical serialization; keys run provenance."""
    return hashlib.sha256(dumps_config(config).encode()).hexdigest()[:12]


# Keys that only steer post-processing.  A checkpoint (final state plus
# accumulated flux integrals) is still valid when these change, so the
# checkpoint guard hashes the serialization with them removed.  Energy
# grid and stride stay in: the accumulated arrays depend on both.
_POST_KEYS = ("angles.theta_points", "after.cutoff_c",
              "after.restrict_re_positive")


def checkpoint_hash(config: SimulationConfig) -> str:
    """Digest of the propagation-relevant config subset."""
    lines = [ln for ln in dumps_config(config).splitlines(keepends=True)
             if ln.split(" = ")[0] not in _POST_KEYS]
    return hashlib.sha256("".join(lines).encode()).hexdigest()[:12]


# Named parameter sets from the two wavelengths studied: a 400 nm pulse
# (omega = 0.114, E0 = 0.075, 10 cycles, L = 12) and a 200 nm pulse
# (omega = 0.228, E0 = 0.1, 10 cycles, L = 7).
PRESETS = {
    "400nm": {
        "pulse.E0": 0.075,
        "pulse.omega": 0.114,
        "pulse.n_cycles": 10,
        "waves.L_max": 12,
    },
    "200nm": {
        "pulse.E0": 0.1,
        "pulse.omega": 0.228,
        "pulse.n_cycles": 10,
        "waves.L_max": 7,
    },
}


def default_box_for_rc(r_c: float) -> float:
    """Box size rule: R = 150 unless the CAP window would be thinner than
    50 bohr, in which case the box grows to R_c + 80 (the R = 200 choice
    used for R_c = 120)."""
    if 150.0 - r_c < 50.0:
        return r_c + 80.0
    return 150.0


def preset_config(name: str, **overrides) -> SimulationConfig:
    """Build a preset config. Names: '400nm', '200nm', optionally with an
    '-rcNN' suffix fixing the CAP onset, e.g. '400nm-rc60'."""
    base = name
    r_c = None
    if "-rc" in name:
        base, _, tail = name.partition("-rc")
        try:
            r_c = float(tail)
        except ValueError:
            raise ConfigError(f"bad preset CAP onset in {name!r}") from None
    if base not in PRESETS:
        raise ConfigError(f"unknown preset {base!r} (have: {', '.join(sorted(PRESETS))})")
    values = dict(_DEFAULTS)
    values.update(PRESETS[base])
    if r_c is not None:
        values["cap.R_c"] = r_c
        values["grid.R"] = default_box_for_rc(r_c)
    for key, val in overrides.items():
        if key not in values:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val
    return _config_from_values(values)
