import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from capspectra.core import (CapParams, PulseParams, RadialGrid,
                             SimulationConfig)

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# one line per acceptance criterion, printed after the test summary so
# the verdicts survive pytest's output capture
ACCEPTANCE_LINES: list[str] = []


def record_criterion(num: int, name: str, ok: bool, detail: str = "") -> bool:
    line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'}  {name}"
    if detail:
        line += f"  [{detail}]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_grid():
    # R = 12.2, big enough for the 1s orbital, tiny eigenproblems
    return RadialGrid(N=60, h=0.2)


@pytest.fixture(scope="session")
def mini_config():
    """Cheap but fully physical config: 2-cycle UV pulse in a 30-bohr box.

    Small enough that a propagation finishes in ~1 s, so end-to-end paths
    (hooks, ledger, closed-form analysis, CSV output) stay testable in the
    unit suite.
    """
    return SimulationConfig(
        grid=RadialGrid.from_box(0.2, 30.0),
        pulse=PulseParams(E0=0.1, omega=0.57, n_cycles=2),
        cap=CapParams(gamma0=1e-3, R_c=15.0),
        L_max=2,
        steps_per_cycle=200,
        analysis_stride=2,
        energy_grid=(0.05, 1.0, 0.01),
        theta_points=91,
        krylov_dim=12,
    )
