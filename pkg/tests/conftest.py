import numpy as np
import pytest

from damper_twin.dataset import RawDataset
from damper_twin.plant import PlantParams, default_program, generate_program

ACCEPTANCE_LINES = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_data() -> RawDataset:
    return generate_program(default_program(), PlantParams(), seed=0)


def make_raw(deltas, run_ids=None, V=10.0, I=1.0) -> RawDataset:
    """Small valid dataset whose per-sample deltas are ``deltas``; the first
    delta of every run is forced to zero by construction."""
    deltas = np.asarray(deltas, dtype=float)
    n = len(deltas)
    run_ids = np.ones(n, dtype=int) if run_ids is None else np.asarray(run_ids)
    disp = np.empty(n)
    t = np.empty(n)
    for k in range(n):
        start = k == 0 or run_ids[k] != run_ids[k - 1]
        t[k] = 0.0 if start else t[k - 1] + 0.001
        disp[k] = 5.0 if start else disp[k - 1] + deltas[k]
    delta = np.where([k == 0 or run_ids[k] != run_ids[k - 1] for k in range(n)], 0.0, np.diff(disp, prepend=disp[0]))
    return RawDataset.from_columns(
        t=t, run_id=run_ids, V=np.full(n, V) if np.isscalar(V) else V,
        I=np.full(n, I) if np.isscalar(I) else I, displacement=disp, delta_displacement=delta,
    )
