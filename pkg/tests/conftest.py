import pytest

from jetflow.scheme import Knobs, SchemeParams, StepOptions, baseline_flow, run_iteration_step
from jetflow.spectral import Grid

SMOKE_KNOBS = Knobs(1, 8, 8, 16, 16)


@pytest.fixture(scope="session")
def smoke_run():
    """One full step at the small default knobs on a 256^2 grid (about 20 s)."""
    grid = Grid(256)
    flow = baseline_flow(grid)
    params = SchemeParams(knobs=SMOKE_KNOBS)
    opt = StepOptions(coarse=8, per_component=8, nsr_extra_steps=(2e-6, 4e-6))
    return run_iteration_step(params, flow, grid, opt)


# pass/fail line per acceptance criterion, printed after the run
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
