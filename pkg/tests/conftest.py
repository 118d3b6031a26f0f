import numpy as np
import pytest

from drdam import _fallback
from drdam.backend import NAME


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


def compiled_kernels():
    if NAME != "compiled":
        return None
    from drdam import _kernels
    return _kernels


BACKENDS = [pytest.param(_fallback, id="python")]
if compiled_kernels() is not None:
    BACKENDS.append(pytest.param(compiled_kernels(), id="compiled"))


def cube(rng, n, D):
    """Points in [0, 1/sqrt(D)]^D."""
    return rng.uniform(0, 1 / np.sqrt(D), size=(n, D))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
