import numpy as np
import pytest

from gfcap.quadrature import FrequencyGrid


@pytest.fixture(scope="session")
def grid():
    return FrequencyGrid(4096)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model(rng, k, bound=0.8):
    from gfcap.spectra import ArmaModel

    return ArmaModel(
        tuple(rng.uniform(-bound, bound, k)), tuple(rng.uniform(-bound, bound, k))
    )


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(number, ok, detail)``."""

    def _record(number, ok, detail):
        ACCEPTANCE_LINES.append((number, bool(ok), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda e: e[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
