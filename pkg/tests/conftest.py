import numpy as np
import pytest

from signmfdfa import CascadeSpec, ReturnSeries, binomial_cascade

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def acceptance_log():
    """Record one line per acceptance criterion for the terminal summary."""

    def record(key: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[key] = (bool(ok), detail)
        print(f"{key} {'PASS' if ok else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def cascade16():
    return binomial_cascade(CascadeSpec(16, 0.75))


@pytest.fixture
def gaussian():
    def make(n, seed):
        return ReturnSeries.from_values(np.random.default_rng(seed).standard_normal(n))

    return make
