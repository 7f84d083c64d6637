import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# property suites: fixed seed, at least 1000 cases each
settings.register_profile(
    "suite",
    max_examples=1000,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("suite")

_REPORT = []


class CriterionLog:
    def record(self, label: str, passed: bool, detail: str = "") -> None:
        _REPORT.append((label, passed, detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")


@pytest.fixture(scope="session")
def criterion():
    return CriterionLog()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _REPORT:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
