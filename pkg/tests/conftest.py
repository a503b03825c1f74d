import numpy as np
import pytest

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    _ACCEPTANCE.append((label, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[0].rstrip("ab"))):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
