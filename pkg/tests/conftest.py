import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

# pure-Python crypto is slow; bound example counts instead of wall time
settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

KAT_DIR = Path(__file__).parent / "kat"
REPO = Path(__file__).resolve().parent.parent
SCENARIOS = REPO / "scenarios"


@pytest.fixture
def kat_dir() -> Path:
    return KAT_DIR


def seq(n: int) -> bytes:
    return bytes(i & 0xFF for i in range(n))


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}")
