import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Recorder for one numbered acceptance criterion, reported at session end."""
    number = int(request.node.name.split("_")[2])
    state = {}

    def record(ok: bool, detail: str) -> bool:
        state["done"] = True
        _ACCEPTANCE[number] = (bool(ok), detail)
        return bool(ok)

    yield record
    if "done" not in state:
        _ACCEPTANCE[number] = (False, "did not complete")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
