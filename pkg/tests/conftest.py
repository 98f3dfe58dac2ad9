import math

import pytest

from dedvpe.model import GeneratorUnit, SystemInstance


def make_toy(**kw):
    base = dict(id=1, alpha=100.0, beta=10.0, gamma=0.05, e=20.0, f=math.pi / 20,
                p_min=20.0, p_max=60.0, ramp_down=30.0, ramp_up=30.0)
    base.update(kw)
    return GeneratorUnit(**base)


@pytest.fixture
def toy():
    return make_toy()


@pytest.fixture
def toy_instance(toy):
    return SystemInstance((toy,), (37.0,), name="toy")


ACCEPTANCE = []


def record_acceptance(number: int, title: str, passed, detail: str) -> None:
    """``passed`` is True, False, or None for a criterion that was not run."""
    ACCEPTANCE.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {title} ({detail})")
