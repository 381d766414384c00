import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nematic import GridSpec, ModelParams

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("seeded", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("seeded" if os.environ.get("NEMATIC_SEED") else "default")

ORACLES = json.loads((Path(__file__).parent / "oracle_values.json").read_text())


@pytest.fixture
def oracle():
    return ORACLES


@pytest.fixture
def params():
    return ModelParams(1.0, 10.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(int(os.environ.get("NEMATIC_SEED", "0")))


@pytest.fixture
def small_grid():
    return GridSpec(16, 12.0)


ACCEPTANCE = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}")
