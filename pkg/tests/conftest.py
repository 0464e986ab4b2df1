from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from varest.population import (
    BivariatePopulation,
    derive_params,
    params_from_mapping,
    synthetic_population,
    theta,
)

DATA = Path(__file__).resolve().parent.parent / "data"

APPLE = {
    "N": 104,
    "n": 20,
    "S_y": 11.669964,
    "S_x": 23029.072,
    "C_y": 1.866,
    "C_x": 1.653,
    "rho_yx": 0.865,
    "C_yx": 2.668,
    "beta2_y": 16.523,
    "beta2_x": 17.516,
    "lambda22": 14.398,
}


@pytest.fixture
def apple_file() -> Path:
    return DATA / "apple.json"


@pytest.fixture
def tiny_file() -> Path:
    return DATA / "tiny.csv"


@pytest.fixture
def apple():
    return params_from_mapping(APPLE)


@pytest.fixture
def apple_theta():
    return theta(20, 104)


@pytest.fixture
def tiny():
    return BivariatePopulation([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])


@pytest.fixture
def tiny_params(tiny):
    return derive_params(tiny)


@pytest.fixture(scope="session")
def synth():
    return synthetic_population(N=10_000, seed=20240601)


@pytest.fixture(scope="session")
def synth_params(synth):
    return derive_params(synth)


def random_population(rng: np.random.Generator, N: int) -> BivariatePopulation:
    """Small positive population with a random linear+noise relation."""
    x = rng.gamma(2.0, 2.0, size=N) + 1.0
    y = rng.uniform(0.2, 3.0) * x + rng.gamma(2.0, 1.0, size=N) + 0.5
    return BivariatePopulation(y, x)


# ---------------------------------------------------------------------------
# acceptance reporting: tests marked ``criterion(k, text)`` get one summary line
# ---------------------------------------------------------------------------

_CRITERIA: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        key = f"{mark.args[0]}"
        entry = _CRITERIA.setdefault(key, [mark.args[1], True, []])
        if not rep.passed:
            entry[1] = False
            entry[2].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (len(k), k)):
        text, ok, failed = _CRITERIA[key]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {text}"
        if failed:
            line += f"  (failing: {', '.join(failed)})"
        terminalreporter.write_line(line)
