"""Shared fixtures: pipeline runs are expensive, so each test shape is run
once per session and its wall time recorded alongside the result."""

import time

import pytest

from hexcube import shapes
from hexcube.config import PipelineConfig
from hexcube.pipeline import cube_shell_maps, run_pipeline

# acceptance outcomes, filled by tests/test_acceptance.py
CRITERIA = {}


def record(number, passed, detail):
    CRITERIA[number] = (bool(passed), detail)
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def _timed_run(mesh, **settings):
    # a cold cache keeps the measured time honest
    cube_shell_maps.cache_clear()
    cfg = PipelineConfig(**settings)
    t0 = time.perf_counter()
    result = run_pipeline(cfg, mesh=mesh, write=False)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cube_run():
    return _timed_run(shapes.box(8), resolution=4)


@pytest.fixture(scope="session")
def ellipsoid_run():
    return _timed_run(shapes.ellipsoid((2.0, 1.0, 1.0), level=5), resolution=6)


@pytest.fixture(scope="session")
def peanut_run():
    return _timed_run(shapes.peanut(level=5), resolution=6)
