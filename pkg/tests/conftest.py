import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dissuade.experiments import run_batch  # noqa: E402
from dissuade.scenario import load_scenario_file  # noqa: E402
from dissuade.sensitivity import attribute_measure  # noqa: E402

REPO = Path(__file__).resolve().parent.parent
SCENARIO = REPO / "scenarios" / "appendix_b.cfg"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def scenario_path():
    return SCENARIO


@pytest.fixture(scope="session")
def default_spec():
    return load_scenario_file(SCENARIO)


class _Batches:
    def __init__(self, spec):
        self.spec = spec
        self._cache = {}

    def get(self, seed, n=1000):
        key = (seed, n)
        if key not in self._cache:
            self._cache[key] = run_batch(self.spec, n, seed, threads=1)
        return self._cache[key]


@pytest.fixture(scope="session")
def batches(default_spec):
    return _Batches(default_spec)


@pytest.fixture(scope="session")
def default_batch(batches):
    return batches.get(42)


class _Sensitivities:
    def __init__(self, batch):
        self.batch = batch
        self.seconds = {}
        self._cache = {}

    def get(self, measure):
        if measure not in self._cache:
            start = time.perf_counter()
            self._cache[measure] = attribute_measure(self.batch, measure, 64, threads=1)
            self.seconds[measure] = time.perf_counter() - start
        return self._cache[measure]


@pytest.fixture(scope="session")
def sensitivities(default_batch):
    return _Sensitivities(default_batch)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
