import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("dcm", max_examples=60, deadline=None)
settings.load_profile("dcm")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def complex_normal(rng, size=None, scale=1.0):
    return scale * (rng.normal(size=size) + 1j * rng.normal(size=size))


# ---- acceptance summary: one line per criterion --------------------------

_criteria = {}
_criterion_of = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            _criterion_of[item.nodeid] = mark.args[0]
            _criteria.setdefault(mark.args[0], True)


def pytest_runtest_logreport(report):
    n = _criterion_of.get(report.nodeid)
    if n is not None and (report.failed or (report.when == "call" and report.skipped)):
        _criteria[n] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if _criteria[n] else 'FAIL'}")
