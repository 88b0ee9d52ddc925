import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spdewave.domain import l_shape, unit_square
from spdewave.grid import grid_coords
from spdewave.wavelet import build_basis

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def lshape():
    return l_shape()


@pytest.fixture(scope="session")
def square():
    return unit_square()


@pytest.fixture(scope="session")
def b4():
    return build_basis("cdf4.8")


@pytest.fixture(scope="session")
def b2():
    return build_basis("cdf2.4")


def sample(domain, func, J):
    """Masked grid samples of ``func`` on the domain's bounding square."""
    X, Y = grid_coords(J, domain.origin, domain.side)
    return domain.zeros(J).with_values(np.asarray(func(X, Y), float) * np.ones_like(X)).masked()


# --- acceptance reporting: one line per criterion, printed whether it passes or not ---

CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.call_report = rep


class Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""
        self.start = time.perf_counter()

    def note(self, text):
        self.detail = text


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    rec = Criterion(*marker.args)
    yield rec
    rep = getattr(request.node, "call_report", None)
    ok = rep is not None and rep.passed
    line = (f"criterion {rec.number:2d} {'PASS' if ok else 'FAIL'}  {rec.title}: {rec.detail}"
            f"  [{time.perf_counter() - rec.start:.1f} s]")
    CRITERIA.append((rec.number, line))
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
