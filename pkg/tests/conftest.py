import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tubecert import arc, build_chart, segment, spline

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WAVY = [(0.0, 0.0), (0.5, 0.3), (1.0, 0.1), (1.5, -0.2), (2.0, 0.0), (2.5, 0.25)]


@pytest.fixture(scope="session")
def seg_chart():
    return build_chart(segment([-1.0, 0.0], [1.0, 0.0]), 0.5)


@pytest.fixture(scope="session")
def arc_chart():
    # unit circle, counterclockwise from (1, 0); with shift=0 the point t = 0 is (1, 0)
    return build_chart(arc([0.0, 0.0], 1.0, 0.0, np.pi / 2, shift=0.0), 0.5)


@pytest.fixture(scope="session")
def mid_arc_chart():
    return build_chart(arc([0.0, 0.0], 1.0, 0.0, np.pi / 2), 0.5)


@pytest.fixture(scope="session")
def spline_chart():
    return build_chart(spline(WAVY), 0.5)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one status line per acceptance criterion."""
    def record(criterion, status, detail):
        if isinstance(status, (bool, np.bool_)):
            status = "PASS" if status else "FAIL"
        _ACCEPTANCE[criterion] = (status, detail)
        return status
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {status:<6} {detail}")
