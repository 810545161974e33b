import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("pkg", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def slab_length(start, end, box):
    """Length of segment start->end inside the axis-aligned box (xmin, xmax, ymin, ymax)."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    d = end - start
    lo, hi = 0.0, 1.0
    for k, (bmin, bmax) in enumerate(((box[0], box[1]), (box[2], box[3]))):
        if d[k] == 0:
            if not bmin <= start[k] <= bmax:
                return 0.0
            continue
        a, b = (bmin - start[k]) / d[k], (bmax - start[k]) / d[k]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    return max(hi - lo, 0.0) * float(np.hypot(*d))


ACCEPTANCE = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
