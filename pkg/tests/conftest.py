import numpy as np
import pytest

from klpf.model import StateSpaceModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scalar_model():
    return StateSpaceModel(A=[[0.9]], h=[1.0], W=[[1.0]], sigma_v2=1.0, P0=[[1.0]])


def ks_distance(samples, cdf):
    """One-sample Kolmogorov-Smirnov statistic against a vectorised CDF."""
    x = np.sort(samples)
    n = len(x)
    F = cdf(x)
    return max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))


ACCEPTANCE = []


def record_criterion(number, title, passed, detail, seconds, limit):
    """Log one acceptance line; the summary hook prints them all at the end."""
    in_time = seconds < limit
    ok = bool(passed) and in_time
    line = (f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} "
            f"[{seconds:.1f}s / limit {limit:.0f}s]")
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
