import numpy as np
import pytest

from poissonwf import (
    RngStream,
    build_observations,
    generate_measurements,
    generate_signal,
    sample_background,
)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], "PASS" if rep.passed else "FAIL", props.get("measured", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, status, measured in sorted(lines):
            terminalreporter.write_line(f"{status} {crit}: {measured}")


def make_instance(n, m, seed=0, alpha=(1.0, 1.0), eta=0.0, target=2.0):
    """(x, A, obs) with background alpha * clean and eta-scaled Poisson noise."""
    s = RngStream(seed)
    x = generate_signal(n, s.child(0))
    A = generate_measurements(x, m, target, s.child(1))
    b = sample_background(A.intensities(x), alpha[0], alpha[1], s.child(2))
    return x, A, build_observations(x, A, b, eta, s.child(3))


@pytest.fixture
def small():
    return make_instance(8, 64, seed=3, alpha=(0.5, 2.0), eta=0.1)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
