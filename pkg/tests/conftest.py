import itertools

import numpy as np
import pytest

from geo_opt.portfolio import generate_synthetic_instance


def enumerate_amplitudes(tensors):
    """Amplitude of every bitstring by plain left-to-right matrix products."""
    n = len(tensors)
    out = {}
    for bits in itertools.product((0, 1), repeat=n):
        v = np.ones(1)
        for t, b in zip(tensors, bits):
            v = v @ t[:, b, :]
        out["".join(map(str, bits))] = float(v[0])
    return out


@pytest.fixture(scope="session")
def small_instance():
    return generate_synthetic_instance(8, 4, seed=3)


@pytest.fixture(scope="session")
def mid_instance():
    return generate_synthetic_instance(12, 6, seed=1)


CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)
