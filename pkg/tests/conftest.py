import math

import numpy as np
import pytest

from ladderlab.geometry import FlatTorus, RoundSphere, StandardStationaryMetric

TWO_PI = 2 * math.pi


@pytest.fixture
def torus2():
    return FlatTorus((TWO_PI, TWO_PI))


@pytest.fixture
def product_t2(torus2):
    return StandardStationaryMetric.product(torus2)


@pytest.fixture
def cosine_t2(torus2):
    return StandardStationaryMetric.cosine_lapse(torus2, 1.0, 0.2)


@pytest.fixture
def product_s3():
    return StandardStationaryMetric.product(RoundSphere(3, 1.0))


def lattice_frequencies(lengths, cutoff):
    """Brute-force |2 pi k / L| for every lattice point inside ``cutoff``."""
    L = np.asarray(lengths, float)
    kmax = [int(cutoff * l / TWO_PI) + 1 for l in L]
    axes = [np.arange(-k, k + 1) for k in kmax]
    K = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(L))
    w = np.sqrt((((TWO_PI / L) * K) ** 2).sum(1))
    return w[w <= cutoff]


ACCEPTANCE_LINES: list[str] = []


def report(tag: str, ok: bool, detail: str) -> bool:
    """Record and print one PASS/FAIL line; the lines are repeated in the terminal summary."""
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
