from __future__ import annotations

import math

import numpy as np
import pytest

from qerlab.geometry import HyperbolicQuotient, Segment, StadiumBilliard, UnitSquareBilliard
from qerlab.restriction import matrix_elements
from qerlab.spectral import compute_spectrum
from qerlab.symbols import Multiplication, Separable, constant

ACCEPTANCE_LINES: list[str] = []

STADIUM_H = 1.0 / 64
STADIUM_MODES = 300

# inset midline: the spline stencil needs 2h clearance from the walls
X0, X1 = 0.05, 0.95
MIDLINE = Segment((X0, 0.5), (X1, 0.5), name="midline")


def _sign_changes(v):
    v = v[np.abs(v) > 1e-9 * np.abs(v).max()]
    return int(np.sum(np.sign(v[1:]) != np.sign(v[:-1])))


def square_mode(batch, j):
    """(m, n) of a separable square eigenvector from its nodal counts."""
    U, _, Vt = np.linalg.svd(batch.grid_function(j))
    return _sign_changes(Vt[0]) + 1, _sign_changes(U[:, 0]) + 1


def sin2_integral(m, a=X0, b=X1):
    """int_a^b 4 sin^2(m pi x) dx."""
    return 2 * (b - a) - (math.sin(2 * m * math.pi * b) - math.sin(2 * m * math.pi * a)) / (m * math.pi)


@pytest.fixture(scope="session")
def stadium():
    return StadiumBilliard(1.0, 1.0)


@pytest.fixture(scope="session")
def square():
    return UnitSquareBilliard()


@pytest.fixture(scope="session")
def modular():
    return HyperbolicQuotient("modular")


@pytest.fixture(scope="session")
def free_plane():
    return HyperbolicQuotient("free")


@pytest.fixture(scope="session")
def axis():
    return Segment((0.0, -0.9), (0.0, 0.9), name="axis")


@pytest.fixture(scope="session")
def chord():
    return Segment((0.2, -0.5), (0.5, 0.7), name="chord")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def stadium_batch(stadium):
    batch, A = compute_spectrum(stadium, STADIUM_H, STADIUM_MODES)
    return batch, A


@pytest.fixture(scope="session")
def square_batch(square):
    batch, A = compute_spectrum(square, 1.0 / 128, 24)
    return batch, A


@pytest.fixture(scope="session")
def stadium_symbols(chord):
    """a = 1, a = V(s) and a = sigma V(s) on the chord."""
    L = chord.length
    V = Multiplication(lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / L), sup_norm=1.5, name="V")
    sV = Separable(V.V, lambda sg: sg, sup_norm=1.5, name="sigmaV")
    return {"one": constant(1.0), "V": V, "sigmaV": sV}


@pytest.fixture(scope="session")
def stadium_records(stadium_batch, axis, chord, stadium_symbols):
    """Matrix-element records of the shared stadium batch on both curves."""
    batch, _ = stadium_batch
    syms = list(stadium_symbols.values())
    return {"axis": matrix_elements(syms[:1], batch, axis),
            "chord": matrix_elements(syms, batch, chord)}


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
