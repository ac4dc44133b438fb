from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from qerlab.errors import GeometryError
from qerlab.geometry import EuclideanCircle, Segment
from qerlab.restriction import (
    CurveTrace,
    l2_on_curve,
    matrix_element,
    matrix_elements,
    parseval_gap,
    quantize_on_curve,
    trace_on_curve,
)
from qerlab.symbols import Multiplication, Separable, Symbol, constant

from conftest import MIDLINE, X0, X1, sin2_integral, square_mode


def test_mode_labels_match_eigenvalues(square_batch):
    batch, _ = square_batch
    for j in range(batch.m):
        m, n = square_mode(batch, j)
        assert batch.eigenvalues[j] == pytest.approx(math.pi ** 2 * (m * m + n * n), rel=5e-3)


def test_square_midline_traces(square_batch):
    batch, _ = square_batch
    for j in range(batch.m):
        m, n = square_mode(batch, j)
        t = trace_on_curve(batch, MIDLINE, j)
        x = X0 + t.s
        ref = 2 * np.sin(m * np.pi * x) * np.sin(n * np.pi / 2)
        err = min(np.abs(t.values - ref).max(), np.abs(t.values + ref).max())
        assert err < 1e-3
        if n % 2 == 0:
            assert l2_on_curve(t) <= 1e-5
        else:
            assert l2_on_curve(t) == pytest.approx(sin2_integral(m), abs=1e-3)


def test_square_multiplication_matrix_elements(square_batch):
    batch, _ = square_batch
    V = Multiplication(lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / MIDLINE.length), sup_norm=1.5)
    for j in range(batch.m):
        m, n = square_mode(batch, j)
        if n % 2 == 0:
            continue
        ref, _ = quad(lambda x: 4 * math.sin(m * math.pi * x) ** 2 * V.V(x - X0), X0, X1, limit=200)
        rec = matrix_element(V, batch, MIDLINE, j)
        assert rec.value == pytest.approx(ref, abs=1e-3)
        assert abs(rec.imag) <= 1e-10


def test_constant_symbol_gives_the_norm(square_batch):
    batch, _ = square_batch
    for j in range(0, batch.m, 3):
        t = trace_on_curve(batch, MIDLINE, j)
        rec = matrix_element(constant(1.0), batch, MIDLINE, j, trace=t)
        assert rec.value == pytest.approx(l2_on_curve(t), abs=1e-12)
        assert rec.norm2 == pytest.approx(l2_on_curve(t), abs=1e-12)


def test_constant_function_traces_to_a_constant(square_batch):
    batch, _ = square_batch
    t = trace_on_curve(batch, MIDLINE, 0)
    c = t.with_values(np.full(t.n_s, 2.5))
    assert l2_on_curve(c) == pytest.approx(6.25 * MIDLINE.length, rel=1e-12)
    q = quantize_on_curve(constant(1.0), c)
    assert np.allclose(q.trace.values, 2.5, atol=1e-12)


def test_plane_wave_is_a_fourier_eigenfunction():
    L = 2 * math.pi * 0.3
    n_s, lam = 256, 40.0
    s = L * np.arange(n_s) / n_s
    g = lambda sg: 1 + sg + 3 * sg * sg
    for k in (0, 1, 7, -5):
        xi = 2 * math.pi * k / L
        u = np.exp(1j * xi * s)
        t = CurveTrace(0, lam, s, u, L, True)
        out = quantize_on_curve(Separable(1.0, g), t).trace.values
        assert np.abs(out - g(xi / lam) * u).max() < 1e-8


def test_parseval_on_closed_curve(square_batch):
    batch, _ = square_batch
    C = EuclideanCircle((0.5, 0.5), 0.3)
    for j in range(0, batch.m, 4):
        assert parseval_gap(trace_on_curve(batch, C, j)) < 1e-10
    with pytest.raises(ValueError):
        parseval_gap(trace_on_curve(batch, MIDLINE, 0))


def test_clearance_and_resolution_guards(square_batch):
    batch, _ = square_batch
    with pytest.raises(GeometryError):
        trace_on_curve(batch, Segment((0.0, 0.5), (1.0, 0.5)), 0)
    lam = batch.frequencies[-1]
    too_few = int(7 * lam * MIDLINE.length / (2 * math.pi))
    with pytest.raises(ValueError):
        trace_on_curve(batch, MIDLINE, batch.m - 1, too_few)


def test_resolution_doubling_is_converged(square_batch):
    batch, _ = square_batch
    a = Separable(lambda s: 1 + 0.3 * s, lambda sg: 1 - sg * sg, sup_norm=1.3)
    for j in range(0, batch.m, 2):
        t = trace_on_curve(batch, MIDLINE, j)
        fine = trace_on_curve(batch, MIDLINE, j, 2 * t.n_s - 1)
        v1 = matrix_element(a, batch, MIDLINE, j, trace=t).value
        v2 = matrix_element(a, batch, MIDLINE, j, trace=fine).value
        assert abs(v1 - v2) <= 1e-3 * max(abs(v2), 1e-3)


class _Combination(Symbol):
    """2a - 3b with no separable structure, so the full Kohn-Nirenberg sum is used."""

    name = "combo"

    def __init__(self, a, b):
        self.a, self.b = a, b

    def __call__(self, s, sigma):
        return 2 * self.a(s, sigma) - 3 * self.b(s, sigma)


def test_quantization_is_linear(square_batch):
    batch, _ = square_batch
    a = Separable(lambda s: np.cos(3 * s), lambda sg: sg, name="a")
    b = Separable(1.0, lambda sg: sg * sg, name="b")
    for j in (3, 11, 20):
        t = trace_on_curve(batch, MIDLINE, j)
        qa = quantize_on_curve(a, t).trace.values
        qb = quantize_on_curve(b, t).trace.values
        qs = quantize_on_curve(_Combination(a, b), t).trace.values
        assert np.abs(qs - (2 * qa - 3 * qb)).max() < 1e-9


def test_nonnegative_symbol_is_almost_positive(square_batch):
    batch, _ = square_batch
    a = Separable(lambda s: 1 + 0.9 * np.cos(5 * s), lambda sg: sg * sg, sup_norm=1.9)
    recs = matrix_elements([a], batch, MIDLINE)[a.name]
    assert min(r.value for r in recs) >= -0.05 * a.sup_norm


@pytest.mark.slow
def test_odd_symbol_cesaro_mean_vanishes(stadium_batch, chord):
    batch, _ = stadium_batch
    odd = Separable(1.0, lambda sg: sg, sup_norm=1.0, name="sigma")
    recs = matrix_elements([odd, constant(1.0)], batch, chord)
    vals = np.array([r.value for r in recs["sigma"]])
    norms = np.array([r.value for r in recs[constant(1.0).name]])
    assert abs(vals.mean()) < 0.05 * norms.mean()
