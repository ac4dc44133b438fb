from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qerlab.dynamics import crossings_window, sample_liouville, sample_section
from qerlab.geometry import PhasePoint, Segment
from qerlab.symbols import (
    DELTA,
    Multiplication,
    Separable,
    Tabulated,
    bound_constant,
    chi,
    chi_bar,
    chi_cumulative,
    constant,
    cutoff_norm,
    cutoff_tan,
    double_avg_symbol,
    gamma,
    gamma_full,
    liouville_mean,
    min_eps,
    omega,
    piecewise_cubic,
    psi,
    section_weight,
    time_avg_details,
    time_avg_flowed,
    time_avg_symbol,
    window_integral,
)

EPS = 0.01


def test_gamma_examples():
    assert gamma(0.0) == 1.0
    assert gamma(0.6) == pytest.approx(0.8)
    assert gamma_full(3.0, 4.0) == pytest.approx(0.8)


def test_cutoff_examples():
    H = Segment((0, 0), (1, 0), flip=True)
    assert cutoff_tan(H, PhasePoint(0.5, 0.0, 1.0, 0.0), 0.1) == 1.0
    assert cutoff_norm(H, PhasePoint(0.5, 0.0, 0.0, 1.0), 0.1) == 1.0
    eps = 0.1
    eta = math.sqrt(eps)
    p = PhasePoint(0.5, 0.0, math.sqrt(1 - eta * eta), eta)
    assert cutoff_tan(H, p, eps) == pytest.approx(0.0, abs=1e-12)
    assert cutoff_tan(H, PhasePoint(0.5, 0.3, 1.0, 0.0), eps, collar=0.2) == 0.0


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-2, 2), eps=st.floats(0.01, 0.9))
def test_psi_plateau_and_support(x, eps):
    v = float(psi(x, eps))
    assert 0.0 <= v <= 1.0
    if abs(x) <= eps / 2:
        assert v == 1.0
    if abs(x) >= eps:
        assert v == 0.0


def test_chi_profile():
    total, _ = quad(lambda t: float(chi(t)), -1.5, 1.5, points=[-1.1, -0.9, 0.9, 1.1])
    assert total == pytest.approx(1.0, abs=1e-10)
    assert float(chi(1 + DELTA + 1e-9)) == 0.0 and float(chi(-1 - DELTA - 1e-9)) == 0.0
    for x in (-1.05, -0.3, 0.95, 1.05):
        ref, _ = quad(lambda t: float(chi(t)), -2, x, points=[-1.1, -0.9, 0.9, 1.1])
        assert float(chi_cumulative(x)) == pytest.approx(ref, abs=1e-10)
    # (1/T) int_a^b chi(t/T) dt
    assert float(window_integral(-50, 50, 10.0)) == pytest.approx(1.0)
    ref, _ = quad(lambda t: float(chi(t / 10.0)) / 10.0, 3.0, 10.5, points=[9.0, 11.0])
    assert float(window_integral(3.0, 10.5, 10.0)) == pytest.approx(ref, abs=1e-10)


def test_omega_constant_is_length_over_area(stadium):
    H = Segment((0, -0.5), (0, 0.5))
    assert omega(constant(1.0), stadium, H) == pytest.approx(1 / (4 + math.pi), rel=1e-10)
    assert omega(constant(1.0), stadium, H) == pytest.approx(0.1400248, abs=1e-7)


def test_omega_multiplication_and_odd(stadium, chord):
    L = chord.length
    V = Multiplication(lambda s: (s / L) ** 2, sup_norm=1.0)
    assert omega(V, stadium, chord) == pytest.approx(L / 3 / stadium.area, rel=1e-10)
    odd = Separable(V.V, lambda sg: sg, sup_norm=1.0)
    assert abs(omega(odd, stadium, chord)) < 1e-13


def test_omega_linear_and_monotone_in_eps(stadium, chord):
    a = Multiplication(lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / chord.length), sup_norm=1.5)
    b = Separable(1.0, lambda sg: sg * sg, sup_norm=1.0)
    combo = Separable(lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / chord.length),
                      lambda sg: 2 - 3 * sg * sg)
    assert omega(combo, stadium, chord) == pytest.approx(
        2 * omega(a, stadium, chord) - 3 * omega(Separable(a.V, lambda sg: sg * sg), stadium, chord),
        rel=1e-9)
    assert omega(b, stadium, chord) >= 0
    w1 = omega(constant(1.0), stadium, chord)
    ws = [omega(constant(1.0), stadium, chord, e) for e in (0.2, 0.1, 0.05, 0.02)]
    assert ws == sorted(ws) and ws[-1] < w1
    assert w1 - ws[-1] < w1 - ws[0]


def test_eps_below_band_is_rejected(stadium, chord, rng):
    p = sample_liouville(stadium, 1, rng)[0]
    with pytest.raises(ValueError):
        time_avg_symbol(constant(1.0), stadium, chord, p, 5.0, 0.5 * min_eps())


def test_orbit_without_impacts_averages_to_zero(stadium):
    H = Segment((0.2, -0.5), (0.5, 0.7))
    p = PhasePoint(-1.5, 0.0, -1.0, 0.0)  # far from H, heading away
    r = time_avg_details(constant(1.0), stadium, H, p, 0.1, EPS)
    assert r.impacts == 0 and r.value == 0.0


def test_time_average_matches_explicit_sum(stadium, chord, rng):
    a = Separable(lambda s: 1 + s, lambda sg: 1 + sg, sup_norm=5.0)
    T = 6.0
    for p in sample_liouville(stadium, 20, rng):
        imp = crossings_window(stadium, chord, p, -(1 + DELTA) * T, (1 + DELTA) * T)
        ref = sum(float(section_weight(a, c.s, c.sigma, EPS)) * float(chi(c.t / T)) for c in imp) / T
        assert time_avg_symbol(a, stadium, chord, p, T, EPS) == pytest.approx(ref, abs=1e-12)


def test_flow_covariance(stadium, chord, rng):
    a = Multiplication(lambda s: 1 + s, sup_norm=3.0)
    for p in sample_liouville(stadium, 20, rng):
        for r in (0.7, -2.3):
            direct = time_avg_flowed(a, stadium, chord, p, 5.0, EPS, r)
            shifted = time_avg_details(a, stadium, chord, p, 5.0, EPS, shift=r).value
            assert direct == pytest.approx(shifted, abs=1e-8)


def test_double_average_reduces_to_time_average(stadium, chord, rng):
    a = constant(1.0)
    for p in sample_liouville(stadium, 10, rng):
        assert double_avg_symbol(a, stadium, chord, p, 4.0, 0.0, EPS) == time_avg_symbol(
            a, stadium, chord, p, 4.0, EPS)


def test_double_average_matches_r_quadrature(stadium, chord, rng):
    a = constant(1.0)
    p = sample_liouville(stadium, 1, rng)[0]
    T, R = 3.0, 2.0
    val, _ = quad(lambda r: time_avg_details(a, stadium, chord, p, T, EPS, shift=r).value,
                  -R, R, limit=200)
    assert double_avg_symbol(a, stadium, chord, p, T, R, EPS) == pytest.approx(val / (2 * R), abs=1e-6)


def test_chi_bar_is_one(stadium, chord):
    rng = np.random.default_rng(6)
    for q in sample_section(chord, 10, rng):
        assert abs(chi_bar(stadium, chord, q, 20.0) - 1) < 1e-3


def test_time_average_bounded_uniformly_in_T(stadium, chord):
    a = constant(1.0)
    C = bound_constant(EPS)
    pts = sample_liouville(stadium, 200, np.random.default_rng(14))
    sups = []
    for T in (5.0, 10.0, 20.0, 40.0):
        worst = 0.0
        for p in pts:
            imp = crossings_window(stadium, chord, p, -(1 + DELTA) * T, (1 + DELTA) * T)
            rate = sum(float(chi(c.t / T)) for c in imp) / T
            v = time_avg_symbol(a, stadium, chord, p, T, EPS)
            assert abs(v) <= C * a.sup_norm * rate + 1e-12
            worst = max(worst, rate)
        sups.append(worst)
    # the impact-rate factor does not grow with T
    assert max(sups[1:]) <= 1.5 * sups[0]


def test_liouville_mean_small_sample(stadium, chord):
    V = Multiplication(lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / chord.length), sup_norm=1.5)
    res = liouville_mean([constant(1.0), V], stadium, chord, 2.0, EPS, 4000,
                         np.random.default_rng(2))
    for r in res:
        assert abs(r.zscore) < 3.5
        assert r.samples + r.censored == 4000


def test_tabulated_symbol_interpolates():
    s = np.linspace(0, 1, 6)
    g = np.linspace(-1, 1, 5)
    vals = 1 + s[:, None] + 0.5 * g[None, :] ** 2
    a = Tabulated(s, g, vals)
    assert a(0.4, 0.5) == pytest.approx(1.4 + 0.125, abs=1e-12)
    assert a.sup_norm == pytest.approx(vals.max())
    with pytest.raises(ValueError):
        Tabulated(s, g, vals[:, :3])


def test_piecewise_cubic_periodic_and_open():
    f = piecewise_cubic([0, 0.25, 0.5, 0.75], [1, 2, 1, 0], 1.0, closed=True)
    assert f(0.0) == pytest.approx(f(1.0))
    assert f(0.25) == pytest.approx(2.0)
    g = piecewise_cubic([0, 0.5, 1], [0, 1, 0], 1.0, closed=False)
    assert g(0.5) == pytest.approx(1.0) and g(1.0) == pytest.approx(0.0)


def test_scaled_symbol():
    a = Separable(lambda s: s, lambda sg: sg, sup_norm=2.0, name="x")
    b = a.scaled(-3.0)
    assert b(2.0, 0.5) == pytest.approx(-3.0)
    assert b.sup_norm == 6.0 and b.sigma_part(0.5) == pytest.approx(0.5)
