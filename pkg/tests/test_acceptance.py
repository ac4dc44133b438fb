"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` (or ``python tests/test_acceptance.py``);
the lines are also collected in the terminal summary of any pytest run.
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from qerlab.dynamics import flow, reverse, sample_liouville, sample_section, section_jacobian
from qerlab.geometry import (
    ClosedHorocycle,
    CrossSectionPoint,
    GeodesicCircle,
    HyperbolicQuotient,
    Segment,
    lift_xi,
    project_piH,
    reflect_rH,
)
from qerlab.qer import cesaro_and_variance, qer_report
from qerlab.restriction import l2_on_curve, matrix_element, trace_on_curve
from qerlab.spectral import compute_spectrum, square_eigenvalues, weyl_check
from qerlab.symbols import (
    Multiplication,
    Separable,
    chi_bar,
    constant,
    liouville_mean,
    omega,
    variance_over_SstarM,
)
from qerlab.symmetry import SymmetryParams, hhp_case_study, symmetry_measure

from conftest import MIDLINE, X0, sin2_integral, record_acceptance, square_mode

pytestmark = pytest.mark.slow
EPS = 0.01


def _phase_dist(p, q):
    return max(abs(float(p.x) - float(q.x)), abs(float(p.y) - float(q.y)),
               abs(float(p.dx) - float(q.dx)), abs(float(p.dy) - float(q.dy)))


def test_c01_exact_identities(stadium, chord):
    t0 = time.time()
    rng = np.random.default_rng(101)
    free = HyperbolicQuotient("free")
    curves = [chord, GeodesicCircle(1j, 0.5, free), ClosedHorocycle(1.5, HyperbolicQuotient("modular"))]
    n = 1000
    worst = {"involution": 0.0, "projection": 0.0, "unit": 0.0, "group": 0.0, "reversal": 0.0}
    for H in curves:
        for _ in range(n):
            s, sg, side = rng.uniform(0, H.length), rng.uniform(-1, 1), int(rng.choice([-1, 1]))
            p = lift_xi(H, s, sg, side)
            back = reflect_rH(H, reflect_rH(H, p))
            worst["involution"] = max(worst["involution"], float(np.abs(back.direction - p.direction).max()))
            worst["projection"] = max(worst["projection"], abs(project_piH(H, p) - sg))
            worst["unit"] = max(worst["unit"], abs(math.hypot(p.dx, p.dy) - 1))
    for p in sample_liouville(stadium, n, rng):
        t, u = rng.uniform(-10, 10, 2)
        a = flow(stadium, p, t + u)
        b = flow(stadium, flow(stadium, p, t), u)
        worst["group"] = max(worst["group"], _phase_dist(a, b))
        r = flow(stadium, reverse(flow(stadium, p, t)), t)
        worst["reversal"] = max(worst["reversal"], _phase_dist(r, reverse(p)))
    wall = time.time() - t0
    tol = {"involution": 1e-12, "projection": 1e-12, "unit": 1e-12, "group": 1e-9, "reversal": 1e-9}
    ok = all(worst[k] <= tol[k] for k in tol) and wall < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {n} cases each; {wall:.1f}s"
    record_acceptance(1, "exact identities", ok, detail)
    assert ok


def test_c02_symplecticity(stadium, chord, free_plane):
    t0 = time.time()
    n = 1000
    circle = GeodesicCircle(1j, 0.5, free_plane)
    results = {}
    for name, domain, H, side in (("stadium/chord", stadium, chord, None),
                                  ("plane/circle", free_plane, circle, -1)):
        dets = []
        for q in sample_section(H, n, np.random.default_rng(202)):
            if side is not None:
                # outward covectors leave the free plane; the return map lives on the inward sheet
                q = CrossSectionPoint(q.s, q.sigma, side)
            J = section_jacobian(domain, H, q, 50.0 if side is None else 20.0, h_fd=1e-5, full=True)
            if J is not None:
                dets.append(J.det)
        results[name] = (len(dets), float(np.max(np.abs(np.abs(dets) - 1))))
    wall = time.time() - t0
    ok = all(k >= 0.95 * n and d < 1e-4 for k, d in results.values()) and wall < 60
    detail = "; ".join(f"{k}: max||det|-1| {d:.1e} over {c} returns" for k, (c, d) in results.items())
    record_acceptance(2, "symplecticity of the return map", ok, f"{detail}; {wall:.1f}s")
    assert ok


def test_c03_chi_bar(stadium, chord):
    pts = sample_section(chord, 100, np.random.default_rng(303))
    dev = max(abs(chi_bar(stadium, chord, q, 20.0) - 1) for q in pts)
    ok = dev < 1e-3
    record_acceptance(3, "chi_bar_T = 1", ok, f"max deviation {dev:.1e} over 100 points at T = 20")
    assert ok


def test_c04_mean_identity(stadium, chord):
    t0 = time.time()
    L = chord.length
    V = Multiplication(lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / L), sup_norm=1.5, name="V")
    sV = Separable(V.V, lambda sg: sg, sup_norm=1.5, name="sigmaV")
    res = liouville_mean([constant(1.0), V, sV], stadium, chord, 2.0, EPS, 10 ** 5,
                         np.random.default_rng(404))
    wall = time.time() - t0
    ok = all(abs(r.zscore) < 3 for r in res) and wall < 120
    detail = "; ".join(f"{name}: z = {r.zscore:+.2f}" for name, r in zip(("1", "V", "sigma V"), res))
    record_acceptance(4, "Liouville mean of averaged symbols", ok, f"{detail}; 1e5 samples; {wall:.1f}s")
    assert ok


def test_c05_variance_decay(stadium, square, chord):
    t0 = time.time()
    a = Separable(1.0, lambda sg: sg * sg, sup_norm=1.0, name="sigma2")
    ratios = {}
    for name, domain, H in (("stadium", stadium, chord),
                            ("square", square, Segment((0.15, 0.3), (0.85, 0.55)))):
        v = [variance_over_SstarM(a, domain, H, T, T, EPS, 20000, np.random.default_rng(505)).variance
             for T in (10.0, 40.0)]
        ratios[name] = v[1] / v[0]
    wall = time.time() - t0
    ok = ratios["stadium"] < 0.5 and not ratios["square"] < 0.5 and wall < 180
    record_acceptance(5, "ergodic variance decay", ok,
                      f"Var(40,40)/Var(10,10): stadium {ratios['stadium']:.3f}, "
                      f"square {ratios['square']:.3f}; {wall:.1f}s")
    assert ok


def test_c06_symmetry_dichotomy(stadium, axis, chord):
    t0 = time.time()
    n = 10 ** 4
    out = {"axis": symmetry_measure(stadium, axis, n, SymmetryParams(seed=606)),
           "chord": symmetry_measure(stadium, chord, n, SymmetryParams(seed=606))}
    for case in ("circle", "horocycle"):
        out[case], _ = hhp_case_study(case, n, SymmetryParams(seed=606, t_max=20.0), table_points=1)
    wall = time.time() - t0
    ok = out["axis"].estimate == 1.0 and all(
        v.estimate <= 0.02 and v.censored_fraction <= 0.05 for k, v in out.items() if k != "axis")
    ok = ok and wall < 300
    detail = "; ".join(f"{k}: {v.estimate:.4f} +- {v.stderr:.4f} (censored {v.censored_fraction:.3f})"
                       for k, v in out.items())
    record_acceptance(6, "symmetry-measure dichotomy", ok, f"{detail}; {wall:.1f}s")
    assert ok


def test_c07_spectral_validation(stadium, square, stadium_batch):
    t0 = time.time()
    sq, _ = compute_spectrum(square, 1 / 64, 10)
    exact = square_eigenvalues(10)
    sq_dev = float(np.max(np.abs(sq.eigenvalues - exact) / exact))
    batch, A = stadium_batch
    rep = weyl_check(batch, stadium, A)
    ok = sq_dev < 5e-3 and rep.max_rel_dev_upper <= 0.03
    record_acceptance(7, "spectral validation", ok,
                      f"square first 10 max rel. error {sq_dev:.2e}; stadium Weyl deviation "
                      f"{rep.max_rel_dev_upper:.4f} over the upper half of {batch.m} modes "
                      f"(square solve + check {time.time() - t0:.1f}s)")
    assert ok


def test_c08_restricted_weyl_mean(stadium, chord, stadium_records):
    norms = [r.norm2 for r in stadium_records["chord"]["const1"]]
    target = chord.length / stadium.area
    mean = float(np.mean(norms))
    ok = abs(mean / target - 1) < 0.10
    record_acceptance(8, "restricted Weyl mean", ok,
                      f"Cesaro mean {mean:.4f} vs L/area {target:.4f} ({len(norms)} modes)")
    assert ok


def test_c09_qer_dichotomy(stadium, axis, chord, stadium_batch, stadium_records, stadium_symbols):
    batch, _ = stadium_batch
    w1 = omega(constant(1.0), stadium, axis)
    rep = qer_report(stadium_records["axis"]["const1"], w1, "const1", "axis", batch.parity,
                     low_norm_ref=axis.length / stadium.area)
    low = rep.low_norm
    parts = [f"axis low-norm fraction {low['fraction']:.3f}, odd-class agreement {low['agreement']:.3f}"]
    ok = low["fraction"] >= 0.4 and low["agreement"] >= 0.95
    for name in ("one", "V"):
        a = stadium_symbols[name]
        w = omega(a, stadium, chord)
        lad = cesaro_and_variance(stadium_records["chord"][a.name], w, [75, 150, 300])
        ok = ok and lad.S[2] < lad.S[0] and abs(lad.E[2] / w - 1) <= 0.15
        parts.append(f"chord {name}: S(75) {lad.S[0]:.4f} -> S(300) {lad.S[2]:.4f}, "
                     f"E(300) {lad.E[2]:.4f} vs omega {w:.4f}")
    record_acceptance(9, "QER dichotomy", ok, "; ".join(parts))
    assert ok


def test_c10_square_oracles(square_batch):
    batch, _ = square_batch
    V = Multiplication(lambda s: 1 + 0.5 * np.cos(2 * np.pi * s / MIDLINE.length), sup_norm=1.5)
    from scipy.integrate import quad

    worst = {"trace": 0.0, "norm": 0.0, "matrix element": 0.0}
    for j in range(batch.m):
        m, n = square_mode(batch, j)
        t = trace_on_curve(batch, MIDLINE, j)
        ref = 2 * np.sin(m * np.pi * (X0 + t.s)) * np.sin(n * np.pi / 2)
        worst["trace"] = max(worst["trace"],
                             min(np.abs(t.values - ref).max(), np.abs(t.values + ref).max()))
        norm_ref = sin2_integral(m) if n % 2 else 0.0
        worst["norm"] = max(worst["norm"], abs(l2_on_curve(t) - norm_ref))
        if n % 2:
            me_ref, _ = quad(lambda x: 4 * math.sin(m * math.pi * x) ** 2 * V.V(x - X0),
                             X0, X0 + MIDLINE.length, limit=200)
        else:
            me_ref = 0.0
        worst["matrix element"] = max(worst["matrix element"],
                                      abs(matrix_element(V, batch, MIDLINE, j, trace=t).value - me_ref))
    ok = all(v <= 1e-3 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record_acceptance(10, "square oracles", ok, f"max abs. errors: {detail} over {batch.m} modes")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
