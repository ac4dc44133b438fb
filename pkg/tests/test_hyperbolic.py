from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qerlab import hyperbolic as hyp


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(0.05, 5), theta=st.floats(-math.pi, math.pi))
def test_frame_matrix_roundtrip(x, y, theta):
    g = hyp.frame_to_matrix(complex(x, y), theta)
    assert abs(np.linalg.det(g) - 1) < 1e-12
    z, th = hyp.matrix_to_frame(g)
    assert abs(z - complex(x, y)) < 1e-10 * max(1.0, y)
    assert abs(math.remainder(th - theta, 2 * math.pi)) < 1e-10


def test_geodesic_step_is_vertical_flow_at_i():
    g = hyp.frame_to_matrix(1j, 0.5 * math.pi)
    z, th = hyp.matrix_to_frame(hyp.geodesic_step(g, math.log(1.5)))
    assert z == pytest.approx(1.5j, abs=1e-14)
    assert th == pytest.approx(0.5 * math.pi)


def test_geodesic_step_travels_unit_speed():
    rng = np.random.default_rng(1)
    for _ in range(100):
        z = complex(rng.uniform(-1, 1), rng.uniform(0.3, 2))
        g = hyp.frame_to_matrix(z, rng.uniform(0, 2 * math.pi))
        t = rng.uniform(0.0, 5.0)
        w, _ = hyp.matrix_to_frame(hyp.geodesic_step(g, t))
        assert float(hyp.distance(z, w)) == pytest.approx(t, abs=1e-9)


def test_mobius_isometry():
    rng = np.random.default_rng(3)
    m = np.array([[2.0, 1.0], [1.0, 1.0]])
    for _ in range(50):
        z = complex(rng.normal(), rng.uniform(0.1, 2))
        w = complex(rng.normal(), rng.uniform(0.1, 2))
        assert float(hyp.distance(hyp.mobius(m, z), hyp.mobius(m, w))) == pytest.approx(
            float(hyp.distance(z, w)), rel=1e-10)


def test_hyperbolic_fixed_points_are_fixed():
    a = np.array([[1.0, 1.0], [5.0, 6.0]])
    for x in hyp.hyperbolic_fixed_points(a):
        assert (a[0, 0] * x + a[0, 1]) / (a[1, 0] * x + a[1, 1]) == pytest.approx(x, abs=1e-12)
    _, ell = hyp.axis_normalizer(a)
    # translation length 2 arccosh(tr / 2)
    assert ell == pytest.approx(2 * math.acosh(7 / 2), rel=1e-12)


def test_modular_ball_contains_identity_and_respects_radius():
    z0 = 0.1 + 1.5j
    ball = hyp.modular_ball(z0, 2.0)
    assert np.allclose(ball[0], np.eye(2))
    for g in ball:
        assert float(hyp.distance(hyp.mobius(g, z0), z0)) <= 2.0 + 1e-9
