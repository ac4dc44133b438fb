"""PSL(2, R) plumbing for the upper half-plane model.

A unit tangent vector (z, theta) of H^2 (theta = Euclidean direction angle at
z) is identified with the matrix g = n_x a_y k_phi, so that g(i) = z and the
geodesic flow is right multiplication by diag(e^{t/2}, e^{-t/2}).  Everything
here is closed form; nothing is integrated.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

S_GEN = np.array([[0.0, -1.0], [1.0, 0.0]])
T_GEN = np.array([[1.0, 1.0], [0.0, 1.0]])
T_INV = np.array([[1.0, -1.0], [0.0, 1.0]])

SQRT3_2 = math.sqrt(3.0) / 2.0


def mobius(m, z):
    """Apply the Mobius map of a 2x2 matrix (or a stack of them) to z."""
    m = np.asarray(m)
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    return (a * z + b) / (c * z + d)


def mobius_arg_derivative(m, z):
    """arg of the complex derivative of the Mobius map at z (the rotation angle)."""
    m = np.asarray(m)
    c, d = m[..., 1, 0], m[..., 1, 1]
    return -2.0 * np.angle(c * z + d)


def distance(z, w):
    """Hyperbolic distance in the upper half-plane."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    num = np.abs(z - w) ** 2
    return np.arccosh(1.0 + num / (2.0 * z.imag * w.imag))


def frame_to_matrix(z: complex, theta: float) -> np.ndarray:
    """SL(2,R) matrix carrying (i, up) to (z, direction angle theta)."""
    x, y = z.real, z.imag
    if y <= 0:
        raise ValueError("point must lie in the upper half-plane")
    phi = 0.5 * (theta - 0.5 * math.pi)
    sy = math.sqrt(y)
    cp, sp = math.cos(phi), math.sin(phi)
    # n_x @ a_y @ k_phi, written out
    a = sy * cp - x * sp / sy
    b = sy * sp + x * cp / sy
    c = -sp / sy
    d = cp / sy
    return np.array([[a, b], [c, d]])


def matrix_to_frame(g: np.ndarray) -> tuple[complex, float]:
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    w = complex(c * 1j + d)
    z = (a * 1j + b) / w
    theta = 0.5 * math.pi - 2.0 * math.atan2(w.imag, w.real)
    return z, theta


def geodesic_step(g: np.ndarray, t: float) -> np.ndarray:
    """g a_t: flow for time t (exact up to rounding of two scalings)."""
    e = math.exp(0.5 * t)
    return np.array([[g[0, 0] * e, g[0, 1] / e], [g[1, 0] * e, g[1, 1] / e]])


def reduce_modular(g: np.ndarray, max_iter: int = 10000) -> tuple[np.ndarray, np.ndarray]:
    """Left-multiply g by an element of PSL(2,Z) so that g(i) lies in the
    standard fundamental domain |x| <= 1/2, |z| >= 1.

    Returns (reduced g, integer word matrix gamma) with reduced = gamma @ g.
    """
    gamma = np.eye(2)
    g = np.array(g, dtype=float)
    for _ in range(max_iter):
        z = mobius(g, 1j)
        n = math.floor(z.real + 0.5)
        if n != 0:
            tn = np.array([[1.0, -n], [0.0, 1.0]])
            g = tn @ g
            gamma = tn @ gamma
            z = z - n
        if abs(z) < 1.0 - 1e-14:
            g = S_GEN @ g
            gamma = S_GEN @ gamma
            continue
        return g, gamma
    raise ArithmeticError("modular reduction did not terminate")


def reduce_point(z: complex) -> tuple[complex, np.ndarray]:
    g = frame_to_matrix(z, 0.5 * math.pi)
    g, gamma = reduce_modular(g)
    return mobius(g, 1j), gamma


def in_fundamental_domain(z: complex, tol: float = 1e-12) -> bool:
    return abs(z.real) <= 0.5 + tol and abs(z) >= 1.0 - tol


def _group_key(m: np.ndarray) -> tuple[int, int, int, int]:
    a, b, c, d = (int(round(v)) for v in m.ravel())
    if c < 0 or (c == 0 and d < 0):
        a, b, c, d = -a, -b, -c, -d
    return a, b, c, d


def modular_ball(z0: complex, radius: float, max_size: int = 200000) -> list[np.ndarray]:
    """All elements gamma of PSL(2,Z) with d(gamma z0, z0) <= radius.

    Breadth-first search over the tile adjacency (right multiplication by the
    side pairings S, T, T^-1 of the standard fundamental domain); the search is
    pruned at the radius, which is complete because a minimal tile path from F
    to gamma F stays near the segment joining them.
    """
    start = np.eye(2)
    seen = {_group_key(start)}
    out = [start]
    queue = deque([start])
    slack = 2.0
    while queue:
        m = queue.popleft()
        for gen in (S_GEN, T_GEN, T_INV):
            nm = m @ gen
            key = _group_key(nm)
            if key in seen:
                continue
            seen.add(key)
            dist = float(distance(mobius(nm, z0), z0))
            if dist > radius + slack:
                continue
            queue.append(nm)
            if dist <= radius:
                out.append(nm)
            if len(seen) > max_size:
                raise ArithmeticError("group enumeration exceeded its size bound")
    return out


def _fundamental_boundary_samples(y_top: float, n: int = 400) -> np.ndarray:
    th = np.linspace(math.pi / 3, 2 * math.pi / 3, n)
    arc = np.exp(1j * th)
    ys = np.geomspace(SQRT3_2, y_top, n)
    left = -0.5 + 1j * ys
    right = 0.5 + 1j * ys
    return np.concatenate([arc, left, right])


def distance_to_fundamental_domain(z, y_top: float = 60.0) -> np.ndarray:
    """Distance from z to the (height-truncated) standard fundamental domain.

    Zero inside; otherwise the minimum over a dense sample of the boundary,
    which overestimates by at most ~1e-2 for the sample density used.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    bd = _fundamental_boundary_samples(y_top)
    d = distance(z[:, None], bd[None, :]).min(axis=1)
    inside = (np.abs(z.real) <= 0.5) & (np.abs(z) >= 1.0) & (z.imag <= y_top)
    d[inside] = 0.0
    return d


def hyperbolic_fixed_points(a_mat: np.ndarray) -> tuple[float, float]:
    """(attracting, repelling) boundary fixed points of a hyperbolic element."""
    a, b, c, d = (float(v) for v in a_mat.ravel())
    tr = a + d
    if abs(tr) <= 2.0:
        raise ValueError("matrix is not hyperbolic")
    if c == 0:
        raise ValueError("hyperbolic element fixing infinity is not supported")
    disc = math.sqrt((d - a) ** 2 + 4 * b * c)
    r1 = ((a - d) + disc) / (2 * c)
    r2 = ((a - d) - disc) / (2 * c)
    # attracting fixed point has |A'(z)| = |cz+d|^-2 < 1
    if abs(c * r1 + d) > abs(c * r2 + d):
        return r1, r2
    return r2, r1


def axis_normalizer(a_mat: np.ndarray) -> tuple[np.ndarray, float]:
    """B in SL(2,R) with B(i R_+) = axis of A, oriented so that A translates
    towards B(infinity).  Returns (B, translation length)."""
    att, rep = hyperbolic_fixed_points(a_mat)
    det = att - rep
    if det > 0:
        b = np.array([[att, rep], [1.0, 1.0]]) / math.sqrt(det)
    else:
        b = np.array([[att, -rep], [1.0, -1.0]]) / math.sqrt(-det)
    tr = abs(float(a_mat[0, 0] + a_mat[1, 1]))
    return b, 2.0 * math.acosh(tr / 2.0)
