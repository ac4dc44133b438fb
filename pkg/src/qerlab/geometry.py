"""Ambient domains, curves with Fermi frames, and the section maps.

Conventions used throughout the package:

* A curve H is parametrized by arclength s.  The positive unit normal nu_+
  is the tangent rotated clockwise by a right angle, so counterclockwise
  circles have nu_+ pointing outward.
* Directions are stored as Euclidean unit vectors.  In the hyperbolic
  models this is the direction of a hyperbolic unit vector, whose Euclidean
  length is Im z.
* A coball coordinate sigma is the tangential component of a unit covector;
  ``side`` (+1 / -1) is the sign of its normal component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from . import hyperbolic as hyp
from .errors import DomainError, GeometryError, RangeError, TrajectoryAbort

TAU_H = 1e-9            # on-curve tolerance
ENDPOINT_MARGIN = 1e-6  # fraction of L excluded at each end of an open curve
CORNER_ANGLE_TOL = 1e-8
CHUNK = 0.5             # hyperbolic flow chunk length used for lift reach


def _negate(v):
    """-v without rounding a multiprecision value to the default context."""
    if isinstance(v, float):
        return -v
    with gmpy2.context(precision=v.precision):
        return -v


@dataclass(frozen=True)
class PhasePoint:
    x: float
    y: float
    dx: float
    dy: float
    domain: str = ""

    @property
    def position(self) -> np.ndarray:
        return np.array([float(self.x), float(self.y)])

    @property
    def direction(self) -> np.ndarray:
        return np.array([float(self.dx), float(self.dy)])

    @property
    def z(self) -> complex:
        return complex(float(self.x), float(self.y))

    def as_float(self) -> "PhasePoint":
        return PhasePoint(float(self.x), float(self.y), float(self.dx), float(self.dy), self.domain)

    def reversed(self) -> "PhasePoint":
        return PhasePoint(self.x, self.y, _negate(self.dx), _negate(self.dy), self.domain)


@dataclass(frozen=True)
class CrossSectionPoint:
    s: float
    sigma: float
    side: int

    def flipped(self) -> "CrossSectionPoint":
        return CrossSectionPoint(self.s, self.sigma, -self.side)


@dataclass(frozen=True)
class FermiFrame:
    s: float
    point: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray


def _sqrt(v):
    # keeps multiprecision when the ray is traced with gmpy2 numbers
    return math.sqrt(v) if isinstance(v, float) else gmpy2.sqrt(v)


def _unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StadiumBilliard:
    """Bunimovich stadium: a rectangle [-a, a] x [-r, r] capped by half disks."""

    half_length: float = 1.0
    cap_radius: float = 1.0
    kind: str = field(default="stadium", init=False)

    def __post_init__(self):
        if not (self.half_length > 0 and self.cap_radius > 0):
            raise ValueError("stadium needs half_length > 0 and cap_radius > 0")

    @property
    def area(self) -> float:
        a, r = self.half_length, self.cap_radius
        return 4 * a * r + math.pi * r * r

    @property
    def perimeter(self) -> float:
        return 4 * self.half_length + 2 * math.pi * self.cap_radius

    @property
    def liouville_volume(self) -> float:
        return 2 * math.pi * self.area

    @property
    def diameter(self) -> float:
        return 2 * (self.half_length + self.cap_radius)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        a, r = self.half_length, self.cap_radius
        return (-a - r, a + r, -r, r)

    @property
    def step_scale(self) -> float:
        return self.cap_radius

    def signed_distance(self, x, y):
        """Distance to the boundary, positive inside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        cx = np.clip(x, -self.half_length, self.half_length)
        return self.cap_radius - np.hypot(x - cx, y)

    def contains(self, x, y):
        return self.signed_distance(x, y) > 0

    def mirror_symmetries(self) -> tuple[str, ...]:
        return ("x", "y")

    def next_wall_hit(self, x, y, dx, dy):
        """First boundary hit of the ray (x, y) + t (dx, dy), t > 0.

        Returns (t, hx, hy, nx, ny, wall_id) with (nx, ny) the outward normal.
        """
        a, r = self.half_length, self.cap_radius
        best = None
        if dy > 0:
            t = (r - y) / dy
            hx = x + t * dx
            if -a <= hx <= a:
                best = (t, hx, r, 0.0, 1.0, 0)
        elif dy < 0:
            t = (-r - y) / dy
            hx = x + t * dx
            if -a <= hx <= a:
                best = (t, hx, -r, 0.0, -1.0, 1)
        for wall_id, cx in ((2, a), (3, -a)):
            px = x - cx
            b = px * dx + y * dy
            cc = px * px + y * y - r * r
            disc = b * b - cc
            if disc < 0:
                continue
            t = -b + _sqrt(disc)
            if t <= 1e-13:
                continue
            hx = x + t * dx
            hy = y + t * dy
            if (wall_id == 2 and hx >= a) or (wall_id == 3 and hx <= -a):
                if best is None or t < best[0]:
                    ux, uy = (hx - cx) / r, hy / r
                    n = _sqrt(ux * ux + uy * uy)
                    best = (t, hx, hy, ux / n, uy / n, wall_id)
        if best is None:
            raise TrajectoryAbort("ray escaped the stadium (point outside domain?)")
        t, hx, hy, nx, ny, wall_id = best
        # wall/cap junctions: curvature jump, excluded from the dynamics
        if wall_id < 2:
            if abs(abs(hx) - a) <= CORNER_ANGLE_TOL * r:
                raise TrajectoryAbort("hit a wall-cap junction")
        else:
            cx = a if wall_id == 2 else -a
            ang = math.atan2(hy, abs(hx - cx))
            if abs(abs(ang) - 0.5 * math.pi) <= CORNER_ANGLE_TOL:
                raise TrajectoryAbort("hit a wall-cap junction")
        return best


@dataclass(frozen=True)
class UnitSquareBilliard:
    """[0, 1]^2 with specular walls; integrable, used as a validation control."""

    kind: str = field(default="square", init=False)
    area: float = field(default=1.0, init=False)
    perimeter: float = field(default=4.0, init=False)
    diameter: float = field(default=math.sqrt(2.0), init=False)

    @property
    def liouville_volume(self) -> float:
        return 2 * math.pi

    @property
    def bbox(self):
        return (0.0, 1.0, 0.0, 1.0)

    @property
    def step_scale(self) -> float:
        return 1.0

    def signed_distance(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.minimum(np.minimum(x, 1 - x), np.minimum(y, 1 - y))

    def contains(self, x, y):
        return self.signed_distance(x, y) > 0

    def mirror_symmetries(self) -> tuple[str, ...]:
        return ("x", "y")

    def next_wall_hit(self, x, y, dx, dy):
        tx = ty = math.inf
        if dx > 0:
            tx = (1.0 - x) / dx
        elif dx < 0:
            tx = -x / dx
        if dy > 0:
            ty = (1.0 - y) / dy
        elif dy < 0:
            ty = -y / dy
        if math.isfinite(tx) and math.isfinite(ty) and abs(tx - ty) <= CORNER_ANGLE_TOL * max(1.0, tx):
            raise TrajectoryAbort("hit a corner of the square")
        if tx < ty:
            hx = 1.0 if dx > 0 else 0.0
            return (tx, hx, y + tx * dy, math.copysign(1.0, dx), 0.0, 0 if dx > 0 else 1)
        hy = 1.0 if dy > 0 else 0.0
        return (ty, x + ty * dx, hy, 0.0, math.copysign(1.0, dy), 2 if dy > 0 else 3)


@dataclass(frozen=True)
class HyperbolicQuotient:
    """Upper half-plane, either bare ("free") or modulo PSL(2, Z) ("modular")."""

    group: str = "modular"
    kind: str = field(default="hyperbolic", init=False)

    def __post_init__(self):
        if self.group not in ("modular", "free"):
            raise ValueError("group must be 'modular' or 'free'")

    @property
    def area(self) -> float:
        return math.pi / 3 if self.group == "modular" else math.inf

    @property
    def liouville_volume(self) -> float:
        return 2 * math.pi * self.area

    @property
    def diameter(self) -> float:
        return math.inf

    def reduce(self, g: np.ndarray) -> np.ndarray:
        if self.group == "free":
            return g
        return hyp.reduce_modular(g)[0]

    def generators(self) -> tuple[np.ndarray, np.ndarray]:
        return hyp.S_GEN, hyp.T_GEN


Domain = StadiumBilliard | UnitSquareBilliard | HyperbolicQuotient


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


class Hypersurface:
    """An arclength-parametrized embedded curve with a Fermi frame."""

    length: float
    closed: bool
    name: str = "H"

    def _check_s(self, s: float) -> float:
        if self.closed:
            if not (0.0 <= s < self.length):
                raise RangeError(f"s={s} outside [0, {self.length})")
        elif not (0.0 <= s <= self.length):
            raise RangeError(f"s={s} outside [0, {self.length}]")
        return float(s)

    def frame(self, s: float) -> FermiFrame:
        raise NotImplementedError

    def fermi(self, x: float, y: float):
        """(s, signed normal coordinate y_n, tangent, normal) of a nearby point."""
        raise NotImplementedError

    def s_distance(self, s1: float, s2: float) -> float:
        d = abs(s1 - s2)
        if self.closed:
            d = d % self.length
            d = min(d, self.length - d)
        return d


class Segment(Hypersurface):
    """Open straight segment in a planar billiard (two-sided)."""

    closed = False

    def __init__(self, start, end, flip: bool = False, name: str = "segment"):
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        v = self.end - self.start
        self.length = float(np.hypot(*v))
        if self.length <= 0:
            raise GeometryError("degenerate segment")
        self.tangent = v / self.length
        sign = -1.0 if flip else 1.0
        self.normal = sign * np.array([self.tangent[1], -self.tangent[0]])
        self.name = name

    def __repr__(self):
        return f"Segment({self.start.tolist()}, {self.end.tolist()})"

    def frame(self, s):
        s = self._check_s(s)
        return FermiFrame(s, self.start + s * self.tangent, self.tangent.copy(), self.normal.copy())

    def point(self, s):
        s = np.asarray(s, dtype=float)
        return self.start[None, :] + s[..., None] * self.tangent[None, :]

    def fermi(self, x, y):
        p = np.array([float(x), float(y)]) - self.start
        s = float(p @ self.tangent)
        yn = float(p @ self.normal)
        if s < -TAU_H or s > self.length + TAU_H:
            yn = math.copysign(math.inf, yn if yn != 0 else 1.0)
        return s, yn, self.tangent, self.normal


class EuclideanCircle(Hypersurface):
    """Closed circle inside a planar billiard, counterclockwise, nu_+ outward."""

    closed = True

    def __init__(self, center, radius: float, name: str = "circle"):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.length = 2 * math.pi * self.radius
        self.name = name

    def frame(self, s):
        s = self._check_s(s)
        al = s / self.radius
        u = np.array([math.cos(al), math.sin(al)])
        return FermiFrame(s, self.center + self.radius * u, np.array([-u[1], u[0]]), u)

    def point(self, s):
        al = np.asarray(s, dtype=float) / self.radius
        return self.center[None, :] + self.radius * np.stack([np.cos(al), np.sin(al)], axis=-1)

    def fermi(self, x, y):
        px, py = x - self.center[0], y - self.center[1]
        rr = math.hypot(px, py)
        al = math.atan2(py, px) % (2 * math.pi)
        u = np.array([math.cos(al), math.sin(al)])
        s = (self.radius * al) % self.length
        return s, rr - self.radius, np.array([-u[1], u[0]]), u


# --- hyperbolic curves ------------------------------------------------------


class HyperbolicCurve(Hypersurface):
    """A closed curve in H^2 or H^2/PSL(2,Z), stored via its lifts.

    Each lift is a matrix M_k mapping global coordinates to a standard
    position of the curve (circle about i, horizontal horocycle, or the
    imaginary axis) in which arclength and frame are explicit.
    """

    closed = True

    def __init__(self, domain: HyperbolicQuotient):
        self.domain = domain
        self.lifts = np.empty((0, 2, 2))

    # standard-position geometry; subclasses implement these
    def std_s(self, w):
        raise NotImplementedError

    def std_tangent_angle(self, w):
        raise NotImplementedError

    def std_signed_distance(self, w):
        raise NotImplementedError

    def std_point(self, s):
        raise NotImplementedError

    def quadratic(self, h):
        """Coefficients (A2, A1, A0) of the crossing equation in X = e^t for
        the geodesic t -> h(i e^t) in standard coordinates; h is (K, 2, 2)."""
        raise NotImplementedError

    def frame(self, s):
        s = self._check_s(s)
        m0 = self.lifts[0]
        minv = np.array([[m0[1, 1], -m0[0, 1]], [-m0[1, 0], m0[0, 0]]])
        w = self.std_point(s)
        z = complex(hyp.mobius(minv, w))
        ang = float(self.std_tangent_angle(w)) + float(hyp.mobius_arg_derivative(minv, w))
        t = _unit(ang)
        return FermiFrame(s, np.array([z.real, z.imag]), t, np.array([t[1], -t[0]]))

    def fermi(self, x, y):
        z = complex(x, y)
        w = hyp.mobius(self.lifts, z)
        dist = self.std_signed_distance(w)
        k = int(np.argmin(np.abs(dist)))
        wk = complex(w[k])
        s = float(self.std_s(wk)) % self.length
        ang = float(self.std_tangent_angle(wk)) - float(hyp.mobius_arg_derivative(self.lifts[k], z))
        t = _unit(ang)
        return s, float(dist[k]), t, np.array([t[1], -t[0]])


def _translation_to(z0: complex) -> np.ndarray:
    """n_x a_y, which maps i to z0."""
    sy = math.sqrt(z0.imag)
    return np.array([[sy, z0.real / sy], [0.0, 1.0 / sy]])


def _inverse(m: np.ndarray) -> np.ndarray:
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


class GeodesicCircle(HyperbolicCurve):
    def __init__(self, center: complex, radius: float, domain: HyperbolicQuotient,
                 injectivity_radius: float | None = None, name: str = "circle"):
        super().__init__(domain)
        self.name = name
        self.radius = float(radius)
        self.length = 2 * math.pi * math.sinh(self.radius)
        self._cosh = math.cosh(self.radius)
        self._sinh = math.sinh(self.radius)
        center = complex(center)
        if domain.group == "modular":
            center, _ = hyp.reduce_point(center)
        self.center = center
        if injectivity_radius is not None and self.radius >= injectivity_radius:
            raise GeometryError("circle radius must be below the injectivity radius")
        norm = _inverse(_translation_to(center))
        if domain.group == "free":
            self.lifts = norm[None]
            return
        reach = self.radius + CHUNK + 0.15
        ball = hyp.modular_ball(center, reach + 4.0)
        imgs = np.array([hyp.mobius(g, center) for g in ball])
        dfd = hyp.distance_to_fundamental_domain(imgs)
        keep = [g for g, d in zip(ball, dfd) if d <= reach]
        others = [float(hyp.distance(hyp.mobius(g, center), center)) for g in ball[1:]]
        self.min_displacement = min(others)
        if 2 * self.radius >= self.min_displacement:
            raise GeometryError(
                f"circle of radius {radius} is not embedded "
                f"(displacement {self.min_displacement:.4f})")
        self.lifts = np.array([norm @ _inverse(g) for g in keep])

    def std_s(self, w):
        c = (w - 1j) / (w + 1j)
        return self._sinh * (np.angle(c) % (2 * math.pi))

    def std_tangent_angle(self, w):
        c = (w - 1j) / (w + 1j)
        return np.angle(-2 * c / (1 - c) ** 2)

    def std_signed_distance(self, w):
        return hyp.distance(w, 1j) - self.radius

    def std_point(self, s):
        c = math.tanh(self.radius / 2) * np.exp(1j * s / self._sinh)
        return 1j * (1 + c) / (1 - c)

    def quadratic(self, h):
        a, b, c, d = h[:, 0, 0], h[:, 0, 1], h[:, 1, 0], h[:, 1, 1]
        return a * a + c * c, np.full_like(a, -2 * self._cosh), b * b + d * d


class ClosedHorocycle(HyperbolicCurve):
    """The closed horocycle {Im z = c} / <z -> z+1> on the modular surface."""

    def __init__(self, height: float, domain: HyperbolicQuotient, name: str = "horocycle"):
        super().__init__(domain)
        if domain.group != "modular":
            raise GeometryError("closed horocycles need the modular group")
        if height <= 1.0:
            raise GeometryError("horocycle height must exceed 1 to be embedded")
        self.name = name
        self.height = float(height)
        self.length = 1.0 / self.height
        reach = CHUNK + 0.15
        qmax = int(math.floor(math.sqrt(math.exp(reach) / (self.height * hyp.SQRT3_2)))) + 1
        lifts = [np.eye(2)]
        for q in range(1, qmax + 1):
            for p in range(-2 * q, 2 * q + 1):
                if math.gcd(p, q) != 1:
                    continue
                # gamma = [[p, r], [q, s]] with p s - r q = 1
                r, s_ = _bezout(p, q)
                gamma = np.array([[p, r], [q, s_]], dtype=float)
                diam = 1.0 / (q * q * self.height)
                if diam < hyp.SQRT3_2 * math.exp(-reach) or abs(p / q) > 1.5:
                    continue
                lifts.append(_inverse(gamma))
        self.lifts = np.array(lifts)

    def std_s(self, w):
        return ((np.real(w) + 0.5) % 1.0) / self.height

    def std_tangent_angle(self, w):
        return np.zeros(np.shape(w))

    def std_signed_distance(self, w):
        return -np.log(np.imag(w) / self.height)

    def std_point(self, s):
        return complex(s * self.height - 0.5, self.height)

    def quadratic(self, h):
        c, d = h[:, 1, 0], h[:, 1, 1]
        return self.height * c * c, -np.ones_like(c), self.height * d * d


def _bezout(p: int, q: int) -> tuple[int, int]:
    """Integers (r, s) with p s - r q = 1 (requires gcd(p, q) = 1)."""
    def egcd(a, b):
        if b == 0:
            return a, 1, 0
        g, x, y = egcd(b, a % b)
        return g, y, x - (a // b) * y
    g, x, y = egcd(p, q)  # p x + q y = g
    if g < 0:
        x, y = -x, -y
    return -y, x


class ClosedGeodesicCurve(HyperbolicCurve):
    """Closed geodesic: the axis of a hyperbolic element A of PSL(2, Z)."""

    def __init__(self, matrix, domain: HyperbolicQuotient, name: str = "geodesic"):
        super().__init__(domain)
        self.name = name
        a_mat = np.asarray(matrix, dtype=float)
        b, ell = hyp.axis_normalizer(a_mat)
        self.matrix = a_mat
        self.length = ell
        norm = _inverse(b)
        if domain.group == "free":
            self.lifts = norm[None]
            return
        reach = CHUNK + 0.15
        att, rep = hyp.hyperbolic_fixed_points(a_mat)
        # lifts through F: reduce points spread along one period of the axis
        through = {}
        for u in np.arange(0.0, ell, 0.02):
            z = complex(hyp.mobius(b, 1j * math.exp(u)))
            _, gamma = hyp.reduce_point(z)
            key = tuple(sorted(_boundary_image(gamma, e) for e in (att, rep)))
            through.setdefault(key, gamma)
        top = max(abs(k[1] - k[0]) / 2 for k in through)
        # lifts near F are images of those under group elements moving F a little
        z0 = 1j * max(1.0, top)
        radius = reach + float(hyp.distance(z0, complex(0.5, hyp.SQRT3_2))) + 1.0
        ball = hyp.modular_ball(z0, radius)
        core = _fd_core_samples(max(8.0, 2 * top))
        lines = {}
        for gamma in through.values():
            for g0 in ball:
                g = g0 @ gamma
                key = tuple(sorted(_boundary_image(g, e) for e in (att, rep)))
                if key in lines:
                    continue
                m = norm @ _inverse(g)
                w = hyp.mobius(m, core)
                if np.abs(np.arcsinh(w.real / w.imag)).min() > reach:
                    continue
                lines[key] = m
        self.lifts = np.array(list(lines.values()))

    def std_s(self, w):
        return np.log(np.abs(w)) % self.length

    def std_tangent_angle(self, w):
        return np.angle(w)

    def std_signed_distance(self, w):
        return np.arcsinh(np.real(w) / np.imag(w))

    def std_point(self, s):
        return 1j * math.exp(s)

    def quadratic(self, h):
        a, b, c, d = h[:, 0, 0], h[:, 0, 1], h[:, 1, 0], h[:, 1, 1]
        return a * c, np.zeros_like(a), b * d


def _boundary_image(g: np.ndarray, x: float) -> float:
    den = g[1, 0] * x + g[1, 1]
    if abs(den) < 1e-300:
        return math.inf
    return round((g[0, 0] * x + g[0, 1]) / den, 9)


def _fd_core_samples(y_top: float = 8.0, n: int = 40) -> np.ndarray:
    xs = np.linspace(-0.5, 0.5, n)
    ys = np.geomspace(hyp.SQRT3_2, y_top, n)
    zz = (xs[None, :] + 1j * ys[:, None]).ravel()
    zz = zz[np.abs(zz) >= 1.0]
    return np.concatenate([zz, hyp._fundamental_boundary_samples(y_top, 100)])


# ---------------------------------------------------------------------------
# Section maps
# ---------------------------------------------------------------------------


def curve_frame(H: Hypersurface, s: float) -> FermiFrame:
    return H.frame(s)


def lift_xi(H: Hypersurface, s: float, sigma: float, side: int, domain: str = "") -> PhasePoint:
    """Unit covector over (s, sigma) on the given side of H."""
    if abs(sigma) > 1.0 + 1e-12:
        raise DomainError(f"|sigma| = {abs(sigma)} > 1")
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    sigma = max(-1.0, min(1.0, float(sigma)))
    fr = H.frame(s)
    eta = side * math.sqrt(max(0.0, 1.0 - sigma * sigma))
    d = sigma * fr.tangent + eta * fr.normal
    d = d / math.hypot(*d)
    return PhasePoint(float(fr.point[0]), float(fr.point[1]), float(d[0]), float(d[1]), domain)


def _on_curve(H: Hypersurface, p: PhasePoint):
    s, yn, t, n = H.fermi(p.x, p.y)
    if not abs(yn) <= TAU_H:
        raise GeometryError(f"foot point is {yn:.3e} off the curve")
    return s, t, n


def project_piH(H: Hypersurface, p: PhasePoint) -> float:
    """Tangential component sigma of a unit covector with foot on H."""
    _, t, _ = _on_curve(H, p)
    return float(p.dx * t[0] + p.dy * t[1])


def section_point(H: Hypersurface, p: PhasePoint) -> CrossSectionPoint:
    s, t, n = _on_curve(H, p)
    sigma = float(p.dx * t[0] + p.dy * t[1])
    eta = float(p.dx * n[0] + p.dy * n[1])
    return CrossSectionPoint(s, sigma, 1 if eta >= 0 else -1)


def reflect_rH(H: Hypersurface, p: PhasePoint) -> PhasePoint:
    """Negate the normal component, keep the tangential one."""
    _, _, n = _on_curve(H, p)
    eta = p.dx * n[0] + p.dy * n[1]
    dx = p.dx - 2 * eta * n[0]
    dy = p.dy - 2 * eta * n[1]
    nn = math.hypot(dx, dy)
    return PhasePoint(p.x, p.y, dx / nn, dy / nn, p.domain)


def phase_angle(sigma: float, side: int) -> float:
    """Angle of the covector (sigma, side * sqrt(1 - sigma^2)) in the frame."""
    return math.atan2(side * math.sqrt(max(0.0, 1 - sigma * sigma)), sigma)
