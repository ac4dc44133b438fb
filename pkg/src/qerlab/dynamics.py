"""Geodesic/billiard flows, impact times, return maps and their Jacobians.

Billiard flows are traced exactly (straight segments, specular reflection).
Hyperbolic flows are right multiplication by a_t in PSL(2, R); on the
modular surface the state is reduced to the fundamental domain after every
chunk of length ``CHUNK``, and crossings with the curve are solved in closed
form against each lift of the curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import gmpy2
import numpy as np

from . import hyperbolic as hyp
from .errors import GeometryError, NumericalError, TrajectoryAbort
from .geometry import (
    CHUNK,
    ENDPOINT_MARGIN,
    CrossSectionPoint,
    EuclideanCircle,
    HyperbolicCurve,
    HyperbolicQuotient,
    Hypersurface,
    PhasePoint,
    Segment,
    lift_xi,
)

SIGMA_BAND = 1e-3
FLOW_PRECISION = 128  # bits, billiard flow only
T_SEP = 1e-6


@dataclass(frozen=True)
class Crossing:
    """One intersection of a trajectory with H."""

    t: float
    s: float
    sigma: float
    side: int
    signature: tuple = ()

    @property
    def point(self) -> CrossSectionPoint:
        return CrossSectionPoint(self.s, self.sigma, self.side)


@dataclass
class ImpactRecord:
    """Consecutive returns T^(1) < T^(2) < ... of one orbit."""

    times: list[float] = field(default_factory=list)
    points: list[CrossSectionPoint] = field(default_factory=list)
    censored: bool = False
    reason: str = ""

    @property
    def count(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------


def _billiard_flow(domain, p: PhasePoint, t: float) -> PhasePoint:
    """Exact ray tracing in FLOW_PRECISION-bit arithmetic.

    The stadium amplifies rounding roughly like e^{0.6 t}; double precision
    loses the composition law at the 1e-9 level within ~30 time units, so the
    state is carried (and returned) as gmpy2 numbers.
    """
    with gmpy2.context(precision=FLOW_PRECISION):
        mp = gmpy2.mpfr
        x, y, dx, dy = mp(p.x), mp(p.y), mp(p.dx), mp(p.dy)
        remaining = mp(t)
        if remaining < 0:
            dx, dy, remaining = -dx, -dy, -remaining
        nn = gmpy2.sqrt(dx * dx + dy * dy)
        dx, dy = dx / nn, dy / nn
        while True:
            th, hx, hy, nx, ny, _ = domain.next_wall_hit(x, y, dx, dy)
            if th >= remaining:
                x, y = x + remaining * dx, y + remaining * dy
                break
            remaining -= th
            x, y = hx, hy
            dot = dx * nx + dy * ny
            dx, dy = dx - 2 * dot * nx, dy - 2 * dot * ny
            nn = gmpy2.sqrt(dx * dx + dy * dy)
            dx, dy = dx / nn, dy / nn
        if t < 0:
            dx, dy = -dx, -dy
    return PhasePoint(x, y, dx, dy, p.domain)


def _point_to_matrix(p: PhasePoint) -> np.ndarray:
    return hyp.frame_to_matrix(complex(p.x, p.y), math.atan2(p.dy, p.dx))


def _matrix_to_point(g: np.ndarray, tag: str) -> PhasePoint:
    z, th = hyp.matrix_to_frame(g)
    return PhasePoint(z.real, z.imag, math.cos(th), math.sin(th), tag)


def _hyperbolic_flow(domain: HyperbolicQuotient, p: PhasePoint, t: float) -> PhasePoint:
    """Closed-form flow g -> g a_t, reduced into the fundamental domain after
    each chunk; carried in FLOW_PRECISION bits for the same reason as the
    billiard flow (the modular flow is Anosov)."""
    with gmpy2.context(precision=FLOW_PRECISION):
        mp = gmpy2.mpfr
        x, y = mp(p.x), mp(p.y)
        phi = (gmpy2.atan2(mp(p.dy), mp(p.dx)) - gmpy2.const_pi() / 2) / 2
        sy = gmpy2.sqrt(y)
        cp, sp = gmpy2.cos(phi), gmpy2.sin(phi)
        g = (sy * cp - x * sp / sy, sy * sp + x * cp / sy, -sp / sy, cp / sy)
        n = 1 if domain.group == "free" else max(1, int(math.ceil(abs(t) / CHUNK)))
        e = gmpy2.exp(mp(t) / (2 * n))
        if domain.group == "modular":
            g = _mp_reduce(g)
        for _ in range(n):
            a, b, c, d = g
            g = (a * e, b / e, c * e, d / e)
            if domain.group == "modular":
                g = _mp_reduce(g)
        a, b, c, d = g
        den = c * c + d * d
        th = gmpy2.const_pi() / 2 - 2 * gmpy2.atan2(c, d)
        return PhasePoint((a * c + b * d) / den, (a * d - b * c) / den,
                          gmpy2.cos(th), gmpy2.sin(th), p.domain)


def _mp_reduce(g):
    a, b, c, d = g
    for _ in range(10000):
        den = c * c + d * d
        n = int(gmpy2.floor((a * c + b * d) / den + 0.5))
        if n:
            a, b = a - n * c, b - n * d
        if a * a + b * b < den:
            a, b, c, d = -c, -d, a, b
            continue
        return a, b, c, d
    raise NumericalError("modular reduction did not terminate")


def flow(domain, p: PhasePoint, t: float) -> PhasePoint:
    """G^t on the unit level."""
    if not math.isfinite(t):
        raise ValueError("flow time must be finite")
    if isinstance(domain, HyperbolicQuotient):
        return _hyperbolic_flow(domain, p, t)
    return _billiard_flow(domain, p, t)


def reverse(p: PhasePoint) -> PhasePoint:
    return p.reversed()


# ---------------------------------------------------------------------------
# Crossings with H
# ---------------------------------------------------------------------------


def _sqrt(v):
    return math.sqrt(v) if isinstance(v, float) else gmpy2.sqrt(v)


def _atan2(y, x):
    return math.atan2(y, x) if isinstance(x, float) else gmpy2.atan2(y, x)


def _segment_crossings(H: Segment, x, y, dx, dy, ell):
    """Crossings of the open chord (x, y) + t (dx, dy), 0 < t <= ell."""
    ax, ay = float(H.start[0]), float(H.start[1])
    tx, ty = float(H.tangent[0]), float(H.tangent[1])
    L = H.length
    den = dx * ty - dy * tx
    if den == 0:
        return []
    t = ((ax - x) * ty - (ay - y) * tx) / den
    if not (0 < t <= ell):
        return []
    s = (x + t * dx - ax) * tx + (y + t * dy - ay) * ty
    if s < ENDPOINT_MARGIN * L or s > (1 - ENDPOINT_MARGIN) * L:
        return []
    sigma = dx * tx + dy * ty
    eta = dx * float(H.normal[0]) + dy * float(H.normal[1])
    return [(t, s, sigma, 1 if eta > 0 else -1)]


def _circle_crossings(H: EuclideanCircle, x, y, dx, dy, ell):
    px, py = x - float(H.center[0]), y - float(H.center[1])
    b = px * dx + py * dy
    c = px * px + py * py - H.radius ** 2
    disc = b * b - c
    if disc <= 0:
        return []
    sq = _sqrt(disc)
    out = []
    for t in (-b - sq, -b + sq):
        if 0 < t <= ell:
            hx, hy = px + t * dx, py + t * dy
            al = _atan2(hy, hx)
            if al < 0:
                al += 2 * math.pi if isinstance(al, float) else 2 * gmpy2.const_pi()
            rr = _sqrt(hx * hx + hy * hy)
            ux, uy = hx / rr, hy / rr
            sigma = -dx * uy + dy * ux
            eta = dx * ux + dy * uy
            s = H.radius * al
            if s >= H.length:
                s -= H.length
            out.append((t, s, sigma, 1 if eta > 0 else -1))
    return out


def _billiard_crossings(domain, H, p: PhasePoint, t_max: float,
                        exact: bool = False) -> Iterator[Crossing]:
    """Crossings of a billiard orbit.  With ``exact`` the orbit is traced in
    gmpy2 numbers; the caller must hold a gmpy2 context of FLOW_PRECISION."""
    if isinstance(H, Segment):
        finder = _segment_crossings
    elif isinstance(H, EuclideanCircle):
        finder = _circle_crossings
    else:
        raise GeometryError(f"{type(H).__name__} is not a billiard curve")
    num = gmpy2.mpfr if exact else float
    x, y, dx, dy = num(p.x), num(p.y), num(p.dx), num(p.dy)
    t0 = num(0)
    walls: list[int] = []
    while t0 < t_max:
        th, hx, hy, nx, ny, wid = domain.next_wall_hit(x, y, dx, dy)
        ell = min(th, t_max - t0)
        for t, s, sigma, side in finder(H, x, y, dx, dy, ell):
            if t0 + t > T_SEP:
                yield Crossing(t0 + t, s, sigma, side, tuple(walls))
        if th >= t_max - t0:
            return
        t0 += th
        x, y = hx, hy
        dot = dx * nx + dy * ny
        dx, dy = dx - 2 * dot * nx, dy - 2 * dot * ny
        nn = _sqrt(dx * dx + dy * dy)
        dx, dy = dx / nn, dy / nn
        walls.append(wid)


def _positive_roots(a2, a1, a0):
    """Positive real roots of a2 X^2 + a1 X + a0 = 0, elementwise (K,) arrays.

    Returns (index, root) arrays.  Uses the cancellation-free formula.
    """
    idx, roots = [], []
    for k in range(a2.shape[0]):
        A, B, C = float(a2[k]), float(a1[k]), float(a0[k])
        if B == 0.0:
            if A == 0.0:
                continue
            r = -C / A
            if r > 0:
                idx.append(k)
                roots.append(math.sqrt(r))
            continue
        scale = max(abs(A), abs(B), abs(C))
        if abs(A) <= 1e-15 * scale:
            r = -C / B
            if r > 0:
                idx.append(k)
                roots.append(r)
            continue
        disc = B * B - 4 * A * C
        if disc < 0:
            continue
        q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
        for r in (q / A, C / q if q != 0 else -1.0):
            if r > 0:
                idx.append(k)
                roots.append(r)
    return idx, roots


def _chunk_crossings(H: HyperbolicCurve, g: np.ndarray, tau: float):
    h = H.lifts @ g
    a2, a1, a0 = H.quadratic(h)
    idx, roots = _positive_roots(a2, a1, a0)
    out = []
    hi = math.exp(tau)
    for k, X in zip(idx, roots):
        if not (1.0 < X <= hi):
            continue
        hk = h[k]
        zi = 1j * X
        w = complex(hyp.mobius(hk, zi))
        cz = hk[1, 0] * zi + hk[1, 1]
        phi = 0.5 * math.pi - 2.0 * math.atan2(cz.imag, cz.real)
        th = float(H.std_tangent_angle(w))
        sigma = math.cos(phi - th)
        eta = -math.sin(phi - th)
        s = float(H.std_s(w)) % H.length
        out.append((math.log(X), s, sigma, 1 if eta > 0 else -1, k))
    out.sort()
    return out


def _hyperbolic_crossings(domain, H, p: PhasePoint, t_max: float) -> Iterator[Crossing]:
    if not isinstance(H, HyperbolicCurve):
        raise GeometryError(f"{type(H).__name__} is not a hyperbolic curve")
    g = _point_to_matrix(p)
    if domain.group == "free":
        for t, s, sigma, side, k in _chunk_crossings(H, g, t_max):
            if t > T_SEP:
                yield Crossing(t, s, sigma, side, (k,))
        return
    g = domain.reduce(g)
    t0 = 0.0
    last = -math.inf
    while t0 < t_max:
        tau = min(CHUNK, t_max - t0)
        for t, s, sigma, side, k in _chunk_crossings(H, g, tau):
            tt = t0 + t
            if tt > T_SEP and tt - last > T_SEP:
                last = tt
                yield Crossing(tt, s, sigma, side, (k,))
        g = domain.reduce(hyp.geodesic_step(g, tau))
        t0 += tau


def crossings(domain, H: Hypersurface, p: PhasePoint, t_max: float) -> Iterator[Crossing]:
    """All crossings of G^t p with H for T_SEP < t <= t_max, in time order."""
    if isinstance(domain, HyperbolicQuotient):
        return _hyperbolic_crossings(domain, H, p, t_max)
    return _billiard_crossings(domain, H, p, t_max)


def crossings_window(domain, H, p: PhasePoint, t_lo: float, t_hi: float) -> list[Crossing]:
    """Crossings with t in (t_lo, t_hi), t_lo < 0 < t_hi, both time directions.

    Backward crossings are reported with negative times and with the
    covector of the forward orbit (sigma and side negated from the reversed
    orbit).
    """
    out = []
    if t_lo < 0:
        for c in crossings(domain, H, p.reversed(), -t_lo):
            if -c.t > t_lo:
                out.append(Crossing(-c.t, c.s, -c.sigma, -c.side, c.signature))
        out.reverse()
    if t_hi > 0:
        out.extend(c for c in crossings(domain, H, p, t_hi) if c.t < t_hi)
    return out


def impact_time(domain, p: PhasePoint, H: Hypersurface, t_max: float) -> float | None:
    """Forward first impact time, or None when censored at t_max."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    for c in crossings(domain, H, p, t_max):
        return c.t
    return None


# ---------------------------------------------------------------------------
# Return maps
# ---------------------------------------------------------------------------


def _lift(domain, H, q: CrossSectionPoint) -> PhasePoint:
    return lift_xi(H, q.s, q.sigma, q.side, getattr(domain, "kind", ""))


def _in_band(sigma: float, band: float) -> bool:
    return abs(sigma) > 1.0 - band


def jth_return(domain, H, q: CrossSectionPoint, j: int, t_max: float,
               sigma_band: float = SIGMA_BAND, signatures: list | None = None) -> ImpactRecord:
    """Iterate the first return map j times along one orbit."""
    if _in_band(q.sigma, sigma_band):
        raise ValueError("section point lies in the tangential band")
    rec = ImpactRecord()
    try:
        for c in crossings(domain, H, _lift(domain, H, q), t_max):
            if _in_band(c.sigma, sigma_band):
                rec.censored, rec.reason = True, "band-grazing"
                return rec
            rec.times.append(c.t)
            rec.points.append(c.point)
            if signatures is not None:
                signatures.append(c.signature)
            if rec.count >= j:
                return rec
    except TrajectoryAbort as exc:
        rec.censored, rec.reason = True, f"abort: {exc}"
        return rec
    rec.censored, rec.reason = True, "horizon"
    return rec


def return_map_Phi(domain, H, q: CrossSectionPoint, t_max: float,
                   sigma_band: float = SIGMA_BAND):
    """First return (Phi(q), T), or None when censored."""
    rec = jth_return(domain, H, q, 1, t_max, sigma_band)
    if rec.count < 1:
        return None
    return rec.points[0], rec.times[0]


def one_sided_return(domain, H, s: float, sigma: float, side: int, j: int, t_max: float,
                     sigma_band: float = SIGMA_BAND):
    """P_{side, j}(s, sigma) = pi_H Phi^j xi_side(s, sigma), with its return time.

    Returns ((s', sigma'), T) or None when censored.
    """
    rec = jth_return(domain, H, CrossSectionPoint(s, sigma, side), j, t_max, sigma_band)
    if rec.count < j:
        return None
    pt = rec.points[j - 1]
    return (pt.s, pt.sigma), rec.times[j - 1]


def h_reflection_Rj(domain, H, p: PhasePoint, j: int, t_max: float,
                    sigma_band: float = SIGMA_BAND) -> PhasePoint | None:
    """R_j(p): flow to the j-th impact, reflect through T*H, flow back."""
    k = 0
    try:
        for c in crossings(domain, H, p, t_max):
            if _in_band(c.sigma, sigma_band):
                return None
            k += 1
            if k == j:
                q = lift_xi(H, c.s, c.sigma, -c.side, p.domain)
                return flow(domain, q, -c.t)
    except TrajectoryAbort:
        return None
    return None


_STENCILS = {
    2: (0.5,),
    4: (2 / 3, -1 / 12),
    6: (3 / 4, -3 / 20, 1 / 60),
    8: (4 / 5, -1 / 5, 4 / 105, -1 / 280),
}


def _lift_exact(H, s, sigma, side):
    """lift_xi evaluated in gmpy2 arithmetic (billiard curves only)."""
    if isinstance(H, Segment):
        x = H.start[0] + s * H.tangent[0]
        y = H.start[1] + s * H.tangent[1]
        tx, ty = gmpy2.mpfr(H.tangent[0]), gmpy2.mpfr(H.tangent[1])
        nx, ny = gmpy2.mpfr(H.normal[0]), gmpy2.mpfr(H.normal[1])
    else:
        al = s / H.radius
        ux, uy = gmpy2.cos(al), gmpy2.sin(al)
        x, y = H.center[0] + H.radius * ux, H.center[1] + H.radius * uy
        tx, ty, nx, ny = -uy, ux, ux, uy
    eta = side * gmpy2.sqrt(1 - sigma * sigma)
    return PhasePoint(x, y, sigma * tx + eta * nx, sigma * ty + eta * ny)


def _first_return(domain, H, s, sigma, side, t_max, sigma_band, exact):
    """(crossing, itinerary) of the first return, or None when censored."""
    try:
        if exact:
            p = _lift_exact(H, s, sigma, side)
            it = _billiard_crossings(domain, H, p, t_max, exact=True)
        else:
            s = float(s) % H.length if H.closed else float(s)
            it = crossings(domain, H, lift_xi(H, s, float(sigma), side), t_max)
        c = next(it, None)
    except TrajectoryAbort:
        return None
    if c is None or _in_band(float(c.sigma), sigma_band):
        return None
    return c


def _fd_jacobian(domain, H, q, base, t_max, h_fd, sigma_band, weights, exact):
    num = gmpy2.mpfr if exact else float
    s0, sig0 = num(q.s), num(q.sigma)
    jac = [[None, None], [None, None]]
    for col in range(2):
        ds = dsig = 0.0
        for k, w in enumerate(weights, start=1):
            for sgn in (1, -1):
                step = sgn * k * num(h_fd)
                s, sig = (s0 + step, sig0) if col == 0 else (s0, sig0 + step)
                if not H.closed and not (ENDPOINT_MARGIN * H.length < s
                                         < (1 - ENDPOINT_MARGIN) * H.length):
                    return None
                if _in_band(float(sig), sigma_band):
                    return None
                c = _first_return(domain, H, s, sig, q.side, t_max, sigma_band, exact)
                if c is None or c.signature != base.signature or c.side != base.side:
                    return None
                d_s = c.s - base.s
                if H.closed:
                    half = 0.5 * H.length
                    if d_s > half:
                        d_s -= H.length
                    elif d_s < -half:
                        d_s += H.length
                ds += sgn * w * d_s
                dsig += sgn * w * (c.sigma - base.sigma)
        jac[0][col] = ds / h_fd
        jac[1][col] = dsig / h_fd
    return jac


@dataclass(frozen=True)
class JacobianResult:
    matrix: np.ndarray
    det: float
    step: float


def section_jacobian(domain, H, q: CrossSectionPoint, t_max: float, h_fd: float = 1e-5,
                     sigma_band: float = SIGMA_BAND, order: int = 8,
                     exact: bool | None = None, det_tol: float | None = -1.0,
                     h_min: float = 1e-12, full: bool = False):
    """Central finite-difference Jacobian of Phi in (s, sigma) at q.

    ``order`` selects the central stencil (2, 4, 6 or 8).  Billiard returns
    are traced in FLOW_PRECISION bits by default (``exact``), so steps far
    below 1e-8 stay free of rounding noise.

    Long stadium returns have |DPhi| up to ~1e7 and a curvature scale well
    below 1e-5.  The step is therefore divided by 8, starting from h_fd,
    until successive Jacobians J1, J2 satisfy
    max|J1 - J2| * max|J2| <= det_tol (a bound on the change of det J).
    The default det_tol is 1e-9 for exact tracing and 1e-6 in double
    precision; pass None for a single fixed-step evaluation.

    Returns the 2x2 float matrix, or with ``full`` a JacobianResult whose
    determinant is formed before rounding the entries (float64 entries of
    size 1e6 cannot carry det J to better than ~1e-4).  Returns None
    (jacobian unavailable) when a stencil neighbour is censored, enters the
    band, follows a different wall itinerary, or the step control fails.
    """
    if order not in _STENCILS:
        raise ValueError(f"order must be one of {sorted(_STENCILS)}")
    if exact is None:
        exact = not isinstance(domain, HyperbolicQuotient)
    if exact and isinstance(domain, HyperbolicQuotient):
        raise ValueError("exact Jacobians are available for billiards only")
    if det_tol is not None and det_tol < 0:
        det_tol = 1e-9 if exact else 1e-6
    weights = _STENCILS[order]
    with gmpy2.context(precision=FLOW_PRECISION):
        num = gmpy2.mpfr if exact else float
        base = _first_return(domain, H, num(q.s), num(q.sigma), q.side, t_max,
                             sigma_band, exact)
        if base is None:
            return None
        h = h_fd
        prev = None
        while True:
            jac = _fd_jacobian(domain, H, q, base, t_max, h, sigma_band, weights, exact)
            done = det_tol is None
            if jac is not None and prev is not None:
                change = max(abs(float(jac[i][k] - prev[i][k])) for i in (0, 1) for k in (0, 1))
                size = max(abs(float(jac[i][k])) for i in (0, 1) for k in (0, 1))
                done = change * size <= det_tol
            if done:
                if jac is None:
                    return None
                mat = np.array([[float(v) for v in row] for row in jac])
                if not full:
                    return mat
                det = float(jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0])
                return JacobianResult(mat, det, h)
            if h / 8 < h_min:
                return None
            prev = jac
            h /= 8


# ---------------------------------------------------------------------------
# Invariant measures
# ---------------------------------------------------------------------------


def sample_liouville(domain, n: int, rng: np.random.Generator) -> list[PhasePoint]:
    """n points of S*M from the normalized Liouville measure mu_L.

    Billiards: uniform position by rejection from the bounding box, uniform
    direction.  Modular surface: dx dy / y^2 on the standard fundamental
    domain (y drawn with density ~ y^-2 above sqrt(3)/2, then rejection).
    """
    out: list[PhasePoint] = []
    tag = getattr(domain, "kind", "")
    if isinstance(domain, HyperbolicQuotient):
        if domain.group != "modular":
            raise ValueError("the free plane has infinite Liouville volume")
        while len(out) < n:
            m = 2 * (n - len(out)) + 16
            x = rng.uniform(-0.5, 0.5, m)
            y = hyp.SQRT3_2 / (1.0 - rng.random(m))
            th = rng.uniform(0.0, 2 * math.pi, m)
            for xi, yi, ti in zip(x, y, th):
                if xi * xi + yi * yi >= 1.0 and len(out) < n:
                    out.append(PhasePoint(float(xi), float(yi), math.cos(ti), math.sin(ti), tag))
        return out
    x0, x1, y0, y1 = domain.bbox
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        x = rng.uniform(x0, x1, m)
        y = rng.uniform(y0, y1, m)
        th = rng.uniform(0.0, 2 * math.pi, m)
        ok = domain.contains(x, y)
        for xi, yi, ti in zip(x[ok], y[ok], th[ok]):
            if len(out) < n:
                out.append(PhasePoint(float(xi), float(yi), math.cos(ti), math.sin(ti), tag))
    return out


def sample_section(H: Hypersurface, n: int, rng: np.random.Generator,
                   sigma_band: float = SIGMA_BAND) -> list[CrossSectionPoint]:
    """n points from mu_{L,H} (uniform in ds dsigma on each sheet), with the
    tangential band and the endpoint margins of open curves excluded."""
    if H.closed:
        s = rng.uniform(0.0, H.length, n)
    else:
        m = ENDPOINT_MARGIN * H.length
        s = m + (H.length - 2 * m) * rng.random(n)
    lim = 1.0 - sigma_band
    sig = rng.uniform(-lim, lim, n)
    side = np.where(rng.random(n) < 0.5, 1, -1)
    return [CrossSectionPoint(float(a), float(b), int(c)) for a, b, c in zip(s, sig, side)]


def section_mass(H: Hypersurface) -> float:
    """Total mu_{L,H} mass: two sheets of ds dsigma over [0, L] x [-1, 1]."""
    return 4.0 * H.length


@dataclass
class KacResult:
    mean_return: float
    stderr: float
    predicted: float
    samples: int
    censored: int

    @property
    def zscore(self) -> float:
        return (self.mean_return - self.predicted) / self.stderr if self.stderr > 0 else math.inf


def kac_check(domain, H, n: int, rng: np.random.Generator, t_max: float = 200.0) -> KacResult:
    """Mean first return time over mu_{L,H} against vol(S*M) / mass(mu_{L,H}).

    The band |sigma| > 1 - SIGMA_BAND is not sampled; it carries a fraction
    ~1e-3 of the section mass, so the full band (no censoring) is used here.
    """
    times = []
    censored = 0
    for q in sample_section(H, n, rng, sigma_band=0.0):
        try:
            t = impact_time(domain, _lift(domain, H, q), H, t_max)
        except TrajectoryAbort:
            t = None
        if t is None:
            censored += 1
        else:
            times.append(t)
    arr = np.asarray(times)
    return KacResult(float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size)),
                     domain.liouville_volume / section_mass(H), arr.size, censored)
