"""Symbols on B*H, cutoffs, the limit functional omega and averaged symbols.

Smooth profiles (the cutoff psi_eps and the time window chi) are built from
the quintic smoothstep, which is C^2 and has closed-form antiderivatives, so
window integrals are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .dynamics import (
    SIGMA_BAND,
    TrajectoryAbort,
    crossings_window,
    flow,
    jth_return,
    sample_liouville,
)
from .geometry import CrossSectionPoint, HyperbolicQuotient, PhasePoint, lift_xi

DELTA = 0.1  # half-width of the chi shoulders


# ---------------------------------------------------------------------------
# Symbols
# ---------------------------------------------------------------------------


class Symbol:
    """A function a(s, sigma) on B*H."""

    name: str = "a"
    sup_norm: float = math.inf
    s_breaks: tuple[float, ...] = ()

    def __call__(self, s, sigma):
        raise NotImplementedError

    def s_part(self, s):
        """s-dependent factor for Kohn-Nirenberg quantization (None if absent)."""
        return None

    def sigma_part(self, sigma):
        return None

    @property
    def is_multiplication(self) -> bool:
        return False

    def scaled(self, c: float) -> "Symbol":
        return ScaledSymbol(self, c)


def _as_fn(v) -> Callable:
    if callable(v):
        return v
    c = float(v)
    return lambda s: np.full(np.shape(s), c)


class Multiplication(Symbol):
    """a(s, sigma) = V(s)."""

    def __init__(self, V, sup_norm: float | None = None, name: str = "V", s_breaks=()):
        self.V = _as_fn(V)
        self.name = name
        self.s_breaks = tuple(s_breaks)
        self.sup_norm = abs(float(V)) if sup_norm is None and not callable(V) else (
            sup_norm if sup_norm is not None else math.inf)

    def __call__(self, s, sigma):
        return self.V(np.asarray(s, dtype=float)) * np.ones(np.shape(sigma))

    def s_part(self, s):
        return self.V(np.asarray(s, dtype=float))

    @property
    def is_multiplication(self) -> bool:
        return True


class Separable(Symbol):
    """a(s, sigma) = V(s) g(sigma)."""

    def __init__(self, V, g: Callable, sup_norm: float = math.inf, name: str = "Vg", s_breaks=()):
        self.V = _as_fn(V)
        self.g = g
        self.sup_norm = sup_norm
        self.name = name
        self.s_breaks = tuple(s_breaks)

    def __call__(self, s, sigma):
        return self.V(np.asarray(s, dtype=float)) * self.g(np.asarray(sigma, dtype=float))

    def s_part(self, s):
        return self.V(np.asarray(s, dtype=float))

    def sigma_part(self, sigma):
        return self.g(np.asarray(sigma, dtype=float))


class Tabulated(Symbol):
    """Bicubic interpolation of values on an (s, sigma) grid."""

    def __init__(self, s_nodes, sigma_nodes, values, name: str = "table"):
        s_nodes = np.asarray(s_nodes, float)
        sigma_nodes = np.asarray(sigma_nodes, float)
        values = np.asarray(values, float)
        if values.shape != (s_nodes.size, sigma_nodes.size):
            raise ValueError("table shape must be (len(s_nodes), len(sigma_nodes))")
        k = min(3, s_nodes.size - 1, sigma_nodes.size - 1)
        self._spl = RectBivariateSpline(s_nodes, sigma_nodes, values, kx=k, ky=k)
        self._s_range = (s_nodes[0], s_nodes[-1])
        self._sig_range = (sigma_nodes[0], sigma_nodes[-1])
        self.sup_norm = float(np.abs(values).max())
        self.name = name
        self.s_breaks = tuple(s_nodes)

    def __call__(self, s, sigma):
        s = np.clip(np.asarray(s, float), *self._s_range)
        sigma = np.clip(np.asarray(sigma, float), *self._sig_range)
        return self._spl.ev(s, sigma)


class ScaledSymbol(Symbol):
    def __init__(self, base: Symbol, c: float):
        self.base, self.c = base, float(c)
        self.name = f"{c:g}*{base.name}"
        self.sup_norm = abs(self.c) * base.sup_norm
        self.s_breaks = base.s_breaks

    def __call__(self, s, sigma):
        return self.c * self.base(s, sigma)

    def s_part(self, s):
        v = self.base.s_part(s)
        if v is None:
            return None
        return self.c * v

    def sigma_part(self, sigma):
        return self.base.sigma_part(sigma)

    @property
    def is_multiplication(self) -> bool:
        return self.base.is_multiplication


def constant(c: float = 1.0) -> Multiplication:
    return Multiplication(c, name=f"const{c:g}")


def piecewise_cubic(knots_s: Sequence[float], values: Sequence[float], length: float,
                    closed: bool) -> Callable:
    """Cubic spline V on [0, L): periodic for closed curves, natural otherwise."""
    xs = np.asarray(knots_s, float)
    ys = np.asarray(values, float)
    if closed:
        if not np.isclose(xs[-1], length):
            xs = np.append(xs, length)
            ys = np.append(ys, ys[0])
        spl = CubicSpline(xs, ys, bc_type="periodic")
        return lambda s: spl(np.mod(s, length))
    spl = CubicSpline(xs, ys, bc_type="natural")
    return lambda s: spl(np.clip(s, xs[0], xs[-1]))


# ---------------------------------------------------------------------------
# gamma and the cutoffs
# ---------------------------------------------------------------------------


def gamma(sigma):
    """sqrt(1 - sigma^2); zero at the fold |sigma| = 1."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.abs(sigma) > 1 + 1e-12):
        raise ValueError("|sigma| must not exceed 1")
    return np.sqrt(np.clip(1.0 - sigma * sigma, 0.0, None))


def gamma_full(sigma, eta):
    """|eta| / sqrt(sigma^2 + eta^2) for a covector with components (sigma, eta)."""
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.abs(eta) / np.hypot(sigma, eta)


def smoothstep(x):
    """C^2 quintic step: 0 for x <= 0, 1 for x >= 1, step(x) + step(1-x) = 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * x * (x * (6 * x - 15) + 10)


def _smoothstep_integral(x):
    """int_0^x smoothstep for 0 <= x <= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x ** 4 * (x * (x - 3) + 2.5)


def psi(x, eps: float):
    """Plateau cutoff: 1 on |x| <= eps/2, 0 on |x| >= eps, C^2 monotone shoulders."""
    if not 0 < eps < 1:
        raise ValueError("cutoff aperture must lie in (0, 1)")
    x = np.abs(np.asarray(x, dtype=float))
    return 1.0 - smoothstep((x - 0.5 * eps) / (0.5 * eps))


@dataclass(frozen=True)
class CutoffParams:
    eps: float
    collar: float = math.inf

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")


def collar_width(domain, H) -> float:
    r = getattr(domain, "step_scale", math.inf)
    return min(0.5 * r, 0.2 * H.length)


def _fermi_components(H, p: PhasePoint):
    s, yn, t, n = H.fermi(float(p.x), float(p.y))
    sigma = float(p.dx) * t[0] + float(p.dy) * t[1]
    eta = float(p.dx) * n[0] + float(p.dy) * n[1]
    return s, yn, sigma, eta


def cutoff_tan(H, p: PhasePoint, eps: float, collar: float = math.inf) -> float:
    """chi^(tan): 1 in the eps/2 cone about T*H, 0 outside the eps cone."""
    _, yn, sigma, eta = _fermi_components(H, p)
    if not abs(yn) <= collar:
        return 0.0
    ratio = eta * eta / (sigma * sigma + eta * eta)
    return float(psi(ratio, eps) * psi(yn, eps))


def cutoff_norm(H, p: PhasePoint, eps: float, collar: float = math.inf) -> float:
    """chi^(n): 1 in the eps/2 cone about N*H, 0 outside the eps cone."""
    _, yn, sigma, eta = _fermi_components(H, p)
    if not abs(yn) <= collar:
        return 0.0
    ratio = sigma * sigma / (sigma * sigma + eta * eta)
    return float(psi(ratio, eps) * psi(yn, eps))


def section_cutoff(sigma, eps: float):
    """chi^(tan) restricted to unit covectors on H: psi_eps(1 - sigma^2)."""
    if eps == 0:
        return np.zeros(np.shape(sigma))
    sigma = np.asarray(sigma, dtype=float)
    return psi(1.0 - sigma * sigma, eps)


def section_weight(a: Symbol, s, sigma, eps: float):
    """(1 - chi_eps) gamma^-1 a on the section (0 where the cutoff is 1)."""
    sigma = np.asarray(sigma, dtype=float)
    keep = 1.0 - section_cutoff(sigma, eps)
    g = gamma(np.clip(sigma, -1, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(keep > 0, keep * a(s, sigma) / np.where(g > 0, g, 1.0), 0.0)
    return w


def min_eps(sigma_band: float = SIGMA_BAND) -> float:
    """Smallest eps whose cutoff vanishes identically on the censored band."""
    lim = 1.0 - sigma_band
    return 2.0 * (1.0 - lim * lim)


# ---------------------------------------------------------------------------
# omega
# ---------------------------------------------------------------------------


def _gl_panels(breaks, n):
    x, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        xs.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(xs), np.concatenate(ws)


def omega(a: Symbol, domain, H, eps: float = 0.0, rtol: float = 1e-10,
          n_start: int = 16, n_max: int = 2048) -> float:
    """(2 / vol S*M) int_{B*H} (1 - chi_eps) a gamma^-1 ds dsigma.

    The substitution sigma = sin(theta) removes the gamma^-1 singularity;
    both directions use Gauss-Legendre panels split at the cutoff shoulders
    and at the symbol's s-breakpoints, doubled until two successive values
    agree to rtol.
    """
    vol = domain.liouville_volume
    if not math.isfinite(vol):
        raise ValueError("omega needs a finite-volume domain")
    th_breaks = [-0.5 * math.pi, 0.5 * math.pi]
    if eps > 0:
        for c in (eps, 0.5 * eps):
            t = math.acos(math.sqrt(c))
            th_breaks += [-t, t]
    th_breaks = sorted(set(th_breaks))
    L = H.length
    s_breaks = sorted({0.0, L, *[b for b in a.s_breaks if 0 < b < L]})
    prev = None
    n = n_start
    while n <= n_max:
        th, wth = _gl_panels(th_breaks, n)
        s, ws = _gl_panels(s_breaks, n)
        S, TH = np.meshgrid(s, th, indexing="ij")
        sig = np.sin(TH)
        keep = 1.0 - section_cutoff(sig, eps) if eps > 0 else 1.0
        val = float(ws @ (keep * a(S, sig)) @ wth) * 2.0 / vol
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300) + 1e-15:
            return val
        prev = val
        n *= 2
    from .errors import NumericalError

    raise NumericalError(f"omega quadrature did not reach rtol={rtol} (last {prev})")


# ---------------------------------------------------------------------------
# Time window chi
# ---------------------------------------------------------------------------


def chi(t, delta: float = DELTA):
    """Window with chi = 1/2 on |t| <= 1 - delta, 0 beyond 1 + delta, int chi = 1."""
    t = np.abs(np.asarray(t, dtype=float))
    return 0.5 * (1.0 - smoothstep((t - (1 - delta)) / (2 * delta)))


def chi_cumulative(x, delta: float = DELTA):
    """C(x) = int_{-inf}^x chi, exact."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    u = np.clip(ax, 0.0, 1 - delta)
    v = np.clip(ax - (1 - delta), 0.0, 2 * delta)
    half = 0.5 * u + 0.5 * (v - 2 * delta * _smoothstep_integral(v / (2 * delta)))
    return 0.5 + np.sign(x) * half


def window_integral(a, b, T: float, delta: float = DELTA):
    """(1/T) int_a^b chi(t/T) dt."""
    return chi_cumulative(np.asarray(b) / T, delta) - chi_cumulative(np.asarray(a) / T, delta)


# ---------------------------------------------------------------------------
# Averaged symbols
# ---------------------------------------------------------------------------


@dataclass
class AverageResult:
    value: float
    impacts: int
    censored: bool = False
    reason: str = ""


def _impacts(domain, H, p, reach: float):
    try:
        return crossings_window(domain, H, p, -reach, reach), False, ""
    except TrajectoryAbort as exc:
        return [], True, str(exc)


def _check_eps(eps: float, sigma_band: float):
    if eps < min_eps(sigma_band) - 1e-15:
        raise ValueError(f"eps={eps} is below the band-compatible minimum {min_eps(sigma_band):.4g}")


def time_avg_details(a: Symbol, domain, H, p: PhasePoint, T: float, eps: float,
                     shift: float = 0.0, delta: float = DELTA,
                     sigma_band: float = SIGMA_BAND) -> AverageResult:
    """a_{T,eps}(G^shift p) evaluated from the impacts of p (window re-indexed).

    Orbits that hit a billiard corner are reported as censored with value 0.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    _check_eps(eps, sigma_band)
    reach = (1 + delta) * T + abs(shift)
    imp, cens, why = _impacts(domain, H, p, reach)
    if cens:
        return AverageResult(0.0, 0, True, why)
    if not imp:
        return AverageResult(0.0, 0)
    t = np.array([c.t for c in imp], dtype=float) - shift
    s = np.array([c.s for c in imp], dtype=float)
    sig = np.array([c.sigma for c in imp], dtype=float)
    w = section_weight(a, s, sig, eps) * chi(t / T, delta)
    return AverageResult(float(w.sum() / T), len(imp))


def time_avg_symbol(a: Symbol, domain, H, p: PhasePoint, T: float, eps: float,
                    delta: float = DELTA) -> float:
    """a_{T,eps}(p) = (1/T) sum_j (1 - chi_eps) gamma^-1 a(s_j, sigma_j) chi(t_j / T)."""
    return time_avg_details(a, domain, H, p, T, eps, 0.0, delta).value


def time_avg_flowed(a: Symbol, domain, H, p: PhasePoint, T: float, eps: float, r: float,
                    delta: float = DELTA) -> float:
    """a_{T,eps}(G^r p) computed by flowing p first (cross-check of re-indexing)."""
    q = flow(domain, p, r).as_float()
    return time_avg_symbol(a, domain, H, q, T, eps, delta)


def double_avg_details(a: Symbol, domain, H, p: PhasePoint, T: float, R: float, eps: float,
                       delta: float = DELTA, sigma_band: float = SIGMA_BAND) -> AverageResult:
    """a_{T,R,eps}(p) = (1/2R) int_{-R}^{R} a_{T,eps}(G^r p) dr.

    The r-integral is done exactly: each impact at time t_j contributes
    F_j (1/2R) int_{-R}^{R} chi((t_j - r)/T) dr / T.
    """
    if R < 0:
        raise ValueError("R must be non-negative")
    if R == 0:
        return time_avg_details(a, domain, H, p, T, eps, 0.0, delta, sigma_band)
    _check_eps(eps, sigma_band)
    reach = (1 + delta) * T + R
    imp, cens, why = _impacts(domain, H, p, reach)
    if cens:
        return AverageResult(0.0, 0, True, why)
    if not imp:
        return AverageResult(0.0, 0)
    t = np.array([c.t for c in imp], dtype=float)
    s = np.array([c.s for c in imp], dtype=float)
    sig = np.array([c.sigma for c in imp], dtype=float)
    kern = window_integral(t - R, t + R, T, delta) / (2 * R)
    return AverageResult(float((section_weight(a, s, sig, eps) * kern).sum()), len(imp))


def double_avg_symbol(a: Symbol, domain, H, p: PhasePoint, T: float, R: float, eps: float,
                      delta: float = DELTA) -> float:
    return double_avg_details(a, domain, H, p, T, R, eps, delta).value


def chi_bar(domain, H, q: CrossSectionPoint, T: float, delta: float = DELTA,
            t_max_factor: float = 1.5) -> float:
    """(1/T) sum over consecutive return intervals [t_k, t_k + T(Phi^k q)] of
    int chi(t/T) dt, both time directions, each return time re-traced from
    the landed section point.  Equals 1 when the intervals tile the window.
    """
    edge = (1 + delta) * T
    reach = edge * t_max_factor
    fwd = jth_return(domain, H, q, 10 ** 6, reach, sigma_band=0.0)
    rev = jth_return(domain, H, CrossSectionPoint(q.s, -q.sigma, -q.side), 10 ** 6, reach,
                     sigma_band=0.0)
    for rec in (fwd, rev):
        if rec.reason.startswith("abort"):
            raise TrajectoryAbort(rec.reason)
    # impacts on the orbit of q as (time, section point in the forward covector)
    orbit = [(-t, CrossSectionPoint(c.s, -c.sigma, -c.side))
             for t, c in zip(rev.times, rev.points)][::-1]
    orbit.append((0.0, q))
    orbit += list(zip(fwd.times, fwd.points))
    # the interval ending at the earliest impact starts before -reach, where chi vanishes
    total = float(chi_cumulative(orbit[0][0] / T, delta))
    for t_k, pt in orbit:
        if t_k >= edge:
            break
        nxt = jth_return(domain, H, pt, 1, edge - t_k + 1.0, sigma_band=0.0)
        if nxt.count == 0:
            if nxt.reason.startswith("abort"):
                raise TrajectoryAbort(nxt.reason)
            total += 1.0 - float(chi_cumulative(t_k / T, delta))
        else:
            total += float(window_integral(t_k, t_k + nxt.times[0], T, delta))
    return total


def _mc(values):
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


@dataclass
class MeanCheck:
    mean: float
    stderr: float
    omega: float
    samples: int
    censored: int

    @property
    def zscore(self) -> float:
        return (self.mean - self.omega) / self.stderr if self.stderr > 0 else math.inf


def liouville_mean(symbols: Sequence[Symbol], domain, H, T: float, eps: float, n: int,
                   rng: np.random.Generator, delta: float = DELTA) -> list[MeanCheck]:
    """mu_L averages of a_{T,eps} for several symbols, sharing the impacts."""
    for a in symbols:
        _check_eps(eps, SIGMA_BAND)
    vals = [[] for _ in symbols]
    censored = 0
    reach = (1 + delta) * T
    for p in sample_liouville(domain, n, rng):
        imp, cens, _ = _impacts(domain, H, p, reach)
        if cens:
            censored += 1
            continue
        if not imp:
            for v in vals:
                v.append(0.0)
            continue
        t = np.array([c.t for c in imp])
        s = np.array([c.s for c in imp])
        sig = np.array([c.sigma for c in imp])
        win = chi(t / T, delta) / T
        for a, v in zip(symbols, vals):
            v.append(float((section_weight(a, s, sig, eps) * win).sum()))
    out = []
    for a, v in zip(symbols, vals):
        m, se = _mc(v)
        out.append(MeanCheck(m, se, omega(a, domain, H, eps), len(v), censored))
    return out


@dataclass
class VarianceResult:
    variance: float
    stderr: float
    omega: float
    samples: int
    censored: int
    T: float
    R: float


def variance_over_SstarM(a: Symbol, domain, H, T: float, R: float, eps: float, n_samples: int,
                         rng: np.random.Generator, delta: float = DELTA,
                         reference: float | None = None) -> VarianceResult:
    """mu_L mean of |a_{T,R,eps} - omega((1 - chi_eps) a)|^2."""
    if isinstance(domain, HyperbolicQuotient) and domain.group == "free":
        raise ValueError("variance needs a finite-volume domain")
    w = omega(a, domain, H, eps) if reference is None else reference
    dev = []
    censored = 0
    for p in sample_liouville(domain, n_samples, rng):
        r = double_avg_details(a, domain, H, p, T, R, eps, delta)
        if r.censored:
            censored += 1
            continue
        dev.append((r.value - w) ** 2)
    m, se = _mc(dev)
    return VarianceResult(m, se, w, len(dev), censored, T, R)


def bound_constant(eps: float) -> float:
    """sup of gamma^-1 on the support of 1 - chi_eps on the section."""
    return 1.0 / math.sqrt(0.5 * eps)


__all__ = [name for name in dir() if not name.startswith("_")]
