"""Restriction of grid eigenfunctions to a curve and quantized symbols on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import GeometryError
from .spectral import SpectralBatch
from .symbols import Symbol, smoothstep

POINTS_PER_WAVELENGTH = 16
MIN_POINTS_PER_WAVELENGTH = 8
MIN_NODES = 128  # keeps >= 6 nodes across the 5% taper ramp
TAPER_FRACTION = 0.05
EPS0 = 0.2
ALIAS_FRACTION = 0.01


@dataclass
class CurveTrace:
    """Samples of a restricted eigenfunction at uniform arclength nodes.

    Open curves include both endpoints; closed curves use n_s nodes on [0, L).
    """

    j: int
    lam: float
    s: np.ndarray
    values: np.ndarray
    length: float
    closed: bool
    order: int = 3

    @property
    def n_s(self) -> int:
        return int(self.s.size)

    def with_values(self, values) -> "CurveTrace":
        return CurveTrace(self.j, self.lam, self.s, np.asarray(values), self.length, self.closed,
                          self.order)


def default_nodes(lam: float, length: float) -> int:
    return max(MIN_NODES, int(math.ceil(POINTS_PER_WAVELENGTH * lam * length / (2 * math.pi))))


def curve_nodes(H, n_s: int) -> np.ndarray:
    if H.closed:
        return H.length * np.arange(n_s) / n_s
    return np.linspace(0.0, H.length, n_s)


class GridInterpolant:
    """Bicubic spline of a grid eigenfunction (zero outside the domain)."""

    CLEARANCE_CELLS = 2

    def __init__(self, batch: SpectralBatch, j: int):
        g = batch.grid
        self.grid = g
        self._spl = RectBivariateSpline(g.y, g.x, batch.grid_function(j), kx=3, ky=3, s=0)

    def check_clearance(self, pts: np.ndarray) -> None:
        """Every spline stencil node within 2h of each point must be interior."""
        g = self.grid
        ix = np.floor((pts[:, 0] - g.x[0]) / g.h).astype(int)
        iy = np.floor((pts[:, 1] - g.y[0]) / g.h).astype(int)
        c = self.CLEARANCE_CELLS
        ny, nx = g.shape
        if ix.min() - c < 0 or iy.min() - c < 0 or ix.max() + c + 1 >= nx or iy.max() + c + 1 >= ny:
            raise GeometryError("curve leaves the grid")
        for dy in range(-c, c + 2):
            for dx in range(-c, c + 2):
                if not np.all(g.mask[iy + dy, ix + dx]):
                    raise GeometryError("curve is closer than 2h to the boundary")

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self._spl.ev(pts[:, 1], pts[:, 0])


def trace_on_curve(batch: SpectralBatch, H, j: int, n_s: int | None = None) -> CurveTrace:
    """u_j = phi_j|_H at uniform arclength nodes."""
    lam = float(batch.frequencies[j])
    if n_s is None:
        n_s = default_nodes(lam, H.length)
    elif n_s < MIN_POINTS_PER_WAVELENGTH * lam * H.length / (2 * math.pi):
        raise ValueError(f"n_s={n_s} gives fewer than {MIN_POINTS_PER_WAVELENGTH} points per wavelength")
    s = curve_nodes(H, n_s)
    pts = np.asarray(H.point(s), dtype=float).reshape(-1, 2)
    f = GridInterpolant(batch, j)
    f.check_clearance(pts)
    return CurveTrace(j, lam, s, f(pts), H.length, H.closed)


def _integrate(t: CurveTrace, f: np.ndarray) -> float:
    """int_H f ds: periodic trapezoid (closed) or cubic spline (open)."""
    f = np.real(f)
    if t.closed:
        return float(t.length * f.mean())
    return float(CubicSpline(t.s, f).integrate(0.0, t.length))


def l2_on_curve(t: CurveTrace, V=None) -> float:
    """int_H V |u|^2 ds (V = 1 when omitted; V may be callable in s)."""
    w = np.abs(t.values) ** 2
    if V is not None:
        w = w * (V(t.s) if callable(V) else V)
    return _integrate(t, w)


def inner_on_curve(t: CurveTrace, f: np.ndarray, g: np.ndarray) -> complex:
    re = _integrate(t, np.real(f * np.conj(g)))
    im = _integrate(t, np.imag(f * np.conj(g)))
    return complex(re, im)


def taper(s: np.ndarray, length: float, fraction: float = TAPER_FRACTION) -> np.ndarray:
    """C^2 ramp vanishing at both ends, equal to 1 away from the last fraction*L."""
    w = fraction * length
    return smoothstep(s / w) * smoothstep((length - s) / w)


def frequency_cap(sigma, eps0: float = EPS0):
    """1 on |sigma| <= 1, 0 beyond 1 + eps0, C^2 in between."""
    return 1.0 - smoothstep((np.abs(sigma) - 1.0) / eps0)


@dataclass
class Quantized:
    trace: CurveTrace
    aliasing: bool
    high_fraction: float
    taper_id: str


def _periodic_part(t: CurveTrace):
    """Nodes and spacing of the periodic sample set (the open curve's last node is dropped)."""
    if t.closed:
        return t.s, t.length / t.n_s
    return t.s[:-1], t.length / (t.n_s - 1)


def quantize_on_curve(a: Symbol, t: CurveTrace, taper_id: str = "c2", eps0: float = EPS0) -> Quantized:
    """Kohn-Nirenberg quantization of a at h = 1/lambda on the trace.

    Multiplication symbols act exactly pointwise.  Other symbols go through
    the discrete Fourier transform with sigma = xi / lambda and a smooth cap
    at |sigma| = 1 + eps0; open curves are tapered on both sides first.
    """
    if a.is_multiplication:
        return Quantized(t.with_values(a.s_part(t.s) * t.values), False, 0.0, "none")
    use_taper = (not t.closed) and taper_id != "none"
    w = taper(t.s, t.length) if use_taper else np.ones(t.n_s)
    s_per, ds = _periodic_part(t)
    n = s_per.size
    u = (w * t.values)[:n]
    uh = np.fft.fft(u)
    xi = 2 * math.pi * np.fft.fftfreq(n, d=ds)
    sig = xi / t.lam
    power = np.abs(uh) ** 2
    high = float(power[np.abs(sig) > 1 + eps0].sum() / max(power.sum(), 1e-300))
    cap = frequency_cap(sig, eps0)
    sig_c = np.clip(sig, -1.0, 1.0)
    g = a.sigma_part(sig_c)
    if g is not None:
        v = np.fft.ifft(g * cap * uh)
        Vs = a.s_part(s_per)
        if Vs is not None:
            v = Vs * v
    else:
        # full Kohn-Nirenberg sum: v(s_m) = (1/n) sum_k a(s_m, sigma_k) uh_k e^{i xi_k s_m}
        phase = np.exp(1j * np.outer(s_per - s_per[0], xi))
        A = a(s_per[:, None], sig_c[None, :])
        v = (A * phase) @ (cap * uh) / n
    out = np.zeros(t.n_s, dtype=complex)
    out[:n] = v
    if not t.closed:
        out[n:] = v[0] if not use_taper else 0.0
    out = w * out
    return Quantized(t.with_values(out), high > ALIAS_FRACTION, high,
                     "c2-5pct" if use_taper else "none")


def parseval_gap(t: CurveTrace) -> float:
    """Relative gap between |u|^2 integrated in s and in frequency (closed curves)."""
    if not t.closed:
        raise ValueError("Parseval check applies to closed curves")
    s_space = l2_on_curve(t)
    uh = np.fft.fft(t.values)
    f_space = float(t.length * np.sum(np.abs(uh) ** 2) / t.n_s ** 2)
    return abs(s_space - f_space) / max(abs(s_space), 1e-300)


@dataclass
class MatrixElementRecord:
    j: int
    lam: float
    value: float
    norm2: float
    symbol_id: str
    taper_id: str
    imag: float = 0.0
    aliasing: bool = False


def matrix_element(a: Symbol, batch: SpectralBatch, H, j: int, taper_id: str = "c2",
                   n_s: int | None = None, trace: CurveTrace | None = None,
                   eps0: float = EPS0) -> MatrixElementRecord:
    """Re <Op(a) u_j, u_j>_{L^2(H)}."""
    t = trace if trace is not None else trace_on_curve(batch, H, j, n_s)
    q = quantize_on_curve(a, t, taper_id, eps0)
    z = inner_on_curve(t, q.trace.values, t.values)
    return MatrixElementRecord(j, t.lam, z.real, l2_on_curve(t), a.name, q.taper_id, z.imag,
                               q.aliasing)


def matrix_elements(symbols, batch: SpectralBatch, H, modes=None, taper_id: str = "c2",
                    n_s: int | None = None, eps0: float = EPS0) -> dict[str, list[MatrixElementRecord]]:
    """Records for several symbols, sharing one trace per mode."""
    modes = range(batch.m) if modes is None else modes
    out: dict[str, list[MatrixElementRecord]] = {a.name: [] for a in symbols}
    for j in modes:
        t = trace_on_curve(batch, H, j, n_s)
        for a in symbols:
            out[a.name].append(matrix_element(a, batch, H, j, taper_id, trace=t, eps0=eps0))
    return out
