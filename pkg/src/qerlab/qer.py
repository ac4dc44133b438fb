"""Cesaro means, variance sums and exceptional sets of restricted matrix elements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .restriction import MatrixElementRecord, matrix_elements
from .symbols import Symbol, omega

SCHEMA_VERSION = "1.0"
THETA_LADDER = (0.25, 0.5, 1.0)


@dataclass
class Ladder:
    N: list[int]
    E: list[float]
    S: list[float]


def default_ladder(m: int) -> list[int]:
    """m/4, m/2, m (deduplicated, increasing)."""
    return sorted({max(1, m // 4), max(1, m // 2), m})


def cesaro_and_variance(records: list[MatrixElementRecord], omega_ref: float,
                        ladder: list[int] | None = None) -> Ladder:
    """E(N) = mean of the first N values; S(N) = mean squared deviation from omega_ref."""
    lam = [r.lam for r in records]
    if any(b < a for a, b in zip(lam, lam[1:])):
        raise ValueError("records must be sorted by frequency")
    ladder = default_ladder(len(records)) if ladder is None else list(ladder)
    if any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[-1] > len(records) or ladder[0] < 1:
        raise ValueError("ladder must be increasing and within the available modes")
    v = np.array([r.value for r in records])
    E = [float(v[:n].mean()) for n in ladder]
    S = [float(np.mean((v[:n] - omega_ref) ** 2)) for n in ladder]
    return Ladder(list(ladder), E, S)


@dataclass
class ExceptionalSet:
    theta: float
    indices: list[int]
    fraction: float
    windows: list[dict] = field(default_factory=list)


def dyadic_windows(lam: np.ndarray) -> list[tuple[float, float]]:
    lo = float(lam.min())
    out = []
    while lo <= lam.max():
        out.append((lo, 2 * lo))
        lo *= 2
    return out


def extract_density_one(records: list[MatrixElementRecord], omega_ref: float,
                        theta: float) -> ExceptionalSet:
    """Flag modes with |value - omega| > theta; report flagged fractions per dyadic lambda window."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    lam = np.array([r.lam for r in records])
    v = np.array([r.value for r in records])
    flag = np.abs(v - omega_ref) > theta
    wins = []
    for lo, hi in dyadic_windows(lam):
        sel = (lam >= lo) & (lam < hi)
        n = int(sel.sum())
        k = int(flag[sel].sum())
        wins.append({"lam_lo": lo, "lam_hi": hi, "modes": n, "flagged": k,
                     "fraction": k / n if n else math.nan})
    idx = [int(records[i].j) for i in np.nonzero(flag)[0]]
    return ExceptionalSet(theta, idx, float(flag.mean()) if flag.size else 0.0, wins)


def histogram(values, bins: int = 30) -> dict:
    counts, edges = np.histogram(values, bins=bins)
    return {"counts": counts.tolist(), "edges": edges.tolist()}


def class_agreement(flagged: np.ndarray, parity: np.ndarray) -> dict:
    """How well a flagged set matches the odd (parity -1) class."""
    odd = parity == -1
    both = int(np.sum(flagged & odd))
    either = int(np.sum(flagged | odd))
    return {
        "agreement": float(np.mean(flagged == odd)),
        "jaccard": both / either if either else 1.0,
        "odd_fraction": float(odd.mean()),
        "flagged_fraction": float(flagged.mean()),
    }


@dataclass
class QerReport:
    symbol_id: str
    curve_id: str
    omega: float
    omega_cut: float | None
    ladder: Ladder
    exceptional: list[ExceptionalSet]
    values: list[float]
    lam: list[float]
    norms: list[float]
    low_norm: dict | None = None
    symmetry: dict | None = None
    aliasing_modes: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "symbol": self.symbol_id,
            "curve": self.curve_id,
            "omega": self.omega,
            "omega_cut": self.omega_cut,
            "ladder": {"N": self.ladder.N, "E": self.ladder.E, "S": self.ladder.S},
            "exceptional": [{"theta": e.theta, "fraction": e.fraction, "indices": e.indices,
                             "windows": e.windows} for e in self.exceptional],
            "histogram": histogram(self.values),
            "low_norm": self.low_norm,
            "symmetry": self.symmetry,
            "aliasing_modes": self.aliasing_modes,
        }


def qer_report(records: list[MatrixElementRecord], omega_ref: float, symbol_id: str,
               curve_id: str, parity: np.ndarray | None = None, omega_cut: float | None = None,
               ladder: list[int] | None = None, low_norm_ref: float | None = None,
               symmetry: dict | None = None) -> QerReport:
    """Assemble ladders, exceptional sets and (optionally) class statistics.

    ``low_norm_ref`` (normally L/area) enables the low-norm statistic: modes
    with ||u_j||^2 < 0.1 * low_norm_ref, compared against the odd class.
    """
    lad = cesaro_and_variance(records, omega_ref, ladder)
    scale = abs(omega_ref) if omega_ref != 0 else 1.0
    exc = [extract_density_one(records, omega_ref, t * scale) for t in THETA_LADDER]
    norms = np.array([r.norm2 for r in records])
    low = None
    if low_norm_ref is not None:
        flagged = norms < 0.1 * low_norm_ref
        low = {"threshold": 0.1 * low_norm_ref, "fraction": float(flagged.mean())}
        if parity is not None:
            par = np.asarray(parity)[[r.j for r in records]]
            low.update(class_agreement(flagged, par))
    return QerReport(symbol_id, curve_id, omega_ref, omega_cut, lad, exc,
                     [r.value for r in records], [r.lam for r in records], norms.tolist(), low,
                     symmetry, sum(r.aliasing for r in records))


def curve_id(H) -> str:
    return H.name


def dichotomy_report(domain, H_sym, H_generic, a: Symbol, batch, symmetry_samples: int = 0,
                     symmetry_params=None, eps: float = 0.0, n_s: int | None = None,
                     taper_id: str = "c2", ladder: list[int] | None = None):
    """Full pipeline on a symmetric and a generic curve; returns (sym, generic) reports."""
    out = []
    for H in (H_sym, H_generic):
        recs = matrix_elements([a], batch, H, taper_id=taper_id, n_s=n_s)[a.name]
        w = omega(a, domain, H)
        w_cut = omega(a, domain, H, eps) if eps > 0 else None
        verdict = None
        if symmetry_samples:
            from .symmetry import SymmetryParams, symmetry_measure

            verdict = symmetry_measure(domain, H, symmetry_samples,
                                       symmetry_params or SymmetryParams()).to_dict()
        out.append(qer_report(recs, w, a.name, curve_id(H), batch.parity, w_cut, ladder,
                              H.length / domain.area, verdict))
    return out[0], out[1]
