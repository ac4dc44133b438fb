"""Monte Carlo estimation of the measure of microlocal reflection symmetry.

A section point q = (s, sigma, side) is *symmetric* when, for some return
index j, reflecting the j-th return of q through T*H gives the same phase
point as flowing the reflected point r_H q for the same time.  Numerically
this means a return of r_H q (index k, not necessarily j) occurs at the time
T^(j)(q) and lands on the reflection of Phi^j(q).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SIGMA_BAND, jth_return, sample_section
from .geometry import (
    ClosedGeodesicCurve,
    ClosedHorocycle,
    CrossSectionPoint,
    GeodesicCircle,
    HyperbolicQuotient,
    phase_angle,
)

TOL_MATCH = 1e-6
REPORT_TOLERANCES = (1e-4, 1e-6, 1e-8)
CHUNK_SAMPLES = 256
LOW_CONFIDENCE_CENSORING = 0.2


@dataclass
class SymmetryParams:
    j_max: int = 6
    t_max: float = 50.0
    tol_match: float = TOL_MATCH
    sigma_band: float = SIGMA_BAND
    seed: int = 0
    workers: int = 1


@dataclass
class IndicatorResult:
    """Outcome for one section point.

    ``error`` is the smallest pair mismatch found (inf when no pair was
    comparable); ``pairs`` lists (j, k, mismatch) for every compared pair.
    """

    censored: bool
    error: float = math.inf
    witness: tuple[int, int] | None = None
    pairs: list[tuple[int, int, float]] = field(default_factory=list)

    def symmetric(self, tol: float) -> bool:
        return (not self.censored) and self.error <= tol


@dataclass
class SymmetryVerdict:
    estimate: float
    stderr: float
    samples: int
    censored: int
    censored_fraction: float
    histogram: dict[tuple[int, int], int]
    params: SymmetryParams
    by_tolerance: dict[float, tuple[float, float]]
    low_confidence: bool
    hits: int = 0

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "samples": self.samples,
            "censored": self.censored,
            "censored_fraction": self.censored_fraction,
            "hits": self.hits,
            "low_confidence": self.low_confidence,
            "histogram": {f"{j},{k}": n for (j, k), n in sorted(self.histogram.items())},
            "by_tolerance": {f"{t:g}": {"estimate": e, "stderr": s}
                             for t, (e, s) in self.by_tolerance.items()},
            "params": {
                "j_max": self.params.j_max,
                "t_max": self.params.t_max,
                "tol_match": self.params.tol_match,
                "sigma_band": self.params.sigma_band,
                "seed": self.params.seed,
            },
            "truncation": "returns 1..j_max of either orbit, forward time only",
        }


def _mismatch(H, t1, p1, t2, p2) -> float:
    """Scaled distance between r_H(p1) at time t1 and p2 at time t2."""
    dt = abs(t1 - t2) / max(1.0, abs(t1))
    ds = H.s_distance(p1.s, p2.s) / H.length
    a1 = phase_angle(p1.sigma, -p1.side)
    a2 = phase_angle(p2.sigma, p2.side)
    da = abs(math.remainder(a1 - a2, 2 * math.pi)) / math.pi
    return max(dt, ds + da)


def symmetry_indicator(domain, H, q: CrossSectionPoint, j_max: int = 6,
                       t_max: float = 50.0, tol_match: float = TOL_MATCH,
                       sigma_band: float = SIGMA_BAND) -> IndicatorResult:
    """Search return pairs (j, k) of q and r_H q for a reflection coincidence.

    Pairs with min(j, k) <= j_max are compared, which keeps the test
    symmetric under q -> r_H q.  The sample is censored when either orbit
    has no first return within t_max.
    """
    a = jth_return(domain, H, q, 10 ** 6, t_max, sigma_band)
    b = jth_return(domain, H, q.flipped(), 10 ** 6, t_max, sigma_band)
    if a.count == 0 or b.count == 0:
        return IndicatorResult(censored=True)
    out = IndicatorResult(censored=False)
    tol_t = 10 * tol_match
    for j, (tj, pj) in enumerate(zip(a.times, a.points), start=1):
        for k, (tk, pk) in enumerate(zip(b.times, b.points), start=1):
            if min(j, k) > j_max:
                continue
            if abs(tj - tk) > max(tol_t, 1e-4) * max(1.0, tj):
                continue
            e = _mismatch(H, tj, pj, tk, pk)
            out.pairs.append((j, k, e))
            if e < out.error:
                out.error, out.witness = e, (j, k)
    return out


def _run_chunk(args):
    domain, H, seed_seq, n, params = args
    rng = np.random.default_rng(seed_seq)
    pts = sample_section(H, n, rng, params.sigma_band)
    return [symmetry_indicator(domain, H, q, params.j_max, params.t_max,
                               params.tol_match, params.sigma_band) for q in pts]


def indicator_batch(domain, H, n_samples: int, params: SymmetryParams) -> list[IndicatorResult]:
    """Indicators for n_samples mu_{L,H} points; chunked seeds make the result
    independent of the worker count."""
    n_chunks = -(-n_samples // CHUNK_SAMPLES)
    seeds = np.random.SeedSequence(params.seed).spawn(n_chunks)
    jobs = []
    left = n_samples
    for ss in seeds:
        m = min(CHUNK_SAMPLES, left)
        left -= m
        jobs.append((domain, H, ss, m, params))
    if params.workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=params.workers) as ex:
            chunks = list(ex.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(j) for j in jobs]
    return [r for c in chunks for r in c]


def _fraction(hits: int, n: int) -> tuple[float, float]:
    if n == 0:
        return math.nan, math.nan
    p = hits / n
    return p, math.sqrt(max(p * (1 - p), 0.0) / n)


def verdict_from_results(results: list[IndicatorResult], params: SymmetryParams,
                         tolerances=REPORT_TOLERANCES) -> SymmetryVerdict:
    valid = [r for r in results if not r.censored]
    censored = len(results) - len(valid)
    hits = sum(r.symmetric(params.tol_match) for r in valid)
    est, se = _fraction(hits, len(valid))
    hist: dict[tuple[int, int], int] = {}
    for r in valid:
        for j, k, e in r.pairs:
            if e <= params.tol_match:
                hist[(j, k)] = hist.get((j, k), 0) + 1
    by_tol = {t: _fraction(sum(r.symmetric(t) for r in valid), len(valid)) for t in tolerances}
    cf = censored / len(results) if results else 0.0
    return SymmetryVerdict(est, se, len(results), censored, cf, hist, params, by_tol,
                           cf > LOW_CONFIDENCE_CENSORING, hits)


def symmetry_measure(domain, H, n_samples: int, params: SymmetryParams | None = None) -> SymmetryVerdict:
    """Fraction of mu_{L,H} that is microlocally reflection symmetric."""
    if n_samples < 100:
        raise ValueError("symmetry_measure needs at least 100 samples")
    params = params or SymmetryParams()
    return verdict_from_results(indicator_batch(domain, H, n_samples, params), params)


# ---------------------------------------------------------------------------
# Case studies on the modular surface
# ---------------------------------------------------------------------------

CASES = ("circle", "horocycle", "closed_geodesic")
# Many modular closed geodesics are (partly) symmetric through PGL(2, Z)
# relations, e.g. the trace-3 axis of [[2, 1], [1, 1]].  This trace-7 class
# shows no coincidences at desk sample sizes.
DEFAULT_GEODESIC = [[1, 1], [5, 6]]


def case_curve(case: str, **kw):
    domain = HyperbolicQuotient("modular")
    if case == "circle":
        H = GeodesicCircle(complex(kw.get("center", 0.1 + 1.5j)), kw.get("radius", 0.3), domain,
                           injectivity_radius=kw.get("injectivity_radius"))
    elif case == "horocycle":
        H = ClosedHorocycle(kw.get("height", 1.5), domain)
    elif case == "closed_geodesic":
        H = ClosedGeodesicCurve(np.asarray(kw.get("matrix", DEFAULT_GEODESIC), float), domain)
    else:
        raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
    return domain, H


def return_comparison_table(domain, H, points, j_max: int, t_max: float,
                            sigma_band: float = SIGMA_BAND) -> list[dict]:
    """For each point, P_{+,j} against the nearest P_{-,k} (k <= j_max)."""
    rows = []
    for q in points:
        a = jth_return(domain, H, CrossSectionPoint(q.s, q.sigma, 1), j_max, t_max, sigma_band)
        b = jth_return(domain, H, CrossSectionPoint(q.s, q.sigma, -1), j_max, t_max, sigma_band)
        for j, (tj, pj) in enumerate(zip(a.times, a.points), start=1):
            best = (math.inf, 0, math.nan)
            for k, (tk, pk) in enumerate(zip(b.times, b.points), start=1):
                d = H.s_distance(pj.s, pk.s) / H.length + abs(pj.sigma - pk.sigma)
                if d < best[0]:
                    best = (d, k, tk)
            rows.append({"s": q.s, "sigma": q.sigma, "j": j, "T_plus": tj, "s_plus": pj.s,
                         "sigma_plus": pj.sigma, "nearest_k": best[1], "T_minus": best[2],
                         "distance": best[0]})
    return rows


def hhp_case_study(case: str, n_samples: int = 2000, params: SymmetryParams | None = None,
                   table_points: int = 5, **curve_kw):
    """Configure one modular-surface curve and measure its symmetry."""
    params = params or SymmetryParams()
    domain, H = case_curve(case, **curve_kw)
    verdict = symmetry_measure(domain, H, n_samples, params)
    rng = np.random.default_rng(np.random.SeedSequence(params.seed).spawn(1)[0])
    pts = sample_section(H, table_points, rng, params.sigma_band)
    report = {
        "case": case,
        "length": H.length,
        "lifts": int(len(H.lifts)),
        "verdict": verdict.to_dict(),
        "comparison": return_comparison_table(domain, H, pts, params.j_max, params.t_max,
                                              params.sigma_band),
    }
    return verdict, report
