"""Dirichlet Laplacian eigenpairs on planar billiards by finite differences."""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, reverse_cuthill_mckee
from scipy.sparse.linalg import eigsh, splu

from .errors import GeometryError, InsufficientSpectrum, SolverError
from .geometry import HyperbolicQuotient, StadiumBilliard, UnitSquareBilliard

RESIDUAL_TOL = 1e-8
ORTHO_TOL = 1e-8
CLUSTER_RTOL = 1e-6
PARITY_MARGIN = 1e3
MAX_MODES = 600
MIN_WEYL_MODES = 20
THETA_MIN = 1e-3
CONTAINER_MAGIC = b"QERSPEC1"


def domain_hash(domain) -> str:
    """Stable short hash of a domain's defining parameters."""
    if isinstance(domain, StadiumBilliard):
        key = f"stadium:{domain.half_length!r}:{domain.cap_radius!r}"
    elif isinstance(domain, UnitSquareBilliard):
        key = "square"
    elif isinstance(domain, HyperbolicQuotient):
        key = f"hyperbolic:{domain.group}"
    else:
        key = repr(domain)
    return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass
class Grid:
    """Uniform grid on the bounding box, symmetric about the domain's center.

    ``mask`` marks nodes strictly inside the domain; ``index`` maps those
    nodes to unknowns (-1 elsewhere).  Arrays are indexed [iy, ix].
    """

    h: float
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    index: np.ndarray
    boundary: str = "mask"

    @property
    def n(self) -> int:
        return int(self.mask.sum())

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def to_grid(self, v: np.ndarray) -> np.ndarray:
        """Unknown vector -> full (ny, nx) array, zero outside the domain."""
        out = np.zeros(self.shape)
        out[self.mask] = v
        return out

    def mirror_x(self) -> np.ndarray | None:
        """Permutation of unknowns for x -> -x about the grid center, if the mask allows."""
        flipped = self.mask[:, ::-1]
        if not np.array_equal(flipped, self.mask):
            return None
        return self.index[:, ::-1][self.mask]


def make_grid(domain, h: float, boundary: str = "mask") -> Grid:
    if isinstance(domain, HyperbolicQuotient):
        raise ValueError("eigenfunctions are only computed on planar billiards")
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    x0, x1, y0, y1 = domain.bbox
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    kx = int(math.ceil(0.5 * (x1 - x0) / h - 1e-9)) + 1
    ky = int(math.ceil(0.5 * (y1 - y0) / h - 1e-9)) + 1
    x = cx + h * np.arange(-kx, kx + 1)
    y = cy + h * np.arange(-ky, ky + 1)
    X, Y = np.meshgrid(x, y)
    mask = domain.signed_distance(X, Y) > 1e-12 * h
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    return Grid(h, x, y, mask, index, boundary)


def _boundary_fraction(domain, px, py, dx, dy, h, iters: int = 60):
    """Fraction theta in (0, 1] of the grid step at which the ray leaves the domain."""
    lo = np.zeros(px.size)
    hi = np.ones(px.size)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = domain.signed_distance(px + mid * h * dx, py + mid * h * dy) > 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return np.maximum(0.5 * (lo + hi), THETA_MIN)


def assemble_laplacian(domain, h: float, boundary: str = "mask") -> tuple[sp.csr_matrix, Grid]:
    """Symmetric positive-definite 5-point -Delta_h with Dirichlet elimination.

    ``boundary="mask"`` drops exterior neighbours (u = 0 there).
    ``boundary="linear"`` places the zero on the true boundary at distance
    theta*h and extrapolates linearly, which changes only the diagonal
    (by 1/theta - 1) and so keeps the operator symmetric.
    """
    if boundary not in ("mask", "linear"):
        raise ValueError("boundary must be 'mask' or 'linear'")
    g = make_grid(domain, h, boundary)
    iy, ix = np.nonzero(g.mask)
    n = g.n
    diag = np.full(n, 4.0)
    rows, cols = [], []
    ny, nx = g.shape
    for dyi, dxi in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        jy, jx = iy + dyi, ix + dxi
        nb = g.index[jy, jx]  # never out of the padded box
        inner = nb >= 0
        rows.append(g.index[iy[inner], ix[inner]])
        cols.append(nb[inner])
        if boundary == "linear" and np.any(~inner):
            out = ~inner
            theta = _boundary_fraction(domain, g.x[ix[out]], g.y[iy[out]], dxi, dyi, h)
            diag[g.index[iy[out], ix[out]]] += 1.0 / theta - 1.0
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    off = sp.coo_matrix((-np.ones(r.size), (r, c)), shape=(n, n))
    A = (off + sp.diags(diag)).tocsr() / (h * h)
    if (abs(A - A.T)).max() != 0:
        raise AssertionError("assembled operator is not symmetric")
    ncomp, _ = connected_components(A, directed=False)
    if ncomp != 1:
        raise GeometryError(f"grid interior is disconnected ({ncomp} components); refine h")
    return A, g


# ---------------------------------------------------------------------------
# Eigensolver
# ---------------------------------------------------------------------------


@dataclass
class SpectralBatch:
    """Lowest eigenpairs, normalized so that h^2 sum |phi|^2 = 1."""

    eigenvalues: np.ndarray          # lambda_j^2, ascending
    vectors: np.ndarray              # (n_unknowns, m), grid-normalized
    residuals: np.ndarray            # relative residual norms
    grid: Grid
    parity: np.ndarray               # +1 even, -1 odd under x -> -x, 0 unclassified
    domain_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    @property
    def m(self) -> int:
        return int(self.eigenvalues.size)

    def grid_function(self, j: int) -> np.ndarray:
        return self.grid.to_grid(self.vectors[:, j])

    def gram_deviation(self) -> float:
        h2 = self.grid.h ** 2
        G = h2 * (self.vectors.T @ self.vectors)
        return float(np.abs(G - np.eye(self.m)).max())

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        ny, nx = self.grid.shape
        header = {
            "domain_hash": self.domain_id,
            "h": self.grid.h,
            "m": self.m,
            "nx": nx,
            "ny": ny,
            "x0": float(self.grid.x[0]),
            "y0": float(self.grid.y[0]),
            "boundary": self.grid.boundary,
            "meta": self.meta,
        }
        hb = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(CONTAINER_MAGIC)
            fh.write(struct.pack("<I", len(hb)))
            fh.write(hb)
            fh.write(np.ascontiguousarray(self.eigenvalues, "<f8").tobytes())
            fh.write(np.ascontiguousarray(self.residuals, "<f8").tobytes())
            fh.write(np.ascontiguousarray(self.parity, "<f8").tobytes())
            fh.write(np.ascontiguousarray(self.grid.mask, "<f8").tobytes())
            for j in range(self.m):
                fh.write(np.ascontiguousarray(self.grid_function(j), "<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SpectralBatch":
        with open(path, "rb") as fh:
            data = fh.read()
        if not data.startswith(CONTAINER_MAGIC):
            raise ValueError(f"{path} is not a spectral batch container")
        off = len(CONTAINER_MAGIC)
        (hl,) = struct.unpack_from("<I", data, off)
        off += 4
        header = json.loads(data[off:off + hl])
        off += hl
        m, nx, ny, h = header["m"], header["nx"], header["ny"], header["h"]
        buf = io.BytesIO(data[off:])

        def take(count):
            return np.frombuffer(buf.read(8 * count), "<f8").copy()

        lam = take(m)
        res = take(m)
        par = take(m).astype(int)
        mask = take(nx * ny).reshape(ny, nx) > 0.5
        funcs = take(m * nx * ny).reshape(m, ny, nx)
        x = header["x0"] + h * np.arange(nx)
        y = header["y0"] + h * np.arange(ny)
        index = -np.ones(mask.shape, dtype=np.int64)
        index[mask] = np.arange(int(mask.sum()))
        grid = Grid(h, x, y, mask, index, header["boundary"])
        vecs = funcs[:, mask].T.copy()
        return cls(lam, vecs, res, grid, par, header["domain_hash"], header.get("meta", {}))

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("j,lambda_sq,lambda,residual,parity\n")
            for j in range(self.m):
                fh.write(f"{j + 1},{self.eigenvalues[j]:.12g},{self.frequencies[j]:.12g},"
                         f"{self.residuals[j]:.3e},{int(self.parity[j])}\n")


def _clusters(lam: np.ndarray, rtol: float) -> list[np.ndarray]:
    out, start = [], 0
    for i in range(1, lam.size + 1):
        if i == lam.size or lam[i] - lam[i - 1] > rtol * lam[i]:
            out.append(np.arange(start, i))
            start = i
    return out


def _x_difference(grid: Grid) -> sp.csr_matrix:
    """Second difference in x only (commutes with the Laplacian on rectangles)."""
    iy, ix = np.nonzero(grid.mask)
    n = grid.n
    rows, cols = [], []
    for dxi in (1, -1):
        nb = grid.index[iy, ix + dxi]
        ok = nb >= 0
        rows.append(grid.index[iy[ok], ix[ok]])
        cols.append(nb[ok])
    r, c = np.concatenate(rows), np.concatenate(cols)
    return (sp.diags(np.full(n, 2.0)) - sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n))).tocsr()


def _resolve_cluster(V: np.ndarray, ops) -> np.ndarray:
    """Rotate an orthonormal cluster basis to diagonalize commuting symmetric operators."""
    for op in ops:
        M = V.T @ op(V)
        M = 0.5 * (M + M.T)
        w, Q = np.linalg.eigh(M)
        V = V @ Q
        if np.all(np.diff(w) > 1e-8 * max(1.0, np.abs(w).max())):
            break
    return V


def _parity(vectors: np.ndarray, perm: np.ndarray | None) -> np.ndarray:
    if perm is None:
        return np.zeros(vectors.shape[1], dtype=int)
    out = np.zeros(vectors.shape[1], dtype=int)
    for j in range(vectors.shape[1]):
        v = vectors[:, j]
        even = np.sum((v + v[perm]) ** 2)
        odd = np.sum((v - v[perm]) ** 2)
        if even > PARITY_MARGIN * odd:
            out[j] = 1
        elif odd > PARITY_MARGIN * even:
            out[j] = -1
    return out


def eigensolve(A: sp.csr_matrix, grid: Grid, m: int, domain=None, tol: float = 0.0,
               maxiter: int | None = None) -> SpectralBatch:
    """Lowest m eigenpairs by Lanczos on the shift-inverted operator.

    Clusters of relative width CLUSTER_RTOL are re-orthogonalized and
    rotated into symmetry-adapted form (x-parity; on rectangles also the
    x second difference, which separates (m, n) from (n, m)).
    """
    if not 1 <= m <= MAX_MODES:
        raise ValueError(f"mode count must lie in [1, {MAX_MODES}]")
    if m >= grid.n - 1:
        raise ValueError("mode count exceeds the grid size")
    k = min(grid.n - 2, m + max(4, m // 20))
    try:
        # fixed start vector: ARPACK otherwise seeds itself randomly
        v0 = np.random.default_rng(0).standard_normal(grid.n)
        w, V = eigsh(A, k=k, sigma=0.0, which="LM", tol=tol, maxiter=maxiter, v0=v0)
    except Exception as exc:  # ARPACK non-convergence
        res = getattr(exc, "eigenvalues", None)
        raise SolverError(f"eigensolver did not converge: {exc}", res) from exc
    order = np.argsort(w)
    w, V = w[order][:m], V[:, order][:, :m]
    perm = grid.mirror_x()
    ops = []
    if perm is not None:
        ops.append(lambda X: X[perm])
    if isinstance(domain, UnitSquareBilliard):
        D = _x_difference(grid)
        ops.insert(0, lambda X: D @ X)
    for cl in _clusters(w, CLUSTER_RTOL):
        if cl.size > 1:
            Q, _ = np.linalg.qr(V[:, cl])
            V[:, cl] = _resolve_cluster(Q, ops)
            AV = A @ V[:, cl]
            w[cl] = np.einsum("ij,ij->j", V[:, cl], AV)
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    # sign convention: largest-magnitude entry positive
    piv = np.abs(V).argmax(axis=0)
    V = V * np.sign(V[piv, np.arange(m)])
    res = np.linalg.norm(A @ V - V * w, axis=0) / (w * np.linalg.norm(V, axis=0))
    if np.any(res > RESIDUAL_TOL):
        raise SolverError(f"residual contract violated (max {res.max():.2e})", res)
    V = V / grid.h
    batch = SpectralBatch(w, V, res, grid, _parity(V, perm),
                          domain_hash(domain) if domain is not None else "",
                          {"boundary": grid.boundary})
    dev = batch.gram_deviation()
    if dev > ORTHO_TOL:
        raise SolverError(f"eigenvectors not orthonormal (deviation {dev:.2e})", res)
    return batch


def compute_spectrum(domain, h: float, m: int, boundary: str = "mask") -> tuple[SpectralBatch, sp.csr_matrix]:
    A, grid = assemble_laplacian(domain, h, boundary)
    return eigensolve(A, grid, m, domain), A


# ---------------------------------------------------------------------------
# Completeness and Weyl law
# ---------------------------------------------------------------------------


def shift_count(A: sp.csr_matrix, shift: float) -> int:
    """Number of eigenvalues of A below ``shift`` (Sylvester inertia of A - shift I).

    Unpivoted LU of the symmetric matrix in reverse Cuthill-McKee order; the
    signs of U's diagonal are those of the LDL^T factor.
    """
    perm = reverse_cuthill_mckee(A.tocsr(), symmetric_mode=True)
    B = (A - shift * sp.identity(A.shape[0], format="csr"))[perm][:, perm].tocsc()
    lu = splu(B, permc_spec="NATURAL", diag_pivot_thresh=0.0,
              options={"SymmetricMode": True})
    if not (np.array_equal(lu.perm_r, np.arange(A.shape[0]))):
        raise SolverError("inertia count needed pivoting")
    return int(np.sum(lu.U.diagonal() < 0))


def verify_complete(batch: SpectralBatch, A: sp.csr_matrix) -> dict:
    """Compare shift counts with the batch at two shifts in spectral gaps."""
    lam = batch.eigenvalues
    checks = []
    for i in (lam.size // 2, lam.size - 1):
        if i < 1:
            continue
        # use the widest gap near i so the shift sits away from eigenvalues
        lo = max(1, i - 3)
        gaps = lam[lo:i + 1] - lam[lo - 1:i]
        k = lo + int(np.argmax(gaps))
        shift = 0.5 * (lam[k - 1] + lam[k])
        checks.append({"shift": float(shift), "expected": k, "counted": shift_count(A, shift)})
    ok = all(c["expected"] == c["counted"] for c in checks)
    return {"complete": ok, "checks": checks,
            "advice": "" if ok else "eigenvalues were skipped: re-solve with more modes"}


def weyl_count(lam, area: float, perimeter: float):
    """Two-term Dirichlet Weyl law (area/4pi) lambda^2 - (perimeter/4pi) lambda."""
    lam = np.asarray(lam, dtype=float)
    return area / (4 * math.pi) * lam ** 2 - perimeter / (4 * math.pi) * lam


def lattice_count(lam_sq_max: float) -> int:
    """Exact count of pi^2 (m^2 + n^2) <= lam_sq_max, m, n >= 1."""
    r2 = lam_sq_max / math.pi ** 2
    k = int(math.isqrt(int(r2)) + 1)
    m = np.arange(1, k + 1)
    M, N = np.meshgrid(m, m)
    return int(np.sum(M * M + N * N <= r2 + 1e-12))


@dataclass
class WeylReport:
    lam: np.ndarray
    counted: np.ndarray
    predicted: np.ndarray
    max_rel_dev_upper: float
    complete: dict | None = None

    def to_dict(self) -> dict:
        return {"max_rel_dev_upper": self.max_rel_dev_upper,
                "points": [[float(a), int(b), float(c)]
                           for a, b, c in zip(self.lam, self.counted, self.predicted)],
                "complete": self.complete}


def weyl_check(batch: SpectralBatch, domain, A: sp.csr_matrix | None = None) -> WeylReport:
    """N(lambda) against the two-term Weyl law at midpoints between eigenvalues.

    The deviation is reported over the upper half of the computed window.
    """
    if batch.m < MIN_WEYL_MODES:
        raise InsufficientSpectrum(f"insufficient spectrum: {batch.m} < {MIN_WEYL_MODES} modes")
    f = batch.frequencies
    mid = 0.5 * (f[:-1] + f[1:])
    counted = np.arange(1, f.size)
    pred = weyl_count(mid, domain.area, domain.perimeter)
    upper = counted >= f.size // 2
    dev = float(np.max(np.abs(counted[upper] - pred[upper]) / pred[upper]))
    complete = verify_complete(batch, A) if A is not None else None
    return WeylReport(mid, counted, pred, dev, complete)


def square_eigenvalues(count: int) -> np.ndarray:
    """Lowest ``count`` values of pi^2 (m^2 + n^2) with multiplicity."""
    k = int(math.sqrt(count)) + 4
    m = np.arange(1, k + 1)
    vals = np.sort((m[:, None] ** 2 + m[None, :] ** 2).ravel())
    return math.pi ** 2 * vals[:count]
