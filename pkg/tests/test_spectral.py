from __future__ import annotations

import math

import numpy as np
import pytest

from qerlab.errors import InsufficientSpectrum
from qerlab.geometry import HyperbolicQuotient
from qerlab.spectral import (
    PARITY_MARGIN,
    SpectralBatch,
    assemble_laplacian,
    compute_spectrum,
    eigensolve,
    lattice_count,
    make_grid,
    shift_count,
    square_eigenvalues,
    verify_complete,
    weyl_check,
    weyl_count,
)


def test_operator_is_symmetric(stadium, square):
    for domain in (stadium, square):
        for boundary in ("mask", "linear"):
            A, _ = assemble_laplacian(domain, 1 / 32, boundary)
            assert abs(A - A.T).max() == 0


def test_stadium_interior_count(stadium):
    h = 1 / 64
    g = make_grid(stadium, h)
    assert g.n == pytest.approx(stadium.area / h ** 2, rel=0.02)


def test_grid_rejects_bad_input(stadium):
    with pytest.raises(ValueError):
        make_grid(stadium, 0.0)
    with pytest.raises(ValueError):
        make_grid(HyperbolicQuotient("modular"), 0.1)


def test_square_ground_state(square):
    batch, _ = compute_spectrum(square, 1 / 64, 1)
    assert batch.eigenvalues[0] == pytest.approx(2 * math.pi ** 2, rel=2e-3)


def test_square_first_ten_with_multiplicities(square):
    batch, _ = compute_spectrum(square, 1 / 64, 10)
    pattern = np.array([2, 5, 5, 8, 10, 10, 13, 13, 17, 17]) * math.pi ** 2
    assert np.allclose(square_eigenvalues(10), pattern)
    assert np.max(np.abs(batch.eigenvalues - pattern) / pattern) < 5e-3
    assert batch.gram_deviation() <= 1e-8
    assert np.all(batch.residuals <= 1e-8)


def test_degenerate_square_modes_are_separable(square_batch):
    batch, _ = square_batch
    for j in range(batch.m):
        sv = np.linalg.svd(batch.grid_function(j), compute_uv=False)
        assert sv[1] / sv[0] < 1e-6


def test_square_convergence_is_second_order(square):
    exact = square_eigenvalues(6)
    consts = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        b, _ = compute_spectrum(square, h, 6)
        consts.append(np.abs(b.eigenvalues - exact) / (exact ** 2 * h * h))
    consts = np.array(consts)
    assert np.all(np.abs(consts[2] / consts[1] - 1) < 0.05)
    assert np.all(np.abs(consts[1] / consts[0] - 1) < 0.2)


def test_solver_is_deterministic(square):
    a, _ = compute_spectrum(square, 1 / 48, 8)
    b, _ = compute_spectrum(square, 1 / 48, 8)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.vectors, b.vectors)


def test_mode_budget(square):
    A, g = assemble_laplacian(square, 1 / 16)
    with pytest.raises(ValueError):
        eigensolve(A, g, 0)
    with pytest.raises(ValueError):
        eigensolve(A, g, 601)


def test_batch_roundtrip(square_batch, tmp_path):
    batch, _ = square_batch
    path = tmp_path / "b.bin"
    batch.save(path)
    other = SpectralBatch.load(path)
    assert np.array_equal(other.eigenvalues, batch.eigenvalues)
    assert np.array_equal(other.vectors, batch.vectors)
    assert np.array_equal(other.grid.mask, batch.grid.mask)
    assert other.domain_id == batch.domain_id
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nonsense")
    with pytest.raises(Exception):
        SpectralBatch.load(bad)


def test_inertia_count_matches_batch(square_batch):
    batch, A = square_batch
    lam = batch.eigenvalues
    assert shift_count(A, 0.5 * lam[0]) == 0
    assert shift_count(A, 0.5 * (lam[0] + lam[1])) == 1
    assert verify_complete(batch, A)["complete"]


def test_lattice_count_against_weyl():
    lam2 = 500.0
    n = lattice_count(lam2)
    brute = sum(1 for m in range(1, 30) for k in range(1, 30) if math.pi ** 2 * (m * m + k * k) <= lam2)
    assert n == brute
    lam = math.sqrt(lam2)
    assert abs(n - weyl_count(lam, 1.0, 4.0)) <= lam ** (2 / 3)


def test_weyl_refuses_small_batches(square):
    batch, _ = compute_spectrum(square, 1 / 32, 10)
    with pytest.raises(InsufficientSpectrum, match="insufficient spectrum"):
        weyl_check(batch, square)


@pytest.mark.slow
def test_stadium_parity_classes(stadium_batch):
    batch, _ = stadium_batch
    g = batch.grid
    perm = g.mirror_x()
    assert perm is not None
    V = batch.vectors
    even = np.linalg.norm(V + V[perm], axis=0)
    odd = np.linalg.norm(V - V[perm], axis=0)
    ratio = np.maximum(even, odd) / np.minimum(even, odd)
    assert np.all(ratio > PARITY_MARGIN)
    assert np.all(batch.parity != 0)
    assert np.array_equal(batch.parity == 1, even > odd)


@pytest.mark.slow
def test_stadium_residual_contract(stadium_batch):
    batch, A = stadium_batch
    assert batch.m == 300
    assert np.all(batch.residuals <= 1e-8)
    assert batch.gram_deviation() <= 1e-8
    rep = weyl_check(batch, batch_domain(batch), A)
    assert rep.complete["complete"]


def batch_domain(batch):
    from qerlab.geometry import StadiumBilliard

    return StadiumBilliard()
