"""Tests for the inviscid interior matrix, decaying subspaces, the
normal-mode determinant, its critical transition, and the large-field
asymptotic coefficient."""

import numpy as np
import pytest
import scipy.linalg

from mhdstab.contours import bisection_root
from mhdstab.errors import DomainError
from mhdstab.lopatinsky import (
    DecayingBasis,
    InteriorMatrix,
    constraint_symbols,
    critical_h1,
    critical_h1_refined,
    decaying_basis,
    decaying_projector,
    interior_matrix,
    lambda2_exact,
    lop_det,
    lop_real_root,
    lop_winding,
)
from mhdstab.model import ShockConfig, jacobian, solve_endstates


@pytest.fixture(scope="module")
def endstates():
    return solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))


@pytest.fixture(scope="module")
def endstates_critical():
    # configuration whose transition is studied in detail
    return solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.86, h1=2.0))


# ---------------------------------------------------------------------------
# interior matrix


def test_interior_matrix_against_jacobian_assembly(endstates):
    # the closed form agrees with the direct assembly -A1^{-1}(lam A0 + i xi A2)
    # on the acoustic block and, being related by a similarity that fixes the
    # determinant's zero set, on the full spectrum
    e = endstates
    rng = np.random.default_rng(2)
    for side in ("plus", "minus"):
        w = e.w_plus if side == "plus" else e.w_minus
        A0 = jacobian(0, w, e.gas, e.beta)
        A1 = jacobian(1, w, e.gas, e.beta)
        A2 = jacobian(2, w, e.gas, e.beta)
        prho = e.gas.p_rho(w.rho)
        for _ in range(5):
            lam = complex(rng.uniform(0.01, 2.0), rng.uniform(-1.0, 1.0))
            xi = float(rng.uniform(-2.0, 2.0))
            m = interior_matrix(e, side, lam, xi).matrix
            oracle = -np.linalg.solve(A1, lam * A0 + 1j * xi * A2)
            assert abs(m[0, 0] - oracle[0, 0]) < 1e-12
            assert abs(m[0, 0] - (-lam * w.u1 / (w.u1 ** 2 - prho))) < 1e-12
            got = np.sort_complex(np.linalg.eigvals(m))
            want = np.sort_complex(np.linalg.eigvals(oracle))
            assert np.max(np.abs(got - want)) < 1e-10


def test_interior_matrix_contains_minus_lambda_over_beta(endstates):
    lam = 0.37 + 0.21j
    m = interior_matrix(endstates, "plus", lam, 0.8).matrix
    eigs = np.linalg.eigvals(m)
    assert np.min(np.abs(eigs - (-lam / endstates.beta))) < 1e-10


def test_interior_matrix_zero_at_origin(endstates):
    m = interior_matrix(endstates, "minus", 0.0, 0.0).matrix
    assert np.max(np.abs(m)) == 0.0


# ---------------------------------------------------------------------------
# decaying subspaces


def test_splitting_dimensions_constant_over_right_half_plane(endstates):
    rng = np.random.default_rng(4)
    for _ in range(10):
        lam = complex(rng.uniform(1e-3, 5.0), rng.uniform(-5.0, 5.0))
        xi = float(rng.uniform(-2.0, 2.0))
        bp = decaying_basis(interior_matrix(endstates, "plus", lam, xi))
        bm = decaying_basis(interior_matrix(endstates, "minus", lam, xi))
        assert bp.columns.shape[1] == 3
        assert bm.columns.shape[1] == 1
        assert np.all(bp.eigenvalues.real < 0)
        assert np.all(bm.eigenvalues.real > 0)


def test_coalesced_spectrum_uses_invariant_subspace():
    # embedded 2x2 Jordan block among the decaying eigenvalues
    M = np.zeros((5, 5), dtype=complex)
    M[0, 0] = M[1, 1] = -1.0
    M[0, 1] = 1.0
    M[2, 2] = -2.0
    M[3, 3] = 1.0
    M[4, 4] = 2.0
    rng = np.random.default_rng(9)
    V = rng.standard_normal((5, 5)) + 0.1j * rng.standard_normal((5, 5))
    M = V @ M @ np.linalg.inv(V)
    b = decaying_basis(InteriorMatrix(side="plus", lam=1.0, xi=0.0, matrix=M))
    assert b.used_generalized
    C = b.columns
    assert C.shape[1] == 3
    # span is invariant under M
    resid = M @ C - C @ (np.linalg.pinv(C) @ (M @ C))
    assert np.max(np.abs(resid)) < 1e-8


def test_projector_matches_schur_oracle(endstates):
    m = interior_matrix(endstates, "plus", 0.3 + 0.1j, 0.7)
    P, k = decaying_projector(m)
    assert k == 3
    # P is a projector commuting with the matrix
    assert np.max(np.abs(P @ P - P)) < 1e-10
    assert np.max(np.abs(P @ m.matrix - m.matrix @ P)) < 1e-10
    # its range carries exactly the decaying eigenvalues
    eigs = np.linalg.eigvals(m.matrix)
    dec = np.sort_complex(eigs[eigs.real < 0])
    C = np.linalg.qr(P @ np.eye(5))[0][:, :k]
    sub = np.sort_complex(np.linalg.eigvals(C.conj().T @ m.matrix @ C))
    assert np.max(np.abs(dec - sub)) < 1e-8


# ---------------------------------------------------------------------------
# determinant


def test_det_normalized_at_reference_point(endstates):
    assert lop_det(endstates, 0.1, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_det_real_on_real_axis(endstates):
    for lam in (1e-4, 0.03, 0.5, 2.0):
        assert abs(lop_det(endstates, lam, 1.0).imag) < 1e-10


def test_det_conjugation_symmetry(endstates):
    rng = np.random.default_rng(6)
    for _ in range(5):
        lam = complex(rng.uniform(0.01, 2.0), rng.uniform(0.05, 2.0))
        d1 = lop_det(endstates, np.conj(lam), 1.0)
        d2 = np.conj(lop_det(endstates, lam, 1.0))
        assert abs(d1 - d2) < 1e-10


def test_real_root_and_zero_ray_homogeneity(endstates_critical):
    e = endstates_critical
    root = lop_real_root(e)
    assert root is not None
    assert 3e-4 < root < 6e-4
    # the zero set is a ray: the root of lam -> det(lam, s) sits at s*root
    for s in (0.5, 2.0):
        f = lambda lam: lop_det(e, lam, s).real
        r_s = bisection_root(f, 0.5 * s * root, 1.5 * s * root, tol=1e-14)
        assert abs(r_s - s * root) / (s * root) < 1e-6


def test_winding_detects_unstable_configuration(endstates):
    rep = lop_winding(endstates)
    assert rep.winding >= 1


def test_critical_h1_reference_configuration():
    h = critical_h1(5 / 3, 0.86)
    assert 1.990 <= h <= 2.000
    assert h == pytest.approx(1.99575, abs=5e-4)
    refined = critical_h1_refined(5 / 3, 0.86)
    assert refined == pytest.approx(1.9956319591635, abs=1e-5)


def test_critical_h1_none_when_all_unstable():
    assert critical_h1(5 / 3, 0.05, h_max=4.0) is None


# ---------------------------------------------------------------------------
# asymptotic coefficient


def test_lambda2_exact_reference_values():
    assert lambda2_exact(5 / 3, 2.0) == pytest.approx(9.77e-2, rel=1e-2)
    assert lambda2_exact(7 / 5, 2.0) == pytest.approx(0.100, rel=1e-2)


def test_lambda2_exact_vanishes_at_unit_ratio():
    assert lambda2_exact(5 / 3, 1.0 + 1e-12) < 1e-10
    with pytest.raises(DomainError):
        lambda2_exact(5 / 3, 1.0)


# ---------------------------------------------------------------------------
# constraint-compatibility of the symbol


def test_constraint_intertwining_identity(endstates):
    # L G = H L for the constraint row L and convection scalar H
    rng = np.random.default_rng(8)
    for _ in range(50):
        lam = complex(rng.uniform(0.01, 3.0), rng.uniform(-3.0, 3.0))
        xi = float(rng.uniform(-2.0, 2.0))
        for side in ("plus", "minus"):
            G, L, H = constraint_symbols(endstates, side, lam, xi)
            assert np.max(np.abs(L @ G - H * L)) < 1e-10


def test_constraint_kernel_invariance(endstates):
    rng = np.random.default_rng(10)
    for _ in range(10):
        lam = complex(rng.uniform(0.01, 2.0), rng.uniform(-2.0, 2.0))
        xi = float(rng.uniform(0.1, 2.0))
        for side in ("plus", "minus"):
            G, L, _ = constraint_symbols(endstates, side, lam, xi)
            kern = scipy.linalg.null_space(L)
            for j in range(kern.shape[1]):
                assert np.linalg.norm(L @ (G @ kern[:, j])) < 1e-10
