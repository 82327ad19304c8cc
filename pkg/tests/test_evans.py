"""Tests for the viscous eigenvalue system, continuous orthogonalization,
winding/root computation, eigenfunctions, and crossing speeds."""

import numpy as np
import pytest

from mhdstab import evans as ev
from mhdstab.errors import SplittingError
from mhdstab.model import ShockConfig, solve_endstates
from mhdstab.profiles import solve_profile


@pytest.fixture(scope="module")
def cfg():
    return ShockConfig(gamma=5 / 3, u1_plus=0.2, h1=1.1)


@pytest.fixture(scope="module")
def prof(cfg):
    return solve_profile(cfg)


@pytest.fixture(scope="module")
def sys02(prof):
    # unstable configuration with one real root near 0.0137
    return ev.evans_system(prof, 0.2)


# ---------------------------------------------------------------------------
# system assembly


def test_system_dimension_is_nine(sys02):
    assert ev.EvansSystem.N == 9
    assert sys02.matrix(0.3, 0.1 + 0.2j).shape == (9, 9)


def test_coefficients_match_endstate_assembly(sys02):
    # at x = +-L the variable coefficients coincide with the assemblies at
    # the constant endstates
    for lam in (0.05, 0.3 + 0.4j):
        Ap = sys02.matrix(sys02.L, lam)
        Am = sys02.matrix(-sys02.L, lam)
        assert np.max(np.abs(Ap - sys02.limit_matrix("plus", lam))) < 1e-8
        assert np.max(np.abs(Am - sys02.limit_matrix("minus", lam))) < 1e-8


def test_consistent_splitting_counts(sys02):
    for lam in (1e-3, 0.2 + 0.5j, 2.0 - 1.0j):
        Bp, Bm = sys02.boundary_bases(lam)
        assert Bp.shape == (9, 5)
        assert Bm.shape == (9, 4)


def test_splitting_fails_in_left_half_plane(sys02):
    with pytest.raises(SplittingError):
        sys02.boundary_bases(-0.5 + 0.0j)


# ---------------------------------------------------------------------------
# determinant evaluation


def test_orthonormality_maintained(sys02):
    lam = 0.1 + 0.05j
    Bp, _ = sys02.boundary_bases(lam)
    Om, _, _, events = ev._integrate_drury(sys02, lam, Bp, sys02.L, 0.0)
    assert np.linalg.norm(Om.conj().T @ Om - np.eye(5)) <= 1e-8
    # drift beyond 1e-8 triggers logged re-orthogonalization, never growth
    for _, drift in events:
        assert drift < 1e-6


def test_conjugation_symmetry(sys02):
    # D(conj lam) = conj D(lam): log moduli agree and phases cancel
    for lam in (0.3 + 0.4j, 0.05 + 0.01j):
        a = ev.evans_log(sys02, np.conj(lam))
        b = np.conj(ev.evans_log(sys02, lam))
        assert abs(a.real - b.real) < 1e-8
        assert abs(np.exp(1j * (a.imag - b.imag)) - 1.0) < 1e-8


def test_log_modulus_independent_of_basis_choice(sys02):
    # any orthonormal basis of the same decaying subspaces gives the same
    # |D|; the phase may rotate by the unitary's determinant
    rng = np.random.default_rng(3)
    for lam in (0.05 + 0.02j, 0.4 + 0.3j):
        base = ev.evans_log(sys02, lam)
        Bp, Bm = sys02.boundary_bases(lam)
        for _ in range(2):
            Up = np.linalg.qr(rng.standard_normal((5, 5))
                              + 1j * rng.standard_normal((5, 5)))[0]
            Um = np.linalg.qr(rng.standard_normal((4, 4))
                              + 1j * rng.standard_normal((4, 4)))[0]
            v = ev.evans_log(sys02, lam, bases=(Bp @ Up, Bm @ Um))
            assert abs(v.real - base.real) < 1e-6


# ---------------------------------------------------------------------------
# winding and roots


@pytest.fixture(scope="module")
def small_winding(sys02):
    return ev.evans_winding(sys02, 0.05, r_inner=1e-3)


def test_winding_counts_known_root(small_winding):
    rep, _ = small_winding
    assert rep.winding == 1
    assert rep.closure_defect < 1e-6


def test_root_refinement(sys02, small_winding):
    _, data = small_winding
    root = ev.evans_root(sys02, winding_data=data)
    assert root is not None
    assert abs(root.imag) < 5e-7
    assert root.real == pytest.approx(0.013689, abs=5e-6)


def test_eigenfunction_at_root(sys02, small_winding):
    _, data = small_winding
    root = ev.evans_root(sys02, winding_data=data)
    ef = ev.eigenfunction(sys02, root)
    assert abs(ef.lam - root) < 1e-6
    mid = ef.values[np.argmin(np.abs(ef.grid))]
    assert np.linalg.norm(mid) == pytest.approx(1.0, abs=1e-8)
    assert ef.constraint_residual <= 1e-6


def test_translation_mode_eigenfunction(prof):
    sys0 = ev.evans_system(prof, 0.0)
    ef = ev.eigenfunction(sys0, 0.0)
    assert ef.lam == 0.0
    assert ef.constraint_residual <= 1e-12
    # proportional to the lifted profile derivative
    du = np.array([float(prof.du_at(x)) for x in ef.grid])
    v = ef.values[:, 1].real
    corr = abs(np.dot(du, v)) / (np.linalg.norm(du) * np.linalg.norm(v))
    assert corr >= 1.0 - 1e-6
    others = np.delete(ef.values, 1, axis=1)
    assert np.max(np.abs(others)) <= 1e-12


# ---------------------------------------------------------------------------
# concavity coefficient and crossing speed


def test_sigma_negative_at_transition():
    from mhdstab.lopatinsky import critical_h1_refined

    h_star = critical_h1_refined(5 / 3, 0.86)
    p = solve_profile(ShockConfig(gamma=5 / 3, u1_plus=0.86, h1=h_star))
    rep = ev.sigma_concavity(p)
    assert rep.sigma < 0.0
    assert rep.spread <= 0.2


def test_crossing_gap_flag_on_single_point_grid(cfg):
    pts = ev.crossing_speed(cfg, [cfg.h1], 0.1)
    assert len(pts) == 1
    assert pts[0].dlam_dh1 is None
    assert pts[0].gap
