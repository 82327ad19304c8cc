"""Tests for fluxes, Jacobians, endstates, classification, and the
constraint-compatibility identities."""

import numpy as np
import pytest

from mhdstab.errors import (
    DegenerateBoundaryError,
    DegenerateShockError,
    DomainError,
    UnsupportedCaseError,
)
from mhdstab.model import (
    GasLaw,
    ShockConfig,
    ShockKind,
    State5,
    characteristic_speeds,
    classify_shock,
    conserved_jacobian,
    constraint_ops,
    dynamic_rh_vectors,
    flux,
    involution_residuals,
    jacobian,
    rh_residual,
    solve_endstates,
)


def random_parallel_state(rng):
    return State5(
        rho=float(rng.uniform(0.3, 3.0)),
        u1=float(rng.uniform(-2.0, 2.0)),
        u2=0.0,
        h1=float(rng.uniform(0.1, 4.0)),
        h2=0.0,
    )


def random_state(rng):
    return State5(
        rho=float(rng.uniform(0.3, 3.0)),
        u1=float(rng.uniform(-2.0, 2.0)),
        u2=float(rng.uniform(-2.0, 2.0)),
        h1=float(rng.uniform(-4.0, 4.0)),
        h2=float(rng.uniform(-4.0, 4.0)),
    )


# ---------------------------------------------------------------------------
# fluxes and Jacobians


def test_conserved_map_at_unit_state():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    w = State5(1.0, 1.0, 0.0, 3.0, 0.0)
    assert np.allclose(flux(0, w, gas), [1.0, 1.0, 0.0, 3.0, 0.0])


def test_normal_flux_momentum_component_continuity():
    # Rankine-Hugoniot oracle: the second component of the normal flux agrees
    # across the endstates of the gamma=5/3, u1+=0.6 shock
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    fm = flux(1, e.w_minus, e.gas, e.beta)
    fp = flux(1, e.w_plus, e.gas, e.beta)
    assert fm[1] == pytest.approx(fp[1], abs=1e-12)
    assert fm[1] == pytest.approx(-3.2022, abs=5e-4)


def test_normal_flux_induction_component_is_beta_h1():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    w = State5(2.0, -1.0, 0.5, 3.0, -0.7)
    assert flux(1, w, gas, beta=1.0)[3] == pytest.approx(3.0, abs=0)
    assert flux(1, w, gas, beta=2.5)[3] == pytest.approx(7.5, abs=0)


def test_flux_rejects_nonpositive_density():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    with pytest.raises(DomainError):
        flux(1, State5(-1.0, 1.0, 0.0, 1.0, 0.0), gas)


def test_time_jacobian_is_diagonal_at_rest():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    A0 = jacobian(0, State5(2.0, 0.0, 0.0, 1.0, 0.0), gas)
    assert np.allclose(A0, np.diag([1.0, 2.0, 2.0, 1.0, 1.0]))


def test_jacobians_match_finite_differences():
    rng = np.random.default_rng(7)
    gas = GasLaw(a=0.3, gamma=5 / 3)
    w = random_state(rng)
    h = 1e-7
    for index in (0, 1, 2):
        A = jacobian(index, w, gas, beta=1.3)
        base = w.as_array()
        num = np.zeros((5, 5))
        for j in range(5):
            dp, dm = base.copy(), base.copy()
            dp[j] += h
            dm[j] -= h
            num[:, j] = (
                flux(index, State5.from_array(dp), gas, beta=1.3)
                - flux(index, State5.from_array(dm), gas, beta=1.3)
            ) / (2 * h)
        assert np.max(np.abs(A - num)) < 1e-6


def test_normal_jacobian_induction_row_is_linear():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    w = random_state(np.random.default_rng(3))
    A1 = jacobian(1, w, gas, beta=1.7)
    assert np.allclose(A1[3], [0.0, 0.0, 0.0, 1.7, 0.0])


# ---------------------------------------------------------------------------
# characteristic speeds


def test_characteristic_speeds_at_endstates():
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    sp = characteristic_speeds(e.w_plus, e.gas)
    sm = characteristic_speeds(e.w_minus, e.gas)
    assert np.allclose(sp, sorted([-0.2353, 1.4353, 1.0, -1.7238, 2.9238]), atol=1e-3)
    assert np.allclose(sm, sorted([0.2955, 1.7045, 1.0, -2.0, 4.0]), atol=1e-3)


def test_characteristic_speeds_match_closed_form():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    w = State5(1.4, 0.7, 0.0, 1.2, 0.0)
    got = characteristic_speeds(w, gas, beta=1.1)
    c = np.sqrt(gas.p_rho(w.rho))
    alf = w.h1 / np.sqrt(w.rho)
    want = sorted([w.u1 + c, w.u1 - c, 1.1, w.u1 + alf, w.u1 - alf])
    assert np.allclose(got, want, atol=1e-10)


def test_characteristic_speeds_reject_nonparallel():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    with pytest.raises(UnsupportedCaseError):
        characteristic_speeds(State5(1.0, 1.0, 0.5, 1.0, 0.0), gas)


# ---------------------------------------------------------------------------
# endstates


def test_endstates_reference_values():
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    assert e.R == pytest.approx(5 / 3, abs=1e-14)
    assert e.w_plus.rho == pytest.approx(5 / 3, abs=1e-14)
    assert e.M ** 2 == pytest.approx(0.5159, abs=5e-4)
    assert e.a == pytest.approx(0.2978, abs=5e-4)
    assert e.H_star_lower == pytest.approx(0.7746, abs=5e-4)
    assert e.H_star_upper == 1.0


def test_endstates_mass_flux_and_field_continuity():
    for u1p in (0.05, 0.3, 0.86):
        e = solve_endstates(ShockConfig(gamma=7 / 5, u1_plus=u1p, h1=2.0))
        assert e.w_plus.rho * e.w_plus.u1 == pytest.approx(1.0, abs=1e-14)
        assert e.w_plus.h1 == e.w_minus.h1
        assert rh_residual(e) <= 1e-12


def test_endstates_reject_bad_velocity():
    with pytest.raises(DomainError):
        ShockConfig(gamma=5 / 3, u1_plus=1.2, h1=2.0)


# ---------------------------------------------------------------------------
# classification


def test_classification_three_regimes():
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    t = classify_shock(e)
    assert t.kind is ShockKind.SLOW_LAX_2
    assert t.counts == (4, 3)
    assert classify_shock(e, h1=0.5).kind is ShockKind.FAST_LAX_1
    assert classify_shock(e, h1=0.9).kind is ShockKind.OVERCOMPRESSIVE


def test_classification_boundary_is_degenerate():
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    with pytest.raises(DegenerateBoundaryError):
        classify_shock(e, h1=e.H_star_upper)
    with pytest.raises(DegenerateBoundaryError):
        classify_shock(e, h1=e.H_star_lower)


# ---------------------------------------------------------------------------
# constraint-compatibility identities


def test_involution_identities_hold_to_machine_precision():
    rng = np.random.default_rng(11)
    gas = GasLaw(a=0.3, gamma=5 / 3)
    for _ in range(10):
        res = involution_residuals(random_state(rng), gas, beta=1.0)
        assert max(res.values()) <= 1e-13


def test_involution_identity_breaks_with_mismatched_beta():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    w = State5(1.2, 0.8, 0.3, 1.5, -0.4)
    res = involution_residuals(w, gas, beta=1.0, beta_constraint=1.5)
    assert res["gamma_n"] > 1e-2


def test_involution_residuals_vanish_on_trivial_state():
    gas = GasLaw(a=0.3, gamma=5 / 3)
    res = involution_residuals(State5(1.0, 0.0, 0.0, 1e-30, 0.0), gas)
    assert max(res.values()) <= 1e-13


# ---------------------------------------------------------------------------
# linearized jump conditions


def test_dynamic_rh_reference_values():
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    d = dynamic_rh_vectors(e)
    assert d.mu_tilde == pytest.approx(-0.36, abs=1e-3)
    j0 = flux(0, e.w_plus, e.gas) - flux(0, e.w_minus, e.gas)
    assert np.allclose(j0, [2 / 3, 0, 0, 0, 0], atol=1e-12)
    assert d.r[2] == pytest.approx(0.4000, abs=5e-4)
    # orthogonality of the dynamic pair against the static annihilators
    assert abs(float(j0 @ d.r)) <= 1e-14
    for row in d.static_annihilators:
        assert abs(float(row @ j0)) <= 1e-14
        assert abs(float(row @ d.r)) <= 1e-14


def test_dynamic_rh_degenerate_jump():
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    degenerate = type(e)(
        w_plus=e.w_minus,
        w_minus=e.w_minus,
        R=1.0 + 1e-16,
        M=e.M,
        H_star_lower=e.H_star_lower,
        H_star_upper=e.H_star_upper,
        a=e.a,
        gamma=e.gamma,
        beta=e.beta,
    )
    with pytest.raises(DegenerateShockError):
        dynamic_rh_vectors(degenerate)


# ---------------------------------------------------------------------------
# spectral structure of the symbol


def symbol(k1, k2, w, gas, beta):
    return k1 * conserved_jacobian(1, w, gas, beta) + k2 * conserved_jacobian(
        2, w, gas, beta
    )


def test_spectrum_union_of_constrained_and_constraint_parts():
    # the symbol's spectrum is the union of its restriction to the constraint
    # kernel and the constraint-convection eigenvalue
    rng = np.random.default_rng(5)
    gas = GasLaw(a=0.3, gamma=5 / 3)
    ops = constraint_ops(1.0)
    for _ in range(20):
        w = random_parallel_state(rng)
        k1, k2 = rng.standard_normal(2)
        A = symbol(k1, k2, w, gas, 1.0)
        G = (k1 * ops.Gamma1 + k2 * ops.Gamma2).reshape(1, 5)
        Mk = k1 * ops.M1 + k2 * ops.M2
        K = np.linalg.svd(G)[2][1:].T  # basis of ker Gamma(k)
        AK = A @ K
        rest = np.linalg.pinv(K) @ AK
        assert np.linalg.norm(AK - K @ rest) <= 1e-8  # kernel invariance
        full = np.sort_complex(np.linalg.eigvals(A))
        union = np.sort_complex(np.concatenate([np.linalg.eigvals(rest), [Mk]]))
        assert np.max(np.abs(full - union)) <= 1e-8


def test_weak_hyperbolicity_real_spectrum():
    rng = np.random.default_rng(13)
    gas = GasLaw(a=0.3, gamma=5 / 3)
    for _ in range(20):
        w = random_parallel_state(rng)
        k1, k2 = rng.standard_normal(2)
        eigs = np.linalg.eigvals(symbol(k1, k2, w, gas, 1.0))
        assert np.max(np.abs(eigs.imag)) <= 1e-8


def test_transverse_symbol_jordan_structure():
    # at k = (0, 1) the zero eigenvalue of i A1^{-1} A2 has geometric
    # multiplicity 2 but algebraic multiplicity 3
    e = solve_endstates(ShockConfig(gamma=5 / 3, u1_plus=0.6, h1=3.0))
    for w in (e.w_plus, e.w_minus):
        A1 = conserved_jacobian(1, w, e.gas, e.beta)
        A2 = conserved_jacobian(2, w, e.gas, e.beta)
        M = 1j * np.linalg.solve(A1, A2)
        assert np.linalg.matrix_rank(M, tol=1e-10) == 3
        assert np.linalg.matrix_rank(M @ M, tol=1e-10) == 2
        assert np.linalg.matrix_rank(M @ M @ M, tol=1e-10) == 2
