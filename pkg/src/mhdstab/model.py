"""Planar MHD shock model with a constraint-convecting induction term.

Implements the two-dimensional isentropic MHD system in the form

    f0(W)_t + f1(W)_{x1} + f2(W)_{x2} = 0,    W = (rho, u1, u2, h1, h2),

where a multiple beta * div(h) has been added to the first induction
equation so that the system is conservative and the flux matrix in the
normal direction is invertible.  The module houses the fluxes and their
Jacobians, the constraint (divergence) operators, the Rankine-Hugoniot
endstate solver in the normalized frame rho^- = u1^- = 1, and shock
classification by characteristic counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from mhdstab.errors import (
    DegenerateBoundaryError,
    DegenerateShockError,
    DomainError,
    UnsupportedCaseError,
)

_BOUNDARY_TOL = 1e-10  # classification tolerance on |h1 - H| at type boundaries


@dataclass(frozen=True)
class GasLaw:
    """Polytropic pressure law p(rho) = a * rho**gamma."""

    a: float
    gamma: float

    def __post_init__(self):
        if self.a <= 0:
            raise DomainError(f"pressure coefficient must be positive, got a={self.a}")
        if self.gamma < 1:
            raise DomainError(f"adiabatic exponent must be >= 1, got gamma={self.gamma}")

    def pressure(self, rho):
        return self.a * rho ** self.gamma

    def p_rho(self, rho):
        """Derivative dp/drho (square of the sound speed)."""
        return self.a * self.gamma * rho ** (self.gamma - 1.0)


@dataclass(frozen=True)
class State5:
    """Primitive state W = (rho, u1, u2, h1, h2)."""

    rho: float
    u1: float
    u2: float
    h1: float
    h2: float

    def as_array(self):
        return np.array([self.rho, self.u1, self.u2, self.h1, self.h2], dtype=float)

    @staticmethod
    def from_array(arr):
        return State5(*(float(x) for x in arr))

    @property
    def is_parallel(self):
        return self.u2 == 0.0 and self.h2 == 0.0


@dataclass(frozen=True)
class ShockConfig:
    """Complete parameter set (gamma, u1_plus, h1) plus model constants.

    The scaling rho^- = u1^- = 1 is hard coded; the pressure coefficient
    `a` is derived from the jump conditions, so a GasLaw is built lazily
    by solve_endstates.  Viscosities default to mu = nu = 0.1 with eta
    given by the Stokes hypothesis eta = -2*mu/3; this combination
    reproduces the published viscous stability benchmarks.
    """

    gamma: float
    u1_plus: float
    h1: float
    beta: float = 1.0
    mu: float = 0.1
    eta: float | None = None
    nu: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.u1_plus < 1.0):
            raise DomainError(f"u1_plus must lie in (0,1), got {self.u1_plus}")
        if self.beta == 0.0:
            raise DomainError("beta must be nonzero (normal flux is singular at beta=0)")
        if self.h1 <= 0:
            raise DomainError(f"h1 must be positive, got {self.h1}")
        if self.gamma < 1:
            raise DomainError(f"gamma must be >= 1, got {self.gamma}")
        if self.eta is None:
            object.__setattr__(self, "eta", -2.0 * self.mu / 3.0)
        if self.mu < 0 or self.nu < 0:
            raise DomainError("viscosities must be nonnegative")

    @property
    def long_viscosity(self):
        """Longitudinal momentum viscosity 2*mu + eta."""
        return 2.0 * self.mu + self.eta

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "u1_plus": self.u1_plus,
            "h1": self.h1,
            "beta": self.beta,
            "mu": self.mu,
            "eta": self.eta,
            "nu": self.nu,
        }


class ShockKind(Enum):
    SLOW_LAX_2 = "slow_lax_2"
    FAST_LAX_1 = "fast_lax_1"
    OVERCOMPRESSIVE = "overcompressive"


#: positive-characteristic counts (minus side, plus side) per shock kind
_EXPECTED_COUNTS = {
    ShockKind.SLOW_LAX_2: (4, 3),
    ShockKind.FAST_LAX_1: (5, 4),
    ShockKind.OVERCOMPRESSIVE: (5, 3),
}


@dataclass(frozen=True)
class ShockType:
    kind: ShockKind
    counts: tuple  # (# positive characteristics at W^-, at W^+)


@dataclass(frozen=True)
class ConstraintOps:
    """Row operators Gamma_j and convection scalars M_j with Gamma V = div(h)."""

    Gamma1: np.ndarray
    Gamma2: np.ndarray
    M1: float
    M2: float


def constraint_ops(beta):
    return ConstraintOps(
        Gamma1=np.array([0.0, 0.0, 0.0, 1.0, 0.0]),
        Gamma2=np.array([0.0, 0.0, 0.0, 0.0, 1.0]),
        M1=float(beta),
        M2=0.0,
    )


def _flux_unchecked(index, w: State5, gas: GasLaw, beta):
    rho, u1, u2, h1, h2 = w.rho, w.u1, w.u2, w.h1, w.h2
    if index == 0:
        return np.array([rho, rho * u1, rho * u2, h1, h2])
    p = gas.pressure(rho)
    if index == 1:
        return np.array(
            [
                rho * u1,
                rho * u1 ** 2 + 0.5 * (h2 ** 2 - h1 ** 2) + p,
                rho * u1 * u2 - h1 * h2,
                beta * h1,
                -h1 * u2 + h2 * u1,
            ]
        )
    if index == 2:
        return np.array(
            [
                rho * u2,
                rho * u1 * u2 - h1 * h2,
                rho * u2 ** 2 + 0.5 * (h1 ** 2 - h2 ** 2) + p,
                beta * h2 + h1 * u2 - h2 * u1,
                0.0,
            ]
        )
    raise DomainError(f"flux index must be 0, 1 or 2, got {index}")


def flux(index, w: State5, gas: GasLaw, beta=1.0):
    """Flux vector f_index(W); index 0 is the conserved-variable map."""
    if w.rho <= 0:
        raise DomainError(f"density must be positive, got rho={w.rho}")
    return _flux_unchecked(index, w, gas, beta)


def jacobian(index, w: State5, gas: GasLaw, beta=1.0):
    """Exact Jacobian A_index = Df_index(W) with respect to W."""
    if w.rho <= 0:
        raise DomainError(f"density must be positive, got rho={w.rho}")
    rho, u1, u2, h1, h2 = w.rho, w.u1, w.u2, w.h1, w.h2
    if index == 0:
        return np.array(
            [
                [1.0, 0.0, 0.0, 0.0, 0.0],
                [u1, rho, 0.0, 0.0, 0.0],
                [u2, 0.0, rho, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, 1.0],
            ]
        )
    prho = gas.p_rho(rho)
    if index == 1:
        return np.array(
            [
                [u1, rho, 0.0, 0.0, 0.0],
                [u1 ** 2 + prho, 2.0 * rho * u1, 0.0, -h1, h2],
                [u1 * u2, rho * u2, rho * u1, -h2, -h1],
                [0.0, 0.0, 0.0, beta, 0.0],
                [0.0, h2, -h1, -u2, u1],
            ]
        )
    if index == 2:
        return np.array(
            [
                [u2, 0.0, rho, 0.0, 0.0],
                [u1 * u2, rho * u2, rho * u1, -h2, -h1],
                [u2 ** 2 + prho, 0.0, 2.0 * rho * u2, h1, -h2],
                [0.0, -h2, h1, u2, beta - u1],
                [0.0, 0.0, 0.0, 0.0, 0.0],
            ]
        )
    raise DomainError(f"jacobian index must be 0, 1 or 2, got {index}")


def conserved_jacobian(index, w: State5, gas: GasLaw, beta=1.0):
    """Jacobian of F_index(V) = f_index(f0^{-1}(V)) with respect to V = f0(W)."""
    A0 = jacobian(0, w, gas, beta)
    Aj = jacobian(index, w, gas, beta)
    return Aj @ np.linalg.inv(A0)


def characteristic_speeds(w: State5, gas: GasLaw, beta=1.0):
    """Eigenvalues of A0^{-1} A1 at a parallel state, sorted ascending.

    For parallel states these are {u1 +- sqrt(p_rho), beta, u1 +- h1/sqrt(rho)}.
    """
    if not w.is_parallel:
        raise UnsupportedCaseError("characteristic speeds implemented for parallel states only")
    if w.rho <= 0:
        raise DomainError(f"density must be positive, got rho={w.rho}")
    A0 = jacobian(0, w, gas, beta)
    A1 = jacobian(1, w, gas, beta)
    eigs = np.linalg.eigvals(np.linalg.solve(A0, A1))
    if np.max(np.abs(eigs.imag)) > 1e-8 * max(1.0, np.max(np.abs(eigs.real))):
        raise DomainError("characteristic speeds acquired imaginary parts")
    return np.sort(eigs.real)


@dataclass(frozen=True)
class Endstates:
    """Constant states W^+/W^- and derived jump quantities.

    H_star_lower = u1^+ sqrt(rho^+) and H_star_upper = u1^- sqrt(rho^-) = 1
    bound the overcompressive band of normal magnetic fields.
    """

    w_plus: State5
    w_minus: State5
    R: float
    M: float
    H_star_lower: float
    H_star_upper: float
    a: float
    gamma: float
    beta: float = 1.0
    gas: GasLaw = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "gas", GasLaw(a=self.a, gamma=self.gamma))

    @property
    def u1_plus(self):
        return self.w_plus.u1

    @property
    def h1(self):
        return self.w_plus.h1

    def to_dict(self):
        return {
            "w_plus": list(self.w_plus.as_array()),
            "w_minus": list(self.w_minus.as_array()),
            "R": self.R,
            "M": self.M,
            "H_star_lower": self.H_star_lower,
            "H_star_upper": self.H_star_upper,
            "a": self.a,
            "gamma": self.gamma,
            "beta": self.beta,
        }


def downstream_mach_squared(gamma, R):
    """M^2 = (R^gamma - 1) / (gamma R^gamma (R - 1)) for density ratio R > 1."""
    if R <= 1:
        raise DomainError(f"density ratio must exceed 1, got R={R}")
    Rg = R ** gamma
    return (Rg - 1.0) / (gamma * Rg * (R - 1.0))


def solve_endstates(cfg: ShockConfig) -> Endstates:
    """Rankine-Hugoniot endstates in the frame rho^- = u1^- = 1.

    Mass conservation forces rho^+ = R = 1/u1_plus, and the momentum jump
    fixes the pressure coefficient via the downstream Mach number:
    M^2 = (u1^+)^2 / p_rho(rho^+).
    """
    u1p = cfg.u1_plus
    R = 1.0 / u1p
    M2 = downstream_mach_squared(cfg.gamma, R)
    a = u1p ** 2 / (M2 * cfg.gamma * R ** (cfg.gamma - 1.0))
    e = Endstates(
        w_plus=State5(R, u1p, 0.0, cfg.h1, 0.0),
        w_minus=State5(1.0, 1.0, 0.0, cfg.h1, 0.0),
        R=R,
        M=float(np.sqrt(M2)),
        H_star_lower=u1p * float(np.sqrt(R)),
        H_star_upper=1.0,
        a=a,
        gamma=cfg.gamma,
        beta=cfg.beta,
    )
    res = rh_residual(e)
    if res > 1e-12:
        raise DomainError(f"Rankine-Hugoniot residual {res:.3e} exceeds 1e-12")
    return e


def rh_residual(e: Endstates) -> float:
    """Max-norm of [f1] across the shock (should vanish for true endstates)."""
    jump = flux(1, e.w_plus, e.gas, e.beta) - flux(1, e.w_minus, e.gas, e.beta)
    return float(np.max(np.abs(jump)))


def classify_shock(e: Endstates, h1=None, beta=None) -> ShockType:
    """Shock type from the position of h1 relative to (H_star_lower, H_star_upper).

    Counts of positive characteristic speeds on each side are computed from
    the actual spectra and checked against the expected table.
    """
    if h1 is None:
        h1 = e.h1
    if beta is None:
        beta = e.beta
    if beta <= 0:
        raise DomainError("classification assumes beta > 0")
    if abs(h1 - e.H_star_lower) < _BOUNDARY_TOL or abs(h1 - e.H_star_upper) < _BOUNDARY_TOL:
        raise DegenerateBoundaryError(
            f"h1={h1} lies on a classification boundary (H={e.H_star_lower}, {e.H_star_upper})"
        )
    if h1 > e.H_star_upper:
        kind = ShockKind.SLOW_LAX_2
    elif h1 < e.H_star_lower:
        kind = ShockKind.FAST_LAX_1
    else:
        kind = ShockKind.OVERCOMPRESSIVE

    wp = State5(e.w_plus.rho, e.w_plus.u1, 0.0, h1, 0.0)
    wm = State5(e.w_minus.rho, e.w_minus.u1, 0.0, h1, 0.0)
    counts = (
        int(np.sum(characteristic_speeds(wm, e.gas, beta) > 0)),
        int(np.sum(characteristic_speeds(wp, e.gas, beta) > 0)),
    )
    if counts != _EXPECTED_COUNTS[kind]:
        raise DegenerateBoundaryError(
            f"characteristic counts {counts} inconsistent with {kind} "
            f"(expected {_EXPECTED_COUNTS[kind]}); parameters near a boundary?"
        )
    return ShockType(kind=kind, counts=counts)


def _linear_flux_parts(beta):
    """Matrices N1, N2 with F_j(V) = N_j V + Q_j(V), Q_j collecting all
    terms that are nonlinear in the conserved variables."""
    N1 = np.zeros((5, 5))
    N1[0, 1] = 1.0  # mass flux rho*u1 = V_2
    N1[3, 3] = beta
    N2 = np.zeros((5, 5))
    N2[0, 2] = 1.0  # rho*u2 = V_3
    N2[3, 4] = beta
    return N1, N2


def involution_residuals(w: State5, gas: GasLaw, beta=1.0, beta_constraint=None):
    """Residuals of the constraint-compatibility identities on the split
    F_j = N_j V + Q_j(V).

    beta_constraint overrides the scalar used in the M operators only,
    which deliberately breaks the first identity when it differs from the
    beta used in the fluxes.
    """
    ops = constraint_ops(beta if beta_constraint is None else beta_constraint)
    N1, N2 = _linear_flux_parts(beta)
    V = _flux_unchecked(0, w, gas, beta)
    Q1 = _flux_unchecked(1, w, gas, beta) - N1 @ V
    Q2 = _flux_unchecked(2, w, gas, beta) - N2 @ V
    g1, g2 = ops.Gamma1, ops.Gamma2
    return {
        "gamma_n": max(
            float(np.max(np.abs(g1 @ N1 - ops.M1 * g1))),
            float(np.max(np.abs(g2 @ N2 - ops.M2 * g2))),
        ),
        "gamma_q": max(abs(float(g1 @ Q1)), abs(float(g2 @ Q2))),
        "mixed_n": float(np.max(np.abs(g1 @ N2 + g2 @ N1 - (ops.M1 * g2 + ops.M2 * g1)))),
        "mixed_q": abs(float(g1 @ Q2 + g2 @ Q1)),
    }


@dataclass(frozen=True)
class DynamicRH:
    """Vectors entering the linearized jump conditions at a planar front.

    r and s build the single front-coupled ('dynamic') condition; the
    static annihilators span the remaining n-2 front-independent ones.
    """

    r: np.ndarray
    s: np.ndarray
    mu_tilde: float
    static_annihilators: np.ndarray  # 3 x 5, rows e2, e4, e5


def dynamic_rh_vectors(e: Endstates) -> DynamicRH:
    j0 = flux(0, e.w_plus, e.gas, e.beta) - flux(0, e.w_minus, e.gas, e.beta)
    j2 = flux(2, e.w_plus, e.gas, e.beta) - flux(2, e.w_minus, e.gas, e.beta)
    n0 = float(j0 @ j0)
    n2 = float(j2 @ j2)
    if n0 < 1e-24 or n2 < 1e-24:
        raise DegenerateShockError("flux jumps vanish; zero-strength shock")
    if abs(float(j0 @ j2)) > 1e-12 * np.sqrt(n0 * n2):
        raise UnsupportedCaseError("jump vectors are not orthogonal (nonparallel shock?)")
    mu_tilde = -n2 / n0
    ann = np.zeros((3, 5))
    ann[0, 1] = ann[1, 3] = ann[2, 4] = 1.0
    return DynamicRH(r=j2, s=mu_tilde * j0, mu_tilde=mu_tilde, static_annihilators=ann)
