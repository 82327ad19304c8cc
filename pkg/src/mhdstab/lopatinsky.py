"""Inviscid normal-mode analysis: interior matrix, decaying subspaces,
Lopatinsky determinant, windings, the critical normal-field transition,
and the large-field asymptotic coefficient of the unstable root.

All routines work in the normalized frame rho^- = u1^- = 1 and exploit
homogeneity of the determinant's zero set to fix xi = 1 where possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mhdstab import model
from mhdstab.contours import bisection_root, make_semicircle, winding_number, WindingReport
from mhdstab.errors import DomainError, SplittingError
from mhdstab.model import Endstates, ShockConfig, downstream_mach_squared, solve_endstates

#: relative eigenvalue gap below which the eigenvector basis is replaced by
#: an invariant-subspace (generalized eigenvector) basis
COALESCENCE_GAP = 1e-6

#: real shift used when evaluating near the imaginary axis
IMAG_AXIS_SHIFT = 1e-4


@dataclass
class InteriorMatrix:
    side: str  # "plus" or "minus"
    lam: complex
    xi: float
    matrix: np.ndarray


@dataclass
class DecayingBasis:
    side: str
    columns: np.ndarray  # 5 x k
    eigenvalues: np.ndarray
    used_generalized: bool


def _endstate(e: Endstates, side):
    if side == "plus":
        return e.w_plus
    if side == "minus":
        return e.w_minus
    raise DomainError(f"side must be 'plus' or 'minus', got {side!r}")


def interior_matrix(e: Endstates, side, lam, xi, beta=None) -> InteriorMatrix:
    """Closed-form coefficient matrix -(A1)^{-1}(lam A0 + i xi A2) at an endstate."""
    if beta is None:
        beta = e.beta
    w = _endstate(e, side)
    u1, rho, h1 = w.u1, w.rho, w.h1
    prho = e.gas.p_rho(rho)
    d_ac = u1 ** 2 - prho
    d_al = rho * u1 ** 2 - h1 ** 2
    if abs(d_ac) < 1e-14 or abs(d_al) < 1e-14 or beta == 0:
        raise DomainError("characteristic degeneracy: interior matrix is singular")
    lam = complex(lam)
    m = np.array(
        [
            [
                -lam * u1 / d_ac,
                lam * rho / d_ac,
                -1j * rho * u1 * xi / d_ac,
                0.0,
                0.0,
            ],
            [
                lam * prho / (d_ac * rho),
                -lam * u1 / d_ac,
                1j * prho * xi / d_ac,
                0.0,
                0.0,
            ],
            [
                -1j * prho * u1 * xi / d_al,
                0.0,
                -lam * rho * u1 / d_al,
                -1j * h1 * u1 * xi / d_al,
                -h1 * lam / d_al,
            ],
            [
                0.0,
                0.0,
                -1j * h1 * xi / beta,
                -lam / beta,
                -(1j * beta - 1j * u1) * xi / beta,
            ],
            [
                -1j * h1 * prho * xi / d_al,
                0.0,
                -h1 * lam * rho / d_al,
                -1j * h1 ** 2 * xi / d_al,
                -lam * rho * u1 / d_al,
            ],
        ],
        dtype=complex,
    )
    return InteriorMatrix(side=side, lam=lam, xi=xi, matrix=m)


def _fix_column_phases(cols):
    """Unit norm, first significant entry rotated to the positive real axis."""
    out = np.array(cols, dtype=complex)
    for j in range(out.shape[1]):
        v = out[:, j]
        nrm = np.linalg.norm(v)
        v = v / nrm
        idx = np.argmax(np.abs(v) > 1e-8)
        phase = v[idx] / abs(v[idx])
        out[:, j] = v / phase
    return out


def decaying_basis(m: InteriorMatrix) -> DecayingBasis:
    """Basis of the subspace of spatially decaying modes on the given side.

    Eigenvectors are used when the relevant eigenvalues are well separated;
    near coalescence (glancing) the basis switches to Schur vectors of the
    sorted invariant subspace, which remain well conditioned.
    """
    want_negative = m.side == "plus"
    eigvals, eigvecs = np.linalg.eig(m.matrix)
    sel = np.where(eigvals.real < 0 if want_negative else eigvals.real > 0)[0]
    mu = eigvals[sel]
    used_generalized = False
    if len(sel) >= 2:
        gaps = np.abs(mu[:, None] - mu[None, :]) + np.eye(len(mu))
        scale = np.maximum(np.abs(mu)[:, None], np.abs(mu)[None, :]) + 1.0
        if np.min(gaps / scale) < COALESCENCE_GAP:
            used_generalized = True
    if used_generalized:
        # threshold halfway across the spectral gap keeps the Schur cluster
        # count consistent with the eigenvalue count even for borderline modes
        re = np.sort(eigvals.real)
        k = len(sel)
        if want_negative:
            thresh = 0.5 * (re[k - 1] + re[k])
            pred = lambda z: z.real < thresh
        else:
            thresh = 0.5 * (re[-k] + re[-k - 1])
            pred = lambda z: z.real > thresh
        T, Z, sdim = scipy.linalg.schur(m.matrix, output="complex", sort=pred)
        if sdim != len(sel):
            raise SplittingError("Schur sorting disagrees with the eigenvalue count")
        cols = Z[:, :sdim]
        mu = np.diag(T)[:sdim]
    else:
        order = np.lexsort((mu.imag, np.abs(mu.imag), mu.real))
        mu = mu[order]
        cols = eigvecs[:, sel[order]]
    return DecayingBasis(
        side=m.side,
        columns=_fix_column_phases(cols),
        eigenvalues=mu,
        used_generalized=used_generalized,
    )


def decaying_projector(m: InteriorMatrix):
    """Spectral projector onto the decaying invariant subspace.

    Built from a sorted Schur form with a Sylvester solve for the coupling
    block; unlike an eigenvector basis, the projector depends analytically
    on (lam, xi), which keeps the determinant continuous along contours.
    """
    want_negative = m.side == "plus"
    eigvals = np.linalg.eigvals(m.matrix)
    k = int(np.sum(eigvals.real < 0 if want_negative else eigvals.real > 0))
    if k == 0 or k == m.matrix.shape[0]:
        raise SplittingError(f"no spectral splitting on side {m.side}")
    re = np.sort(eigvals.real)
    if want_negative:
        thresh = 0.5 * (re[k - 1] + re[k])
        pred = lambda z: z.real < thresh
    else:
        thresh = 0.5 * (re[-k] + re[-k - 1])
        pred = lambda z: z.real > thresh
    T, Z, sdim = scipy.linalg.schur(m.matrix, output="complex", sort=pred)
    if sdim != k:
        raise SplittingError("Schur sorting disagrees with the eigenvalue count")
    S = scipy.linalg.solve_sylvester(T[:k, :k], -T[k:, k:], T[:k, k:])
    P = Z[:, :k] @ np.hstack([np.eye(k), S]) @ Z.conj().T
    return P, k


#: reference frequency at which the determinant is normalized to 1
REF_POINT = (0.1, 1.0)


def _reference_columns(e: Endstates, beta):
    bp = decaying_basis(interior_matrix(e, "plus", REF_POINT[0], REF_POINT[1], beta))
    bm = decaying_basis(interior_matrix(e, "minus", REF_POINT[0], REF_POINT[1], beta))
    if bp.columns.shape[1] + bm.columns.shape[1] != 4:
        raise SplittingError(
            f"decaying dimensions ({bp.columns.shape[1]}, {bm.columns.shape[1]}) "
            "do not form a 4-dimensional complement"
        )
    return bp.columns, bm.columns


def _lop_det_raw(e: Endstates, lam, xi, beta, refs):
    cols = []
    for side, v0 in (("plus", refs[0]), ("minus", refs[1])):
        P, k = decaying_projector(interior_matrix(e, side, lam, xi, beta))
        if k != v0.shape[1]:
            raise SplittingError(
                f"decaying dimension changed to {k} on side {side}"
            )
        basis = P @ v0
        if np.linalg.svd(basis, compute_uv=False)[-1] < 1e-8:
            raise SplittingError(
                f"reference frame degenerated under the projector on side {side}"
            )
        w = e.w_plus if side == "plus" else e.w_minus
        cols.append(model.jacobian(1, w, e.gas, beta) @ basis)
    j0 = model.flux(0, e.w_plus, e.gas, beta) - model.flux(0, e.w_minus, e.gas, beta)
    j2 = model.flux(2, e.w_plus, e.gas, beta) - model.flux(2, e.w_minus, e.gas, beta)
    cols.append((lam * j0 + 1j * xi * j2)[:, None])
    return complex(np.linalg.det(np.column_stack(cols)))


def lop_det(e: Endstates, lam, xi, beta=None, normalized=True):
    """Lopatinsky determinant det(A1+ E+, A1- E-, lam [f0] + i xi [f2]).

    The decaying frames E+- are spectral projectors applied to fixed
    reference columns, so the value varies continuously with (lam, xi).
    When normalized (the default) the determinant is scaled to equal 1 at
    the reference point (lam, xi) = (0.1, 1).
    """
    if beta is None:
        beta = e.beta
    refs = _reference_columns(e, beta)
    val = _lop_det_raw(e, lam, xi, beta, refs)
    if not normalized:
        return val
    ref = _lop_det_raw(e, REF_POINT[0], REF_POINT[1], beta, refs)
    return val / ref


def lop_winding(e: Endstates, beta=None, radius=10.0, shift=IMAG_AXIS_SHIFT, n=400) -> WindingReport:
    """Zero count of the determinant inside the shifted right-half-plane
    semicircle; zero means inviscid stability at xi = 1."""
    if beta is None:
        beta = e.beta
    contour = make_semicircle(radius, shift, n)
    refs = _reference_columns(e, beta)
    norm = _lop_det_raw(e, REF_POINT[0], REF_POINT[1], beta, refs)
    return winding_number(lambda z: _lop_det_raw(e, z, 1.0, beta, refs) / norm, contour)


def critical_h1(gamma, u1_plus, beta=1.0, h_max=16.0, lambda0=1e-5, tol=1e-4):
    """Normal magnetic field at which the determinant changes sign at
    lam = lambda0, xi = 1; None when the whole range (1, h_max] is unstable."""

    def f(h1):
        e = solve_endstates(ShockConfig(gamma=gamma, u1_plus=u1_plus, h1=h1, beta=beta))
        return lop_det(e, lambda0, 1.0, beta).real

    grid = np.concatenate([[1.0 + 1e-3], np.arange(1.1, 4.01, 0.1), np.arange(4.5, h_max + 1e-9, 0.5)])
    grid = grid[grid <= h_max]
    prev_h, prev_f = grid[0], f(grid[0])
    for h in grid[1:]:
        cur = f(h)
        if prev_f * cur < 0:
            return bisection_root(f, prev_h, h, tol)
        prev_h, prev_f = h, cur
    return None


def critical_h1_refined(gamma, u1_plus, beta=1.0, h_max=16.0, lambda0=1e-6):
    """Transition field strength with the O(lambda0) detection bias of
    critical_h1 removed by Richardson extrapolation.

    The sign-change point h*(lambda0) sits where the real unstable root
    equals lambda0, i.e. at h* + lambda0/c for the local crossing speed c,
    so 2 h*(lambda0) - h*(2 lambda0) cancels the linear bias.  Needed when
    downstream work (e.g. the spectral-curve concavity quotient) requires
    the transition to many more digits than the default bisection gives.
    """
    coarse = critical_h1(gamma, u1_plus, beta=beta, h_max=h_max)
    if coarse is None:
        return None

    def hstar(l0):
        def f(h1):
            e = solve_endstates(ShockConfig(gamma=gamma, u1_plus=u1_plus, h1=h1, beta=beta))
            return lop_det(e, l0, 1.0, beta).real
        lo, hi = coarse - 5e-3, coarse + 5e-3
        return bisection_root(f, lo, hi, tol=1e-13)

    return 2.0 * hstar(lambda0) - hstar(2.0 * lambda0)


def lambda2_exact(gamma, R):
    """Closed-form second-order coefficient of the unstable root in the
    inverse normal field: lambda(eps) = lambda2 eps^2 + O(eps^3), eps = 1/h1."""
    if R <= 1:
        raise DomainError(f"density ratio must exceed 1, got R={R}")
    M = float(np.sqrt(downstream_mach_squared(gamma, R)))
    u1p = 1.0 / R
    return (R - 1.0) * M * R ** 2 * 1.0 * u1p ** 3 / (2.0 * (M + 1.0))


def lop_real_root(e: Endstates, beta=None, lam_lo=1e-7, lam_hi=1.0, guess=None):
    """Positive real root of the normalized determinant at xi = 1.

    A guess (if given) is tried as a tight bracket first; otherwise the
    real axis is scanned logarithmically for a sign change.
    """
    if beta is None:
        beta = e.beta

    def f(lam):
        return lop_det(e, lam, 1.0, beta).real

    brackets = []
    if guess is not None:
        brackets.append((guess / 5.0, guess * 5.0))
    lams = np.geomspace(lam_lo, lam_hi, 160)
    vals = None
    for lo, hi in brackets:
        if f(lo) * f(hi) < 0:
            return bisection_root(f, lo, hi, tol=1e-13)
    vals = np.array([f(l) for l in lams])
    sign_change = np.where(vals[:-1] * vals[1:] < 0)[0]
    if len(sign_change) == 0:
        return None
    k = sign_change[0]
    return bisection_root(f, lams[k], lams[k + 1], tol=1e-13)


def lambda2_fit(gamma, u1_plus, h1_grid, beta=1.0):
    """Least-squares estimate of (coefficient, slope) from the power law
    lambda_root(eps) ~ C eps^slope, eps = 1/h1, fitted on log-log axes."""
    h1_grid = np.asarray(h1_grid, dtype=float)
    if len(h1_grid) < 5 or np.any(h1_grid < 2.0) or np.any(h1_grid > 16.0):
        raise DomainError("h1 grid must contain >= 5 points inside [2, 16]")
    R = 1.0 / u1_plus
    guess_c = lambda2_exact(gamma, R)
    roots = []
    for h1 in h1_grid:
        e = solve_endstates(ShockConfig(gamma=gamma, u1_plus=u1_plus, h1=h1, beta=beta))
        root = lop_real_root(e, beta, guess=guess_c / h1 ** 2)
        if root is None:
            raise DomainError(f"no unstable real root at h1={h1}; grid point is stable")
        roots.append(root)
    eps = 1.0 / h1_grid
    slope, intercept = np.polyfit(np.log(eps), np.log(np.array(roots)), 1)
    return float(np.exp(intercept)), float(slope)


# ---------------------------------------------------------------------------
# invariants used by the property tests


def conserved_interior_matrix(e: Endstates, side, lam, xi, beta=None):
    """G = -(A1 A0^{-1})^{-1}(lam + i xi A2 A0^{-1}) acting on conserved variables."""
    if beta is None:
        beta = e.beta
    w = _endstate(e, side)
    a1 = model.conserved_jacobian(1, w, e.gas, beta)
    a2 = model.conserved_jacobian(2, w, e.gas, beta)
    return -np.linalg.solve(a1, lam * np.eye(5) + 1j * xi * a2)


def constraint_symbols(e: Endstates, side, lam, xi, beta=None):
    """(G, L, H) with L = Gamma1 G + i xi Gamma2 and H = -(lam + i xi M2)/M1."""
    if beta is None:
        beta = e.beta
    ops = model.constraint_ops(beta)
    G = conserved_interior_matrix(e, side, lam, xi, beta)
    L = np.atleast_2d(ops.Gamma1 @ G + 1j * xi * ops.Gamma2)
    H = -(lam + 1j * xi * ops.M2) / ops.M1
    return G, L, H
