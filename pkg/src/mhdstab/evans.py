"""Viscous spectral stability: the eigenvalue ODE in flux variables, Evans
function evaluation by continuous orthogonalization, winding numbers, root
finding, eigenfunctions, the concavity coefficient, and crossing speeds.

The linearized viscous system around the parallel profile is written as a
first-order system of dimension 9 in the unknowns

    Y = (z1, v1, v2, b1, b2, z2, z3, z4, z5),

where (r, v1, v2, b1, b2) are the density/velocity/field perturbations,
z1 is the perturbed mass flux (so r = (z1 - rho v1)/u), and z2..z5 are the
perturbed total fluxes of the four parabolic equations (inviscid flux minus
viscous flux).  Writing the system in these flux variables keeps it in
conservative form: no derivatives of the background appear in the
coefficients, and the translation mode (the lifted profile derivative) is
an exact kernel solution at (lambda, xi) = (0, 0).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp, solve_bvp
from scipy.interpolate import CubicHermiteSpline

from mhdstab.contours import make_semi_annulus
from mhdstab.errors import (
    BracketError,
    ConvergenceError,
    NumericalError,
    RefinementBudgetError,
    SplittingError,
)
from mhdstab.model import solve_endstates
from mhdstab.profiles import Profile, _clustered_grid

N_STATE = 9

#: stable dimension at +infinity / unstable dimension at -infinity
K_PLUS = 5
K_MINUS = 4


# ---------------------------------------------------------------------------
# invariant-subspace helpers


def spectral_projector(M, negative):
    """Projector onto the invariant subspace with Re(eigenvalue) < 0
    (negative=True) or > 0, via a sorted Schur form and a Sylvester solve."""
    eigvals = np.linalg.eigvals(M)
    k = int(np.sum(eigvals.real < 0 if negative else eigvals.real > 0))
    if k == 0 or k == M.shape[0]:
        raise SplittingError("spectrum does not split across the imaginary axis")
    re = np.sort(eigvals.real)
    if negative:
        thresh = 0.5 * (re[k - 1] + re[k])
        pred = lambda z: z.real < thresh
    else:
        thresh = 0.5 * (re[-k] + re[-k - 1])
        pred = lambda z: z.real > thresh
    T, Z, sdim = scipy.linalg.schur(np.asarray(M, dtype=complex), output="complex", sort=pred)
    if sdim != k:
        raise SplittingError("Schur sorting disagrees with the eigenvalue count")
    S = scipy.linalg.solve_sylvester(T[:k, :k], -T[k:, k:], T[:k, k:])
    P = Z[:, :k] @ np.hstack([np.eye(k), S]) @ Z.conj().T
    return P, k


def _fix_phases(cols):
    out = np.array(cols, dtype=complex)
    for j in range(out.shape[1]):
        v = out[:, j] / np.linalg.norm(out[:, j])
        idx = np.argmax(np.abs(v) > 1e-8)
        out[:, j] = v / (v[idx] / abs(v[idx]))
    return out


def initial_basis(M, negative):
    """Orthonormal basis of the selected invariant subspace, with column
    phases fixed for reproducibility across eigensolvers."""
    P, k = spectral_projector(M, negative)
    U = np.linalg.svd(P)[0][:, :k]
    return _fix_phases(U)


def transport_step(P_new, P_prev, B, P_mid=None):
    """One step of discrete projector transport: maps a basis of Range
    P_prev to a basis of Range P_new, analytic in the underlying parameter.

    With a midpoint projector the commutator (Kato) update is used, which
    is volume-accurate to third order in the step; without one, the
    second-order two-projector formula."""
    n = P_new.shape[0]
    if P_mid is None:
        U = P_new @ P_prev + (np.eye(n) - P_new) @ (np.eye(n) - P_prev)
    else:
        dP = P_new - P_prev
        U = scipy.linalg.expm(dP @ P_mid - P_mid @ dP)
    return U @ B


def transport_bases(sys, z0, z1, projs0, bases0, tol=0.1, depth=10):
    """Carry the (plus, minus) boundary bases from z0 to z1 along the
    straight segment, bisecting the step until the projectors change by
    less than tol so the transport stays volume-accurate.

    Returns ((Pp1, Pm1), (Bp1, Bm1)) at z1.
    """
    (Pp0, Pm0), (Bp, Bm) = projs0, bases0
    Pp1, Pm1 = sys.boundary_projectors(z1)
    change = max(np.linalg.norm(Pp1 - Pp0), np.linalg.norm(Pm1 - Pm0))
    if depth > 0 and change > tol:
        zm = 0.5 * (z0 + z1)
        projs_m, bases_m = transport_bases(sys, z0, zm, (Pp0, Pm0), (Bp, Bm), tol, depth - 1)
        return transport_bases(sys, zm, z1, projs_m, bases_m, tol, depth - 1)
    Ppm, Pmm = sys.boundary_projectors(0.5 * (z0 + z1))
    Bp = transport_step(Pp1, Pp0, Bp, Ppm)
    Bm = transport_step(Pm1, Pm0, Bm, Pmm)
    return (Pp1, Pm1), (Bp, Bm)


# ---------------------------------------------------------------------------
# the eigenvalue ODE


class EvansSystem:
    """First-order eigenvalue ODE Y' = A(x; lambda) Y for a fixed transverse
    frequency xi, with A affine in lambda."""

    N = N_STATE

    def __init__(self, profile: Profile, xi, cfg=None):
        self.profile = profile
        self.xi = float(xi)
        self.cfg = profile.config if cfg is None else cfg
        self.endstates = solve_endstates(self.cfg)
        self.L = profile.L
        xs = _clustered_grid(profile.L, 2048)
        u = profile.u_at(xs)
        self._uspline = CubicHermiteSpline(xs, u, profile.du_at(xs))

    def u_background(self, x):
        return float(self._uspline(np.clip(x, -self.L, self.L)))

    def _parts(self, u):
        """(M0, M1) with A = M0 + lambda*M1 at background velocity u."""
        cfg, e = self.cfg, self.endstates
        xi = self.xi
        mu, nu, vl, b, h = cfg.mu, cfg.nu, cfg.long_viscosity, cfg.beta, cfg.h1
        em = cfg.eta + mu
        rho = 1.0 / u
        pr = e.gas.p_rho(rho)
        c = 1.0 / u
        ix = 1j * xi
        M0 = np.zeros((9, 9), dtype=complex)
        M1 = np.zeros((9, 9), dtype=complex)
        # z1' = -lam c z1 + lam c rho v1 - i xi rho v2
        M1[0, 0] = -c
        M1[0, 1] = c * rho
        M0[0, 2] = -ix * rho
        # v1' from the definition of the normal-momentum flux z2
        M0[1, 0] = (u * u + pr) * c / vl
        M0[1, 1] = (1.0 - pr / u ** 2) / vl
        M0[1, 2] = -em * ix / vl
        M0[1, 3] = -h / vl
        M0[1, 5] = -1.0 / vl
        # v2' from the transverse-momentum flux z3 (rho*u = 1 on the profile)
        M0[2, 1] = -em * ix / mu
        M0[2, 2] = 1.0 / mu
        M0[2, 4] = -h / mu
        M0[2, 6] = -1.0 / mu
        # b1' from z4 = beta b1 - nu b1'
        M0[3, 3] = b / nu
        M0[3, 7] = -1.0 / nu
        # b2' from the transverse-field flux z5
        M0[4, 2] = -h / nu
        M0[4, 4] = u / nu
        M0[4, 8] = -1.0 / nu
        # z2' : normal momentum balance
        M1[5, 0] = -1.0
        M0[5, 1] = -xi * xi * mu
        M0[5, 2] = -ix
        M0[5, 4] = ix * h
        # z3' : transverse momentum balance
        M0[6, 0] = -ix * pr * c
        M0[6, 1] = ix * pr * c * rho
        M1[6, 2] = -rho
        M0[6, 2] = -xi * xi * vl
        M0[6, 3] = -ix * h
        # z4' : normal field balance
        M1[7, 3] = -1.0
        M0[7, 2] = -ix * h
        M0[7, 3] = -xi * xi * nu
        M0[7, 4] = -ix * (b - u)
        # z5' : transverse field balance
        M1[8, 4] = -1.0
        M0[8, 4] = -xi * xi * nu
        return M0, M1

    def matrix(self, x, lam):
        M0, M1 = self._parts(self.u_background(x))
        return M0 + lam * M1

    def limit_parts(self, side):
        u = self.endstates.u1_plus if side == "plus" else 1.0
        return self._parts(u)

    def limit_matrix(self, side, lam):
        M0, M1 = self.limit_parts(side)
        return M0 + lam * M1

    def boundary_bases(self, lam):
        """Pointwise analytic-free initial bases (stable at +L, unstable at
        -L); used when no transported bases are supplied."""
        Bp = initial_basis(self.limit_matrix("plus", lam), negative=True)
        Bm = initial_basis(self.limit_matrix("minus", lam), negative=False)
        if Bp.shape[1] != K_PLUS or Bm.shape[1] != K_MINUS:
            raise SplittingError(
                f"splitting ({Bm.shape[1]}, {Bp.shape[1]}) differs from ({K_MINUS}, {K_PLUS})"
            )
        return Bp, Bm

    def boundary_projectors(self, lam):
        Pp, kp = spectral_projector(self.limit_matrix("plus", lam), negative=True)
        Pm, km = spectral_projector(self.limit_matrix("minus", lam), negative=False)
        if kp != K_PLUS or km != K_MINUS:
            raise SplittingError("consistent splitting violated")
        return Pp, Pm


def evans_system(p: Profile, xi, cfg=None) -> EvansSystem:
    return EvansSystem(p, xi, cfg)


# ---------------------------------------------------------------------------
# continuous orthogonalization


def _slogdet(M):
    sign, logabs = np.linalg.slogdet(M)
    return logabs + 1j * np.angle(sign)


def _qr_positive(B):
    """QR factorization with positive real diagonal of R, so that the
    log-determinant corrections it contributes are real (gauge only)."""
    Q, R = np.linalg.qr(B)
    d = np.diag(R)
    ph = np.where(np.abs(d) > 0, d / np.abs(np.where(np.abs(d) > 0, d, 1.0)), 1.0)
    return Q * ph[np.newaxis, :], R / ph[:, np.newaxis]


@lru_cache(maxsize=8)
def _commutation_matrix(n, k):
    """Permutation sending the row-major vectorization of an n x k matrix
    to its column-major vectorization."""
    K = np.zeros((n * k, n * k))
    for i in range(n):
        for j in range(k):
            K[j * n + i, i * k + j] = 1.0
    return K


def _integrate_drury(sys: EvansSystem, lam, B, x_from, x_to, rtol=1e-8, n_segments=6,
                     method="auto"):
    """Integrate the orthonormal-frame flow Omega' = (I - Omega Omega*) A Omega
    together with the log-volume phi' = tr(Omega* A Omega) from x_from to x_to.

    Returns (Omega_end, phi, gauge, events): phi is the trace integral,
    gauge collects the (real) log-determinants of the positive-diagonal QR
    factors from initialization and any re-orthogonalizations (triggered
    when the frame drifts from orthonormality by more than 1e-8).

    For very strong shocks (and for any shock at large |lam|) the coefficient
    matrix carries decay rates orders of magnitude above 1/L and the frame
    attraction makes the flow stiff; `method="auto"` switches from explicit
    RK45 to an implicit Radau step with an exact Jacobian of the
    (non-holomorphic) frame flow once the spectral radius at the starting
    endstate times the integration span exceeds a few hundred.
    """
    n, k = B.shape
    Q, R = _qr_positive(B)
    log_corr = _slogdet(R)
    events = []

    if method == "auto":
        rate = float(np.max(np.abs(np.linalg.eigvals(sys.matrix(x_from, lam)))))
        method = "radau" if rate * abs(x_to - x_from) > 200.0 else "rk45"

    def rhs(x, y):
        Om = y[:-1].reshape(n, k)
        A = sys.matrix(x, lam)
        AOm = A @ Om
        OhA = Om.conj().T @ AOm
        dOm = AOm - Om @ OhA
        return np.concatenate([dOm.ravel(), [np.trace(OhA)]])

    m = n * k + 1

    def rhs_real(x, yr):
        d = rhs(x, yr[:m] + 1j * yr[m:])
        return np.concatenate([d.real, d.imag])

    Kc = _commutation_matrix(n, k)
    Ik, In = np.eye(k), np.eye(n)

    def jac_real(x, yr):
        # exact Jacobian of the frame flow, which is R-linear but not
        # complex-differentiable: d(dOm) = T delta + S conj(delta) with the
        # holomorphic and antiholomorphic parts assembled from Kronecker
        # products (row-major vectorization)
        Om = (yr[:m] + 1j * yr[m:])[:-1].reshape(n, k)
        A = sys.matrix(x, lam)
        AOm = A @ Om
        T = np.zeros((m, m), complex)
        S = np.zeros((m, m), complex)
        T[:-1, :-1] = (np.kron(A - Om @ (Om.conj().T @ A), Ik)
                       - np.kron(In, (Om.conj().T @ AOm).T))
        S[:-1, :-1] = -np.kron(Om, AOm.T) @ Kc
        T[-1, :-1] = ((Om.conj().T @ A).T).ravel()
        S[-1, :-1] = AOm.ravel()
        TpS, TmS = T + S, T - S
        return np.block([[TpS.real, -TmS.imag], [TpS.imag, TmS.real]])

    def step(a, bnd, y):
        if method == "radau":
            yr = np.concatenate([y.real, y.imag])
            sol = solve_ivp(rhs_real, (a, bnd), yr, method="Radau", jac=jac_real,
                            rtol=rtol, atol=max(1e-2 * rtol, 1e-12))
            if not sol.success:
                raise NumericalError(f"orthogonalization integration failed: {sol.message}")
            yr = sol.y[:, -1]
            return yr[:m] + 1j * yr[m:]
        sol = solve_ivp(rhs, (a, bnd), y, method="RK45", rtol=rtol, atol=1e-12)
        if not sol.success:
            raise NumericalError(f"orthogonalization integration failed: {sol.message}")
        return sol.y[:, -1]

    xs = np.linspace(x_from, x_to, n_segments + 1)
    y = np.concatenate([Q.ravel().astype(complex), [0j]])
    for a, bnd in zip(xs[:-1], xs[1:]):
        y = step(a, bnd, y)
        Om = y[:-1].reshape(n, k)
        drift = np.linalg.norm(Om.conj().T @ Om - np.eye(k))
        if drift > 1e-8:
            Q2, R2 = _qr_positive(Om)
            log_corr += _slogdet(R2)
            events.append((bnd, drift))
            y = np.concatenate([Q2.ravel(), [y[-1]]])
    Om = y[:-1].reshape(n, k)
    return Om, y[-1], log_corr, events


def evans_log_parts(sys: EvansSystem, lam, bases=None, rtol=1e-8):
    """(reduced, radial) parts of log D at lam.

    D = det[W^-(0), W^+(0)] for bases of the decaying solution manifolds.
    The value splits as log D = reduced + radial, where

    * reduced is the log of the determinant of the orthonormalized frames
      (plus real gauge corrections), whose argument varies slowly and
      carries the winding, and
    * radial is the accumulated trace integral, a single-valued continuous
      function of lam whose sampled differences are exact (no branch
      ambiguity) but whose magnitude spans hundreds of orders.
    """
    lam = complex(lam)
    if bases is None:
        Bp, Bm = sys.boundary_bases(lam)
    else:
        Bp, Bm = bases
    Om_p, phi_p, g_p, _ = _integrate_drury(sys, lam, Bp, sys.L, 0.0, rtol)
    Om_m, phi_m, g_m, _ = _integrate_drury(sys, lam, Bm, -sys.L, 0.0, rtol)
    reduced = _slogdet(np.column_stack([Om_m, Om_p])) + g_p + g_m
    return reduced, phi_p + phi_m


def evans_log(sys: EvansSystem, lam, bases=None, rtol=1e-8):
    """log of the Evans function at lam (imaginary part defined mod 2 pi).

    The Evans function is D = det[W^-(0), W^+(0)] for bases of the decaying
    solution manifolds; it is returned in logarithmic form because the
    flux-variable volume factor exp(phi) spans hundreds of orders of
    magnitude over the radii of interest.
    """
    reduced, radial = evans_log_parts(sys, lam, bases, rtol)
    return reduced + radial


def evans_eval(sys: EvansSystem, lam, bases=None, rtol=1e-8):
    """Evans function value; may over/underflow for |lam| large — winding,
    radius and root machinery work from evans_log instead."""
    return complex(np.exp(evans_log(sys, lam, bases, rtol)))


# ---------------------------------------------------------------------------
# winding on contours with transported analytic bases


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


@dataclass
class ContourData:
    """Evans samples along a contour with analytically transported bases.

    reduced + radial = log D at each point; the winding is read off the
    reduced part, whose argument varies slowly, while the radial part is a
    single-valued continuous function whose sampled differences are exact.
    """
    ts: np.ndarray
    points: np.ndarray
    reduced: np.ndarray
    radial: np.ndarray
    winding: int
    closure_defect: float
    n_points: int

    @property
    def logs(self):
        return self.reduced + self.radial

    def log_steps(self):
        """Exact increments of log D along the contour (branch-resolved)."""
        dred = np.diff(self.reduced)
        drad = np.diff(self.radial)
        return (dred.real + drad.real) + 1j * (_wrap_angle(dred.imag) + drad.imag)


def _sample_contour_logs(sys, contour, rtol=1e-8, max_points=4000, full_step_cap=None):
    """Walk a contour, transporting the boundary bases point to point and
    inserting parameter midpoints until all reduced argument steps are
    below pi/2 (and, when full_step_cap is given, until the increments of
    the full log D are below the cap — needed for accurate moments)."""
    ts = list(contour.ts)
    pts = [complex(contour.param(t)) for t in ts]

    Pp0, Pm0 = sys.boundary_projectors(pts[0])
    Bp0, Bm0 = sys.boundary_bases(pts[0])
    projs = [None] * len(ts)
    bases = [None] * len(ts)
    reds = [None] * len(ts)
    rads = [None] * len(ts)
    projs[0] = (Pp0, Pm0)
    bases[0] = (Bp0, Bm0)

    def fill_from(i, j):
        """Transport bases from node i to node j and evaluate there."""
        projs[j], bases[j] = transport_bases(sys, pts[i], pts[j], projs[i], bases[i])
        reds[j], rads[j] = evans_log_parts(sys, pts[j], bases[j], rtol)

    reds[0], rads[0] = evans_log_parts(sys, pts[0], bases[0], rtol)
    for j in range(1, len(ts)):
        fill_from(j - 1, j)

    while True:
        steps = _wrap_angle(np.diff(np.imag(np.array(reds))))
        flags = np.abs(steps) >= 0.5 * np.pi
        if full_step_cap is not None:
            dred = np.diff(np.array(reds))
            drad = np.diff(np.array(rads))
            full = np.abs(dred.real + drad.real + 1j * (_wrap_angle(dred.imag) + drad.imag))
            flags = flags | (full >= full_step_cap)
        bad = np.where(flags)[0]
        if len(bad) == 0:
            break
        if len(ts) + len(bad) > max_points:
            raise RefinementBudgetError(
                f"contour refinement exceeded {max_points} points"
            )
        for i in bad[::-1]:
            tm = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, tm)
            pts.insert(i + 1, complex(contour.param(tm)))
            projs.insert(i + 1, None)
            bases.insert(i + 1, None)
            reds.insert(i + 1, None)
            rads.insert(i + 1, None)
            fill_from(i, i + 1)

    steps = _wrap_angle(np.diff(np.imag(np.array(reds))))
    total = float(np.sum(steps))
    winding = int(round(total / (2.0 * np.pi)))
    defect = abs(total / (2.0 * np.pi) - winding)
    if defect > 0.05:
        raise NumericalError(f"winding {total/(2*np.pi):.3f} is not close to an integer")
    return ContourData(
        ts=np.array(ts), points=np.array(pts),
        reduced=np.array(reds), radial=np.array(rads),
        winding=winding, closure_defect=defect, n_points=len(ts),
    )


@dataclass
class EvansWindingReport:
    winding: int
    n_points: int
    min_log_modulus: float
    closure_defect: float
    r_inner: float
    r_outer: float


def evans_winding(sys: EvansSystem, r_outer, r_inner=1e-5, n0=60, rtol=1e-8, max_points=4000):
    """Unstable-eigenvalue count for this xi: winding of the Evans function
    on the right-half-plane semi-annulus between r_inner and r_outer."""
    contour = make_semi_annulus(r_inner, r_outer, n=n0)
    data = _sample_contour_logs(sys, contour, rtol, max_points)
    return EvansWindingReport(
        winding=data.winding,
        n_points=data.n_points,
        min_log_modulus=float(np.min(np.real(data.logs))),
        closure_defect=data.closure_defect,
        r_inner=r_inner,
        r_outer=r_outer,
    ), data


# ---------------------------------------------------------------------------
# radius selection by asymptotic curve fitting


def radius_select(sys: EvansSystem, cap=128.0, rtol=1e-8, rel_tol=0.14,
                  dominance_tol=4.0):
    """Smallest dyadic outer radius at which the square-root growth law of
    the determinant is resolved on the positive real axis.

    In flux variables the determinant carries an extra exponential factor
    that is linear in lambda (the inviscid mass mode has no diffusion), so
    log|D| is modeled as c0 + c1 lambda + c2 sqrt(lambda).  The model is
    fitted exactly on the dyadic samples {r/4, r/2, r} and judged by how
    well it predicts the sample at 2r: the radius is accepted when the
    prediction error is at most `rel_tol` of the square-root increment
    c2 (sqrt(2r) - sqrt(r)), and the linear term does not dominate the
    square-root term on [0, r] by more than `dominance_tol` (for very
    strong shocks the mass-mode factor dwarfs the square-root growth at
    every accessible radius and no finite choice is meaningful).  Returns
    (cap, False) when no radius up to the cap meets the criterion.
    """
    radii = [2.0 ** k for k in range(0, 20) if 2.0 ** k <= cap]
    cache = {}

    def logmod(r):
        if r not in cache:
            cache[r] = evans_log(sys, complex(r), rtol=rtol).real
        return cache[r]

    for r in radii:
        samples = np.array([r / 4.0, r / 2.0, r])
        y = np.array([logmod(s) for s in samples])
        X = np.column_stack([np.ones(3), samples, np.sqrt(samples)])
        coef = np.linalg.solve(X, y)
        probe = 2.0 * r
        pred = coef[0] + coef[1] * probe + coef[2] * np.sqrt(probe)
        err = abs(pred - logmod(probe))
        sq_incr = abs(coef[2]) * (np.sqrt(probe) - np.sqrt(r))
        dominance = abs(coef[1]) * np.sqrt(r) / max(abs(coef[2]), 1e-300)
        if sq_incr > 0 and err <= rel_tol * sq_incr and dominance <= dominance_tol:
            return r, True
    return float(cap), False


# ---------------------------------------------------------------------------
# roots


def _moments(data: ContourData, order=2):
    """Contour moments (1/2 pi i) oint z^k d log D: power sums of the
    enclosed roots."""
    dlog = data.log_steps()
    zmid = 0.5 * (data.points[1:] + data.points[:-1])
    return [complex(np.sum(zmid ** k * dlog) / (2j * np.pi)) for k in range(order + 1)]


def _square_contour(center, half, n_side=8):
    corners = np.array([
        center + half * (1 + 1j), center + half * (-1 + 1j),
        center + half * (-1 - 1j), center + half * (1 - 1j),
        center + half * (1 + 1j),
    ])
    ts, pts = [0.0], [corners[0]]
    for i in range(4):
        for j in range(1, n_side + 1):
            ts.append((i + j / n_side) / 4.0)
            pts.append(corners[i] + (corners[i + 1] - corners[i]) * j / n_side)

    class _Sq:
        def __init__(self):
            self.ts = np.array(ts)

        @staticmethod
        def param(t):
            s = t * 4.0
            i = min(int(s), 3)
            return corners[i] + (corners[i + 1] - corners[i]) * (s - i)

    return _Sq()


def _square_winding(sys, center, half, rtol=1e-8):
    data = _sample_contour_logs(sys, _square_contour(center, half), rtol, max_points=2000)
    return data.winding, data


def _muller(f, x0, x1, x2, tol=1e-12, max_iter=60):
    pts = [complex(x0), complex(x1), complex(x2)]
    vals = [f(p) for p in pts]
    best = min(zip(pts, vals), key=lambda pv: abs(pv[1]))
    for _ in range(max_iter):
        p0, p1, p2 = pts[-3:]
        f0, f1, f2 = vals[-3:]
        h1, h2 = p1 - p0, p2 - p1
        if h1 == 0 or h2 == 0 or h1 + h2 == 0:
            break
        d1, d2 = (f1 - f0) / h1, (f2 - f1) / h2
        a = (d2 - d1) / (h1 + h2)
        bq = d2 + h2 * a
        disc = np.sqrt(bq * bq - 4.0 * f2 * a)
        den = bq + disc if abs(bq + disc) > abs(bq - disc) else bq - disc
        if den == 0:
            break
        p3 = p2 - 2.0 * f2 / den
        f3 = f(p3)
        while f3 is None and abs(p3 - p2) > 1e-16:
            p3 = 0.5 * (p3 + p2)  # pulled back inside the resolvent region
            f3 = f(p3)
        if f3 is None:
            break
        pts.append(p3)
        vals.append(f3)
        if abs(f3) < abs(best[1]):
            best = (p3, f3)
        if abs(p3 - p2) < tol * max(1.0, abs(p3)):
            break
    return best[0]


def evans_root(sys: EvansSystem, abs_tol=5e-7, r_outer=None, r_inner=1e-5,
               rtol=1e-8, winding_data=None):
    """Location of an unstable Evans root, or None when the winding is zero.

    The root is localized from the contour moments, refined by bisection of
    squares in the complex plane (winding tests on shrinking squares), and
    polished with a local superlinear iteration.
    """
    annulus_inner = 1e-5
    if winding_data is None:
        if r_outer is None:
            r_outer, _ = radius_select(sys)
        _, winding_data = evans_winding(sys, max(r_outer, annulus_inner * 4),
                                        annulus_inner, rtol=rtol)
    else:
        annulus_inner = float(np.min(np.abs(winding_data.points)))
    if winding_data.winding == 0:
        # the annulus cannot reach the origin (essential spectrum touches the
        # imaginary axis); sweep real-axis-centered squares below its inner
        # radius, which stay inside the resolvent region
        if r_inner < annulus_inner:
            return _origin_scan(sys, r_inner, annulus_inner, abs_tol, rtol)
        return None
    r_big = float(np.max(np.abs(winding_data.points)))

    # localize on a small sub-annulus where moment quadrature is accurate
    r_m = min(r_big, 0.05)
    data = None
    while True:
        if r_m >= r_big:
            data = winding_data
            break
        data = _sample_contour_logs(
            sys, make_semi_annulus(r_inner, r_m, n=40), rtol, full_step_cap=0.5
        )
        if data.winding >= 1:
            break
        r_m *= 4.0
    moments = _moments(data, order=1)
    seed = moments[1] / moments[0]
    # odd winding forces a real root (conjugate symmetry); snap small
    # imaginary seed parts produced by quadrature error
    if data.winding % 2 == 1 and abs(seed.imag) < 0.5 * abs(seed):
        seed = complex(seed.real)

    half = max(4.0 * abs_tol, 0.25 * abs(seed))
    center = seed
    w, _ = _square_winding(sys, center, half, rtol)
    grow = 0
    while w == 0 and grow < 6:
        half *= 2.0
        # keep the square inside the resolvent region Re(lambda) > 0
        center = complex(max(center.real, 1.05 * half), 0.5 * center.imag)
        w, _ = _square_winding(sys, center, half, rtol)
        grow += 1
    if w == 0:
        raise BracketError("moment seed square does not enclose a root")
    return _refine_in_square(sys, center, half, abs_tol, rtol)


def _refine_in_square(sys, center, half, abs_tol, rtol):
    """Shrink a root-enclosing square by winding bisection, then polish."""
    while half > abs_tol:
        if center.real <= 1.5 * half:
            break  # further squares would cross the imaginary axis
        found = False
        for dx in (-0.5, 0.5):
            for dy in (-0.5, 0.5):
                sub = center + half * (dx + 1j * dy)
                wsub, _ = _square_winding(sys, sub, 0.5 * half + 0.1 * abs_tol, rtol)
                if wsub >= 1:
                    center, half, found = sub, 0.5 * half, True
                    break
            if found:
                break
        if not found:
            raise NumericalError("square bisection lost the root between levels")

    anchor = center
    projs_a = sys.boundary_projectors(anchor)
    bases_a = sys.boundary_bases(anchor)
    ref = evans_log(sys, anchor, bases_a, rtol)

    def f(lam):
        try:
            _, bs = transport_bases(sys, anchor, lam, projs_a, bases_a)
            return complex(np.exp(evans_log(sys, lam, bs, rtol) - ref.real))
        except SplittingError:
            return None

    root = _muller(f, center, center + half, center + 1j * half, tol=1e-11)
    return complex(root)


def _origin_scan(sys, r_lo, r_hi, abs_tol, rtol):
    """Search [r_lo, r_hi] on the positive real axis for a root by winding
    tests on overlapping squares centered on the real axis (conjugate
    symmetry puts any near-origin root there or in a symmetric pair)."""
    c = 1.25 * r_lo
    while c < 1.5 * r_hi:
        half = 0.6 * c
        try:
            w, _ = _square_winding(sys, complex(c), half, rtol)
        except SplittingError:
            w = 0
        if w >= 1:
            return _refine_in_square(sys, complex(c), half, abs_tol, rtol)
        c *= 2.0
    return None


# ---------------------------------------------------------------------------
# eigenfunctions


@dataclass
class Eigenfunction:
    grid: np.ndarray
    values: np.ndarray        # (n, 9) complex, ordered along increasing x
    lam: complex
    xi: float
    phase: dict
    constraint_residual: float


def _constraint_residual(values, cfg, xi):
    b1 = values[:, 3]
    b2 = values[:, 4]
    z4 = values[:, 7]
    db1 = (cfg.beta * b1 - z4) / cfg.nu
    return float(np.max(np.abs(db1 + 1j * xi * b2)))


def _translation_mode(sys: EvansSystem):
    grid = _clustered_grid(sys.L, 400)
    du = np.array([float(sys.profile.du_at(x)) for x in grid])
    vals = np.zeros((len(grid), 9), dtype=complex)
    vals[:, 1] = du
    norm = np.linalg.norm(vals[np.argmin(np.abs(grid))])
    vals /= norm
    return Eigenfunction(
        grid=grid, values=vals, lam=0.0, xi=sys.xi,
        phase={"kind": "unit-norm-at-0", "scale": norm},
        constraint_residual=_constraint_residual(vals, sys.cfg, sys.xi),
    )


def _left_rows(M, negative, count):
    """Rows annihilating the selected invariant subspace's complement: left
    eigenvector rows of the modes to be excluded."""
    ev, V = np.linalg.eig(M)
    lefts = np.linalg.inv(V)
    sel = np.where(ev.real >= 0 if negative else ev.real <= 0)[0]
    if len(sel) != count:
        raise SplittingError("projective condition count mismatch")
    return lefts[sel]


def eigenfunction(sys: EvansSystem, lambda_guess, rtol=1e-8, max_nodes=60000):
    """Eigenfunction by the doubled-domain boundary value problem with the
    eigenvalue as a free parameter, seeded by the least-squares matching of
    the orthonormalized decaying frames at the front."""
    lam0 = complex(lambda_guess)
    if abs(lam0) == 0.0 and sys.xi == 0.0:
        return _translation_mode(sys)

    Bp, Bm = sys.boundary_bases(lam0)
    Om_p = _integrate_drury(sys, lam0, Bp, sys.L, 0.0, rtol)[0]
    Om_m = _integrate_drury(sys, lam0, Bm, -sys.L, 0.0, rtol)[0]
    M = np.column_stack([Om_m, -Om_p])
    C = np.linalg.svd(M)[2].conj().T[:, -1]
    c_m, c_p = C[:K_MINUS], C[K_MINUS:]
    y_right0 = Om_p @ c_p
    y_left0 = Om_m @ c_m
    y_mid = 0.5 * (y_right0 + y_left0)
    jphase = int(np.argmax(np.abs(y_mid)))
    qphase = np.conj(y_mid[jphase]) / abs(y_mid[jphase]) ** 2

    rows_plus = _left_rows(sys.limit_matrix("plus", lam0), negative=True, count=9 - K_PLUS)
    rows_minus = _left_rows(sys.limit_matrix("minus", lam0), negative=False, count=9 - K_MINUS)

    L = sys.L

    def split(y):
        yr = y[0:9] + 1j * y[9:18]
        yl = y[18:27] + 1j * y[27:36]
        return yr, yl

    def rhs(s, y, p):
        lam = p[0] + 1j * p[1]
        out = np.empty_like(y)
        for i in range(y.shape[1]):
            yr, yl = split(y[:, i])
            x = s[i] * L
            dr = L * (sys.matrix(x, lam) @ yr)
            dl = -L * (sys.matrix(-x, lam) @ yl)
            out[0:9, i] = dr.real
            out[9:18, i] = dr.imag
            out[18:27, i] = dl.real
            out[27:36, i] = dl.imag
        return out

    def bc(y0, y1, p):
        yr0, yl0 = split(y0)
        yr1, yl1 = split(y1)
        match = yr0 - yl0
        phase = qphase * yr0[jphase] - 1.0
        proj_p = rows_plus @ yr1
        proj_m = rows_minus @ yl1
        cplx = np.concatenate([match, [phase], proj_p, proj_m])
        return np.concatenate([cplx.real, cplx.imag])

    s = np.linspace(0.0, 1.0, 121)
    guess = np.zeros((36, s.size))
    yr_seed = y_right0 / (qphase * y_right0[jphase])
    yl_seed = y_left0 / (qphase * y_left0[jphase])
    for i, si in enumerate(s):
        damp = np.exp(-2.0 * si)
        guess[0:9, i] = (yr_seed * damp).real
        guess[9:18, i] = (yr_seed * damp).imag
        guess[18:27, i] = (yl_seed * damp).real
        guess[27:36, i] = (yl_seed * damp).imag

    sol = solve_bvp(rhs, bc, s, guess, p=[lam0.real, lam0.imag],
                    tol=1e-8, max_nodes=max_nodes)
    if not sol.success:
        raise ConvergenceError(f"eigenfunction boundary-value solve failed: {sol.message}")
    lam = complex(sol.p[0], sol.p[1])

    xs = sol.x * L
    yr = sol.y[0:9] + 1j * sol.y[9:18]
    yl = sol.y[18:27] + 1j * sol.y[27:36]
    grid = np.concatenate([-xs[::-1], xs[1:]])
    vals = np.concatenate([yl.T[::-1], yr.T[1:]], axis=0)
    norm = np.linalg.norm(vals[len(xs) - 1])
    vals = vals / norm
    return Eigenfunction(
        grid=grid, values=vals, lam=lam, xi=sys.xi,
        phase={"kind": "component-unity-then-unit-norm", "component": jphase, "scale": norm},
        constraint_residual=_constraint_residual(vals, sys.cfg, sys.xi),
    )


# ---------------------------------------------------------------------------
# concavity coefficient


@dataclass
class SigmaReport:
    sigma: float
    spread: float
    epsilons: np.ndarray
    values: np.ndarray


def sigma_concavity(profile: Profile, eps_values=None, rtol=1e-8, spread_tol=0.2):
    """Concavity coefficient sigma of the critical spectral curve
    lambda(xi) = sigma xi^2 + ..., from finite-difference quotients of the
    Evans function in polar frequency coordinates.

    For each epsilon the three determinant values share one reference basis
    computed at (lambda, xi) = (0, epsilon) and carried to the other
    frequency points by projector transport, so differences are meaningful.
    """
    if eps_values is None:
        eps_values = np.geomspace(1e-6, 1e-3, 5)
    sigmas = []
    for eps in eps_values:
        sys_e = EvansSystem(profile, eps)
        sys_2e = EvansSystem(profile, 2.0 * eps)
        Pp_r, Pm_r = sys_e.boundary_projectors(0.0)
        Bp_r, Bm_r = sys_e.boundary_bases(0.0)

        def dval(sys, lam):
            Pp, Pm = sys.boundary_projectors(lam)
            Bp = transport_step(Pp, Pp_r, Bp_r)
            Bm = transport_step(Pm, Pm_r, Bm_r)
            return evans_log(sys, lam, (Bp, Bm), rtol)

        l1 = dval(sys_e, 0.0)
        l2 = dval(sys_2e, 0.0)
        l3 = dval(sys_e, eps * eps)
        scale = l1.real
        d1, d2, d3 = (np.exp(l - scale) for l in (l1, l2, l3))
        sigmas.append(complex((d1 - d2) / (d3 - d1)))
    eps_values = np.asarray(eps_values, dtype=float)
    order = np.argsort(eps_values)
    eps_values = eps_values[order]
    vals = np.array(sigmas).real[order]
    # the quotient drifts smoothly in epsilon, so the limit is estimated from
    # the two smallest samples by linear extrapolation and their relative
    # disagreement serves as the convergence diagnostic
    if len(vals) >= 2:
        e0, e1 = eps_values[0], eps_values[1]
        v0, v1 = vals[0], vals[1]
        sigma0 = float(v0 + (v0 - v1) * e0 / (e1 - e0))
        spread = abs(v0 - v1) / max(abs(v0), 1e-300)
    else:
        sigma0 = float(vals[0])
        spread = 0.0
    if spread > spread_tol:
        raise ConvergenceError(
            f"sigma epsilon-study did not converge: spread {spread:.3f} > {spread_tol}"
        )
    return SigmaReport(sigma=sigma0, spread=spread, epsilons=eps_values, values=vals)


# ---------------------------------------------------------------------------
# crossing speed


@dataclass
class CrossingPoint:
    h1: float
    lam: complex | None
    dlam_dh1: float | None
    gap: bool


def crossing_speed(cfg_base, h1_grid, xi, profile_solver=None, rtol=1e-8):
    """Unstable root lambda(h1) along a grid of normal field strengths with
    forward-difference crossing speeds d lambda / d h1.

    Roots are located by contour moments on the right-half-plane
    half-annulus between 1e-4 and 0.01.
    """
    from mhdstab.profiles import solve_profile

    solver = profile_solver or solve_profile
    h1_grid = list(h1_grid)
    roots = []
    for h1 in h1_grid:
        cfg = replace(cfg_base, h1=h1)
        p = solver(cfg)
        sys = EvansSystem(p, xi)
        contour = make_semi_annulus(1e-4, 0.01, n=60)
        data = _sample_contour_logs(sys, contour, rtol)
        if data.winding == 0:
            roots.append(None)
            continue
        roots.append(evans_root(sys, winding_data=data))
    out = []
    for i, h1 in enumerate(h1_grid):
        lam = roots[i]
        if lam is None or i + 1 >= len(h1_grid) or roots[i + 1] is None:
            out.append(CrossingPoint(h1=h1, lam=lam, dlam_dh1=None, gap=True))
        else:
            d = (roots[i + 1].real - lam.real) / (h1_grid[i + 1] - h1)
            out.append(CrossingPoint(h1=h1, lam=lam, dlam_dh1=float(d), gap=False))
    return out


# ---------------------------------------------------------------------------
# per-run report


def run_report(sys: EvansSystem, cap=128.0, rtol=1e-8):
    """Radius selection, winding and root for one (config, xi) cell,
    with wall time — one row of a regression table."""
    t0 = time.time()
    r, starred = radius_select(sys, cap=cap, rtol=rtol)
    report, data = evans_winding(sys, r, rtol=rtol)
    root = evans_root(sys, winding_data=data, rtol=rtol) if report.winding else None
    return {
        "gamma": sys.cfg.gamma,
        "u1_plus": sys.cfg.u1_plus,
        "h1": sys.cfg.h1,
        "xi": sys.xi,
        "winding": report.winding,
        "root_re": None if root is None else root.real,
        "root_im": None if root is None else root.imag,
        "radius": r,
        "radius_fit_converged": starred,
        "n_points": report.n_points,
        "run_time_s": time.time() - t0,
    }
