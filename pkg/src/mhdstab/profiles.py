"""Viscous traveling-wave profiles connecting the shock endstates.

For parallel shocks the traveling-wave system decouples: the transverse
components vanish identically, the normal field is constant, and the
velocity satisfies a scalar first-order equation obtained from the first
integrals of mass and normal momentum,

    (2 mu + eta) u1' = u1 + a u1^(-gamma) - (1 + a),

in the frame rho^- = u1^- = 1.  The scalar reduction is the production
path; a vector boundary-value formulation of the full first-integral
system is kept as an independent cross-check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp, solve_bvp
from scipy.interpolate import CubicHermiteSpline

from mhdstab.errors import ConvergenceError, DomainError, UnsupportedCaseError
from mhdstab.model import ShockConfig, ShockKind, classify_shock, solve_endstates

FORMAT_VERSION = 1


def _scalar_rhs(u, a, gamma, visc_long):
    return (u + a * u ** (-gamma) - (1.0 + a)) / visc_long


def _scalar_rhs_prime(u, a, gamma, visc_long):
    return (1.0 - a * gamma * u ** (-gamma - 1.0)) / visc_long


def _transverse_block(u1, h1, mu, nu):
    """Coefficient matrix of the decoupled (u2, h2) first-integral system."""
    return np.array([[1.0 / mu, -h1 / mu], [-h1 / nu, u1 / nu]])


def truncation_length(cfg: ShockConfig, tol=1e-8):
    """Domain half-length L with e^(-rate L) <= tol for the slowest decay
    rate of the traveling-wave linearization at either endstate."""
    if tol <= 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    if cfg.mu <= 0 or cfg.nu <= 0 or cfg.long_viscosity <= 0:
        raise DomainError("viscosities must be positive for a viscous profile")
    e = solve_endstates(cfg)
    a, gamma = e.a, cfg.gamma
    rates = []
    for u1, forward in ((e.u1_plus, True), (1.0, False)):
        g1 = _scalar_rhs_prime(u1, a, gamma, cfg.long_viscosity)
        rates.append(abs(g1))
        ev = np.linalg.eigvals(_transverse_block(u1, cfg.h1, cfg.mu, cfg.nu))
        side = ev[ev.real < 0] if forward else ev[ev.real > 0]
        if len(side):
            rates.append(np.min(np.abs(side.real)))
    return float(np.log(1.0 / tol) / min(rates))


def _clustered_grid(L, n):
    """Symmetric grid on [-L, L] with nodes concentrated near the front."""
    m = max(n // 2, 8)
    theta = np.pi * np.arange(m + 1) / (2.0 * m)
    pos = L * (1.0 - np.cos(theta))
    return np.concatenate([-pos[::-1], pos[1:]])


@dataclass
class Profile:
    """Computed traveling wave on [-L, L].

    grid, values and derivs fully determine the stored wave; u_at/du_at
    give dense evaluation (exact integrator output for freshly computed
    profiles, Hermite interpolation for deserialized ones).
    """

    grid: np.ndarray           # (n,)
    values: np.ndarray         # (n, 5) rows (rho, u1, u2, h1, h2)
    derivs: np.ndarray         # (n, 5)
    L: float
    tol: float
    config: ShockConfig
    _u_eval: object = field(default=None, repr=False, compare=False)
    _du_eval: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._u_eval is None:
            spline = CubicHermiteSpline(self.grid, self.values[:, 1], self.derivs[:, 1])
            self._u_eval = spline
            self._du_eval = spline.derivative()

    # -- dense evaluation ---------------------------------------------------

    def u_at(self, x):
        """Velocity u1 at arbitrary x (clamped to the endstates beyond L)."""
        x = np.clip(x, self.grid[0], self.grid[-1])
        return self._u_eval(x)

    def du_at(self, x):
        """Velocity derivative u1' at arbitrary x."""
        x = np.asarray(x, dtype=float)
        out = np.where(np.abs(x) <= self.L, self._du_eval(np.clip(x, -self.L, self.L)), 0.0)
        return out if out.ndim else float(out)

    def state_at(self, x):
        """Full 5-vector (rho, u1, u2, h1, h2) at x; parallel wave."""
        u = np.atleast_1d(self.u_at(x)).astype(float)
        cols = np.stack([1.0 / u, u, np.zeros_like(u), np.full_like(u, self.config.h1), np.zeros_like(u)], axis=-1)
        return cols[0] if np.isscalar(x) or np.ndim(x) == 0 else cols

    # -- serialization ------------------------------------------------------

    def to_json_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "L": self.L,
            "tol": self.tol,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "derivs": self.derivs.tolist(),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def from_json_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise DomainError(f"unsupported profile format {d.get('format_version')!r}")
        cfg = ShockConfig(**d["config"])
        return cls(
            grid=np.asarray(d["grid"], dtype=float),
            values=np.asarray(d["values"], dtype=float),
            derivs=np.asarray(d["derivs"], dtype=float),
            L=float(d["L"]),
            tol=float(d["tol"]),
            config=cfg,
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _require_viscous_lax(cfg):
    if cfg.mu <= 0 or cfg.nu <= 0 or cfg.long_viscosity <= 0:
        raise DomainError("viscosities must be positive for a viscous profile")
    e = solve_endstates(cfg)
    kind = classify_shock(e, cfg.h1, cfg.beta).kind
    if kind not in (ShockKind.SLOW_LAX_2, ShockKind.FAST_LAX_1):
        raise UnsupportedCaseError(f"profile construction supports Lax shocks only, got {kind.name}")
    return e


def solve_profile(cfg: ShockConfig, rel_tol=1e-6, abs_tol=1e-8, tail_tol=1e-8, n_nodes=240):
    """Traveling-wave profile via the scalar reduction.

    The front is pinned by the phase condition u1(0) = (u1- + u1+)/2 and
    the scalar equation is integrated outward on both halves; both
    endstates are attracting in their respective integration directions,
    so the computation is well conditioned.
    """
    e = _require_viscous_lax(cfg)
    a, gamma = e.a, cfg.gamma
    vl = cfg.long_viscosity
    L = truncation_length(cfg, tail_tol)
    u_mid = 0.5 * (1.0 + e.u1_plus)

    def rhs(x, u):
        return _scalar_rhs(u, a, gamma, vl)

    sols = {}
    for sign in (1.0, -1.0):
        sol = solve_ivp(
            rhs, (0.0, sign * L), [u_mid], method="RK45",
            rtol=min(rel_tol, 1e-10), atol=min(abs_tol, 1e-12), dense_output=True,
        )
        if not sol.success:
            raise ConvergenceError(f"profile integration failed: {sol.message}")
        sols[sign] = sol.sol

    def u_eval(x):
        x = np.asarray(x, dtype=float)
        xr = np.clip(x, -L, L)
        out = np.where(xr >= 0, sols[1.0](np.maximum(xr, 0.0))[0], sols[-1.0](np.minimum(xr, 0.0))[0])
        return out if out.ndim else float(out)

    def du_eval(x):
        return _scalar_rhs(u_eval(x), a, gamma, vl)

    grid = _clustered_grid(L, n_nodes)
    u = u_eval(grid)
    du = du_eval(grid)
    values = np.stack([1.0 / u, u, np.zeros_like(u), np.full_like(u, cfg.h1), np.zeros_like(u)], axis=-1)
    derivs = np.stack([-du / u ** 2, du, np.zeros_like(u), np.zeros_like(u), np.zeros_like(u)], axis=-1)
    achieved = max(abs(u[-1] - e.u1_plus), abs(u[0] - 1.0))
    return Profile(
        grid=grid, values=values, derivs=derivs, L=L, tol=float(achieved),
        config=cfg, _u_eval=u_eval, _du_eval=du_eval,
    )


def solve_profile_bvp(cfg: ShockConfig, rel_tol=1e-6, abs_tol=1e-8, tail_tol=1e-8, n_nodes=240):
    """Cross-check path: the first-integral system for (u1, u2, h2) solved
    as a two-sided boundary value problem on the doubled half-domain.

    Unknowns are y = (u1, u2, h2) on the right half and on the reflected
    left half; boundary conditions are continuity of all three at the
    front, the phase condition, and projective decay conditions at both
    far ends.
    """
    e = _require_viscous_lax(cfg)
    a, gamma = e.a, cfg.gamma
    mu, nu, vl, h1 = cfg.mu, cfg.nu, cfg.long_viscosity, cfg.h1
    L = truncation_length(cfg, tail_tol)
    u_mid = 0.5 * (1.0 + e.u1_plus)

    def one_side(y):
        u1, u2, h2 = y
        du1 = (u1 + a * u1 ** (-gamma) + 0.5 * h2 ** 2 - (1.0 + a)) / vl
        du2 = (u2 - h1 * h2) / mu
        dh2 = (-h1 * u2 + u1 * h2) / nu
        return np.stack([du1, du2, dh2])

    def rhs(s, y):
        right, left = y[:3], y[3:]
        return np.concatenate([L * one_side(right), -L * one_side(left)])

    def projective_covector(u1, forward):
        ev, V = np.linalg.eig(_transverse_block(u1, h1, mu, nu))
        lefts = np.linalg.inv(V)
        # annihilate the modes excluded at this far end
        sel = np.where(ev.real < 0 if not forward else ev.real > 0)[0]
        return lefts[sel[0]].real

    ell_plus = projective_covector(e.u1_plus, forward=True)
    ell_minus = projective_covector(1.0, forward=False)

    def bc(y0, y1):
        right0, left0 = y0[:3], y0[3:]
        right1, left1 = y1[:3], y1[3:]
        wp = np.array([e.u1_plus, 0.0, 0.0])
        wm = np.array([1.0, 0.0, 0.0])
        return np.array([
            right0[0] - left0[0],
            right0[1] - left0[1],
            right0[2] - left0[2],
            right0[0] - u_mid,
            ell_plus @ (right1[1:] - wp[1:]),
            ell_minus @ (left1[1:] - wm[1:]),
        ])

    s = np.linspace(0.0, 1.0, 201)
    guide = solve_profile(cfg, tail_tol=tail_tol, n_nodes=n_nodes)
    y0 = np.zeros((6, s.size))
    y0[0] = guide.u_at(s * L)
    y0[3] = guide.u_at(-s * L)
    sol = solve_bvp(rhs, bc, s, y0, tol=rel_tol, bc_tol=abs_tol, max_nodes=40000)
    if not sol.success:
        raise ConvergenceError(f"profile boundary-value solve failed: {sol.message}")

    def u_eval(x):
        x = np.asarray(x, dtype=float)
        xr = np.clip(x, -L, L)
        out = np.where(xr >= 0, sol.sol(np.abs(xr) / L)[0], sol.sol(np.abs(xr) / L)[3])
        return out if out.ndim else float(out)

    grid = _clustered_grid(L, n_nodes)
    u = u_eval(grid)
    du = _scalar_rhs(u, a, gamma, vl)
    values = np.stack([1.0 / u, u, np.zeros_like(u), np.full_like(u, cfg.h1), np.zeros_like(u)], axis=-1)
    derivs = np.stack([-du / u ** 2, du, np.zeros_like(u), np.zeros_like(u), np.zeros_like(u)], axis=-1)
    achieved = max(abs(u[-1] - e.u1_plus), abs(u[0] - 1.0))
    return Profile(
        grid=grid, values=values, derivs=derivs, L=L, tol=float(achieved),
        config=cfg, _u_eval=u_eval,
        _du_eval=lambda x: _scalar_rhs(u_eval(x), a, gamma, vl),
    )


def _fd_derivative(grid, vals):
    """Fourth-order finite-difference derivative on a nonuniform grid."""
    n = len(grid)
    out = np.empty_like(vals)
    for i in range(n):
        lo = min(max(i - 2, 0), n - 5)
        idx = np.arange(lo, lo + 5)
        x = grid[idx] - grid[i]
        # derivative weights from the local interpolating polynomial
        V = np.vander(x, 5, increasing=True)
        w = np.linalg.solve(V.T, np.eye(5)[1])
        out[i] = w @ vals[idx]
    return out


def profile_residual(p: Profile, cfg: ShockConfig = None):
    """Max-norm residual of the first-integral traveling-wave equations,
    with derivatives recomputed from the stored grid data."""
    if cfg is None:
        cfg = p.config
    e = solve_endstates(cfg)
    a, gamma = e.a, cfg.gamma
    rho, u1, u2, h1, h2 = p.values.T
    du1 = _fd_derivative(p.grid, u1)
    du2 = _fd_derivative(p.grid, u2)
    dh1 = _fd_derivative(p.grid, h1)
    dh2 = _fd_derivative(p.grid, h2)
    res = [
        cfg.long_viscosity * du1 - (u1 + a * u1 ** (-gamma) + 0.5 * h2 ** 2 - (1.0 + a)),
        cfg.mu * du2 - (rho * u1 * u2 - h1 * h2),
        cfg.nu * dh2 - (-h1 * u2 + u1 * h2),
        dh1,
        rho * u1 - 1.0,
    ]
    return float(max(np.max(np.abs(r)) for r in res))
