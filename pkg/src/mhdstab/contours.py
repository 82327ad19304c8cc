"""Complex-contour utilities: construction, winding numbers, moment roots.

Contours are stored as a parametrization t in [0,1] -> z(t) together with
the parameter values actually sampled, so adaptive refinement can insert
points on the true geometry instead of on chords.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from mhdstab.errors import (
    BracketError,
    DomainError,
    NumericalError,
    RefinementBudgetError,
    ZeroOnContourError,
)

_ARG_STEP_MAX = np.pi / 2  # refine until consecutive argument steps are below this


@dataclass
class Contour:
    """Ordered complex sample points plus the parametrization they came from."""

    points: np.ndarray
    geometry: dict
    closed: bool
    ts: np.ndarray = None
    param: object = None  # callable t -> complex

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        if self.ts is None:
            self.ts = np.linspace(0.0, 1.0, len(self.points))
        if self.param is None:
            # piecewise-linear fallback through the stored points
            pts, ts = self.points.copy(), self.ts.copy()

            def _interp(t, ts=ts, pts=pts):
                re = np.interp(t, ts, pts.real)
                im = np.interp(t, ts, pts.imag)
                return re + 1j * im

            self.param = _interp

    def at(self, t):
        return self.param(t)


def _piecewise(breaks, segments):
    """Join parametrized segments; breaks are cumulative parameter fractions."""

    def param(t):
        t = float(t) % 1.0 if t != 1.0 else 1.0
        for k, (lo, hi) in enumerate(zip(breaks[:-1], breaks[1:])):
            if t <= hi or k == len(segments) - 1:
                s = (t - lo) / (hi - lo)
                return segments[k](s)
        raise AssertionError

    return param


def _segment_ts(breaks, n):
    """Distribute ~n parameter values over segments proportionally to their
    share of the parametrization, sampling each segment end-to-end so the
    point set respects the contour's reflection symmetry."""
    pieces = []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        m = max(8, int(round(n * (hi - lo))))
        pieces.append(np.linspace(lo, hi, m + 1)[:-1])
    return np.concatenate(pieces + [np.array([1.0])])


def make_semicircle(radius, shift=0.0, n=300) -> Contour:
    """Boundary of {Re z >= 0, |z| <= radius} translated right by shift.

    Traversed counterclockwise: arc from -i*radius up through +radius to
    +i*radius, then down the vertical diameter.
    """
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if n < 16:
        raise DomainError(f"need at least 16 points, got n={n}")
    arc_len = np.pi * radius
    seg_len = 2.0 * radius
    total = arc_len + seg_len
    b1 = arc_len / total

    def arc(s):
        return shift + radius * cmath.exp(1j * (-np.pi / 2 + np.pi * s))

    def seg(s):
        return shift + 1j * radius * (1.0 - 2.0 * s)

    param = _piecewise([0.0, b1, 1.0], [arc, seg])
    ts = _segment_ts([0.0, b1, 1.0], n)
    pts = np.array([param(t) for t in ts])
    return Contour(
        points=pts,
        geometry={"kind": "semicircle", "radius": radius, "shift": shift},
        closed=True,
        ts=ts,
        param=param,
    )


def make_semi_annulus(r_inner, r_outer, n=300, shift=0.0) -> Contour:
    """Boundary of {Re z >= 0, r_inner <= |z| <= r_outer}, counterclockwise."""
    if not (0 < r_inner < r_outer):
        raise DomainError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    if n < 16:
        raise DomainError(f"need at least 16 points, got n={n}")
    lens = np.array([np.pi * r_outer, r_outer - r_inner, np.pi * r_inner, r_outer - r_inner])
    breaks = np.concatenate([[0.0], np.cumsum(lens) / np.sum(lens)])

    def outer_arc(s):
        return shift + r_outer * cmath.exp(1j * (-np.pi / 2 + np.pi * s))

    def top_seg(s):
        return shift + 1j * (r_outer + s * (r_inner - r_outer))

    def inner_arc(s):  # clockwise along the inner circle
        return shift + r_inner * cmath.exp(1j * (np.pi / 2 - np.pi * s))

    def bottom_seg(s):
        return shift - 1j * (r_inner + s * (r_outer - r_inner))

    param = _piecewise(list(breaks), [outer_arc, top_seg, inner_arc, bottom_seg])
    ts = _segment_ts(list(breaks), n)
    pts = np.array([param(t) for t in ts])
    return Contour(
        points=pts,
        geometry={"kind": "semi_annulus", "r_inner": r_inner, "r_outer": r_outer, "shift": shift},
        closed=True,
        ts=ts,
        param=param,
    )


@dataclass
class DeterminantTrace:
    """Samples of an analytic function along a contour."""

    contour: Contour
    values: np.ndarray
    adaptive_refinements: int = 0
    ts: np.ndarray = None

    def to_csv(self, path):
        import csv

        lam = np.array([self.contour.at(t) for t in (self.ts if self.ts is not None else self.contour.ts)])
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re_lambda", "im_lambda", "re_f", "im_f"])
            for z, v in zip(lam, self.values):
                wr.writerow([repr(z.real), repr(z.imag), repr(v.real), repr(v.imag)])


@dataclass
class WindingReport:
    winding: int
    min_modulus: float
    relative_argument_steps: np.ndarray
    n_points: int = 0
    refinements: int = 0


def _refine_samples(f, contour, ts, vals, max_refine, max_points=20000):
    """Insert parameter midpoints until consecutive argument steps < pi/2."""
    refinements = 0
    for _ in range(max_refine):
        ratios = vals[1:] / vals[:-1]
        steps = np.abs(np.angle(ratios))
        bad = np.where(steps >= _ARG_STEP_MAX)[0]
        if len(bad) == 0:
            return ts, vals, refinements
        new_ts = 0.5 * (ts[bad] + ts[bad + 1])
        new_vals = np.array([f(contour.at(t)) for t in new_ts])
        order = np.argsort(np.concatenate([ts, new_ts]))
        ts = np.concatenate([ts, new_ts])[order]
        vals = np.concatenate([vals, new_vals])[order]
        refinements += 1
        if len(ts) > max_points:
            raise RefinementBudgetError(
                f"argument refinement exceeded {max_points} contour points"
            )
    raise RefinementBudgetError(f"argument steps still >= pi/2 after {max_refine} passes")


def sample_trace(f, contour: Contour, max_refine=30) -> DeterminantTrace:
    ts = contour.ts.copy()
    vals = np.array([f(contour.at(t)) for t in ts])
    ts, vals, refinements = _refine_samples(f, contour, ts, vals, max_refine)
    return DeterminantTrace(contour=contour, values=vals, adaptive_refinements=refinements, ts=ts)


def winding_from_values(vals, min_mod_floor=1e-13):
    """Argument-principle count from already-refined samples on a closed loop."""
    min_mod = float(np.min(np.abs(vals)))
    if min_mod < min_mod_floor:
        raise ZeroOnContourError(f"|f| fell to {min_mod:.2e} on the contour")
    steps = np.angle(vals[1:] / vals[:-1])
    total = float(np.sum(steps))
    w = total / (2.0 * np.pi)
    wi = int(np.rint(w))
    if abs(w - wi) > 1e-6:
        raise NumericalError(f"winding {w} is not close to an integer")
    return wi, min_mod, steps


def winding_number(f, contour: Contour, max_refine=30) -> WindingReport:
    """Number of zeros (with multiplicity) of analytic f enclosed by the contour."""
    if not contour.closed:
        raise DomainError("winding numbers require a closed contour")
    trace = sample_trace(f, contour, max_refine=max_refine)
    w, min_mod, steps = winding_from_values(trace.values)
    return WindingReport(
        winding=w,
        min_modulus=min_mod,
        relative_argument_steps=steps,
        n_points=len(trace.values),
        refinements=trace.adaptive_refinements,
    )


def _moments_from_trace(zs, vals, num_moments):
    """Contour integrals (1/2pi i) oint z^k f'/f dz with f' by central
    differences in the contour parameter."""
    # periodic central differences of log-derivative data
    dz = np.gradient(zs)
    df = np.gradient(vals)
    logd = df / vals  # (f'/f) dz per unit parameter step, built from sample spacing
    moments = []
    for k in range(num_moments):
        integrand = zs ** k * logd
        moments.append(np.sum(integrand) / (2j * np.pi))
    return moments


def _polish_root(f, z0, scale, tol=1e-10, max_iter=60):
    """Muller iteration started from z0 (scale sets the initial stencil)."""
    h = 0.05 * scale if scale > 0 else 1e-8
    xs = [z0 - h, z0 + h, z0]
    fs = [f(x) for x in xs]
    best = min(zip(xs, fs), key=lambda p: abs(p[1]))
    for _ in range(max_iter):
        x0, x1, x2 = xs
        f0, f1, f2 = fs
        if abs(f2) < tol:
            return x2, abs(f2)
        denom01, denom12, denom02 = x1 - x0, x2 - x1, x2 - x0
        if min(abs(denom01), abs(denom12), abs(denom02)) == 0:
            break
        d01 = (f1 - f0) / denom01
        d12 = (f2 - f1) / denom12
        d2 = (d12 - d01) / denom02
        b = d12 + d2 * denom12
        disc = cmath.sqrt(b * b - 4.0 * f2 * d2)
        den = b + disc if abs(b + disc) > abs(b - disc) else b - disc
        if den == 0:
            break
        x3 = x2 - 2.0 * f2 / den
        f3 = f(x3)
        xs = [x1, x2, x3]
        fs = [f1, f2, f3]
        if abs(f3) < abs(best[1]):
            best = (x3, f3)
        if abs(x3 - x2) < 1e-16 * max(1.0, abs(x3)):
            break
    return best[0], abs(best[1])


def moments_roots(f, contour: Contour, num_roots, refine=True, max_refine=30):
    """Root estimates inside a closed contour via the method of moments.

    Power sums p_k = sum(root_j^k) are extracted from contour integrals of
    z^k f'/f; Newton's identities convert them to a monic polynomial whose
    roots seed local (Muller) refinement.
    """
    if num_roots < 1:
        raise DomainError("num_roots must be at least 1")
    trace = sample_trace(f, contour, max_refine=max_refine)
    w, _, _ = winding_from_values(trace.values)
    if w != num_roots:
        raise NumericalError(f"winding {w} does not match requested num_roots {num_roots}")
    zs = np.array([contour.at(t) for t in trace.ts])
    moments = _moments_from_trace(zs, trace.values, num_roots + 1)
    # Newton's identities: e_0 = 1, k e_k = sum_{i=1..k} (-1)^{i-1} e_{k-i} p_i
    p = moments[1:]
    e = [1.0 + 0j]
    for k in range(1, num_roots + 1):
        acc = 0.0 + 0j
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * p[i - 1]
        e.append(acc / k)
    coeffs = [(-1) ** k * e[k] for k in range(num_roots + 1)]
    raw = np.roots(coeffs) if num_roots > 1 else np.array([e[1]])
    if not refine:
        return np.array(raw)
    scale = float(np.max(np.abs(zs)))
    out = []
    for r in raw:
        z, _ = _polish_root(f, complex(r), scale=min(abs(r) if r != 0 else scale, scale) * 0.1)
        out.append(z)
    return np.array(out)


def bisection_root(f, lo, hi, tol=1e-10):
    """Plain bisection of a real function with a sign change on [lo, hi]."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo:.3e}, {fhi:.3e}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)
