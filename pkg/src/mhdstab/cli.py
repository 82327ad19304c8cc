"""Command-line interface: single-case computations, parameter sweeps,
stability diagrams, and CSV/JSON/SVG emission.

Exit codes: 0 on success, 2 on a validation error (bad parameters or
configuration), 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import io
import json
import os
import sys as _sys
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .model import ShockConfig, classify_shock, solve_endstates
from . import lopatinsky as lop
from .profiles import Profile, solve_profile
from . import evans as ev

#: Fourier-mode grid used for viscous channel sweeps when none is given.
DEFAULT_XI_GRID = (0.001, 0.004, 0.007, 0.01, 0.04, 0.07, 0.1, 0.14, 0.17, 0.2)

CSV_COLUMNS = (
    "mode", "gamma", "u1_plus", "h1", "xi", "winding",
    "root_re", "root_im", "radius", "radius_fit_converged",
    "n_points", "run_time_s", "error",
)


# ---------------------------------------------------------------------------
# sweep configuration and cells


@dataclass(frozen=True)
class SweepConfig:
    """A stability-diagram sweep over (u1_plus, h1) cells."""

    gamma: float
    u1_grid: tuple
    h1_grid: tuple
    xi_grid: tuple = DEFAULT_XI_GRID
    mode: str = "inviscid"          # inviscid | viscous | both
    beta: float = 1.0
    mu: float = 0.1
    eta: float | None = None
    nu: float = 0.1
    cap: float = 128.0
    out_dir: str = "."
    workers: int = 0                # 0 -> os.cpu_count()

    def __post_init__(self):
        if self.mode not in ("inviscid", "viscous", "both"):
            raise ValidationError(f"unknown sweep mode {self.mode!r}")
        if not self.u1_grid or not self.h1_grid:
            raise ValidationError("u1 and h1 grids must be nonempty")
        if self.mode != "inviscid" and not self.xi_grid:
            raise ValidationError("viscous sweeps need a nonempty xi grid")


@dataclass
class DiagramCell:
    """One evaluated grid cell; xi is None for inviscid cells."""

    mode: str
    gamma: float
    u1_plus: float
    h1: float
    xi: float | None
    winding: int
    root: complex | None
    radius: float | None
    radius_fit_converged: bool | None
    n_points: int
    run_time_s: float
    error: str = ""

    def to_row(self):
        return {
            "mode": self.mode,
            "gamma": _fmt(self.gamma),
            "u1_plus": _fmt(self.u1_plus),
            "h1": _fmt(self.h1),
            "xi": "" if self.xi is None else _fmt(self.xi),
            "winding": str(self.winding),
            "root_re": "" if self.root is None else _fmt(self.root.real),
            "root_im": "" if self.root is None else _fmt(self.root.imag),
            "radius": "" if self.radius is None else _fmt(self.radius),
            "radius_fit_converged": (
                "" if self.radius_fit_converged is None
                else str(int(self.radius_fit_converged))
            ),
            "n_points": str(self.n_points),
            "run_time_s": _fmt(self.run_time_s),
            "error": self.error,
        }

    @classmethod
    def from_row(cls, row):
        root = None
        if row["root_re"] != "":
            root = complex(float(row["root_re"]), float(row["root_im"]))
        return cls(
            mode=row["mode"],
            gamma=float(row["gamma"]),
            u1_plus=float(row["u1_plus"]),
            h1=float(row["h1"]),
            xi=None if row["xi"] == "" else float(row["xi"]),
            winding=int(row["winding"]),
            root=root,
            radius=None if row["radius"] == "" else float(row["radius"]),
            radius_fit_converged=(
                None if row["radius_fit_converged"] == ""
                else bool(int(row["radius_fit_converged"]))
            ),
            n_points=int(row["n_points"]),
            run_time_s=float(row["run_time_s"]),
            error=row["error"],
        )


def _fmt(x):
    """Deterministic shortest-repr float formatting."""
    return repr(float(x))


def _sort_key(c: DiagramCell):
    return (c.mode, c.gamma, c.u1_plus, c.h1, -1.0 if c.xi is None else c.xi)


# ---------------------------------------------------------------------------
# per-cell evaluation (module-level for process pools)


def _cell_params_key(params):
    blob = json.dumps(params, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


def _eval_cell(params):
    """Evaluate one diagram cell described by a plain dict (picklable)."""
    t0 = time.time()
    base = dict(
        gamma=params["gamma"], u1_plus=params["u1_plus"], h1=params["h1"],
        beta=params["beta"], mu=params["mu"], eta=params["eta"], nu=params["nu"],
    )
    out = dict(params)
    try:
        cfg = ShockConfig(**base)
        if params["mode"] == "inviscid":
            e = solve_endstates(cfg)
            rep = lop.lop_winding(e)
            root = None
            if rep.winding > 0:
                try:
                    real_root = lop.lop_real_root(e)
                    root = None if real_root is None else complex(real_root)
                except NumericalError:
                    root = None
            out.update(winding=rep.winding,
                       root_re=None if root is None else root.real,
                       root_im=None if root is None else root.imag,
                       radius=None, radius_fit_converged=None,
                       n_points=rep.n_points)
        else:
            p = solve_profile(cfg)
            sysv = ev.evans_system(p, params["xi"])
            r, starred = ev.radius_select(sysv, cap=params["cap"])
            rep, data = ev.evans_winding(sysv, r)
            root = None
            if rep.winding > 0:
                root = ev.evans_root(sysv, winding_data=data)
            out.update(winding=rep.winding,
                       root_re=None if root is None else root.real,
                       root_im=None if root is None else root.imag,
                       radius=r, radius_fit_converged=starred,
                       n_points=rep.n_points)
        out["error"] = ""
    except (ValidationError, NumericalError) as exc:
        out.update(winding=0, root_re=None, root_im=None, radius=None,
                   radius_fit_converged=None, n_points=0,
                   error=f"{type(exc).__name__}: {exc}")
    out["run_time_s"] = time.time() - t0
    return out


def _result_to_cell(res):
    root = None
    if res["root_re"] is not None:
        root = complex(res["root_re"], res["root_im"] or 0.0)
    return DiagramCell(
        mode=res["mode"], gamma=res["gamma"], u1_plus=res["u1_plus"],
        h1=res["h1"], xi=res.get("xi"), winding=res["winding"], root=root,
        radius=res["radius"], radius_fit_converged=res["radius_fit_converged"],
        n_points=res["n_points"], run_time_s=res["run_time_s"],
        error=res.get("error", ""),
    )


def run_diagram(sweep: SweepConfig, progress=None):
    """Evaluate the full sweep grid, resuming from the JSON cell cache in
    `<out_dir>/cache`.  Individual cell failures are recorded in the cell's
    `error` field and do not abort the sweep."""
    cache_dir = os.path.join(sweep.out_dir, "cache")
    os.makedirs(cache_dir, exist_ok=True)

    tasks = []
    for u1 in sweep.u1_grid:
        for h1 in sweep.h1_grid:
            base = dict(gamma=sweep.gamma, u1_plus=float(u1), h1=float(h1),
                        beta=sweep.beta, mu=sweep.mu, eta=sweep.eta,
                        nu=sweep.nu, cap=sweep.cap)
            if sweep.mode in ("inviscid", "both"):
                tasks.append(dict(base, mode="inviscid", xi=None))
            if sweep.mode in ("viscous", "both"):
                for xi in sweep.xi_grid:
                    tasks.append(dict(base, mode="viscous", xi=float(xi)))

    results = {}
    pending = []
    for params in tasks:
        key = _cell_params_key(params)
        path = os.path.join(cache_dir, key + ".json")
        if os.path.exists(path):
            with open(path) as fh:
                results[key] = json.load(fh)
        else:
            pending.append((key, path, params))

    if pending:
        workers = sweep.workers or os.cpu_count() or 1
        if workers > 1 and len(pending) > 1:
            with concurrent.futures.ProcessPoolExecutor(workers) as pool:
                futs = {pool.submit(_eval_cell, params): (key, path)
                        for key, path, params in pending}
                for fut in concurrent.futures.as_completed(futs):
                    key, path = futs[fut]
                    res = fut.result()
                    _write_json_atomic(path, res)
                    results[key] = res
                    if progress:
                        progress(res)
        else:
            for key, path, params in pending:
                res = _eval_cell(params)
                _write_json_atomic(path, res)
                results[key] = res
                if progress:
                    progress(res)

    cells = [_result_to_cell(results[_cell_params_key(p)]) for p in tasks]
    cells.sort(key=_sort_key)
    return cells


def _write_json_atomic(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# emission


def cells_to_csv(cells, path_or_file):
    """Write cells in the fixed column order (deterministic bytes)."""
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for c in sorted(cells, key=_sort_key):
            w.writerow(c.to_row())
    finally:
        if own:
            fh.close()


def cells_from_csv(path_or_file):
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, newline="") if own else path_or_file
    try:
        return [DiagramCell.from_row(row) for row in csv.DictReader(fh)]
    finally:
        if own:
            fh.close()


def cells_to_json(cells, path):
    _write_json_atomic(path, [
        {k: (None if v == "" else v) for k, v in c.to_row().items()}
        for c in sorted(cells, key=_sort_key)
    ])


def _aggregate_markers(cells):
    """Collapse per-xi cells to one marker per (u1_plus, h1): a point is
    unstable when any frequency in the sweep has positive winding."""
    agg = {}
    for c in cells:
        if c.error:
            continue
        key = (c.u1_plus, c.h1)
        agg[key] = max(agg.get(key, 0), c.winding)
    return agg


def cells_to_svg(cells, path, gamma=None, critical_curve=None,
                 width=640, height=480):
    """Scatter stability diagram: red dot = unstable, black plus = stable,
    optional dashed critical curve (sequence of (u1_plus, h1))."""
    markers = _aggregate_markers(cells)
    if not markers:
        raise ValidationError("no successful cells to plot")
    us = sorted({k[0] for k in markers})
    hs = sorted({k[1] for k in markers})
    pad = 50.0
    u_lo, u_hi = min(us), max(us)
    h_lo, h_hi = min(hs), max(hs)
    u_span = (u_hi - u_lo) or 1.0
    h_span = (h_hi - h_lo) or 1.0

    def X(u):
        return pad + (u - u_lo) / u_span * (width - 2 * pad)

    def Y(h):
        return height - pad - (h - h_lo) / h_span * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="14">u1+</text>',
        f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" '
        f'font-size="14" transform="rotate(-90 16 {height / 2:.1f})">h1</text>',
    ]
    if gamma is not None:
        parts.append(f'<text x="{width - pad}" y="{pad - 16}" text-anchor="end" '
                     f'font-size="13">gamma = {gamma:g}</text>')
    if critical_curve is not None and len(critical_curve) > 1:
        pts = " ".join(f"{X(u):.2f},{Y(h):.2f}" for u, h in critical_curve)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" '
                     f'stroke-dasharray="6 4" stroke-width="1.5"/>')
    for (u, h) in sorted(markers):
        x, y = X(u), Y(h)
        if markers[(u, h)] > 0:
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" '
                         f'fill="red" data-cell="marker"/>')
        else:
            parts.append(
                f'<path d="M {x - 4:.2f} {y:.2f} H {x + 4:.2f} '
                f'M {x:.2f} {y - 4:.2f} V {y + 4:.2f}" stroke="black" '
                f'stroke-width="1.6" data-cell="marker"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# argument plumbing


def _parse_complex(s):
    try:
        return complex(s.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {s!r}")


def _parse_grid(s):
    try:
        vals = tuple(float(t) for t in s.split(",") if t.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated grid: {s!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def _shock_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shock parameters")
    g.add_argument("--gamma", type=float, default=5.0 / 3.0)
    g.add_argument("--u1-plus", type=float, default=0.2,
                   help="downstream normal velocity (0 < u1+ < 1)")
    g.add_argument("--h1", type=float, default=1.1,
                   help="normal magnetic field strength")
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--mu", type=float, default=0.1)
    g.add_argument("--eta", type=float, default=None,
                   help="second viscosity (default -2*mu/3)")
    g.add_argument("--nu", type=float, default=0.1)
    return p


def _global_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file of defaults for any flag")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--workers", type=int, default=0,
                   help="worker processes for sweeps (0 = all cores)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized diagnostics")
    return p


def _cfg_from_args(args) -> ShockConfig:
    return ShockConfig(gamma=args.gamma, u1_plus=args.u1_plus, h1=args.h1,
                       beta=args.beta, mu=args.mu, eta=args.eta, nu=args.nu)


def _emit(args, payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


def build_parser():
    glob = _global_parent()
    shock = _shock_parent()
    top = argparse.ArgumentParser(
        prog="mhdstab",
        description="Spectral stability of planar slow MHD shocks.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("endstates", parents=[glob, shock],
                        help="Rankine-Hugoniot endstates and jump data")
    sp.set_defaults(func=cmd_endstates)

    sp = sub.add_parser("classify", parents=[glob, shock],
                        help="Lax/overcompressive shock classification")
    sp.set_defaults(func=cmd_classify)

    lp = sub.add_parser("lop", help="inviscid (Lopatinsky) computations")
    lsub = lp.add_subparsers(dest="subcommand", required=True)
    sp = lsub.add_parser("eval", parents=[glob, shock])
    sp.add_argument("--lam", type=_parse_complex, required=True)
    sp.add_argument("--xi", type=float, default=1.0)
    sp.set_defaults(func=cmd_lop_eval)
    sp = lsub.add_parser("winding", parents=[glob, shock])
    sp.add_argument("--radius", type=float, default=10.0)
    sp.set_defaults(func=cmd_lop_winding)
    sp = lsub.add_parser("critical", parents=[glob, shock])
    sp.set_defaults(func=cmd_lop_critical)
    sp = lsub.add_parser("lambda2", parents=[glob, shock])
    sp.set_defaults(func=cmd_lop_lambda2)
    sp = lsub.add_parser("fit", parents=[glob, shock])
    sp.add_argument("--h1-grid", type=_parse_grid,
                    default=tuple(np.linspace(2.0, 16.0, 8)))
    sp.set_defaults(func=cmd_lop_fit)

    pp = sub.add_parser("profile", help="viscous traveling-wave profiles")
    psub = pp.add_subparsers(dest="subcommand", required=True)
    sp = psub.add_parser("solve", parents=[glob, shock])
    sp.add_argument("--save", help="write the profile JSON here")
    sp.set_defaults(func=cmd_profile_solve)

    ep = sub.add_parser("evans", help="viscous (Evans function) computations")
    esub = ep.add_subparsers(dest="subcommand", required=True)
    sp = esub.add_parser("eval", parents=[glob, shock])
    sp.add_argument("--lam", type=_parse_complex, required=True)
    sp.add_argument("--xi", type=float, required=True)
    sp.set_defaults(func=cmd_evans_eval)
    sp = esub.add_parser("winding", parents=[glob, shock])
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--radius", type=float, default=None,
                    help="outer contour radius (default: automatic)")
    sp.add_argument("--cap", type=float, default=128.0)
    sp.set_defaults(func=cmd_evans_winding)
    sp = esub.add_parser("root", parents=[glob, shock])
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--abs-tol", type=float, default=5e-7)
    sp.add_argument("--r-inner", type=float, default=1e-5)
    sp.set_defaults(func=cmd_evans_root)
    sp = esub.add_parser("eigfun", parents=[glob, shock])
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--lam-guess", type=_parse_complex, required=True)
    sp.add_argument("--save", help="write grid/values JSON here")
    sp.set_defaults(func=cmd_evans_eigfun)
    sp = esub.add_parser("sigma", parents=[glob, shock])
    sp.set_defaults(func=cmd_evans_sigma)
    sp = esub.add_parser("crossing", parents=[glob, shock])
    sp.add_argument("--h1-grid", type=_parse_grid, required=True)
    sp.add_argument("--xi", type=float, required=True)
    sp.set_defaults(func=cmd_evans_crossing)

    sp = sub.add_parser("diagram", parents=[glob, shock],
                        help="stability diagram over a (u1+, h1) grid")
    sp.add_argument("--mode", choices=("inviscid", "viscous", "both"),
                    default="inviscid")
    sp.add_argument("--u1-grid", type=_parse_grid, required=True)
    sp.add_argument("--h1-grid", type=_parse_grid, required=True)
    sp.add_argument("--xi-grid", type=_parse_grid,
                    default=DEFAULT_XI_GRID)
    sp.add_argument("--cap", type=float, default=128.0)
    sp.add_argument("--no-critical-curve", action="store_true",
                    help="skip the dashed critical-field overlay")
    sp.set_defaults(func=cmd_diagram)

    return top


def _apply_config_file(parser, argv):
    """Merge --config JSON values as parser defaults before the real parse."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        with open(known.config) as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise ValidationError("--config must hold a JSON object")
        parser.set_defaults(**{k.replace("-", "_"): v
                               for k, v in overrides.items()})


# ---------------------------------------------------------------------------
# subcommand bodies


def cmd_endstates(args):
    e = solve_endstates(_cfg_from_args(args))
    _emit(args, e.to_dict())


def cmd_classify(args):
    e = solve_endstates(_cfg_from_args(args))
    t = classify_shock(e)
    _emit(args, {"kind": t.kind.value,
                 "positive_characteristics": list(t.counts)})


def cmd_lop_eval(args):
    e = solve_endstates(_cfg_from_args(args))
    d = lop.lop_det(e, args.lam, args.xi)
    _emit(args, {"lambda": [args.lam.real, args.lam.imag], "xi": args.xi,
                 "delta": [d.real, d.imag]})


def cmd_lop_winding(args):
    e = solve_endstates(_cfg_from_args(args))
    rep = lop.lop_winding(e, radius=args.radius)
    _emit(args, {"winding": rep.winding, "radius": args.radius,
                 "n_points": rep.n_points,
                 "min_modulus": rep.min_modulus})


def cmd_lop_critical(args):
    h = lop.critical_h1(args.gamma, args.u1_plus, beta=args.beta)
    _emit(args, {"gamma": args.gamma, "u1_plus": args.u1_plus,
                 "critical_h1": h})


def cmd_lop_lambda2(args):
    val = lop.lambda2_exact(args.gamma, 1.0 / args.u1_plus)
    _emit(args, {"gamma": args.gamma, "R": 1.0 / args.u1_plus,
                 "lambda2": val})


def cmd_lop_fit(args):
    coeff, slope = lop.lambda2_fit(args.gamma, args.u1_plus,
                                   np.asarray(args.h1_grid), beta=args.beta)
    _emit(args, {"gamma": args.gamma, "u1_plus": args.u1_plus,
                 "h1_grid": list(args.h1_grid),
                 "coefficient": coeff, "slope": slope})


def cmd_profile_solve(args):
    from .profiles import profile_residual
    p = solve_profile(_cfg_from_args(args))
    if args.save:
        p.save(args.save)
    _emit(args, {"L": p.L, "n_nodes": len(p.grid),
                 "residual": profile_residual(p),
                 "saved": args.save or None})


def _evans_sys(args, xi):
    p = solve_profile(_cfg_from_args(args))
    return ev.evans_system(p, xi)


def cmd_evans_eval(args):
    sysv = _evans_sys(args, args.xi)
    red, rad = ev.evans_log_parts(sysv, args.lam)
    logd = red + rad
    _emit(args, {"lambda": [args.lam.real, args.lam.imag], "xi": args.xi,
                 "log_abs": logd.real, "arg": logd.imag % (2 * np.pi)})


def cmd_evans_winding(args):
    sysv = _evans_sys(args, args.xi)
    if args.radius is None:
        r, starred = ev.radius_select(sysv, cap=args.cap)
    else:
        r, starred = float(args.radius), None
    rep, _ = ev.evans_winding(sysv, r)
    _emit(args, {"xi": args.xi, "winding": rep.winding, "radius": r,
                 "radius_fit_converged": starred,
                 "n_points": rep.n_points,
                 "closure_defect": rep.closure_defect})


def cmd_evans_root(args):
    sysv = _evans_sys(args, args.xi)
    root = ev.evans_root(sysv, abs_tol=args.abs_tol, r_inner=args.r_inner)
    _emit(args, {"xi": args.xi,
                 "root": None if root is None else [root.real, root.imag]})


def cmd_evans_eigfun(args):
    sysv = _evans_sys(args, args.xi)
    ef = ev.eigenfunction(sysv, args.lam_guess)
    if args.save:
        _write_json_atomic(args.save, {
            "lambda": [complex(ef.lam).real, complex(ef.lam).imag],
            "xi": ef.xi,
            "grid": np.asarray(ef.grid).tolist(),
            "values_re": np.asarray(ef.values).real.tolist(),
            "values_im": np.asarray(ef.values).imag.tolist(),
        })
    _emit(args, {"lambda": [complex(ef.lam).real, complex(ef.lam).imag],
                 "constraint_residual": ef.constraint_residual,
                 "saved": args.save or None})


def cmd_evans_sigma(args):
    p = solve_profile(_cfg_from_args(args))
    rep = ev.sigma_concavity(p)
    _emit(args, {"sigma": rep.sigma, "spread": rep.spread,
                 "epsilons": np.asarray(rep.epsilons).tolist(),
                 "values": np.asarray(rep.values).tolist()})


def cmd_evans_crossing(args):
    cfg = _cfg_from_args(args)
    pts = ev.crossing_speed(cfg, np.asarray(args.h1_grid), args.xi)
    _emit(args, [{
        "h1": p.h1,
        "lambda": None if p.lam is None else [p.lam.real, p.lam.imag],
        "dlambda_dh1": p.dlam_dh1,
        "gap": p.gap,
    } for p in pts])


def cmd_diagram(args):
    sweep = SweepConfig(
        gamma=args.gamma, u1_grid=args.u1_grid, h1_grid=args.h1_grid,
        xi_grid=args.xi_grid, mode=args.mode, beta=args.beta,
        mu=args.mu, eta=args.eta, nu=args.nu, cap=args.cap,
        out_dir=args.out, workers=args.workers,
    )
    os.makedirs(args.out, exist_ok=True)

    def progress(res):
        print(f"cell u1+={res['u1_plus']:g} h1={res['h1']:g}"
              + (f" xi={res['xi']:g}" if res.get("xi") is not None else "")
              + f" [{res['mode']}] winding={res['winding']}"
              + (f" ERROR {res['error']}" if res["error"] else ""),
              file=_sys.stderr)

    cells = run_diagram(sweep, progress=progress)

    curve = None
    if not args.no_critical_curve:
        curve = []
        for u1 in sorted(sweep.u1_grid):
            try:
                h_crit = lop.critical_h1(sweep.gamma, u1, beta=sweep.beta)
            except (ValidationError, NumericalError):
                continue
            if h_crit is not None:
                curve.append((u1, h_crit))
        if len(curve) < 2:
            curve = None

    csv_path = os.path.join(args.out, "diagram.csv")
    json_path = os.path.join(args.out, "diagram.json")
    svg_path = os.path.join(args.out, "diagram.svg")
    cells_to_csv(cells, csv_path)
    cells_to_json(cells, json_path)
    cells_to_svg(cells, svg_path, gamma=sweep.gamma, critical_curve=curve)

    n_err = sum(1 for c in cells if c.error)
    _emit(args, {"cells": len(cells), "failed_cells": n_err,
                 "csv": csv_path, "json": json_path, "svg": svg_path})
    if n_err:
        raise NumericalError(f"{n_err} cells failed; see {csv_path}")


def main(argv=None):
    argv = list(_sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        np.random.seed(args.seed)
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
