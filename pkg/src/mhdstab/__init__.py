"""Spectral stability toolbox for planar slow MHD shock waves.

The package is organized around the pipeline

    model       -- fluxes, Jacobians, jump conditions, shock classification
    contours    -- complex contours, winding numbers, moment-based roots
    lopatinsky  -- inviscid normal-mode determinant and its diagnostics
    profiles    -- viscous traveling-wave connections
    evans       -- viscous eigenvalue ODE and Evans-function machinery
    cli         -- command line front end, sweeps and diagram emission
"""

from mhdstab.model import (
    GasLaw,
    State5,
    ShockConfig,
    Endstates,
    ShockType,
    flux,
    jacobian,
    characteristic_speeds,
    solve_endstates,
    classify_shock,
    involution_residuals,
    dynamic_rh_vectors,
)

__all__ = [
    "GasLaw",
    "State5",
    "ShockConfig",
    "Endstates",
    "ShockType",
    "flux",
    "jacobian",
    "characteristic_speeds",
    "solve_endstates",
    "classify_shock",
    "involution_residuals",
    "dynamic_rh_vectors",
]

__version__ = "0.1.0"
