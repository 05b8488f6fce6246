"""Coupled Stuart-Landau oscillators: simulation and analytic regime classification."""

__version__ = "0.1.0"

from .model import (
    EnsembleState,
    Observables,
    OscillatorParams,
    Trajectory,
    corotating_shift,
    observables,
    rhs_cartesian,
    rhs_polar,
    sector_functional,
)

__all__ = [
    "EnsembleState",
    "Observables",
    "OscillatorParams",
    "Trajectory",
    "corotating_shift",
    "observables",
    "rhs_cartesian",
    "rhs_polar",
    "sector_functional",
    "__version__",
]
