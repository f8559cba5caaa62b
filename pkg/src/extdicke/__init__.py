"""Extended Dicke model: classical phase space, semiclassical density of states,
classical dynamics and finite-size quantum spectra."""

from .model import (
    ClassicalState,
    CriticalEnergies,
    FixedPoint,
    ModelParams,
    Region,
    classical_energy,
    classify_region,
    critical_energies,
    fixed_points,
)

__all__ = [
    "ClassicalState",
    "CriticalEnergies",
    "FixedPoint",
    "ModelParams",
    "Region",
    "classical_energy",
    "classify_region",
    "critical_energies",
    "fixed_points",
]
