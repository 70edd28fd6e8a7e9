"""Staggered minimizing-movement simulator for nonsimple thermoviscoelastic solids."""

__version__ = "0.1.0"

from .audit import EnergyLedger, build_ledger, total_balance_drift, weak_heat_residual  # noqa: E402
from .grid import Grid2D  # noqa: E402
from .materials import DomainError, MaterialParams  # noqa: E402
from .mechanics import MechStepInput, SolveReport, StepFailure, solve_mech_step  # noqa: E402
from .scheme import ForcingSpec, InitialSpec, SchemeConfig, Trajectory, run  # noqa: E402
from .thermal import ThermalReport, ThermalStepInput, solve_thermal_step  # noqa: E402

__all__ = [
    "DomainError", "EnergyLedger", "ForcingSpec", "Grid2D", "InitialSpec", "MaterialParams", "MechStepInput",
    "SchemeConfig", "SolveReport", "StepFailure", "ThermalReport", "ThermalStepInput", "Trajectory",
    "build_ledger", "run", "solve_mech_step", "solve_thermal_step", "total_balance_drift",
    "weak_heat_residual",
]
