"""Finite-volume and ODE toolkit for a chemorepulsion model with lethality.

u_t = D lap u + chi div(u grad v) + r u (1 - u) - u v
v_t = lap v + a u - v + f(x, t)

with zero-flux boundaries on a unit-measure interval or rectangle, plus the
spatially homogeneous ODE it is compared against.
"""
from .errors import (CFLError, ChemolabError, ConfigError, DomainError, InconclusiveError,
                     NumericError, RunTimeout, ShapeError, SolverError, StepNumericError,
                     StiffnessError, ThresholdError)
from .model import (Constant, DecaySignal, Grid, HomogeneousPeriodic, ModelParams,
                    PeriodicSignal, SeparablePerturbed, eval_source, integral, l2_norm_sq)
from .ode import (OdeState, SplitOdeState, equilibrium_constant_f, find_periodic_orbit_a_pos,
                  integrate_ode, integrate_split_ode, period_map, periodic_initials_a0,
                  r_min_a0, r_min_a_pos)
from .pde import PdeState, SchemeConfig, run, spatial_order_check, step, step_split
from .config import load_config, parse_config
from .scenarios import run_scenario, write_series

__version__ = "0.1.0"

__all__ = [
    "CFLError",
    "ChemolabError",
    "ConfigError",
    "DomainError",
    "InconclusiveError",
    "NumericError",
    "RunTimeout",
    "ShapeError",
    "SolverError",
    "StepNumericError",
    "StiffnessError",
    "ThresholdError",
    "Constant",
    "DecaySignal",
    "Grid",
    "HomogeneousPeriodic",
    "ModelParams",
    "PeriodicSignal",
    "SeparablePerturbed",
    "eval_source",
    "integral",
    "l2_norm_sq",
    "OdeState",
    "SplitOdeState",
    "equilibrium_constant_f",
    "find_periodic_orbit_a_pos",
    "integrate_ode",
    "integrate_split_ode",
    "period_map",
    "periodic_initials_a0",
    "r_min_a0",
    "r_min_a_pos",
    "PdeState",
    "SchemeConfig",
    "run",
    "spatial_order_check",
    "step",
    "step_split",
    "load_config",
    "parse_config",
    "run_scenario",
    "write_series",
]
