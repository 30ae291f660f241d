"""Radial finite-volume laboratory for parabolic-elliptic chemotaxis with logistic source.

    u_t = eps Lap u - div(u grad v) + kappa u - mu u^2,    0 = Lap v - v + u

on a ball with no-flux boundaries.  The package simulates radial solutions
and checks, record by record, the a priori bounds such solutions obey.
"""
from .elliptic import estimate_elliptic_constant, solve_v
from .evolution import SimState, load_checkpoint, save_checkpoint, simulate, stable_dt, step
from .grid import RadialGrid, build_grid, integrate, lp_norm, make_initial_data
from .harness import (
    CheckMatrix,
    InitialSpec,
    Scenario,
    blowup_scan,
    calibrate_constants,
    canonical_scenarios,
    check_step,
    eps_sweep,
    run_scenario,
    run_theorem_suite,
)
from .params import ModelParams

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "RadialGrid",
    "build_grid",
    "integrate",
    "lp_norm",
    "make_initial_data",
    "ModelParams",
    "solve_v",
    "estimate_elliptic_constant",
    "SimState",
    "step",
    "stable_dt",
    "simulate",
    "save_checkpoint",
    "load_checkpoint",
    "CheckMatrix",
    "InitialSpec",
    "Scenario",
    "check_step",
    "run_scenario",
    "run_theorem_suite",
    "canonical_scenarios",
    "eps_sweep",
    "blowup_scan",
    "calibrate_constants",
]
