"""Finite-difference simulation of the closed-loop beam system."""
from .grid import BeamState, Grid, TraceVector
from .kernels import BACKENDS, DEFAULT_BACKEND
from .operators import (
    ClosedLoopModel,
    boundary_traces,
    closure_tip_mass,
    control_first_order,
    eta_rhs,
    fourth_difference,
    get_model,
    spatial_operator,
    tip_acceleration,
)
from .simulate import Trajectory, read_boundary_csv, simulate, write_boundary_csv, write_state_csv
from .stepper import ExponentialStepper, Stepper, get_stepper, step

__all__ = [
    "BACKENDS", "DEFAULT_BACKEND", "BeamState", "ExponentialStepper", "ClosedLoopModel", "Grid", "Stepper", "TraceVector",
    "Trajectory", "boundary_traces", "closure_tip_mass", "control_first_order", "eta_rhs",
    "fourth_difference", "get_model", "get_stepper", "read_boundary_csv", "simulate",
    "spatial_operator", "step", "tip_acceleration", "write_boundary_csv", "write_state_csv",
]
