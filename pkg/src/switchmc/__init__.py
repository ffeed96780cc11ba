"""Monte Carlo toolkit for regime-switching jump diffusions in balls."""
__version__ = "0.1.0"

from .analytics import Ball, brownian_green, green_ball
from .combinatorics import SwitchGraph, enumerate_paths, h_series, path_weight_sum, reachability
from .engine import PathBatch, SimControls, run_paths, simulate_killed_exit, simulate_switched
from .estimators import (
    MCEstimate,
    estimate_boundary_functional,
    estimate_gq_norm,
    estimate_occupation_green,
    estimate_preswitch_functional,
    estimate_resolvent,
    neumann_partial_sum,
)
from .operator_model import ClassParams, ClassParamsError, CoefficientSet, validate_class
from .presets import build_preset, list_presets, make_preset, scaled_preset

__all__ = [
    "Ball",
    "ClassParams",
    "ClassParamsError",
    "CoefficientSet",
    "MCEstimate",
    "PathBatch",
    "SimControls",
    "SwitchGraph",
    "brownian_green",
    "build_preset",
    "enumerate_paths",
    "estimate_boundary_functional",
    "estimate_gq_norm",
    "estimate_occupation_green",
    "estimate_preswitch_functional",
    "estimate_resolvent",
    "green_ball",
    "h_series",
    "list_presets",
    "make_preset",
    "neumann_partial_sum",
    "path_weight_sum",
    "reachability",
    "run_paths",
    "scaled_preset",
    "simulate_killed_exit",
    "simulate_switched",
    "validate_class",
]
