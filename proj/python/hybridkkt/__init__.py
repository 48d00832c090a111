"""Interior-point solver for nonlinear programs with hybrid KKT strategies."""

import json

from ._core import (
    BuildError,
    DistillationModel,
    DistillationParams,
    Model,
    SolveReport,
    SolverOptions,
    build_distillation,
    default_params,
    parse_params,
    reference_dimensions,
    report_json,
    solve,
    steady_state_profile,
    strategies,
)

__all__ = [
    "BuildError",
    "DistillationModel",
    "DistillationParams",
    "Model",
    "SolveReport",
    "SolverOptions",
    "build_distillation",
    "default_params",
    "parse_params",
    "reference_dimensions",
    "report",
    "report_json",
    "solve",
    "solve_distillation",
    "steady_state_profile",
    "strategies",
]


def solve_distillation(N, strategy="hykkt", **options):
    """Build the distillation benchmark with N steps and solve it."""
    opts = SolverOptions()
    opts.strategy = strategy
    for key, value in options.items():
        if not hasattr(opts, key):
            raise TypeError(f"unknown solver option {key!r}")
        setattr(opts, key, value)
    instance = build_distillation(N)
    return instance, solve(instance.model, opts)


def report(instance, result, options=None):
    """JSON report of a solve as a dict."""
    return json.loads(report_json(instance, result, options or SolverOptions()))
