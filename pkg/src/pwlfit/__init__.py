"""Exact least-squares fitting of continuous piecewise-linear functions."""

from .cost import (CONTINUOUS, DISCRETE, Moments, QuadraticForm2, Signal,
                   compute_moments, eval_qf, transition_cost)
from .envelope import Envelope, Interval, Quadratic, intersect
from .oracle import brute_force, fixed_breakpoint_ls
from .solver import (Diagnostics, FitResult, InfeasibleBudgetError,
                     InternalInvariantError, evaluate_fit,
                     instrumentation_report, minimize_out, path_cost, recover,
                     solve_constrained, solve_regularized)

__version__ = "0.1.0"
