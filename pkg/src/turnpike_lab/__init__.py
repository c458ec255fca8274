"""Turnpike diagnostics for parameter-dependent linear-quadratic tracking with averaged observations."""
from .dynamics import TimeGrid, closed_loop_forward, integrate_adjoint, integrate_forward
from .ensemble import DistributionSpec, Ensemble, ParameterSample, SplitMix64, build_ensemble, expect
from .evolutionary import (
    EvolutionaryProblem,
    SolverOptions,
    cost,
    gradient,
    solve_evolutionary,
    solve_kkt_oracle,
)
from .stationary import consistency_residual, solve_stationary
from .turnpike import fit_envelope, sweep_horizons, turnpike_distances

__all__ = [
    "TimeGrid", "closed_loop_forward", "integrate_adjoint", "integrate_forward",
    "DistributionSpec", "Ensemble", "ParameterSample", "SplitMix64", "build_ensemble", "expect",
    "EvolutionaryProblem", "SolverOptions", "cost", "gradient", "solve_evolutionary", "solve_kkt_oracle",
    "consistency_residual", "solve_stationary",
    "fit_envelope", "sweep_horizons", "turnpike_distances",
]
__version__ = "0.1.0"
