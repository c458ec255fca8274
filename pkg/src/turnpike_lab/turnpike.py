"""Distance of the finite-horizon optimum from the static optimum, envelope fits, horizon sweeps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import TimeGrid
from .ensemble import Ensemble, expect
from .errors import GridMismatch
from .evolutionary import EvolutionaryProblem, EvolutionarySolution, SolverOptions, solve_evolutionary
from .stationary import StationarySolution, solve_stationary

MIN_FIT_NODES = 5


@dataclass(eq=False)
class TurnpikeReport:
    grid: TimeGrid
    d_state: np.ndarray
    d_adjoint: np.ndarray
    d_control: np.ndarray
    K_fit: float = math.nan
    delta_fit: float = math.nan
    max_residual: float = math.nan
    window: tuple = (0.1, 0.5)
    degenerate: bool = False

    @property
    def d_total(self) -> np.ndarray:
        return self.d_state + self.d_adjoint + self.d_control

    def envelope(self) -> np.ndarray:
        return self.K_fit * _envelope_shape(self.grid.nodes, self.grid.T, self.delta_fit)

    def fit_summary(self) -> dict:
        return {
            "K": float(self.K_fit),
            "delta": float(self.delta_fit),
            "max_residual": float(self.max_residual),
            "window": [float(w) for w in self.window],
            "degenerate": self.degenerate,
        }


@dataclass(eq=False)
class HorizonSweep:
    horizons: list
    avg_state_err: np.ndarray
    avg_control_err: np.ndarray
    iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)


def _ensemble_norms(ens: Ensemble, diff: np.ndarray) -> np.ndarray:
    """Weighted L^2(Omega) norm at every node of an (S, K+1, n) difference."""
    return np.sqrt(np.maximum(expect(ens, np.sum(diff * diff, axis=2)), 0.0))


def turnpike_distances(evo: EvolutionarySolution, stat: StationarySolution, ens: Ensemble,
                       grid: TimeGrid) -> TurnpikeReport:
    if evo.x.grid != grid or evo.phi.grid != grid or evo.u.shape[0] != grid.n_steps + 1:
        raise GridMismatch("evolutionary solution lives on a different grid")
    if stat.x_s.shape != (ens.size, ens.n):
        raise GridMismatch("stationary solution belongs to a different ensemble")
    d_state = _ensemble_norms(ens, evo.x.values - stat.x_s[:, None, :])
    d_adjoint = _ensemble_norms(ens, evo.phi.values - stat.phi_s[:, None, :])
    d_control = np.linalg.norm(evo.u - stat.u_s[None, :], axis=1)
    return TurnpikeReport(grid, d_state, d_adjoint, d_control)


def _envelope_shape(t: np.ndarray, T: float, delta: float) -> np.ndarray:
    return np.exp(-delta * t) + np.exp(-delta * (T - t))


def fit_envelope(report: TurnpikeReport, window: tuple[float, float] = (0.1, 0.5)) -> TurnpikeReport:
    """Fit ``d_total(t) <= K (exp(-delta t) + exp(-delta (T - t)))``.

    delta comes from a least-squares fit of ``log d_total`` by
    ``log K + log(exp(-delta t) + exp(-delta (T - t)))`` over the window
    ``[window[0] T, window[1] T]``, restricted to nodes where d_total is
    strictly decreasing (the plain log-slope seeds the search). K is then the
    smallest constant with the envelope above d_total at every node, so the
    largest residual is never positive. Fewer than five usable nodes marks
    the fit degenerate.
    """
    grid = report.grid
    T = grid.T
    t = grid.nodes
    d = report.d_total
    if not np.any(d > 0):
        raise ValueError("d_total vanishes identically; nothing to fit")
    lo, hi = window[0] * T, window[1] * T
    decreasing = np.zeros_like(d, dtype=bool)
    decreasing[1:] = d[1:] < d[:-1]
    mask = (t >= lo - 1e-12 * T) & (t <= hi + 1e-12 * T) & decreasing & (d > 0)
    degenerate = np.count_nonzero(mask) < MIN_FIT_NODES
    delta = 0.0
    if not degenerate:
        tw, logd = t[mask], np.log(d[mask])
        slope = float(np.polyfit(tw, logd, 1)[0])
        seed = max(-slope, 0.0)

        def misfit(delta_: float) -> float:
            resid = logd - np.log(_envelope_shape(tw, T, delta_))
            resid -= resid.mean()
            return float(resid @ resid)

        upper = 4.0 * seed + 1.0
        res = minimize_scalar(misfit, bounds=(0.0, upper), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, upper), "maxiter": 500})
        delta = float(res.x) if misfit(res.x) <= misfit(seed) else seed
        delta = max(delta, 0.0)
    env = _envelope_shape(t, T, delta)
    K = float(np.max(d / env))
    K *= 1.0 + 4 * np.finfo(float).eps   # keep d - K*env <= 0 under rounding
    report.K_fit = K
    report.delta_fit = delta
    report.max_residual = float(np.max(d - K * env))
    report.window = tuple(window)
    report.degenerate = bool(degenerate)
    return report


def turnpike_report(problem: EvolutionaryProblem, opts: SolverOptions = SolverOptions(),
                    window: tuple[float, float] = (0.1, 0.5), stat: StationarySolution | None = None):
    """Solve both problems and return ``(report, evo, stat)`` with a fitted envelope."""
    if stat is None:
        stat = solve_stationary(problem.ens, problem.z)
    evo = solve_evolutionary(problem, opts)
    rep = turnpike_distances(evo, stat, problem.ens, problem.grid)
    if np.any(rep.d_total > 0):
        fit_envelope(rep, window)
    return rep, evo, stat


def worker_count() -> int:
    raw = os.environ.get("TURNPIKE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def time_averages(evo: EvolutionarySolution, stat: StationarySolution, ens: Ensemble) -> tuple[float, float]:
    grid = evo.x.grid
    mean_x = grid.integrate(np.swapaxes(evo.x.values, 0, 1)) / grid.T     # (S, n)
    mean_u = grid.integrate(evo.u) / grid.T
    return ens.norm(mean_x - stat.x_s), float(np.linalg.norm(mean_u - stat.u_s))


def sweep_horizons(base: EvolutionaryProblem, horizons: Sequence[float], steps_per_unit: float,
                   opts: SolverOptions = SolverOptions(), stat: StationarySolution | None = None) -> HorizonSweep:
    """Time-averaged distances to the static optimum for a list of increasing horizons.

    Each horizon uses ``ceil(T * steps_per_unit)`` steps. Horizons are solved
    concurrently when TURNPIKE_THREADS > 1; results keep the input order.
    """
    horizons = [float(T) for T in horizons]
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly increasing")
    if stat is None:
        stat = solve_stationary(base.ens, base.z)

    def one(T: float):
        prob = base.with_horizon(T, max(2, math.ceil(T * steps_per_unit - 1e-9)))
        evo = solve_evolutionary(prob, opts)
        return time_averages(evo, stat, base.ens) + (evo.iterations, evo.converged)

    workers = min(worker_count(), len(horizons))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, horizons))
    else:
        rows = [one(T) for T in horizons]
    return HorizonSweep(
        horizons=horizons,
        avg_state_err=np.array([r[0] for r in rows]),
        avg_control_err=np.array([r[1] for r in rows]),
        iterations=[r[2] for r in rows],
        converged=[r[3] for r in rows],
    )
