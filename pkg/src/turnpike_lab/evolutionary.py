"""Finite-horizon tracking problem with averaged observations.

The discrete problem is: controls ``u_k`` on the nodes of a uniform grid,
states from :func:`~turnpike_lab.dynamics.integrate_forward`, and cost

    J(u) = 1/2 Trap[ |u|^2 + |E[C x] - z|^2 ] + (x(T), phi_T)_w

with the trapezoid rule on the nodes. ``J`` is a strictly convex quadratic
in the node values, so gradient descent (Barzilai-Borwein with Armijo
safeguard) and conjugate gradients on the normal equations must land on
the same minimiser.

Gradients are taken with respect to the h-weighted inner product
``<a, b>_h = h sum_k a_k . b_k``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .dynamics import (
    EnsembleTrajectory,
    StepOperators,
    TimeGrid,
    adjoint_multipliers,
    integrate_adjoint,
    integrate_forward,
    observation_residual,
    per_sample,
    step_operators,
)
from .ensemble import Ensemble, expect
from .errors import CgStalled, DimensionMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EvolutionaryProblem:
    ens: Ensemble
    grid: TimeGrid
    x0: np.ndarray
    z: np.ndarray
    phi_T: np.ndarray
    scheme: str = "midpoint"

    def __post_init__(self):
        object.__setattr__(self, "x0", per_sample(self.ens, self.x0, self.ens.n, "x0"))
        object.__setattr__(self, "phi_T", per_sample(self.ens, self.phi_T, self.ens.n, "phi_T"))
        z = np.asarray(self.z, dtype=float)
        if z.shape != (self.ens.p,):
            raise DimensionMismatch(f"target z must have shape ({self.ens.p},), got {z.shape}")
        object.__setattr__(self, "z", z)

    @cached_property
    def ops(self) -> StepOperators:
        return step_operators(self.ens, self.grid.h, self.scheme)

    @cached_property
    def homogeneous(self) -> "EvolutionaryProblem":
        """Same dynamics with x0 = 0, z = 0, phi_T = 0: its gradient is the Hessian action."""
        hom = replace(self, x0=np.zeros_like(self.x0), z=np.zeros_like(self.z), phi_T=np.zeros_like(self.phi_T))
        hom.__dict__["ops"] = self.ops
        return hom

    def with_horizon(self, T: float, n_steps: int) -> "EvolutionaryProblem":
        return replace(self, grid=TimeGrid(T, n_steps))

    def zero_control(self) -> np.ndarray:
        return np.zeros((self.grid.n_steps + 1, self.ens.m))


@dataclass(frozen=True)
class SolverOptions:
    tol_rel_grad: float = 1e-8
    max_iters: int = 5000
    method: str = "bb-armijo"
    armijo_c: float = 1e-4
    bb_min: float = 1e-8
    bb_max: float = 1e8
    cg_tol: float = 1e-12

    def __post_init__(self):
        if not self.tol_rel_grad > 0:
            raise ValueError("tol_rel_grad must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.method not in ("bb-armijo", "cg"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.bb_min <= self.bb_max:
            raise ValueError("need 0 < bb_min <= bb_max")


@dataclass(eq=False)
class EvolutionarySolution:
    u: np.ndarray
    x: EnsembleTrajectory
    phi: EnsembleTrajectory
    cost: float
    grad_norm: float
    iterations: int
    converged: bool
    method: str
    initial_grad_norm: float = math.nan
    cost_history: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "cost": self.cost,
            "grad_norm": self.grad_norm,
            "initial_grad_norm": self.initial_grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
        }


def inner_h(grid: TimeGrid, a: np.ndarray, b: np.ndarray) -> float:
    return grid.h * float(np.vdot(a, b))


def norm_h(grid: TimeGrid, a: np.ndarray) -> float:
    return math.sqrt(max(inner_h(grid, a, a), 0.0))


def _state(p: EvolutionaryProblem, u) -> EnsembleTrajectory:
    return integrate_forward(p.ens, p.grid, u, p.x0, scheme=p.scheme, ops=p.ops)


def _cost_of_state(p: EvolutionaryProblem, u: np.ndarray, x: EnsembleTrajectory) -> float:
    r = observation_residual(p.ens, x, p.z)
    running = np.sum(u * u, axis=1) + np.sum(r * r, axis=1)
    terminal = p.ens.inner(x.final, p.phi_T)
    return 0.5 * float(p.grid.integrate(running)) + terminal


def _gradient_of_state(p: EvolutionaryProblem, u: np.ndarray, x: EnsembleTrajectory) -> np.ndarray:
    lam = adjoint_multipliers(p.ens, p.grid, x, p.z, p.phi_T, scheme=p.scheme, ops=p.ops)
    bt_lam = expect(p.ens, np.einsum("snm,skn->skm", p.ens.B, lam))   # (K+1, m); row 0 is zero
    theta = p.grid.trapezoid_weights
    g = theta[:, None] * u
    g[:-1] += p.ops.a * bt_lam[1:]
    g[1:] += p.ops.b * bt_lam[1:]
    return g


def cost(p: EvolutionaryProblem, u) -> float:
    u = np.asarray(u, dtype=float)
    return _cost_of_state(p, u, _state(p, u))


def gradient(p: EvolutionaryProblem, u) -> np.ndarray:
    """Exact gradient of the discrete cost in the h-weighted control inner product.

    Component k equals ``theta_k u_k + E[B^T (a lam_{k+1} + b lam_k)]`` with the
    step multipliers of :func:`~turnpike_lab.dynamics.adjoint_multipliers`;
    for the midpoint rule this is ``theta_k (u_k + E[B^T phi_k])`` where the
    node adjoint is the average of the two neighbouring step multipliers.
    """
    u = np.asarray(u, dtype=float)
    return _gradient_of_state(p, u, _state(p, u))


def hessian_apply(p: EvolutionaryProblem, v) -> np.ndarray:
    """``H v = gradient(u + v) - gradient(u)``, evaluated on the homogeneous problem."""
    return gradient(p.homogeneous, v)


def curvature(p: EvolutionaryProblem, d: np.ndarray) -> float:
    """``<d, H d>_h``: the exact second-order term of J along d (one homogeneous forward run)."""
    hom = p.homogeneous
    dx = _state(hom, d)
    cdx = observation_residual(p.ens, dx, np.zeros(p.ens.p))
    return float(p.grid.integrate(np.sum(d * d, axis=1) + np.sum(cdx * cdx, axis=1)))


def _finish(p: EvolutionaryProblem, u: np.ndarray, iterations: int, converged: bool, method: str,
            g0n: float, history: list) -> EvolutionarySolution:
    x = _state(p, u)
    g = _gradient_of_state(p, u, x)
    phi = integrate_adjoint(p.ens, p.grid, x, p.z, p.phi_T, scheme=p.scheme, ops=p.ops)
    return EvolutionarySolution(
        u=u, x=x, phi=phi, cost=_cost_of_state(p, u, x), grad_norm=norm_h(p.grid, g),
        iterations=iterations, converged=converged, method=method,
        initial_grad_norm=g0n, cost_history=history,
    )


def solve_evolutionary(p: EvolutionaryProblem, opts: SolverOptions = SolverOptions()) -> EvolutionarySolution:
    """Minimise J from u = 0 by Barzilai-Borwein steps with Armijo backtracking.

    Stops when ``|g|_h <= tol_rel_grad * max(1, |g(0)|_h)``. On hitting
    ``max_iters`` the last (lowest-cost) iterate comes back with
    ``converged=False``.
    """
    if opts.method == "cg":
        return solve_kkt_oracle(p, opts)
    grid = p.grid
    u = p.zero_control()
    x = _state(p, u)
    J = _cost_of_state(p, u, x)
    g = _gradient_of_state(p, u, x)
    gn = g0n = norm_h(grid, g)
    target = opts.tol_rel_grad * max(1.0, g0n)
    history = [J]
    step_bb = 1.0
    it = 0
    while gn > target and it < opts.max_iters:
        it += 1
        d = -g
        slope = -gn * gn
        q = curvature(p, d)
        step = min(max(step_bb, opts.bb_min), opts.bb_max)
        # J is quadratic, so J(u + t d) - J(u) = t*slope + t^2 q / 2 exactly; backtrack on that
        while step * slope + 0.5 * step * step * q > opts.armijo_c * step * slope:
            step *= 0.5
        s = step * d
        u = u + s
        x = _state(p, u)
        g_new = _gradient_of_state(p, u, x)
        J = _cost_of_state(p, u, x)
        history.append(J)
        y = g_new - g
        sy = inner_h(grid, s, y)
        step_bb = inner_h(grid, s, s) / sy if sy > 0 else opts.bb_max
        g = g_new
        gn = norm_h(grid, g)
    converged = gn <= target
    if not converged:
        log.warning("BB/Armijo stopped after %d iterations with |g|_h = %.3e > %.3e", it, gn, target)
    return _finish(p, u, it, converged, "bb-armijo", g0n, history)


def solve_kkt_oracle(p: EvolutionaryProblem, opts: SolverOptions = SolverOptions()) -> EvolutionarySolution:
    """Matrix-free conjugate gradients on ``H u = -g(0)``.

    Independent of the descent path: only Hessian actions of the homogeneous
    problem and one gradient at zero are used.
    """
    grid = p.grid
    b = gradient(p, p.zero_control())
    bn = norm_h(grid, b)
    u = p.zero_control()
    r = -b
    d = r.copy()
    rr = inner_h(grid, r, r)
    max_iter = 10 * b.size
    it = 0
    while math.sqrt(rr) > opts.cg_tol * bn:
        if it >= max_iter:
            raise CgStalled(f"CG residual {math.sqrt(rr):.3e} after {it} iterations (target {opts.cg_tol * bn:.3e})")
        it += 1
        Hd = hessian_apply(p, d)
        dHd = inner_h(grid, d, Hd)
        if not dHd > 0:
            raise CgStalled(f"non-positive curvature {dHd:.3e} at iteration {it}")
        alpha = rr / dHd
        u = u + alpha * d
        r = r - alpha * Hd
        rr_new = inner_h(grid, r, r)
        d = r + (rr_new / rr) * d
        rr = rr_new
    return _finish(p, u, it, True, "cg", bn, [])
