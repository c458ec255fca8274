"""One-step implicit integration of the ensemble state and adjoint equations.

Every atom evolves by ``x_t + A_i x = B_i u`` with the shared control
``u``. The default scheme is the implicit midpoint rule (one-stage Gauss,
A-stable, order 2); backward Euler is kept for debugging stiff ensembles.
Both are written as

    M_i x_{k+1} = N_i x_k + h B_i (a u_k + b u_{k+1})

and reduced once per atom to the propagators ``P_i = M_i^{-1} N_i`` and
``Q_i = h M_i^{-1} B_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble, expect
from .errors import DimensionMismatch, GridMismatch, SingularMatrix, SingularStepMatrix
from .numerics import lu_factor, lu_solve

SCHEMES = ("midpoint", "backward-euler")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def h(self) -> float:
        return self.T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h

    @property
    def trapezoid_weights(self) -> np.ndarray:
        """theta_k: 1/2 at both ends, 1 inside (node weights of the trapezoid rule divided by h)."""
        theta = np.ones(self.n_steps + 1)
        theta[0] = theta[-1] = 0.5
        return theta

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Trapezoid rule along axis 0 of node values."""
        theta = self.trapezoid_weights
        return self.h * np.tensordot(theta, values, axes=(0, 0))


@dataclass(frozen=True, eq=False)
class EnsembleTrajectory:
    grid: TimeGrid
    values: np.ndarray  # (S, n_steps + 1, n)

    def mean(self, ens: Ensemble) -> np.ndarray:
        return expect(ens, self.values)

    @property
    def final(self) -> np.ndarray:
        return self.values[:, -1, :]


@dataclass(frozen=True, eq=False)
class StepOperators:
    scheme: str
    h: float
    P: np.ndarray     # (S, n, n) one-step propagator M^{-1} N
    Q: np.ndarray     # (S, n, m) control gain h M^{-1} B
    Minv: np.ndarray  # (S, n, n)
    a: float          # weight of the old node in the forcing
    b: float          # weight of the new node


def _scheme_weights(scheme: str) -> tuple[float, float]:
    if scheme == "midpoint":
        return 0.5, 0.5
    if scheme == "backward-euler":
        return 0.0, 1.0
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def step_operators(ens: Ensemble, h: float, scheme: str = "midpoint") -> StepOperators:
    a, b = _scheme_weights(scheme)
    n = ens.n
    eye = np.eye(n)
    S = ens.size
    P = np.empty((S, n, n))
    Q = np.empty((S, n, ens.m))
    Minv = np.empty((S, n, n))
    for i in range(S):
        A = ens.A[i]
        if scheme == "midpoint":
            M, N = eye + 0.5 * h * A, eye - 0.5 * h * A
        else:
            M, N = eye + h * A, eye
        try:
            fac = lu_factor(M)
        except SingularMatrix as exc:
            raise SingularStepMatrix(
                f"sample {i}: step matrix is singular at h = {h:g} ({exc}); try a finer grid"
            ) from exc
        P[i] = lu_solve(M, N, factor=fac)
        Q[i] = h * lu_solve(M, ens.B[i], factor=fac)
        Minv[i] = lu_solve(M, eye, factor=fac)
    return StepOperators(scheme, h, P, Q, Minv, a, b)


def _check_ops(ops: StepOperators | None, ens: Ensemble, grid: TimeGrid, scheme: str) -> StepOperators:
    if ops is None:
        return step_operators(ens, grid.h, scheme)
    if ops.scheme != scheme or not np.isclose(ops.h, grid.h, rtol=1e-14, atol=0.0) or ops.P.shape[0] != ens.size:
        raise GridMismatch("step operators were built for a different grid, scheme or ensemble")
    return ops


def per_sample(ens: Ensemble, v, dim: int, name: str) -> np.ndarray:
    """Broadcast a shared vector, or validate a (S, dim) array of per-sample vectors."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = np.broadcast_to(v, (ens.size, v.size))
    if v.shape != (ens.size, dim):
        raise DimensionMismatch(f"{name} must have shape ({ens.size}, {dim}) or ({dim},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return np.array(v)


def _check_control(u, grid: TimeGrid, m: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_steps + 1, m):
        raise DimensionMismatch(f"control must have shape ({grid.n_steps + 1}, {m}), got {u.shape}")
    return u


def integrate_forward(ens: Ensemble, grid: TimeGrid, u, x0, *, scheme: str = "midpoint",
                      ops: StepOperators | None = None) -> EnsembleTrajectory:
    """State trajectories of every atom under the shared control ``u`` (one row per node)."""
    ops = _check_ops(ops, ens, grid, scheme)
    u = _check_control(u, grid, ens.m)
    x0 = per_sample(ens, x0, ens.n, "x0")
    K = grid.n_steps
    u_mix = ops.a * u[:-1] + ops.b * u[1:]                    # (K, m)
    forcing = np.einsum("sim,km->ski", ops.Q, u_mix)          # (S, K, n)
    x = np.empty((ens.size, K + 1, ens.n))
    x[:, 0] = x0
    P = ops.P
    for k in range(K):
        x[:, k + 1] = np.einsum("sij,sj->si", P, x[:, k]) + forcing[:, k]
    return EnsembleTrajectory(grid, x)


def observation_residual(ens: Ensemble, x: EnsembleTrajectory, z) -> np.ndarray:
    """``E[C x(t_k)] - z`` at every node, shape (n_steps + 1, p)."""
    cx = np.einsum("spn,skn->skp", ens.C, x.values)
    return expect(ens, cx) - np.asarray(z, dtype=float)


def _adjoint_source(ens: Ensemble, x: EnsembleTrajectory, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (ens.p,):
        raise DimensionMismatch(f"target z must have shape ({ens.p},), got {z.shape}")
    r = observation_residual(ens, x, z)                       # sequential expectation first
    return np.einsum("spn,kp->skn", ens.C, r)                 # C_i^T r_k, (S, K+1, n)


def integrate_adjoint(ens: Ensemble, grid: TimeGrid, x: EnsembleTrajectory, z, phi_T, *,
                      scheme: str = "midpoint", ops: StepOperators | None = None) -> EnsembleTrajectory:
    """Backward sweep for ``-phi_t + A^T phi = C^T (E[C x] - z)``, ``phi(T) = phi_T``.

    Uses the same one-step scheme as the state run backwards in time, so it
    coincides with :func:`integrate_forward` applied to the time-reversed
    system with (A, B) replaced by (A^T, C^T).
    """
    if x.grid != grid:
        raise GridMismatch("state trajectory lives on a different grid")
    ops = _check_ops(ops, ens, grid, scheme)
    phi_T = per_sample(ens, phi_T, ens.n, "phi_T")
    s = _adjoint_source(ens, x, z)
    K = grid.n_steps
    h = grid.h
    PT = np.swapaxes(ops.P, 1, 2)
    MinvT = np.swapaxes(ops.Minv, 1, 2)
    src = h * np.einsum("sij,skj->ski", MinvT, ops.b * s[:, :-1] + ops.a * s[:, 1:])
    phi = np.empty_like(x.values)
    phi[:, K] = phi_T
    for k in range(K - 1, -1, -1):
        phi[:, k] = np.einsum("sij,sj->si", PT, phi[:, k + 1]) + src[:, k]
    return EnsembleTrajectory(grid, phi)


def adjoint_multipliers(ens: Ensemble, grid: TimeGrid, x: EnsembleTrajectory, z, phi_T, *,
                        scheme: str = "midpoint", ops: StepOperators | None = None) -> np.ndarray:
    """Exact discrete Lagrange multipliers of the one-step constraints.

    Row ``k`` (k = 1..n_steps) belongs to the step t_{k-1} -> t_k; row 0 is
    unused and zero. They are the transpose of the discrete forward map
    applied to the trapezoid-rule tracking cost plus the terminal pairing,
    so the control gradient built from them is exact for the discrete cost.
    For the midpoint rule, row k approximates phi at t_{k-1/2}.
    """
    if x.grid != grid:
        raise GridMismatch("state trajectory lives on a different grid")
    ops = _check_ops(ops, ens, grid, scheme)
    phi_T = per_sample(ens, phi_T, ens.n, "phi_T")
    s = _adjoint_source(ens, x, z)
    K = grid.n_steps
    h = grid.h
    theta = grid.trapezoid_weights
    PT = np.swapaxes(ops.P, 1, 2)
    MinvT = np.swapaxes(ops.Minv, 1, 2)
    pi = np.zeros_like(x.values)
    pi[:, K] = phi_T + h * theta[K] * s[:, K]
    for k in range(K - 1, 0, -1):
        pi[:, k] = np.einsum("sij,sj->si", PT, pi[:, k + 1]) + h * s[:, k]
    return np.einsum("sij,skj->ski", MinvT, pi)


def closed_loop_forward(ens: Ensemble, K, grid: TimeGrid, x0, *, scheme: str = "midpoint") -> EnsembleTrajectory:
    """Free response of ``x_t + (A_i + K_i C_i) x = 0``; ``K`` is (n, p) or (S, n, p)."""
    K = np.asarray(K, dtype=float)
    if K.ndim == 2:
        K = np.broadcast_to(K, (ens.size,) + K.shape)
    if K.shape != (ens.size, ens.n, ens.p):
        raise DimensionMismatch(f"gain must have shape ({ens.size}, {ens.n}, {ens.p}), got {K.shape}")
    closed = ens.with_matrices(A=ens.A + K @ ens.C)
    u = np.zeros((grid.n_steps + 1, ens.m))
    return integrate_forward(closed, grid, u, x0, scheme=scheme)
