"""Static counterpart: min 1/2(|u|^2 + |E[C x] - z|^2) s.t. A_i x_i = B_i u."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble, expect
from .errors import DimensionMismatch, SingularMatrix, SingularSample
from .numerics import lu_factor, lu_solve, sym_eig_min


@dataclass(eq=False)
class StationarySolution:
    u_s: np.ndarray     # (m,)
    x_s: np.ndarray     # (S, n)
    phi_s: np.ndarray   # (S, n)
    cost: float
    M: np.ndarray       # (p, m) = E[C A^{-1} B]

    def summary(self, ens: Ensemble) -> dict:
        return {
            "u_s": self.u_s.tolist(),
            "cost": self.cost,
            "consistency_residual": consistency_residual(self, ens),
            "mean_x_s": expect(ens, self.x_s).tolist(),
        }


def solve_stationary(ens: Ensemble, z) -> StationarySolution:
    z = np.asarray(z, dtype=float)
    if z.shape != (ens.p,):
        raise DimensionMismatch(f"target z must have shape ({ens.p},), got {z.shape}")
    factors = []
    gains = np.empty((ens.size, ens.n, ens.m))          # A_i^{-1} B_i
    for i in range(ens.size):
        try:
            fac = lu_factor(ens.A[i])
        except SingularMatrix as exc:
            raise SingularSample(i, str(exc)) from exc
        factors.append(fac)
        gains[i] = lu_solve(ens.A[i], ens.B[i], factor=fac)
    M = expect(ens, ens.C @ gains)
    normal = np.eye(ens.m) + M.T @ M
    u_s = lu_solve(normal, M.T @ z)
    x_s = gains @ u_s
    resid = M @ u_s - z
    phi_s = np.empty((ens.size, ens.n))
    for i, fac in enumerate(factors):
        phi_s[i] = lu_solve(ens.A[i], ens.C[i].T @ resid, factor=fac, trans=1)
    cost = 0.5 * (float(u_s @ u_s) + float(resid @ resid))
    return StationarySolution(u_s, x_s, phi_s, cost, M)


def stationary_cost(ens: Ensemble, z, u) -> float:
    """J^s at an arbitrary control (states from A_i x_i = B_i u)."""
    u = np.asarray(u, dtype=float)
    x = np.stack([np.linalg.solve(ens.A[i], ens.B[i] @ u) for i in range(ens.size)])
    r = expect(ens, np.einsum("spn,sn->sp", ens.C, x)) - np.asarray(z, dtype=float)
    return 0.5 * (float(u @ u) + float(r @ r))


def consistency_residual(sol: StationarySolution, ens: Ensemble) -> float:
    """``|u_s + E[B^T phi_s]|``, zero when the static optimality system is solved."""
    bt_phi = expect(ens, np.einsum("snm,sn->sm", ens.B, sol.phi_s))
    return float(np.linalg.norm(sol.u_s + bt_phi))


def normal_matrix_min_eig(sol: StationarySolution) -> float:
    return sym_eig_min(np.eye(sol.M.shape[1]) + sol.M.T @ sol.M)[0]
