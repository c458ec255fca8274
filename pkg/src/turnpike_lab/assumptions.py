"""Numerical checks of the coercivity hypotheses on the weighted ensemble space.

Every check assembles a linear operator ``L`` on stacked ensemble vectors
``v = (v_1, ..., v_S)`` and asks for the largest ``alpha`` with
``(L v, v)_w >= alpha |v|_w^2``. With ``D = diag(w_i I_n)`` the similarity
``L~ = D^{1/2} L D^{-1/2}`` turns the weighted form into a Euclidean one, so
``alpha`` is the smallest eigenvalue of the symmetric part of ``L~`` and the
matching eigenvector (mapped back by ``D^{-1/2}``) is a witness.

Gain scans search a finite grid only: a failing scan does not prove that no
gain exists.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .dynamics import TimeGrid, closed_loop_forward
from .ensemble import Ensemble, expect
from .errors import DimensionMismatch, DoubleVariantRequiresSquareB, TooManyGainEntries
from .numerics import sym_eig_min, sym_part

CONSTANT_LOOP_TOL = 1e-10
DECAY_TOL = 1e-10


@dataclass(eq=False)
class CheckReport:
    variant: str
    alpha: float
    passed: bool
    witness: np.ndarray          # (S, n) ensemble vector attaining alpha
    gain_used: np.ndarray        # (S, rows, cols)
    exhaustive: bool = True
    note: str = ""
    quotient: Callable[[np.ndarray], float] | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        out = {
            "variant": self.variant,
            "alpha": self.alpha,
            "passed": self.passed,
            "witness": self.witness.tolist(),
            "gain_used": self.gain_used.tolist(),
            "exhaustive": self.exhaustive,
        }
        if self.note:
            out["note"] = self.note
        return out


def gain_stack(ens: Ensemble, K, rows: int, cols: int, name: str = "K") -> np.ndarray:
    """Normalise a gain given as a scalar, one shared matrix, or one matrix per sample."""
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        if rows != cols:
            raise DimensionMismatch(f"{name}: a scalar gain needs a square role, got {rows}x{cols}")
        K = K * np.eye(rows)
    if K.ndim == 1 and K.size == ens.size and rows == cols == 1:
        K = K.reshape(ens.size, 1, 1)
    if K.ndim == 2:
        K = np.broadcast_to(K, (ens.size,) + K.shape)
    if K.shape != (ens.size, rows, cols):
        raise DimensionMismatch(f"{name} must be ({rows}, {cols}) or ({ens.size}, {rows}, {cols}), got {K.shape}")
    return np.array(K)


def _blockdiag(blocks: np.ndarray) -> np.ndarray:
    return scipy.linalg.block_diag(*blocks)


def _weight_diag(ens: Ensemble) -> np.ndarray:
    return np.repeat(ens.weights, ens.n)


def _rayleigh(ens: Ensemble, L: np.ndarray) -> Callable[[np.ndarray], float]:
    d = _weight_diag(ens)

    def quotient(v: np.ndarray) -> float:
        flat = np.asarray(v, dtype=float).reshape(-1)
        return float(flat @ (d * (L @ flat))) / float(flat @ (d * flat))

    return quotient


def _similar_sym(ens: Ensemble, L: np.ndarray) -> np.ndarray:
    sq = np.sqrt(_weight_diag(ens))
    return sym_part(sq[:, None] * L / sq[None, :])


def _coercivity_report(ens: Ensemble, L: np.ndarray, variant: str, gains: np.ndarray) -> CheckReport:
    lam, y = sym_eig_min(_similar_sym(ens, L))
    witness = (y / np.sqrt(_weight_diag(ens))).reshape(ens.size, ens.n)
    return CheckReport(variant, lam, lam > 0, witness, gains, quotient=_rayleigh(ens, L))


def a1_operator(ens: Ensemble, K) -> np.ndarray:
    """``(L v)_i = A_i v_i + K_i sum_j w_j K_j C_j v_j`` as a dense (Sn, Sn) matrix."""
    if ens.p != ens.n:
        raise DimensionMismatch(f"the averaged-detectability form needs p = n, got p = {ens.p}, n = {ens.n}")
    K = gain_stack(ens, K, ens.n, ens.n, "K_C")
    row = np.concatenate([ens.weights[j] * K[j] @ ens.C[j] for j in range(ens.size)], axis=1)
    return _blockdiag(ens.A) + K.reshape(-1, ens.n) @ row


def a2_operator(ens: Ensemble, K, variant: str = "single") -> np.ndarray:
    """Stabilisability-on-average operator built on (A^T, B^T).

    single: ``(L v)_i = A_i^T v_i + K_i sum_j w_j B_j^T v_j`` with K_i of size n x m.
    double: ``(L v)_i = A_i^T v_i + K_i sum_j w_j K_j B_j^T v_j``, only when m = n.
    """
    At = np.swapaxes(ens.A, 1, 2)
    Bt = np.swapaxes(ens.B, 1, 2)
    if variant == "single":
        K = gain_stack(ens, K, ens.n, ens.m, "K_B")
        row = np.concatenate([ens.weights[j] * Bt[j] for j in range(ens.size)], axis=1)
        return _blockdiag(At) + K.reshape(-1, ens.m) @ row
    if variant == "double":
        if ens.m != ens.n:
            raise DoubleVariantRequiresSquareB(f"double application needs m = n, got m = {ens.m}, n = {ens.n}")
        K = gain_stack(ens, K, ens.n, ens.n, "K_B")
        row = np.concatenate([ens.weights[j] * K[j] @ Bt[j] for j in range(ens.size)], axis=1)
        return _blockdiag(At) + K.reshape(-1, ens.n) @ row
    raise ValueError(f"unknown variant {variant!r}")


def a0_operator(ens: Ensemble, K) -> np.ndarray:
    K = gain_stack(ens, K, ens.n, ens.p, "K_C")
    return _blockdiag(ens.A + K @ ens.C)


def check_A1(ens: Ensemble, K) -> CheckReport:
    """Detectability on average for the gain ``K`` (n x n per sample)."""
    gains = gain_stack(ens, K, ens.n, ens.n, "K_C") if ens.p == ens.n else None
    L = a1_operator(ens, K)
    return _coercivity_report(ens, L, "A1", gains)


def check_A2(ens: Ensemble, K, variant: str = "single") -> CheckReport:
    L = a2_operator(ens, K, variant)
    cols = ens.m if variant == "single" else ens.n
    return _coercivity_report(ens, L, f"A2-{variant}", gain_stack(ens, K, ens.n, cols, "K_B"))


def check_A0(ens: Ensemble, K) -> CheckReport:
    """Per-sample detectability with a common constant: min_i lambda_min(sym(A_i + K_i C_i))."""
    gains = gain_stack(ens, K, ens.n, ens.p, "K_C")
    closed = ens.A + gains @ ens.C
    best = (math.inf, None, -1)
    for i in range(ens.size):
        lam, vec = sym_eig_min(sym_part(closed[i]))
        if lam < best[0]:
            best = (lam, vec, i)
    lam, vec, i = best
    witness = np.zeros((ens.size, ens.n))
    witness[i] = vec
    return CheckReport("A0", lam, lam > 0, witness, gains, quotient=_rayleigh(ens, _blockdiag(closed)))


def stationary_coercivity(ens: Ensemble, side: str = "AC") -> float:
    """Largest alpha with ``alpha |v|_w^2 <= |A v|_w^2 + |E[C v]|^2`` (side AB: A^T and B^T).

    Since (a + b)^2 >= a^2 + b^2 this alpha also certifies
    ``alpha |v|_w <= |A v|_w + |E[C v]|``.
    """
    if side == "AC":
        A, C = ens.A, ens.C
    elif side == "AB":
        A, C = np.swapaxes(ens.A, 1, 2), np.swapaxes(ens.B, 1, 2)
    else:
        raise ValueError(f"side must be 'AC' or 'AB', got {side!r}")
    w = ens.weights
    gram = _blockdiag(np.stack([w[i] * A[i].T @ A[i] for i in range(ens.size)]))
    W = np.concatenate([w[i] * C[i] for i in range(ens.size)], axis=1)
    gram = gram + W.T @ W
    sq = np.sqrt(_weight_diag(ens))
    lam, _ = sym_eig_min(sym_part(gram / sq[:, None] / sq[None, :]))
    return math.sqrt(max(lam, 0.0))


def _closed_loop_matrices(ens: Ensemble, K, side: str) -> tuple[np.ndarray, np.ndarray]:
    if side == "C":
        gains = gain_stack(ens, K, ens.n, ens.p, "K_C")
        return ens.A + gains @ ens.C, gains
    if side == "B":
        gains = gain_stack(ens, K, ens.n, ens.m, "K_B")
        return np.swapaxes(ens.A, 1, 2) + gains @ np.swapaxes(ens.B, 1, 2), gains
    raise ValueError(f"side must be 'C' or 'B', got {side!r}")


def check_complementary(ens: Ensemble, K, side: str = "C", *, trials: int = 10_000, seed: int = 0) -> CheckReport:
    """Averaged-decay hypothesis ``(M v, E[v])_w >= alpha |E[v]|^2`` with ``M_i = A_i + K_i C_i``.

    For fixed E[v] the form is affine in the mean-zero fluctuation of v, so it
    can only be bounded below when M_i does not depend on the sample; then
    alpha = lambda_min(sym(M)). Otherwise a seeded random search looks for
    violating v and the report is marked non-exhaustive.
    """
    closed, gains = _closed_loop_matrices(ens, K, side)
    w = ens.weights
    variant = f"complementary-{side}"

    def quotient(v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        mv = np.einsum("sij,sj->si", closed, v)
        ev = expect(ens, v)
        return float(expect(ens, mv) @ ev) / float(ev @ ev)

    spread = float(np.max(np.abs(closed - closed[0])))
    if spread <= CONSTANT_LOOP_TOL:
        lam, vec = sym_eig_min(sym_part(closed[0]))
        witness = np.tile(vec, (ens.size, 1))
        return CheckReport(variant, lam, lam > 0, witness, gains, quotient=quotient)

    rng = np.random.default_rng(seed)
    mean = rng.standard_normal((trials, ens.n))
    mean /= np.linalg.norm(mean, axis=1, keepdims=True)
    fluct = rng.standard_normal((trials, ens.size, ens.n))
    fluct -= np.einsum("s,tsn->tn", w, fluct)[:, None, :]
    scale = 10.0 ** rng.uniform(-1.0, 3.0, size=(trials, 1, 1))
    v = mean[:, None, :] + scale * fluct
    ev = np.einsum("s,tsn->tn", w, v)
    mv = np.einsum("s,tsn->tn", w, np.einsum("sij,tsj->tsi", closed, v))
    ratios = np.einsum("tn,tn->t", mv, ev) / np.einsum("tn,tn->t", ev, ev)
    t = int(np.argmin(ratios))
    witness = v[t]
    alpha = quotient(witness)
    return CheckReport(
        variant, alpha, alpha > 0, witness, gains, exhaustive=False,
        note=f"closed loop varies across samples (spread {spread:.3e}); randomized falsification over {trials} vectors",
        quotient=quotient,
    )


@dataclass(frozen=True)
class DecayCheck:
    holds: bool
    min_slack: float
    observed_rate: float
    alpha: float


def verify_average_decay(ens: Ensemble, K, grid: TimeGrid, x0, alpha: float, *,
                         scheme: str = "midpoint") -> DecayCheck:
    """Simulate the closed loop and test ``|E x(t)|^2 <= exp(-alpha t) |E x0|^2`` at every node.

    ``observed_rate`` is the least-squares decay rate of ``|E x(t)|^2``
    (NaN when the mean is identically zero).
    """
    traj = closed_loop_forward(ens, K, grid, x0, scheme=scheme)
    mean = traj.mean(ens)
    sq = np.sum(mean * mean, axis=1)
    t = grid.nodes
    bound = np.exp(-alpha * t) * sq[0]
    slack = bound - sq
    usable = sq > 1e-300
    rate = math.nan
    if np.count_nonzero(usable) >= 2:
        rate = -float(np.polyfit(t[usable], np.log(sq[usable]), 1)[0])
    min_slack = float(np.min(slack))
    return DecayCheck(bool(np.all(slack >= -DECAY_TOL)), min_slack, rate, alpha)


def state_energy_constant(ens: Ensemble, alpha: float, K=None) -> float:
    """Constant of the state energy bound under detectability on average.

    ``|x(t)|_w^2 <= K1 int_0^t (|u|^2 + |E[C x]|^2) + |x0|_w^2`` holds with
    ``K1 = (2/alpha) max(|B|^2, |K|^4)`` when the coercivity constant alpha
    belongs to a sample-independent gain K (Young's inequality with both
    splitting parameters alpha/2).
    """
    if not alpha > 0:
        raise ValueError("energy bound needs a positive coercivity constant")
    b2 = max(float(np.linalg.norm(ens.B[i], 2)) ** 2 for i in range(ens.size))
    k4 = 0.0
    if K is not None:
        K = np.asarray(K, dtype=float)
        if K.ndim == 3:
            if float(np.max(np.abs(K - K[0]))) > 0.0:
                raise ValueError("energy constant is only available for a sample-independent gain")
            K = K[0]
        k4 = float(np.linalg.norm(np.atleast_2d(K), 2)) ** 4
    return 2.0 / alpha * max(b2, k4)


_CHECKS = ("A1", "A2", "A0")


def _gain_shape(ens: Ensemble, which: str) -> tuple[int, int]:
    if which == "A1":
        if ens.p != ens.n:
            raise DimensionMismatch("A1 scan needs p = n")
        return ens.n, ens.n
    if which == "A2":
        return ens.n, ens.m
    if which == "A0":
        return ens.n, ens.p
    raise ValueError(f"which must be one of {_CHECKS}, got {which!r}")


def _operator(ens: Ensemble, which: str, K: np.ndarray) -> np.ndarray:
    if which == "A1":
        return a1_operator(ens, K)
    if which == "A2":
        return a2_operator(ens, K, "single")
    return a0_operator(ens, K)


def _report(ens: Ensemble, which: str, K: np.ndarray) -> CheckReport:
    if which == "A1":
        return check_A1(ens, K)
    if which == "A2":
        return check_A2(ens, K, "single")
    return check_A0(ens, K)


def scan_scalar_feedback(ens: Ensemble, which: str, ranges: Sequence[Sequence[float]] | None = None, *,
                         shared: bool = False, chunk: int = 8192) -> CheckReport:
    """Grid search over gain entries; returns the report with the largest alpha.

    Gain entries are ordered sample-major, then row-major inside each gain
    (``shared=True``: one gain for all samples). ``ranges`` holds one
    ``(lo, hi, step)`` per entry, default ``(-10, 10, 0.05)``. Ties keep the
    first point in lexicographic scan order.
    """
    rows, cols = _gain_shape(ens, which)
    per_gain = rows * cols
    count = per_gain * (1 if shared else ens.size)
    if count > 4:
        raise TooManyGainEntries(f"{which} scan would need {count} gain entries; at most 4 are supported")
    if ranges is None:
        ranges = [(-10.0, 10.0, 0.05)] * count
    if len(ranges) != count:
        raise DimensionMismatch(f"{which} scan needs {count} ranges, got {len(ranges)}")
    axes = []
    for lo, hi, step in ranges:
        if not (np.isfinite(lo) and np.isfinite(hi) and step > 0 and hi >= lo):
            raise ValueError(f"bad scan range ({lo}, {hi}, {step})")
        axes.append(np.linspace(lo, hi, int(round((hi - lo) / step)) + 1))

    def gains_at(point) -> np.ndarray:
        entries = np.asarray(point, dtype=float)
        if shared:
            return np.broadcast_to(entries.reshape(rows, cols), (ens.size, rows, cols))
        return entries.reshape(ens.size, rows, cols)

    best_alpha, best_point = -math.inf, None
    points = itertools.product(*axes)
    while True:
        block = list(itertools.islice(points, chunk))
        if not block:
            break
        mats = np.stack([_similar_sym(ens, _operator(ens, which, gains_at(pt))) for pt in block])
        alphas = np.linalg.eigvalsh(mats)[:, 0]
        j = int(np.argmax(alphas))
        if alphas[j] > best_alpha:
            best_alpha, best_point = float(alphas[j]), block[j]
    report = _report(ens, which, gains_at(best_point))
    report.exhaustive = False
    report.note = (f"best of {int(np.prod([a.size for a in axes]))}-point grid scan; "
                   "a failing scan is not a proof that no gain exists")
    return report
