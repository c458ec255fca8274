"""Small dense linear-algebra kernel.

Matrices here are tiny (state dimension of a few units, ensemble-stacked
operators of a few hundred rows), so everything is plain numpy/LAPACK.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotSymmetric, SingularMatrix

PIVOT_RTOL = 1e-14
SYMMETRY_RTOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def lu_factor(a: np.ndarray):
    """Partial-pivot LU of a square matrix, rejecting numerically singular input.

    Returns the ``(lu, piv)`` pair understood by :func:`scipy.linalg.lu_solve`.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"lu_factor needs a square matrix, got {a.shape}")
    scale = max_abs(a)
    if scale == 0.0:
        raise SingularMatrix("matrix is identically zero")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    k = int(np.argmin(pivots))
    if pivots[k] < PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot {k} has magnitude {pivots[k]:.3e} < {PIVOT_RTOL:g} * max|A| = {PIVOT_RTOL * scale:.3e}"
        )
    return lu, piv


def lu_solve(a: np.ndarray, b: np.ndarray, factor=None, trans: int = 0) -> np.ndarray:
    """Solve ``A x = b`` (``trans=1``: ``A^T x = b``); ``b`` may be a vector or a matrix of columns."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has {a.shape[0]}")
    if factor is None:
        factor = lu_factor(a)
    return scipy.linalg.lu_solve(factor, b, trans=trans, check_finite=False)


def sym_eig_min(s: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of a symmetric matrix and a unit eigenvector for it."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"sym_eig_min needs a square matrix, got {s.shape}")
    scale = max_abs(s)
    asym = max_abs(s - s.T)
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"max|S - S^T| = {asym:.3e} exceeds {SYMMETRY_RTOL:g} * max|S|")
    sym = 0.5 * (s + s.T)
    vals, vecs = np.linalg.eigh(sym)
    v = vecs[:, 0]
    # sign convention: largest-magnitude component positive, for reproducible witnesses
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return float(vals[0]), v


def sym_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


# Pade(6,6) numerator coefficients: c_k = (2q-k)! q! / ((2q)! k! (q-k)!), q = 6
_PADE6 = (1.0, 1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280)


def mat_exp(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-t A)`` by scaling and squaring with a diagonal Pade(6,6) approximant.

    Only used as a reference in tests; the integrators never call it.
    """
    a = as_matrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"mat_exp needs a square matrix, got {a.shape}")
    x = -float(t) * a
    n = x.shape[0]
    norm = np.linalg.norm(x, 1)
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        x = x / 2.0**squarings
    eye = np.eye(n)
    num = np.zeros_like(x)
    den = np.zeros_like(x)
    power = eye
    for k, c in enumerate(_PADE6):
        if k:
            power = power @ x
        num += c * power
        den += (-1) ** k * c * power
    r = np.linalg.solve(den, num)
    for _ in range(squarings):
        r = r @ r
    return r
