"""Finite weighted-atom probability spaces and their matrix ensembles.

An :class:`Ensemble` is a list of atoms ``(w_i, A_i, B_i, C_i)``; the
expectation of an ensemble-indexed quantity is ``sum_i w_i v_i`` summed in
atom order. Random ensembles are drawn from a SplitMix64 stream so that a
``(spec, seed)`` pair reproduces bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroWeight
from .numerics import as_matrix

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
WEIGHT_SUM_TOL = 1e-12


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood), 64-bit state."""

    def __init__(self, seed: int = 0):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def copy(self) -> "SplitMix64":
        return SplitMix64(self.state)


def rng_next_uniform(state: int) -> tuple[int, float]:
    """Functional form: advance ``state`` once, return ``(new_state, u)``."""
    rng = SplitMix64(state)
    u = rng.uniform()
    return rng.state, u


def poisson_inverse_cdf(u: float, lam: float) -> int:
    """Smallest ``k`` with ``P(X <= k) > u`` for ``X ~ Poisson(lam)``.

    Partial sums are formed with ``math.fsum`` (exactly rounded) so the
    result does not depend on accumulation order or platform extended types.
    """
    if not 0.0 < lam <= 50.0:
        raise ValueError(f"Poisson rate must lie in (0, 50], got {lam}")
    pmf = math.exp(-lam)
    terms = [pmf]
    k = 0
    while math.fsum(terms) <= u:
        k += 1
        pmf *= lam / k
        if pmf == 0.0:
            # the tail underflowed; u sits above the representable CDF
            break
        terms.append(pmf)
    return k


def sample_poisson(rng: SplitMix64, lam: float) -> int:
    return poisson_inverse_cdf(rng.uniform(), lam)


@dataclass(frozen=True)
class ParameterSample:
    weight: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Stacked atoms: ``A`` is (S, n, n), ``B`` (S, n, m), ``C`` (S, p, n)."""

    weights: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise DimensionMismatch("ensemble needs a non-empty 1-D weight vector")
        if np.any(w <= 0.0):
            raise ZeroWeight(f"sample {int(np.argmin(w))} has non-positive weight")
        if abs(math.fsum(w) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, expected 1")
        S = w.size
        A, B, C = (np.asarray(x, dtype=float) for x in (self.A, self.B, self.C))
        if A.ndim != 3 or A.shape[0] != S or A.shape[1] != A.shape[2]:
            raise DimensionMismatch(f"A stack has shape {A.shape}, expected ({S}, n, n)")
        n = A.shape[1]
        if B.ndim != 3 or B.shape[:2] != (S, n):
            raise DimensionMismatch(f"B stack has shape {B.shape}, expected ({S}, {n}, m)")
        if C.ndim != 3 or C.shape[0] != S or C.shape[2] != n:
            raise DimensionMismatch(f"C stack has shape {C.shape}, expected ({S}, p, {n})")
        for name, arr in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    @property
    def p(self) -> int:
        return self.C.shape[1]

    @property
    def samples(self) -> list[ParameterSample]:
        return [
            ParameterSample(float(self.weights[i]), self.A[i], self.B[i], self.C[i])
            for i in range(self.size)
        ]

    @classmethod
    def from_samples(cls, samples: Sequence[ParameterSample]) -> "Ensemble":
        if not samples:
            raise DimensionMismatch("ensemble needs at least one sample")
        A = [as_matrix(s.A, "A") for s in samples]
        B = [as_matrix(s.B, "B") for s in samples]
        C = [as_matrix(s.C, "C") for s in samples]
        for i in range(1, len(samples)):
            if A[i].shape != A[0].shape or B[i].shape != B[0].shape or C[i].shape != C[0].shape:
                raise DimensionMismatch(f"sample {i} dimensions differ from sample 0")
        return cls(np.array([s.weight for s in samples], dtype=float),
                   np.stack(A), np.stack(B), np.stack(C))

    @classmethod
    def deterministic(cls, A, B, C) -> "Ensemble":
        return cls.from_samples([ParameterSample(1.0, A, B, C)])

    def with_matrices(self, A=None, B=None, C=None) -> "Ensemble":
        return Ensemble(self.weights,
                        self.A if A is None else A,
                        self.B if B is None else B,
                        self.C if C is None else C)

    # weighted product space L^2(Omega; R^d) on the atoms

    def inner(self, v: np.ndarray, u: np.ndarray) -> float:
        """``sum_i w_i (v_i, u_i)`` for (S, d) arrays."""
        return float(expect(self, np.einsum("sd,sd->s", v, u)))

    def norm(self, v: np.ndarray) -> float:
        return math.sqrt(max(self.inner(v, v), 0.0))

    def to_json(self) -> dict:
        return {
            "n": self.n, "m": self.m, "p": self.p,
            "samples": [
                {"weight": float(s.weight), "A": s.A.tolist(), "B": s.B.tolist(), "C": s.C.tolist()}
                for s in self.samples
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Ensemble":
        samples = [ParameterSample(float(s["weight"]), s["A"], s["B"], s["C"]) for s in data["samples"]]
        ens = cls.from_samples(samples)
        declared = tuple(data.get(k) for k in ("n", "m", "p"))
        if any(d is not None for d in declared) and declared != (ens.n, ens.m, ens.p):
            raise DimensionMismatch(f"declared (n, m, p) = {declared}, matrices give {(ens.n, ens.m, ens.p)}")
        return ens


def expect(ens: Ensemble, values) -> np.ndarray:
    """``sum_i w_i values[i]`` accumulated strictly in sample order.

    ``values`` has leading axis of length S; trailing axes (time, components)
    are carried along, so a whole trajectory is averaged in one call.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 0 or values.shape[0] != ens.size:
        raise DimensionMismatch(f"expected {ens.size} per-sample values, got shape {values.shape}")
    w = ens.weights
    acc = w[0] * values[0]
    for i in range(1, ens.size):
        acc = acc + w[i] * values[i]
    return acc


@dataclass(frozen=True)
class DistributionSpec:
    """Recipe for an ensemble.

    kind = "explicit": ``samples`` used as given.
    kind = "poisson-scaled": N equal-weight atoms ``(alpha_i A0, beta_i B0, C0)`` with
    alpha_i, beta_i ~ Poisson(lam) drawn in the order alpha_1, beta_1, alpha_2, ...
    kind = "two-point" (or any finite list of atoms): ``atoms`` with probabilities ``masses``.
    """

    kind: str
    A0: np.ndarray | None = None
    B0: np.ndarray | None = None
    C0: np.ndarray | None = None
    lam: float = 5.0
    sample_count: int = 200
    seed: int = 42
    atoms: tuple = ()
    masses: tuple = ()
    samples: tuple = field(default=())


def build_ensemble(spec: DistributionSpec) -> Ensemble:
    if spec.kind == "explicit":
        return Ensemble.from_samples(list(spec.samples))
    if spec.kind == "two-point":
        if len(spec.atoms) != len(spec.masses) or not spec.atoms:
            raise DimensionMismatch("two-point spec needs one mass per atom")
        if any(m <= 0 for m in spec.masses):
            raise ZeroWeight("two-point masses must be positive")
        if abs(math.fsum(spec.masses) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"masses sum to {math.fsum(spec.masses)!r}, expected 1")
        return Ensemble.from_samples([
            ParameterSample(float(mass), A, B, C) for mass, (A, B, C) in zip(spec.masses, spec.atoms)
        ])
    if spec.kind == "poisson-scaled":
        if not spec.lam > 0:
            raise ValueError("Poisson rate must be positive")
        if spec.sample_count < 1:
            raise ZeroWeight("poisson-scaled spec needs at least one sample")
        A0, B0, C0 = (as_matrix(x, name) for x, name in ((spec.A0, "A0"), (spec.B0, "B0"), (spec.C0, "C0")))
        rng = SplitMix64(spec.seed)
        N = int(spec.sample_count)
        samples = []
        for _ in range(N):
            alpha = sample_poisson(rng, spec.lam)
            beta = sample_poisson(rng, spec.lam)
            samples.append(ParameterSample(1.0 / N, alpha * A0, beta * B0, C0))
        return Ensemble.from_samples(samples)
    raise ValueError(f"unknown distribution kind {spec.kind!r}")


def poisson_draws(spec: DistributionSpec) -> np.ndarray:
    """The (alpha_i, beta_i) pairs behind a poisson-scaled ensemble, shape (N, 2)."""
    rng = SplitMix64(spec.seed)
    out = np.empty((spec.sample_count, 2), dtype=int)
    for i in range(spec.sample_count):
        out[i, 0] = sample_poisson(rng, spec.lam)
        out[i, 1] = sample_poisson(rng, spec.lam)
    return out


def benchmark_spec(sample_count: int = 200, seed: int = 42, lam: float = 5.0) -> DistributionSpec:
    """Poisson-scaled ensemble of the two-state, one-input benchmark."""
    return DistributionSpec(
        kind="poisson-scaled",
        A0=np.array([[2.0, -5.0], [5.0, 0.1]]),
        B0=np.array([[5.0], [7.0]]),
        C0=np.array([[0.0, 1.0], [1.0, 0.0]]),
        lam=lam, sample_count=sample_count, seed=seed,
    )


BENCHMARK_TARGET = np.array([4.0, 4.0])


def bernoulli_spec() -> DistributionSpec:
    """Two equally likely scalar atoms: (A, C) = (1, 0) and (-1, -1), B = 1."""
    return DistributionSpec(
        kind="two-point",
        atoms=(([[1.0]], [[1.0]], [[0.0]]), ([[-1.0]], [[1.0]], [[-1.0]])),
        masses=(0.5, 0.5),
    )


def load_ensemble(path: str | Path) -> Ensemble:
    return Ensemble.from_json(json.loads(Path(path).read_text()))


def save_ensemble(ens: Ensemble, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ens.to_json(), indent=2) + "\n")
