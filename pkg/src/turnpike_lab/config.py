"""Experiment configs: JSON, validated against the shipped schema before anything runs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .dynamics import per_sample
from .ensemble import DistributionSpec, Ensemble, ParameterSample, build_ensemble, load_ensemble, benchmark_spec
from .errors import ConfigError, TurnpikeLabError
from .evolutionary import SolverOptions

DEFAULT_T = 10.0
DEFAULT_STEPS = 150
DEFAULT_SAMPLES = 200
DEFAULT_SEED = 42
DEFAULT_LAMBDA = 5.0


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("turnpike_lab").joinpath("config.schema.json").read_text())


def _path_of(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path)


def validate(raw) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_path_of(err) or "<root>", err.message)


@dataclass
class ExperimentConfig:
    source: Path
    raw: dict
    ensemble: Ensemble
    ensemble_meta: dict
    T: float
    n_steps: int
    scheme: str
    z: np.ndarray
    x0_spec: object
    phi_T_spec: object
    solver: SolverOptions
    out_dir: Path
    plots: bool
    gnuplot: bool
    trajectories: bool
    samples: list
    check: dict = field(default_factory=dict)
    horizons: list = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    steps_per_unit: float = DEFAULT_STEPS / DEFAULT_T
    fit_window: tuple = (0.1, 0.5)

    @property
    def base_dir(self) -> Path:
        return self.source.parent


def _ensemble_from(raw: dict, base: Path, seed_override: int | None) -> tuple[Ensemble, dict]:
    kind = raw["kind"]
    meta = {"kind": kind}
    if kind == "poisson-scaled":
        default = benchmark_spec()
        seed = raw.get("seed", DEFAULT_SEED) if seed_override is None else seed_override
        spec = DistributionSpec(
            kind=kind,
            A0=np.array(raw.get("A0", default.A0), dtype=float),
            B0=np.array(raw.get("B0", default.B0), dtype=float),
            C0=np.array(raw.get("C0", default.C0), dtype=float),
            lam=float(raw.get("lambda", DEFAULT_LAMBDA)),
            sample_count=int(raw.get("sample_count", DEFAULT_SAMPLES)),
            seed=int(seed),
        )
        meta.update(seed=spec.seed, sample_count=spec.sample_count, **{"lambda": spec.lam})
    elif kind == "two-point":
        if len(raw["atoms"]) != len(raw["masses"]):
            raise ConfigError("ensemble.masses", "need exactly one mass per atom")
        spec = DistributionSpec(
            kind=kind,
            atoms=tuple((a["A"], a["B"], a["C"]) for a in raw["atoms"]),
            masses=tuple(raw["masses"]),
        )
    elif kind == "explicit":
        spec = DistributionSpec(kind=kind, samples=tuple(
            ParameterSample(float(s["weight"]), s["A"], s["B"], s["C"]) for s in raw["samples"]
        ))
    else:
        path = base / raw["path"]
        try:
            ens = load_ensemble(path)
        except FileNotFoundError as exc:
            raise ConfigError("ensemble.path", f"no such file {path}") from exc
        except (KeyError, ValueError, TurnpikeLabError) as exc:
            raise ConfigError("ensemble.path", f"bad ensemble file {path}: {exc}") from exc
        meta["path"] = str(raw["path"])
        meta["sample_count"] = ens.size
        return ens, meta
    try:
        ens = build_ensemble(spec)
    except (ValueError, TurnpikeLabError) as exc:
        raise ConfigError("ensemble", str(exc)) from exc
    meta["sample_count"] = ens.size
    return ens, meta


def load_config(path, seed_override: int | None = None, out_override=None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError("", f"config file {path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"config file {path} is not valid JSON: {exc}") from exc
    validate(raw)
    if seed_override is not None and not 0 <= seed_override < 2**64:
        raise ConfigError("--seed", "seed must be an unsigned 64-bit integer")
    base = path.parent
    ens, meta = _ensemble_from(raw["ensemble"], base, seed_override)

    prob = raw["problem"]
    z = np.array(prob["z"], dtype=float)
    if z.shape != (ens.p,):
        raise ConfigError("problem.z", f"target has {z.size} entries, observations have dimension {ens.p}")

    solver_raw = raw.get("solver", {})
    try:
        solver = SolverOptions(**solver_raw)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from exc

    outs = raw.get("outputs", {})
    out_dir = Path(out_override) if out_override is not None else base / outs.get("dir", "out")
    samples = list(outs.get("samples", [0]))
    for j, idx in enumerate(samples):
        if idx >= ens.size:
            raise ConfigError(f"outputs.samples.{j}", f"sample {idx} does not exist (ensemble has {ens.size})")

    sweep = raw.get("sweep", {})
    horizons = [float(T) for T in sweep.get("horizons", [5.0, 10.0, 20.0, 40.0])]
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ConfigError("sweep.horizons", "horizons must be strictly increasing")
    window = tuple(raw.get("fit", {}).get("window", (0.1, 0.5)))
    if not window[0] < window[1]:
        raise ConfigError("fit.window", "window must satisfy lo < hi")

    T = float(prob.get("T", DEFAULT_T))
    n_steps = int(prob.get("n_steps", DEFAULT_STEPS))
    return ExperimentConfig(
        source=path, raw=raw, ensemble=ens, ensemble_meta=meta,
        T=T, n_steps=n_steps, scheme=prob.get("scheme", "midpoint"), z=z,
        x0_spec=prob.get("x0", {"constant": [0.0] * ens.n}),
        phi_T_spec=prob.get("phi_T", {"constant": [0.0] * ens.n}),
        solver=solver, out_dir=out_dir,
        plots=bool(outs.get("plots", True)), gnuplot=bool(outs.get("gnuplot", False)),
        trajectories=bool(outs.get("trajectories", False)), samples=samples,
        check=raw.get("check", {}), horizons=horizons,
        steps_per_unit=float(sweep.get("steps_per_unit", n_steps / T)),
        fit_window=window,
    )


def resolve_initial(spec, ens: Ensemble, where: str, base: Path, stationary=None) -> np.ndarray:
    """Turn an initial-data spec into a (S, n) array; ``stationary`` is a callable giving that array."""
    try:
        if isinstance(spec, str):
            if stationary is None:
                raise ConfigError(where, "'stationary' is not available here")
            return stationary()
        if isinstance(spec, list):
            return per_sample(ens, spec, ens.n, where)
        if "constant" in spec:
            return per_sample(ens, spec["constant"], ens.n, where)
        if "per_sample" in spec:
            return per_sample(ens, spec["per_sample"], ens.n, where)
        path = base / spec["file"]
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"{where}.file", f"no such file {path}") from exc
        return per_sample(ens, data, ens.n, where)
    except TurnpikeLabError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(where, str(exc)) from exc
