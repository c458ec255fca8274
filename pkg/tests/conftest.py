import sys
import numpy as np
import pytest

from turnpike_lab.ensemble import Ensemble, ParameterSample, BENCHMARK_TARGET, build_ensemble, bernoulli_spec, benchmark_spec


def random_ensemble(rng: np.random.Generator, S: int = 2, n: int = 2, m: int = 1, p: int | None = None,
                    shift: float = 1.0) -> Ensemble:
    """Random ensemble with mildly dissipative A (I*shift + noise) and random positive weights."""
    p = n if p is None else p
    w = rng.uniform(0.2, 1.0, S)
    w /= w.sum()
    samples = [
        ParameterSample(float(w[i]), shift * np.eye(n) + 0.5 * rng.standard_normal((n, n)),
                        rng.standard_normal((n, m)), rng.standard_normal((p, n)))
        for i in range(S)
    ]
    return Ensemble.from_samples(samples)


@pytest.fixture(scope="session")
def benchmark_ensemble() -> Ensemble:
    return build_ensemble(benchmark_spec())


@pytest.fixture(scope="session")
def benchmark_target() -> np.ndarray:
    return BENCHMARK_TARGET.copy()


@pytest.fixture(scope="session")
def bernoulli() -> Ensemble:
    return build_ensemble(bernoulli_spec())


@pytest.fixture(scope="session")
def benchmark_run(benchmark_ensemble, benchmark_target):
    """Turnpike report for the seeded benchmark: T = 10, 150 steps, x0 = phi_T = 0."""
    from turnpike_lab.dynamics import TimeGrid
    from turnpike_lab.evolutionary import EvolutionaryProblem
    from turnpike_lab.turnpike import turnpike_report

    prob = EvolutionaryProblem(benchmark_ensemble, TimeGrid(10.0, 150), np.zeros(2), benchmark_target, np.zeros(2))
    return turnpike_report(prob)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
