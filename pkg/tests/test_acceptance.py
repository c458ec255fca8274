"""Acceptance criteria, each run at its stated tolerance.

Every criterion prints one ``PASS``/``FAIL`` line (collected in the pytest
terminal summary). ``python tests/test_acceptance.py`` runs them without pytest.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import random_ensemble  # noqa: E402
from turnpike_lab.assumptions import check_A0, scan_scalar_feedback, verify_average_decay  # noqa: E402
from turnpike_lab.dynamics import TimeGrid, integrate_forward  # noqa: E402
from turnpike_lab.ensemble import (  # noqa: E402
    BENCHMARK_TARGET, Ensemble, SplitMix64, bernoulli_spec, build_ensemble, sample_poisson, benchmark_spec,
)
from turnpike_lab.evolutionary import (  # noqa: E402
    EvolutionaryProblem, SolverOptions, cost, gradient, solve_evolutionary, solve_kkt_oracle,
)
from turnpike_lab.numerics import mat_exp  # noqa: E402
from turnpike_lab.stationary import consistency_residual, solve_stationary  # noqa: E402
from turnpike_lab.turnpike import sweep_horizons, turnpike_report  # noqa: E402

RESULTS: list[str] = []


def _record(number: int, title: str, ok: bool, detail: str) -> tuple[bool, str]:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} | {detail}"
    RESULTS.append(line)
    print(line)
    return ok, detail


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def _benchmark_problem(T=10.0, n_steps=150, x0=None, phi_T=None):
    ens = build_ensemble(benchmark_spec())
    x0 = np.zeros(2) if x0 is None else x0
    phi_T = np.zeros(2) if phi_T is None else phi_T
    return EvolutionaryProblem(ens, TimeGrid(T, n_steps), x0, BENCHMARK_TARGET, phi_T)


def criterion_1():
    def run():
        rng = np.random.default_rng(2024)
        ens = random_ensemble(rng, S=2, n=2, m=1)
        p = EvolutionaryProblem(ens, TimeGrid(1.0, 40), rng.standard_normal((2, 2)), rng.standard_normal(2),
                                rng.standard_normal((2, 2)))
        u = rng.standard_normal((41, 1))
        g = gradient(p, u)
        worst = 0.0
        for k in rng.choice(41, size=10, replace=False):
            e = np.zeros_like(u)
            e[k, 0] = 1e-5
            fd = (cost(p, u + e) - cost(p, u - e)) / 2e-5
            worst = max(worst, abs(p.grid.h * g[k, 0] - fd) / abs(fd))
        return worst
    worst, secs = _timed(run)
    return _record(1, "gradient exactness", worst <= 1e-5 and secs < 10,
                   f"max rel err {worst:.2e} <= 1e-5, {secs:.1f}s < 10s")


def criterion_2():
    def run():
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            ens = random_ensemble(rng, S=int(rng.integers(1, 5)), n=int(rng.integers(1, 4)), m=int(rng.integers(1, 3)))
            p = EvolutionaryProblem(ens, TimeGrid(float(rng.uniform(1, 4)), 40), rng.standard_normal(ens.n),
                                    rng.standard_normal(ens.p), rng.standard_normal(ens.n))
            bb = solve_evolutionary(p)
            cg = solve_kkt_oracle(p)
            worst = max(worst, np.linalg.norm(bb.u - cg.u) / np.linalg.norm(cg.u))
        return worst
    worst, secs = _timed(run)
    return _record(2, "BB/Armijo vs CG oracle", worst <= 1e-4 and secs < 120,
                   f"max rel diff {worst:.2e} <= 1e-4 over 20 instances, {secs:.1f}s < 120s")


def criterion_3():
    def run():
        ens = build_ensemble(benchmark_spec())
        stat = solve_stationary(ens, BENCHMARK_TARGET)
        p = _benchmark_problem(x0=stat.x_s, phi_T=stat.phi_s)
        sol = solve_evolutionary(p, SolverOptions(tol_rel_grad=1e-10))
        return max(ens.norm(sol.x.values[:, k] - stat.x_s) + float(np.linalg.norm(sol.u[k] - stat.u_s))
                   for k in range(p.grid.n_steps + 1))
    sup, secs = _timed(run)
    return _record(3, "steady start is a fixed point", sup <= 1e-6 and secs < 30,
                   f"sup |x-xs|_w + |u-us| = {sup:.2e} <= 1e-6, {secs:.1f}s < 30s")


def criterion_4():
    (rep, evo, _), secs = _timed(lambda: turnpike_report(_benchmark_problem()))
    d = rep.d_total
    ratio = d[75] / max(d[0], d[-1])
    ok = rep.delta_fit > 0 and rep.max_residual <= 0 and ratio <= 0.05 and evo.converged and secs < 180
    return _record(4, "benchmark turnpike reproduction", ok,
                   f"delta {rep.delta_fit:.4f} > 0, max_residual {rep.max_residual:.1e} <= 0, "
                   f"d(T/2)/max(d(0),d(T)) = {ratio:.4f} <= 0.05, {secs:.1f}s < 180s")


def criterion_5():
    sw, secs = _timed(lambda: sweep_horizons(_benchmark_problem(), [5.0, 10.0, 20.0, 40.0], 15.0))
    s, c = sw.avg_state_err, sw.avg_control_err
    dec = bool(np.all(np.diff(s) < 0) and np.all(np.diff(c) < 0))
    rs, rc = s[3] / s[1], c[3] / c[1]
    ok = dec and rs <= 0.5 and rc <= 0.5 and all(sw.converged) and secs < 600
    return _record(5, "integral turnpike over horizons", ok,
                   f"strictly decreasing={dec}, T40/T10 ratios state {rs:.3f} control {rc:.3f} <= 0.5, "
                   f"{secs:.1f}s < 600s")


def criterion_6():
    ident = Ensemble.deterministic(np.eye(2), np.eye(2), np.eye(2))
    err = float(np.max(np.abs(solve_stationary(ident, [4.0, 4.0]).u_s - 2.0)))
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ens = random_ensemble(rng, S=int(rng.integers(1, 6)), n=int(rng.integers(1, 4)), m=int(rng.integers(1, 3)),
                              p=int(rng.integers(1, 4)))
        worst = max(worst, consistency_residual(solve_stationary(ens, rng.standard_normal(ens.p)), ens))
    return _record(6, "stationary identities", err <= 1e-12 and worst <= 1e-9,
                   f"|u_s - (2,2)| = {err:.1e} <= 1e-12, max consistency residual {worst:.1e} <= 1e-9")


def criterion_7():
    def run():
        ens = build_ensemble(bernoulli_spec())
        a0 = check_A0(ens, np.array([[[0.0]], [[-2.0]]]))
        a1 = scan_scalar_feedback(ens, "A1", [(-10.0, 10.0, 0.05)] * 2)
        return a0, a1
    (a0, a1), secs = _timed(run)
    ok = abs(a0.alpha - 1) <= 1e-10 and a1.alpha <= -1 + 1e-8 and secs < 60
    return _record(7, "two-point counterexample", ok,
                   f"A0 alpha {a0.alpha:.12f} = 1 +- 1e-10, A1 scan max alpha {a1.alpha:.6f} <= -1 + 1e-8, "
                   f"{secs:.1f}s < 60s")


def criterion_8():
    ens = build_ensemble(bernoulli_spec())
    rep = verify_average_decay(ens, np.array([[[0.0]], [[-2.0]]]), TimeGrid(10.0, 200), np.ones((2, 1)), 1.0)
    return _record(8, "average decay", rep.holds and rep.min_slack >= 0,
                   f"holds={rep.holds}, min slack {rep.min_slack:.2e} >= 0, observed rate {rep.observed_rate:.3f}")


def criterion_9():
    rng = SplitMix64(0)
    first = [rng.next_u64() for _ in range(3)]
    bit_exact = first == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    prng = SplitMix64(42)
    mean = float(np.mean([sample_poisson(prng, 5.0) for _ in range(100_000)]))
    return _record(9, "RNG conformance", bit_exact and abs(mean - 5) <= 0.1,
                   f"reference outputs bit-exact={bit_exact}, Poisson(5) mean {mean:.4f} in 5 +- 0.1")


def criterion_10():
    systems = [
        (np.array([[1.0]]), np.array([1.0]), 1.0),
        (np.array([[0.5, -1.0], [1.0, 0.5]]), np.array([1.0, 0.5]), 2.0),
        (np.array([[2.0, -5.0], [5.0, 0.1]]), np.array([1.0, 0.0]), 1.0),
    ]
    ratios = []
    for A, x0, T in systems:
        errs = []
        for n in (40, 80):
            ens = Ensemble.deterministic(A, np.zeros((A.shape[0], 1)), np.eye(A.shape[0]))
            grid = TimeGrid(T, n)
            x = integrate_forward(ens, grid, np.zeros((n + 1, 1)), x0)
            errs.append(np.linalg.norm(x.final[0] - mat_exp(A, T) @ x0))
        ratios.append(errs[0] / errs[1])
    ok = all(3.6 <= r <= 4.4 for r in ratios)
    return _record(10, "integrator order", ok, "h -> h/2 error ratios " + ", ".join(f"{r:.3f}" for r in ratios)
                   + " in [3.6, 4.4]")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i + 1}" for i in range(len(CRITERIA))])
def test_acceptance(criterion):
    ok, detail = criterion()
    assert ok, detail


if __name__ == "__main__":
    outcomes = [c()[0] for c in CRITERIA]
    sys.exit(0 if all(outcomes) else 1)
