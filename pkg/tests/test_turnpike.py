import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_ensemble
from turnpike_lab.dynamics import TimeGrid
from turnpike_lab.evolutionary import EvolutionaryProblem, SolverOptions, solve_evolutionary
from turnpike_lab.errors import GridMismatch
from turnpike_lab.stationary import StationarySolution, solve_stationary
from turnpike_lab.turnpike import (
    TurnpikeReport, fit_envelope, sweep_horizons, time_averages, turnpike_distances, worker_count,
)


def synthetic(d, T=10.0):
    grid = TimeGrid(T, d.size - 1)
    zero = np.zeros_like(d)
    return TurnpikeReport(grid, d.copy(), zero, zero)


def test_fit_exact_shape():
    t = TimeGrid(10.0, 200).nodes
    rep = fit_envelope(synthetic(np.exp(-t) + np.exp(-(10 - t))))
    assert rep.K_fit == pytest.approx(1.0, abs=1e-3)
    assert rep.delta_fit == pytest.approx(1.0, abs=1e-3)
    assert rep.max_residual <= 0 and not rep.degenerate


def test_fit_scaled_shape():
    t = TimeGrid(10.0, 200).nodes
    rep = fit_envelope(synthetic(3 * (np.exp(-2 * t) + np.exp(-2 * (10 - t)))))
    assert rep.K_fit == pytest.approx(3.0, abs=1e-2)
    assert rep.delta_fit == pytest.approx(2.0, abs=1e-2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(0.1, 0.5), (0.2, 0.4), (0.5, 0.9)]))
def test_fit_envelope_dominates(seed, window):
    rng = np.random.default_rng(seed)
    t = TimeGrid(12.0, 180).nodes
    d = rng.uniform(0.5, 3) * np.exp(-rng.uniform(0.2, 2) * t) + rng.uniform(0.5, 3) * np.exp(-rng.uniform(0.2, 2) * (12 - t))
    d *= 1 + 0.05 * rng.standard_normal(t.size) ** 2
    rep = fit_envelope(synthetic(d, 12.0), window)
    assert np.all(rep.d_total <= rep.envelope() + 1e-12)
    assert rep.max_residual <= 0 and rep.delta_fit >= 0


def test_symmetric_input_gives_identical_fit():
    t = TimeGrid(10.0, 200).nodes
    d = 2 * np.exp(-0.7 * t) + 2 * np.exp(-0.7 * (10 - t)) + 0.01
    a = fit_envelope(synthetic(d))
    b = fit_envelope(synthetic(d[::-1].copy()))
    assert a.K_fit == pytest.approx(b.K_fit, rel=1e-9)
    assert a.delta_fit == pytest.approx(b.delta_fit, rel=1e-9)


def test_degenerate_fit():
    t = TimeGrid(10.0, 20).nodes
    rep = fit_envelope(synthetic(1.0 + t))           # increasing: no usable nodes
    assert rep.degenerate and rep.delta_fit == 0.0
    assert rep.max_residual <= 0
    with pytest.raises(ValueError):
        fit_envelope(synthetic(np.zeros(21)))


def test_zero_distances():
    rng = np.random.default_rng(0)
    ens = random_ensemble(rng, S=2)
    grid = TimeGrid(1.0, 10)
    p = EvolutionaryProblem(ens, grid, np.zeros(2), np.zeros(2), np.zeros(2))
    evo = solve_evolutionary(p)
    stat = StationarySolution(np.zeros(1), np.zeros((2, 2)), np.zeros((2, 2)), 0.0, np.zeros((2, 1)))
    rep = turnpike_distances(evo, stat, ens, grid)
    assert np.all(rep.d_total == 0.0)
    with pytest.raises(GridMismatch):
        turnpike_distances(evo, stat, ens, TimeGrid(1.0, 20))


def test_steady_start_distances(benchmark_ensemble, benchmark_target):
    stat = solve_stationary(benchmark_ensemble, benchmark_target)
    grid = TimeGrid(5.0, 75)
    p = EvolutionaryProblem(benchmark_ensemble, grid, stat.x_s, benchmark_target, stat.phi_s)
    evo = solve_evolutionary(p, SolverOptions(tol_rel_grad=1e-10))
    rep = turnpike_distances(evo, stat, benchmark_ensemble, grid)
    assert np.max(rep.d_total) <= 1e-6
    assert np.all(rep.d_state >= 0) and np.all(rep.d_adjoint >= 0) and np.all(rep.d_control >= 0)


def test_benchmark_shape(benchmark_run):
    rep, evo, stat = benchmark_run
    d = rep.d_total
    mid = d[75]
    assert mid < d[0] and mid < d[-1]
    assert rep.delta_fit > 0 and math.isfinite(rep.K_fit) and rep.max_residual <= 0


def test_steady_start_sweep(bernoulli):
    stat = solve_stationary(bernoulli, [1.0])
    base = EvolutionaryProblem(bernoulli, TimeGrid(1.0, 10), stat.x_s, [1.0], stat.phi_s)
    sw = sweep_horizons(base, [2.0, 4.0, 8.0], 20, SolverOptions(tol_rel_grad=1e-10), stat)
    assert np.all(sw.avg_state_err <= 1e-6) and np.all(sw.avg_control_err <= 1e-6)


def test_sweep_refinement_is_second_order(bernoulli):
    base = EvolutionaryProblem(bernoulli, TimeGrid(1.0, 10), np.array([2.0]), [1.0], np.zeros(1))
    opts = SolverOptions(tol_rel_grad=1e-11)
    coarse = sweep_horizons(base, [2.0, 4.0], 10, opts)
    fine = sweep_horizons(base, [2.0, 4.0], 20, opts)
    finer = sweep_horizons(base, [2.0, 4.0], 40, opts)
    gap1 = np.abs(coarse.avg_state_err - fine.avg_state_err)
    gap2 = np.abs(fine.avg_state_err - finer.avg_state_err)
    assert np.all(gap1 <= 1e-2 * np.maximum(fine.avg_state_err, 1e-3))
    assert np.all(gap1 / gap2 >= 3.0)


def test_sweep_rejects_unsorted(bernoulli):
    base = EvolutionaryProblem(bernoulli, TimeGrid(1.0, 10), np.zeros(1), [1.0], np.zeros(1))
    with pytest.raises(ValueError):
        sweep_horizons(base, [4.0, 2.0], 10)


def test_threaded_sweep_matches_serial(bernoulli, monkeypatch):
    base = EvolutionaryProblem(bernoulli, TimeGrid(1.0, 10), np.array([1.0]), [1.0], np.zeros(1))
    serial = sweep_horizons(base, [1.0, 2.0, 3.0], 20)
    monkeypatch.setenv("TURNPIKE_THREADS", "3")
    assert worker_count() == 3
    threaded = sweep_horizons(base, [1.0, 2.0, 3.0], 20)
    assert serial.avg_state_err.tobytes() == threaded.avg_state_err.tobytes()
    assert serial.avg_control_err.tobytes() == threaded.avg_control_err.tobytes()


def test_time_averages_of_constant_solution(bernoulli):
    stat = solve_stationary(bernoulli, [1.0])
    p = EvolutionaryProblem(bernoulli, TimeGrid(2.0, 20), stat.x_s, [1.0], stat.phi_s)
    evo = solve_evolutionary(p, SolverOptions(tol_rel_grad=1e-12))
    a, b = time_averages(evo, stat, bernoulli)
    assert a <= 1e-9 and b <= 1e-9
