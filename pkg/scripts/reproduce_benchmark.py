"""Seeded Poisson-scaled benchmark: turnpike curve, envelope fit and horizon sweep.

Usage: python scripts/reproduce_benchmark.py [--out DIR] [--seed N] [--samples N]
"""
import argparse
from pathlib import Path

import numpy as np

from turnpike_lab.cli import sweep_table, turnpike_table
from turnpike_lab.dynamics import TimeGrid
from turnpike_lab.ensemble import BENCHMARK_TARGET, build_ensemble, benchmark_spec
from turnpike_lab.evolutionary import EvolutionaryProblem
from turnpike_lab.outputs import Chart, Series, write_outputs
from turnpike_lab.turnpike import sweep_horizons, turnpike_report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/benchmark")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--samples", type=int, default=200)
    args = ap.parse_args()

    ens = build_ensemble(benchmark_spec(sample_count=args.samples, seed=args.seed))
    prob = EvolutionaryProblem(ens, TimeGrid(10.0, 150), np.zeros(2), BENCHMARK_TARGET, np.zeros(2))
    rep, evo, stat = turnpike_report(prob)
    sweep = sweep_horizons(prob, [5.0, 10.0, 20.0, 40.0], 15.0, stat=stat)

    t = list(rep.grid.nodes)
    chart = Chart("Distance to the static optimum", "t", "d_total", logy=True)
    chart.series += [Series("d_total", t, list(rep.d_total)), Series("envelope", t, list(rep.envelope()), True)]
    write_outputs({
        "turnpike.csv": turnpike_table(rep),
        "turnpike.svg": chart,
        "fit.json": rep.fit_summary(),
        "sweep.csv": sweep_table(sweep),
        "meta.json": {"seed": args.seed, "sample_count": args.samples, "u_s": stat.u_s, "iterations": evo.iterations},
    }, Path(args.out))

    d = rep.d_total
    print(f"u_s = {stat.u_s[0]:.6f}, solver iterations = {evo.iterations}")
    print(f"d_total: t=0 {d[0]:.4f}, t=T/2 {d[75]:.2e}, t=T {d[-1]:.4f}")
    print(f"envelope fit: K = {rep.K_fit:.4f}, delta = {rep.delta_fit:.4f}")
    for T, a, b in zip(sweep.horizons, sweep.avg_state_err, sweep.avg_control_err):
        print(f"T = {T:5.1f}: avg state err {a:.5f}, avg control err {b:.5f}")


if __name__ == "__main__":
    main()
