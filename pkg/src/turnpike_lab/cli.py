"""Command-line runner: ``turnpike-lab <command> --config <path>``.

Exit codes: 0 success, 1 runtime failure, 2 invalid config, 3 solver did
not converge, 4 an assumption check failed under ``--require-pass``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assumptions import (
    check_A0,
    check_A1,
    check_A2,
    check_complementary,
    scan_scalar_feedback,
    stationary_coercivity,
    verify_average_decay,
)
from .config import ExperimentConfig, load_config, resolve_initial
from .dynamics import TimeGrid
from .ensemble import expect
from .errors import ConfigError, TurnpikeLabError
from .evolutionary import EvolutionaryProblem, EvolutionarySolution, solve_evolutionary
from .outputs import Chart, Series, Table, gnuplot_script, write_outputs
from .stationary import StationarySolution, solve_stationary
from .turnpike import HorizonSweep, TurnpikeReport, fit_envelope, sweep_horizons, turnpike_distances

COMMANDS = ("solve-evolutionary", "solve-stationary", "check-assumptions", "turnpike-report", "sweep-horizons")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4

log = logging.getLogger("turnpike_lab")


class _Context:
    """Per-run cache so the stationary problem is solved at most once."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._stat: StationarySolution | None = None

    @property
    def stat(self) -> StationarySolution:
        if self._stat is None:
            self._stat = solve_stationary(self.cfg.ensemble, self.cfg.z)
        return self._stat

    def problem(self) -> EvolutionaryProblem:
        cfg = self.cfg
        ens = cfg.ensemble
        x0 = resolve_initial(cfg.x0_spec, ens, "problem.x0", cfg.base_dir, lambda: self.stat.x_s)
        phi_T = resolve_initial(cfg.phi_T_spec, ens, "problem.phi_T", cfg.base_dir, lambda: self.stat.phi_s)
        return EvolutionaryProblem(ens, TimeGrid(cfg.T, cfg.n_steps), x0, cfg.z, phi_T, scheme=cfg.scheme)


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "command": command,
        "config": cfg.source.name,
        "ensemble": cfg.ensemble_meta,
        "T": cfg.T,
        "n_steps": cfg.n_steps,
        "scheme": cfg.scheme,
        "version": __version__,
    }


def solution_table(evo: EvolutionarySolution, samples) -> Table:
    t = evo.x.grid.nodes
    m = evo.u.shape[1]
    n = evo.x.values.shape[2]
    cols = ["t"] + [f"u_{j + 1}" for j in range(m)]
    for s in samples:
        cols += [f"x{s}_{j + 1}" for j in range(n)]
    rows = []
    for k in range(t.size):
        row = [t[k], *evo.u[k]]
        for s in samples:
            row += list(evo.x.values[s, k])
        rows.append(row)
    return Table(cols, rows)


def mean_table(evo: EvolutionarySolution, ens, stat: StationarySolution | None) -> Table:
    t = evo.x.grid.nodes
    mean_x = evo.x.mean(ens)
    n, m = mean_x.shape[1], evo.u.shape[1]
    cols = ["t"] + [f"Ex_{j + 1}" for j in range(n)]
    if stat is not None:
        cols += [f"Exs_{j + 1}" for j in range(n)]
    cols += [f"u_{j + 1}" for j in range(m)]
    if stat is not None:
        cols += [f"us_{j + 1}" for j in range(m)]
    mean_xs = None if stat is None else expect(ens, stat.x_s)
    rows = []
    for k in range(t.size):
        row = [t[k], *mean_x[k]]
        if stat is not None:
            row += list(mean_xs)
        row += list(evo.u[k])
        if stat is not None:
            row += list(stat.u_s)
        rows.append(row)
    return Table(cols, rows)


def trajectory_table(values: np.ndarray, grid: TimeGrid) -> Table:
    S, _, n = values.shape
    t = grid.nodes
    rows = [[t[k], s, *values[s, k]] for s in range(S) for k in range(t.size)]
    return Table(["t", "sample_index"] + [f"x_{j + 1}" for j in range(n)], rows)


def turnpike_table(rep: TurnpikeReport) -> Table:
    env = rep.envelope() if np.isfinite(rep.K_fit) else np.full(rep.d_total.shape, np.nan)
    rows = [
        [t, a, b, c, d, e]
        for t, a, b, c, d, e in zip(rep.grid.nodes, rep.d_state, rep.d_adjoint, rep.d_control, rep.d_total, env)
    ]
    return Table(["t", "d_state", "d_adjoint", "d_control", "d_total", "envelope"], rows)


def sweep_table(sw: HorizonSweep) -> Table:
    return Table(["T", "avg_state_err", "avg_control_err"],
                 [[T, a, b] for T, a, b in zip(sw.horizons, sw.avg_state_err, sw.avg_control_err)])


def _column(table: Table, name: str) -> list:
    j = list(table.columns).index(name)
    return [row[j] for row in table.rows]


def _charts_from_mean(mean: Table) -> dict:
    t = _column(mean, "t")
    state = Chart("Expected state", "t", "E[x]")
    control = Chart("Control", "t", "u")
    for col in mean.columns[1:]:
        if col.startswith("Ex_"):
            state.series.append(Series(col, t, _column(mean, col)))
        elif col.startswith("Exs_"):
            state.series.append(Series(col, t, _column(mean, col), dashed=True))
        elif col.startswith("us_"):
            control.series.append(Series(col, t, _column(mean, col), dashed=True))
        elif col.startswith("u_"):
            control.series.append(Series(col, t, _column(mean, col)))
    return {"state": state, "control": control}


def _add_charts(artifacts: dict, charts: dict, sources: dict, cfg: ExperimentConfig, gnuplot: bool) -> None:
    for name, chart in charts.items():
        if cfg.plots:
            artifacts[f"{name}.svg"] = chart
        if gnuplot:
            csv_name, table = sources[name]
            artifacts[f"{name}.gp"] = gnuplot_script(chart, csv_name, table.columns)


def _exit_for(evo: EvolutionarySolution) -> int:
    if not evo.converged:
        log.error("evolutionary solver did not converge: |g|_h = %.3e after %d iterations",
                  evo.grad_norm, evo.iterations)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_solve_evolutionary(ctx: _Context, gnuplot: bool) -> tuple[dict, int]:
    cfg = ctx.cfg
    prob = ctx.problem()
    evo = solve_evolutionary(prob, cfg.solver)
    mean = mean_table(evo, cfg.ensemble, None)
    art = {
        "solution.csv": solution_table(evo, cfg.samples),
        "mean_state.csv": mean,
        "summary.json": evo.summary(),
    }
    if cfg.trajectories:
        art["trajectories.csv"] = trajectory_table(evo.x.values, prob.grid)
    charts = _charts_from_mean(mean)
    _add_charts(art, charts, {k: ("mean_state.csv", mean) for k in charts}, cfg, gnuplot)
    return art, _exit_for(evo)


def cmd_solve_stationary(ctx: _Context, gnuplot: bool) -> tuple[dict, int]:
    cfg = ctx.cfg
    stat = ctx.stat
    ens = cfg.ensemble
    n = ens.n
    rows = [[i, ens.weights[i], *stat.x_s[i], *stat.phi_s[i]] for i in range(ens.size)]
    cols = ["sample_index", "weight"] + [f"xs_{j + 1}" for j in range(n)] + [f"phis_{j + 1}" for j in range(n)]
    return {"stationary.json": stat.summary(ens), "stationary_samples.csv": Table(cols, rows)}, EXIT_OK


def _gain_checks(cfg: ExperimentConfig) -> tuple[list, dict]:
    ens = cfg.ensemble
    check = cfg.check
    if not check:
        check = {"A2": {"gain": np.zeros((ens.n, ens.m)).tolist()},
                 "A0": {"gain": np.zeros((ens.n, ens.p)).tolist()}, "coercivity": True}
        if ens.p == ens.n:
            check["A1"] = {"gain": 0.0}
    reports = []
    for key in ("A1", "A2", "A0"):
        block = check.get(key)
        if block is None:
            continue
        where = f"check.{key}"
        try:
            if "scan" in block:
                scan = block["scan"]
                reports.append(scan_scalar_feedback(ens, key, scan.get("ranges"), shared=scan.get("shared", False)))
            elif key == "A1":
                reports.append(check_A1(ens, block.get("gain", 0.0)))
            elif key == "A2":
                reports.append(check_A2(ens, block.get("gain", np.zeros((ens.n, ens.m))), block.get("variant", "single")))
            else:
                reports.append(check_A0(ens, block.get("gain", np.zeros((ens.n, ens.p)))))
        except (TurnpikeLabError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(where, str(exc)) from exc
    return reports, check


def cmd_check_assumptions(ctx: _Context, gnuplot: bool) -> tuple[dict, int]:
    cfg = ctx.cfg
    ens = cfg.ensemble
    reports, check = _gain_checks(cfg)
    out = {"reports": [r.to_json() for r in reports]}
    ok = all(r.passed for r in reports)
    comp = None
    if "complementary" in check:
        blk = check["complementary"]
        side = blk.get("side", "C")
        gain = blk.get("gain", np.zeros((ens.n, ens.p if side == "C" else ens.m)))
        try:
            comp = check_complementary(ens, gain, side, trials=blk.get("trials", 10_000), seed=blk.get("seed", 0))
        except (TurnpikeLabError, ValueError) as exc:
            raise ConfigError("check.complementary", str(exc)) from exc
        out["reports"].append(comp.to_json())
        ok = ok and comp.passed
    if "decay" in check:
        blk = check["decay"]
        alpha = blk.get("alpha", "complementary")
        if alpha == "complementary":
            if comp is None or not comp.passed:
                raise ConfigError("check.decay.alpha", "needs a passing check.complementary block")
            alpha = comp.alpha
        grid = TimeGrid(float(blk.get("T", cfg.T)), int(blk.get("n_steps", cfg.n_steps)))
        x0 = resolve_initial(blk.get("x0", {"constant": [1.0] * ens.n}), ens, "check.decay.x0", cfg.base_dir)
        gain = blk.get("gain", comp.gain_used if comp is not None else np.zeros((ens.n, ens.p)))
        try:
            decay = verify_average_decay(ens, gain, grid, x0, float(alpha), scheme=cfg.scheme)
        except (TurnpikeLabError, ValueError) as exc:
            raise ConfigError("check.decay", str(exc)) from exc
        out["decay"] = {"holds": decay.holds, "min_slack": decay.min_slack,
                        "observed_rate": decay.observed_rate, "alpha": decay.alpha}
        ok = ok and decay.holds
    if check.get("coercivity"):
        out["coercivity"] = {"AC": stationary_coercivity(ens, "AC"), "AB": stationary_coercivity(ens, "AB")}
    out["all_passed"] = ok
    return {"checks.json": out}, (EXIT_OK if ok else EXIT_CHECK_FAILED)


def cmd_turnpike_report(ctx: _Context, gnuplot: bool) -> tuple[dict, int]:
    cfg = ctx.cfg
    ens = cfg.ensemble
    stat = ctx.stat
    prob = ctx.problem()
    evo = solve_evolutionary(prob, cfg.solver)
    rep = turnpike_distances(evo, stat, ens, prob.grid)
    if np.any(rep.d_total > 0):
        fit_envelope(rep, cfg.fit_window)
    mean = mean_table(evo, ens, stat)
    tp = turnpike_table(rep)
    art = {
        "solution.csv": solution_table(evo, cfg.samples),
        "mean_state.csv": mean,
        "turnpike.csv": tp,
        "fit.json": rep.fit_summary(),
        "summary.json": evo.summary(),
        "stationary.json": stat.summary(ens),
    }
    if cfg.trajectories:
        art["trajectories.csv"] = trajectory_table(evo.x.values, prob.grid)
    charts = _charts_from_mean(mean)
    t = list(rep.grid.nodes)
    tchart = Chart("Distance to the static optimum", "t", "d_total", logy=True)
    tchart.series.append(Series("d_total", t, list(rep.d_total)))
    if np.isfinite(rep.K_fit):
        tchart.series.append(Series("envelope", t, list(rep.envelope()), dashed=True))
    charts["turnpike"] = tchart
    sources = {"state": ("mean_state.csv", mean), "control": ("mean_state.csv", mean), "turnpike": ("turnpike.csv", tp)}
    _add_charts(art, charts, sources, cfg, gnuplot)
    return art, _exit_for(evo)


def cmd_sweep_horizons(ctx: _Context, gnuplot: bool) -> tuple[dict, int]:
    cfg = ctx.cfg
    prob = ctx.problem()
    sw = sweep_horizons(prob, cfg.horizons, cfg.steps_per_unit, cfg.solver, stat=ctx.stat)
    table = sweep_table(sw)
    chart = Chart("Time-averaged distance to the static optimum", "T", "error", logy=True)
    chart.series.append(Series("avg_state_err", sw.horizons, list(sw.avg_state_err)))
    chart.series.append(Series("avg_control_err", sw.horizons, list(sw.avg_control_err)))
    art = {"sweep.csv": table, "sweep_summary.json": {"iterations": sw.iterations, "converged": sw.converged}}
    _add_charts(art, {"sweep": chart}, {"sweep": ("sweep.csv", table)}, cfg, gnuplot)
    return art, (EXIT_OK if all(sw.converged) else EXIT_NOT_CONVERGED)


_DISPATCH = {
    "solve-evolutionary": cmd_solve_evolutionary,
    "solve-stationary": cmd_solve_stationary,
    "check-assumptions": cmd_check_assumptions,
    "turnpike-report": cmd_turnpike_report,
    "sweep-horizons": cmd_sweep_horizons,
}


def run(command: str, config_path, out=None, seed: int | None = None, require_pass: bool = False,
        gnuplot: bool = False) -> int:
    if command not in _DISPATCH:
        log.error("unknown command %r; expected one of %s", command, ", ".join(COMMANDS))
        return EXIT_CONFIG
    try:
        cfg = load_config(config_path, seed_override=seed, out_override=out)
        ctx = _Context(cfg)
        artifacts, code = _DISPATCH[command](ctx, gnuplot or cfg.gnuplot)
        artifacts["meta.json"] = _meta(cfg, command)
        write_outputs(artifacts, cfg.out_dir)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except TurnpikeLabError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    if code == EXIT_CHECK_FAILED and not require_pass:
        code = EXIT_OK
    log.info("%s: wrote artifacts to %s", command, cfg.out_dir)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="turnpike-lab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out", default=None, help="output directory (overrides outputs.dir)")
    parser.add_argument("--seed", type=int, default=None, help="override ensemble.seed (unsigned 64-bit)")
    parser.add_argument("--require-pass", action="store_true", help="exit 4 when an assumption check fails")
    parser.add_argument("--gnuplot", action="store_true", help="also emit gnuplot scripts next to the CSVs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return run(args.command, Path(args.config), out=args.out, seed=args.seed,
               require_pass=args.require_pass, gnuplot=args.gnuplot)


if __name__ == "__main__":
    sys.exit(main())
