#!/usr/bin/env python3
"""
Time-Fractional Navier-Stokes Solver
Command-line entry point: single runs, convergence studies and weight tables
"""

import logging
import os
import sys
from pathlib import Path
from typing import Dict, List

import click
import numpy as np
from click.core import ParameterSource
from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from frac_quadrature import compute_weights
from saddle_solver import LinearSolverError, SingularSystemError
from tfns_stepper import SolverConfig, StepFailedError, run, write_diagnostics
from verification_harness import (SPACE_STUDY_TAU, final_time_errors, export_fields,
                                  run_space_study, run_time_study)

load_dotenv()

# config-file keys that differ from the click parameter names
CONFIG_ALIASES = {"format": "fmt", "config": None}

SOLVER_ERRORS = (ValidationError, StepFailedError, SingularSystemError, LinearSolverError,
                 ArithmeticError, ValueError, OSError)


def load_config_file(path: str) -> Dict[str, str]:
    """Read a key=value file; keys may be written as flags (--t-final) or names (t_final)"""
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            continue
        name = key.strip().lstrip("-").lower().replace("-", "_")
        name = CONFIG_ALIASES.get(name, name)
        if name:
            values[name] = value
    return values


def _parse_levels(text: str) -> List[int]:
    try:
        levels = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got '{text}'")
    if not levels:
        raise click.BadParameter("at least one level is required")
    return levels


def shared_options(func):
    """Flags common to every solver subcommand"""
    options = [
        click.option("--alpha", type=float, default=0.4, show_default=True, help="Fractional order in (0, 1]"),
        click.option("--nu", type=float, default=1.5, show_default=True, help="Viscosity"),
        click.option("--t-final", type=float, default=1.0, show_default=True, help="Final time T"),
        click.option("--nt", type=int, default=8, show_default=True, help="Number of time steps"),
        click.option("--n", type=int, default=16, show_default=True, help="Cells per side of the mesh"),
        click.option("--picard-tol", type=float, default=1e-10, show_default=True),
        click.option("--picard-max", type=int, default=50, show_default=True),
        click.option("--linear-tol", type=float, default=1e-12, show_default=True),
        click.option("--out-dir", type=click.Path(file_okay=False),
                     default=lambda: os.environ.get("TFNS_OUT_DIR", "results"), show_default="results"),
        click.option("--format", "fmt", type=click.Choice(["vtk", "csv"]), default="vtk", show_default=True),
        click.option("--tau-override", type=float, default=None, help="Time step replacing T / nt"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _warn_ignored(ctx: click.Context, *names: str) -> None:
    """Flags given on the command line that a study command does not use"""
    for name in names:
        if ctx.get_parameter_source(name) is ParameterSource.COMMANDLINE:
            flag = "--format" if name == "fmt" else "--" + name.replace("_", "-")
            logging.warning(f"{flag} has no effect on {ctx.command.name}")
            click.echo(f"⚠️  {flag} has no effect on {ctx.command.name}", err=True)


def _fail(error: Exception) -> None:
    logging.error(f"{type(error).__name__}: {error}")
    click.echo(f"❌ {error}", err=True)
    sys.exit(1)


@click.group()
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
              help="key=value file setting any flag; command-line flags win")
@click.option("--log-level", default=lambda: os.environ.get("TFNS_LOG_LEVEL", "INFO"), show_default="INFO")
@click.pass_context
def cli(ctx, config_file, log_level):
    """Solver and verification harness for the time-fractional Navier-Stokes equations"""
    logging.basicConfig(level=getattr(logging, str(log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(module)s: %(message)s")
    if config_file:
        values = load_config_file(config_file)
        ctx.default_map = {name: dict(values) for name in cli.commands}
        logging.info(f"Loaded {len(values)} settings from {config_file}")


@cli.command("run")
@shared_options
@click.option("--forcing", type=click.Choice(["manufactured", "zero", "initial-field"]),
              default="manufactured", show_default=True)
def run_command(alpha, nu, t_final, nt, n, picard_tol, picard_max, linear_tol, out_dir, fmt,
                tau_override, forcing):
    """Run the scheme once and export the final fields and diagnostics"""
    try:
        config = SolverConfig(alpha=alpha, nu=nu, t_final=t_final, n_steps=nt, n_cells=n,
                              picard_tol=picard_tol, picard_max=picard_max, linear_tol=linear_tol,
                              forcing=forcing, tau_override=tau_override)
        click.echo(f"🚀 Running alpha={config.alpha}, n={config.n_cells}, steps={config.steps}, "
                   f"tau={config.tau:.6g}")
        result = run(config)

        out = Path(out_dir)
        fields_path = export_fields(result.final_fields(), result.space, out / f"fields_final.{fmt}", fmt)
        diagnostics_path = write_diagnostics(result.diagnostics, out / "diagnostics.csv")

        click.echo(f"✅ {len(result.ledger)} steps accepted; fields -> {fields_path}, "
                   f"diagnostics -> {diagnostics_path}")
        if config.forcing == "manufactured" and len(result.ledger):
            e1, e2, ep = final_time_errors(result)
            click.echo(f"📊 L2 errors at t={result.final_fields().time:.4g}: "
                       f"u1={e1:.4e}, u2={e2:.4e}, p={ep:.4e}")
    except SOLVER_ERRORS as e:
        _fail(e)


def _echo_report(report, label: str) -> None:
    click.echo(f"{'level':>6} {label:>12} {'err_u1':>12} {'err_u2':>12} {'err_p':>12}")
    for level, spacing, (e1, e2, ep) in zip(report.levels, report.spacings, report.errors):
        click.echo(f"{level:>6} {spacing:>12.5g} {e1:>12.4e} {e2:>12.4e} {ep:>12.4e}")
    for level, (r1, r2, rp) in zip(report.levels[1:], report.rates):
        click.echo(f"📈 rate to level {level}: u1={r1:.3f}, u2={r2:.3f}, p={rp:.3f}")


@cli.command("converge-space")
@shared_options
@click.option("--levels", default="4,8,16", show_default=True, help="Comma-separated cells per side")
@click.pass_context
def converge_space(ctx, alpha, nu, t_final, nt, n, picard_tol, picard_max, linear_tol, out_dir, fmt,
                   tau_override, levels):
    """Spatial convergence study at a fixed time step (1/8 unless overridden)"""
    _warn_ignored(ctx, "nt", "n", "fmt")
    try:
        tau = tau_override if tau_override is not None else SPACE_STUDY_TAU
        click.echo(f"🔬 Spatial study alpha={alpha}, tau={tau:.6g}, levels={levels}")
        report = run_space_study(alpha, _parse_levels(levels), tau_fixed=tau, nu=nu, t_final=t_final,
                                 picard_tol=picard_tol, picard_max=picard_max, linear_tol=linear_tol)
        _echo_report(report, "h")
        out = Path(out_dir)
        click.echo(f"✅ Report -> {report.to_csv(out / f'space_alpha{alpha}.csv')}, "
                   f"{report.to_json(out / f'space_alpha{alpha}.json')}")
    except SOLVER_ERRORS as e:
        _fail(e)


@cli.command("converge-time")
@shared_options
@click.option("--steps", default="4,8,16,32", show_default=True, help="Comma-separated step counts")
@click.pass_context
def converge_time(ctx, alpha, nu, t_final, nt, n, picard_tol, picard_max, linear_tol, out_dir, fmt,
                  tau_override, steps):
    """Temporal convergence study on a fixed mesh (--n, 16 by default)"""
    _warn_ignored(ctx, "nt", "tau_override", "fmt")
    try:
        click.echo(f"🔬 Temporal study alpha={alpha}, n={n}, steps={steps}")
        report = run_time_study(alpha, _parse_levels(steps), n_fixed=n, nu=nu, t_final=t_final,
                                picard_tol=picard_tol, picard_max=picard_max, linear_tol=linear_tol)
        _echo_report(report, "tau")
        click.echo("ℹ️  Errors against the exact fields stop shrinking once they reach the spatial "
                   "error of the fixed mesh; the self-convergence rates measure the time discretization.")
        for level, rate in zip(report.levels[2:], report.increment_rates):
            click.echo(f"📈 self-convergence rate to level {level}: {rate:.3f}")
        out = Path(out_dir)
        click.echo(f"✅ Report -> {report.to_csv(out / f'time_alpha{alpha}.csv')}, "
                   f"{report.to_json(out / f'time_alpha{alpha}.json')}")
    except SOLVER_ERRORS as e:
        _fail(e)


@cli.command("weights")
@click.option("--alpha", type=float, required=True, help="Fractional order in (0, 1]")
@click.option("--count", type=int, required=True, help="Number of weights")
@click.option("--tau", type=float, default=1.0, show_default=True)
def weights_command(alpha, count, tau):
    """Print k, w_k and the partial sums as CSV"""
    try:
        weights = compute_weights(alpha, count, tau)
    except ValueError as e:
        _fail(e)
        return
    partial = np.cumsum(weights.weights)
    click.echo("k,w_k,partial_sum")
    for k, (w, s) in enumerate(zip(weights.weights, partial)):
        click.echo(f"{k},{float(w)!r},{float(s)!r}")


if __name__ == "__main__":
    cli()
