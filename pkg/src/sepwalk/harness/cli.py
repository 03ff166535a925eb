"""Command-line experiment driver.

Exit codes: 0 when all report assertions pass, 2 on assertion failure,
1 on configuration or runtime error.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import load_config
from .experiments import (run_diagnostics, run_entropy_experiment,
                          run_hydro_command, run_importance_sampling,
                          run_lln_experiment, run_rate_command,
                          run_simulate_command)


def _common(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True),
                      help="INI or JSON experiment config")(fn)
    fn = click.option("--out", "out_dir", default=None,
                      help="output directory (overrides config)")(fn)
    fn = click.option("--seed", default=None, type=int,
                      help="master seed (overrides config)")(fn)
    fn = click.option("--threads", default=None, type=int)(fn)
    fn = click.option("--format", "fmt", default=None,
                      type=click.Choice(["csv", "json"]))(fn)
    fn = click.option("--figures/--no-figures", "figures", default=None,
                      help="render figures next to the tables")(fn)
    return fn


def _load(config_path, out_dir, seed, threads, fmt, figures):
    overrides = {"out": out_dir, "seed": seed, "threads": threads,
                 "format": fmt}
    if figures is not None:
        overrides["figures"] = figures
    return load_config(config_path, overrides)


def _finish(cfg, report, extra_writer=None) -> None:
    out = Path(cfg.run["out"])
    report.write(out, fmt=cfg.run["format"], figures=cfg.run["figures"])
    if extra_writer is not None:
        extra_writer(out)
    report.print_summary()
    sys.exit(0 if report.passed else 2)


def _run(runner, config_path, out_dir, seed, threads, fmt, figures,
         extra=None):
    try:
        cfg = _load(config_path, out_dir, seed, threads, fmt, figures)
        result = runner(cfg)
    except SystemExit:
        raise
    except Exception as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if isinstance(result, tuple):
        report, payload = result
        writer = (lambda out: extra(cfg, payload, out)) if extra else None
        _finish(cfg, report, writer)
    else:
        _finish(cfg, result)


@click.group()
def main() -> None:
    """Exclusion-driven random walk: simulation, limits and rate functions."""


@main.command()
@_common
def simulate(config_path, out_dir, seed, threads, fmt, figures):
    """Run a replica farm; emit path-field and walker CSVs plus martingale
    accumulators."""

    def extra(cfg, payload, out: Path):
        pf = payload["pf"]
        (out / "pathfield.csv").write_text(pf.to_csv())
        (out / "walker.csv").write_text(pf.walker_csv())
        (out / "pathfield_frame.csv").write_text(pf.moving_frame().to_csv())
        if cfg.run["figures"]:
            from .figures import render_pathfield

            render_pathfield(pf, out, "pathfield")

    _run(run_simulate_command, config_path, out_dir, seed, threads, fmt,
         figures, extra)


@main.command()
@_common
def hydro(config_path, out_dir, seed, threads, fmt, figures):
    """Solve the deterministic limit equations; emit field CSVs."""

    def extra(cfg, payload, out: Path):
        sol = payload["sol"]
        (out / "u.csv").write_text(sol.u.to_csv())
        (out / "uhat.csv").write_text(sol.uhat.to_csv())
        if cfg.run["figures"]:
            from .figures import render_pathfield

            render_pathfield(sol.uhat, out, "u_frame")

    _run(run_hydro_command, config_path, out_dir, seed, threads, fmt,
         figures, extra)


@main.command()
@_common
def rate(config_path, out_dir, seed, threads, fmt, figures):
    """Evaluate the rate-function breakdown of the configured tilt."""

    def extra(cfg, payload, out: Path):
        (out / "rate_breakdown.json").write_text(payload.to_json() + "\n")

    _run(run_rate_command, config_path, out_dir, seed, threads, fmt,
         figures, extra)


@main.command("lln-check")
@_common
def lln_check(config_path, out_dir, seed, threads, fmt, figures):
    """Convergence of empirical paths to the deterministic limits."""
    _run(run_lln_experiment, config_path, out_dir, seed, threads, fmt,
         figures)


@main.command("entropy-check")
@_common
def entropy_check(config_path, out_dir, seed, threads, fmt, figures):
    """Relative entropy of the tilted law against its rate-function limit."""
    _run(run_entropy_experiment, config_path, out_dir, seed, threads, fmt,
         figures)


@main.command("is-estimate")
@_common
def is_estimate(config_path, out_dir, seed, threads, fmt, figures):
    """Rare-event probability: naive versus importance sampling."""
    _run(run_importance_sampling, config_path, out_dir, seed, threads, fmt,
         figures)


@main.command()
@_common
def diagnostics(config_path, out_dir, seed, threads, fmt, figures):
    """Replacement, ensembles, energy and martingale diagnostics."""
    _run(run_diagnostics, config_path, out_dir, seed, threads, fmt, figures)


if __name__ == "__main__":  # pragma: no cover
    main()
