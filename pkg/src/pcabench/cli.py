"""The `pcabench` command group.

Exit codes: 0 success, 1 run failure (a cell failed, a report has gaps,
fixture numbers mismatch, a download failed), 2 configuration error (bad
flags, bad config file, bad dataset path).
"""

from __future__ import annotations

import dataclasses
import sys

import click

from . import __version__
from . import fetch as fetch_mod
from . import harness
from . import report as report_mod
from .errors import ContractError, DataError
from .training import BACKBONES


@click.group()
@click.version_option(version=__version__, prog_name="pcabench")
def main():
    """Benchmark harness for PCA-reduced transformer forecasting."""


@main.command()
@click.argument("name")
@click.option("--dest", default="data", show_default=True,
              help="Directory the CSV is placed in.")
@click.option("--offline-from", type=click.Path(exists=True), default=None,
              help="Validate and copy a locally provided file instead of downloading.")
def fetch(name, dest, offline_from):
    """Download or install one benchmark dataset by NAME."""
    if name not in fetch_mod.DATASETS:
        known = ", ".join(sorted(fetch_mod.DATASETS))
        raise click.UsageError(f"unknown dataset {name!r}; known datasets: {known}")
    try:
        facts = fetch_mod.fetch(name, dest, offline_from=offline_from)
    except DataError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(f"{name}: {facts['path']}")
    click.echo(f"rows={facts['rows']} data_columns={facts['data_cols']} "
               f"sha256={facts['sha256']}")


@main.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", default="OT", show_default=True,
              help="Name of the target column.")
@click.option("--out", "out_dir", default=".", show_default=True,
              help="Directory for pcc_<name>.csv.")
@click.option("--name", "dataset_name", default=None,
              help="Dataset label for the output filename (default: file stem).")
def correlate(dataset, target, out_dir, dataset_name):
    """Write the channels+target Pearson correlation matrix as CSV."""
    try:
        path = harness.run_correlate(dataset, target, out_dir,
                                     dataset_name=dataset_name)
    except (ContractError, DataError) as e:
        raise click.UsageError(str(e))
    click.echo(path)


def _parse_components(text: str) -> tuple:
    toks = [t.strip() for t in text.split(",") if t.strip()]
    if not toks:
        raise click.UsageError(f"--components lists no values: {text!r}")
    try:
        return tuple(int(t) for t in toks)
    except ValueError:
        raise click.UsageError(
            f"--components must be comma-separated integers, got {text!r}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON config; flags below override its keys.")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Dataset CSV path.")
@click.option("--name", "dataset_name", default=None, help="Dataset label in outputs.")
@click.option("--model-label", default=None, help="Model label in outputs.")
@click.option("--target", default=None, help="Target column name.")
@click.option("--components", default=None,
              help="Comma-separated P values, e.g. 2,20,40.")
@click.option("--backbone", type=click.Choice(BACKBONES), default=None)
@click.option("--horizon", type=int, default=None,
              help="Forecast horizon override.")
@click.option("--epochs", type=int, default=None, help="Training epochs override.")
@click.option("--seed", type=int, default=None)
@click.option("--pca-fit", type=click.Choice(harness.PCA_FIT_SCOPES), default=None,
              help="Rows the PCA is fitted on.")
@click.option("--no-target-channel", is_flag=True,
              help="Do not append the raw target to the model input channels.")
@click.option("--out", "out_dir", default=None, help="Run output directory.")
@click.option("--paper-fixture", is_flag=True,
              help="Write the published tables as a run directory instead of training.")
def sweep(config_path, dataset, dataset_name, model_label, target, components,
          backbone, horizon, epochs, seed, pca_fit, no_target_channel, out_dir,
          paper_fixture):
    """Run one cell per P value plus the control, then consolidate."""
    if paper_fixture:
        if out_dir is None:
            raise click.UsageError("--paper-fixture requires --out")
        paths = harness.run_fixture_sweep(out_dir)
        click.echo(f"fixture tables written to {out_dir}")
        for key in sorted(paths):
            click.echo(f"  {key}: {paths[key]}")
        return

    overrides = {
        "dataset": dataset, "dataset_name": dataset_name,
        "model_label": model_label, "target": target, "backbone": backbone,
        "seed": seed, "pca_fit": pca_fit, "out_dir": out_dir,
    }
    if components is not None:
        overrides["components"] = _parse_components(components)
    if no_target_channel:
        overrides["append_target"] = False
    tf_overrides = {}
    if horizon is not None:
        tf_overrides["horizon"] = horizon
    if epochs is not None:
        tf_overrides["epochs"] = epochs
    try:
        cfg = harness.ExperimentConfig.from_sources(config_path, **overrides)
        if tf_overrides:
            cfg = dataclasses.replace(
                cfg, transformer={**cfg.transformer, **tf_overrides})
    except ContractError as e:
        raise click.UsageError(str(e))

    try:
        result = harness.run_sweep(cfg)
    except (ContractError, DataError, FileNotFoundError) as e:
        raise click.UsageError(str(e))

    for res in result.results:
        rec = res.record
        click.echo(f"{res.label}: mse={rec.mse:.6f} mae={rec.mae:.6f} "
                   f"runtime={rec.runtime_s:.3f}s pca_fit={res.pca_fit_s:.3f}s")
    for failure in result.failures:
        click.echo(f"{failure['label']}: FAILED {failure['error']}", err=True)
    click.echo(f"outputs in {result.out_dir}")
    if not result.ok:
        click.echo(f"{len(result.failures)} cell(s) failed", err=True)
        sys.exit(1)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def report(run_dir):
    """Render the Markdown and CSV tables for a finished run directory."""
    try:
        rep, paths = report_mod.write_report(run_dir)
    except DataError as e:
        raise click.UsageError(str(e))
    click.echo(rep.markdown)
    for key in sorted(paths):
        click.echo(f"wrote {paths[key]}", err=True)
    if not rep.ok:
        click.echo("report has gaps (missing runtime fields)", err=True)
        sys.exit(1)


@main.command("fixture-check")
@click.option("--tolerance", type=float, default=0.02, show_default=True,
              help="Allowed gap in percentage points.")
def fixture_check(tolerance):
    """Re-derive the published consolidated table and diff every number."""
    ok, lines = harness.check_fixture(tolerance=tolerance)
    for line in lines:
        click.echo(line)
    if ok:
        click.echo(f"all {len(lines)} cells within {tolerance} pp")
    else:
        bad = sum(1 for l in lines if l.startswith("MISMATCH"))
        click.echo(f"{bad} cell(s) outside {tolerance} pp", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
