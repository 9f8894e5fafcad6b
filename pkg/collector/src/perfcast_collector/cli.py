"""Command-line entry point for on-hardware collection runs."""

from __future__ import annotations

import logging
import sys

import click

from . import __version__
from .errors import CollectorError
from .runner import run_grid


@click.command()
@click.version_option(__version__)
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True),
              help="Grid config YAML (same format as the predictor CLI).")
@click.option("--ops", required=True,
              help="Comma-separated operator names to profile.")
@click.option("--device", default="cpu", show_default=True)
@click.option("--directions", default="fwd,bwd", show_default=True)
@click.option("--replicates", default=1, show_default=True)
@click.option("--hardware-id", default=None,
              help="Override the hardware tag (defaults to '<device>-wallclock').")
@click.option("--out", "out_path", default="collected.csv", show_default=True)
def main(grid_path, ops, device, directions, replicates, hardware_id, out_path):
    """Profile operators over a shape grid and emit a benchmark CSV."""
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        n = run_grid(grid_path, [o.strip() for o in ops.split(",") if o.strip()],
                     device, out_path,
                     directions=tuple(d.strip() for d in directions.split(",")),
                     replicates=replicates, hardware_id=hardware_id)
    except CollectorError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {n} rows to {out_path}")


if __name__ == "__main__":
    main()
