"""Command-line interface: one verb per experiment stage.

Common flags: ``--config PATH`` (a flat key-value file, a previous run's
``manifest.json``, or ``preset:NAME``), ``--seed INT``, ``--out DIR``, and
``--limit N`` (dataset count cap). Flags override config-file values.
"""

from __future__ import annotations

import click

from ..errors import DiffwaError
from .config import STAGES, load_config
from .runs import run


@click.group()
def main():
    """Watermark-removal research toolkit."""


def _execute(stage, config, seed, out, limit):
    try:
        values = load_config(config) if config else {}
        values["stage"] = stage
        if seed is not None:
            values["seed"] = seed
        if out is not None:
            values["out"] = out
        if limit is not None:
            values["dataset.count"] = limit
        out_dir = run(values)
    except DiffwaError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{stage}: wrote {out_dir}")


def _register(stage):
    @main.command(name=stage)
    @click.option("--config", type=str, default=None,
                  help="Config file, manifest.json, or preset:NAME.")
    @click.option("--seed", type=int, default=None, help="Master seed override.")
    @click.option("--out", type=str, default=None, help="Output directory.")
    @click.option("--limit", type=int, default=None, help="Dataset count cap.")
    def _cmd(config, seed, out, limit, _stage=stage):
        _execute(_stage, config, seed, out, limit)

    _cmd.__doc__ = f"Run the {stage} stage."


for _stage in STAGES:
    _register(_stage)
