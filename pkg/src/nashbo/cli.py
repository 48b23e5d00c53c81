"""Command-line client.

Every command builds the same request models the HTTP service consumes
and, by default, invokes the service handlers in-process; pass
--server to route the request to a running instance instead.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .harness import default_power_config
from .service import schemas


def _load_doc(config: str | None) -> dict:
    if config is None:
        return default_power_config()
    return json.loads(Path(config).read_text())


def _apply_overrides(doc: dict, seed: int | None, out: str | None, reps: int | None = None) -> dict:
    doc = dict(doc)
    if seed is not None:
        doc["base_seed"] = seed
    if out is not None:
        doc["out_dir"] = out
    if reps is not None:
        doc["reps"] = reps
    return doc


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    response = httpx.post(f"{server.rstrip('/')}{route}", json=payload, timeout=None)
    if response.status_code >= 400:
        raise click.ClickException(f"server returned {response.status_code}: {response.text}")
    return response.json()


def _echo_json(doc) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


@click.group()
def main():
    """Approximate-equilibrium optimization for black-box games."""


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None, help="Experiment JSON; defaults to the flagship power-game protocol.")
@click.option("--seed", type=int, default=None, help="Override base_seed.")
@click.option("--out", type=click.Path(), default=None, help="Override output directory.")
@click.option("--server", default=None, help="Route through a running service instead of in-process.")
def run(config, seed, out, server):
    """Run one experiment (all reps) and write trajectory + aggregate CSVs."""
    doc = _apply_overrides(_load_doc(config), seed, out)
    if server:
        _echo_json(_post(server, "/experiments", doc))
        return
    from .service.app import handle_run

    response = handle_run(schemas.ExperimentRequest(**doc))
    _echo_json(response.model_dump())


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--reps", type=int, required=True, help="Replication count.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--server", default=None)
def replicate(config, reps, seed, out, server):
    """Run with an overridden replication count."""
    doc = _apply_overrides(_load_doc(config), seed, out, reps=reps)
    if server:
        _echo_json(_post(server, "/experiments", doc))
        return
    from .service.app import handle_run

    response = handle_run(schemas.ExperimentRequest(**doc))
    _echo_json(response.model_dump())


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--players", required=True, help="Comma-separated list of player counts, e.g. 2,3,4.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--server", default=None)
def sweep(config, players, seed, out, server):
    """Sweep the number of players and collect final-iteration metrics."""
    try:
        values = [int(v) for v in players.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter("players must be a comma-separated integer list")
    if not values:
        raise click.BadParameter("players list is empty")
    doc = _apply_overrides(_load_doc(config), seed, out)
    doc["players"] = values
    if server:
        _echo_json(_post(server, "/sweep", doc))
        return
    from .service.app import handle_sweep

    response = handle_sweep(schemas.SweepRequest(**doc))
    _echo_json(response.model_dump())


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None, help="Write the report JSON here instead of stdout.")
@click.option("--server", default=None)
def oracle(config, out, server):
    """Exhaustive grid search for the best achievable tolerance."""
    doc = _load_doc(config)
    if server:
        report = _post(server, "/oracle", doc)
    else:
        from .service.app import handle_oracle

        report = handle_oracle(schemas.OracleRequest(**doc)).model_dump()
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        click.echo(str(out))
    else:
        sys.stdout.write(text)


@main.command("export-plot-data")
@click.option("--runs", multiple=True, required=True, type=click.Path(exists=True), help="Run directories to merge (repeatable).")
@click.option("--out", required=True, type=click.Path(), help="Destination directory for plot-ready CSVs.")
def export_plot_data_cmd(runs, out):
    """Merge run aggregates (and sweeps) into plot-ready CSV files."""
    from .harness import export_plot_data

    produced = export_plot_data(list(runs), out)
    _echo_json({k: str(v) for k, v in produced.items()})


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("nashbo.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
