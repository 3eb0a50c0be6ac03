"""Thin-client CLI for the qopf service.

Every subcommand is an HTTP call against the FastAPI app: either a remote
server given with --server / QOPF_SERVER, or the app mounted in-process
(the default, no network involved).

Exit codes: 0 success, 2 validation error, 3 convergence/infeasibility,
4 I/O error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service import app
    return TestClient(app, raise_server_exceptions=False)


def _post(server: str | None, path: str, payload: dict) -> dict:
    try:
        with _client(server) as client:
            resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach server: {exc}", err=True)
        sys.exit(EXIT_IO)
    if resp.status_code == 422:
        click.echo(f"error: {_detail(resp)}", err=True)
        sys.exit(EXIT_VALIDATION)
    if resp.status_code == 409:
        click.echo(f"error: {_detail(resp)}", err=True)
        sys.exit(EXIT_CONVERGENCE)
    if resp.status_code != 200:
        click.echo(f"error: server returned {resp.status_code}: {resp.text}", err=True)
        sys.exit(EXIT_IO)
    return resp.json()


def _detail(resp: httpx.Response) -> str:
    try:
        return json.dumps(resp.json().get("detail"))
    except json.JSONDecodeError:
        return resp.text


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except json.JSONDecodeError as exc:
        click.echo(f"error: {path} is not valid JSON: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


def _write(text: str, out: str | None) -> None:
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
    else:
        click.echo(text)


server_option = click.option("--server", envvar="QOPF_SERVER", default=None,
                             help="Base URL of a running qopf service; "
                                  "defaults to the in-process app.")


@click.group()
def main():
    """Quadratic convex OPF toolkit for distribution feeders."""


@main.command()
@click.argument("feeder_file", type=click.Path())
@click.option("--mode", type=click.Choice(["linear", "exact"]), default="exact")
@click.option("--dispatch-file", type=click.Path(), default=None,
              help="JSON file with {'dispatch': [{'re':..,'im':..}, ...]}")
@click.option("--out", type=click.Path(), default=None)
@server_option
def pf(feeder_file, mode, dispatch_file, out, server):
    """Solve a load flow and write a JSON report."""
    payload = {"feeder": _read_json(feeder_file), "mode": mode}
    if dispatch_file:
        payload["dispatch"] = _read_json(dispatch_file)["dispatch"]
    report = _post(server, "/pf", payload)
    _write(json.dumps(report, indent=1), out)


def _opf_cmd(endpoint, feeder_file, method, delta_max, out, server):
    payload = {"feeder": _read_json(feeder_file), "method": method}
    if delta_max is not None:
        payload["delta_max"] = delta_max
    report = _post(server, endpoint, payload)
    _write(json.dumps(report, indent=1), out)


@main.command()
@click.argument("feeder_file", type=click.Path())
@click.option("--method", type=click.Choice(["qp", "relaxed"]), default="qp")
@click.option("--delta-max", type=float, default=None,
              help="Voltage-ball radius; enforced when the post-check fails.")
@click.option("--out", type=click.Path(), default=None)
@server_option
def opf(feeder_file, method, delta_max, out, server):
    """Optimize generator dispatch for minimum losses."""
    _opf_cmd("/opf", feeder_file, method, delta_max, out, server)


@main.command(name="threephase-opf")
@click.argument("feeder_file", type=click.Path())
@click.option("--method", type=click.Choice(["qp", "relaxed"]), default="qp")
@click.option("--delta-max", type=float, default=None)
@click.option("--out", type=click.Path(), default=None)
@server_option
def threephase_opf(feeder_file, method, delta_max, out, server):
    """Optimize a three-phase unbalanced feeder."""
    _opf_cmd("/threephase-opf", feeder_file, method, delta_max, out, server)


@main.command()
@click.option("--seed", type=int, default=0)
@click.option("--params", "params_file", type=click.Path(), default=None,
              help="JSON file overriding the random-feeder parameter ranges.")
@click.option("--out", type=click.Path(), default=None)
@server_option
def gen(seed, params_file, out, server):
    """Emit a random radial feeder as JSON."""
    payload = {"seed": seed}
    if params_file:
        payload["params"] = _read_json(params_file)
    resp = _post(server, "/gen", payload)
    _write(json.dumps(resp["feeder"], indent=1), out)


@main.command()
@click.option("--count", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--params", "params_file", type=click.Path(), default=None)
@click.option("--delta-max", type=float, default=0.3)
@click.option("--jobs", type=int, default=1)
@click.option("--out", type=click.Path(), default="fleet",
              help="Output prefix; writes <out>_rows.csv and <out>_hist.csv.")
@server_option
def fleet(count, seed, params_file, delta_max, jobs, out, server):
    """Run a Monte-Carlo fleet and write per-case and histogram CSVs."""
    payload = {"count": count, "seed": seed, "delta_max": delta_max, "jobs": jobs}
    if params_file:
        payload["params"] = _read_json(params_file)
    resp = _post(server, "/fleet", payload)
    _write(resp["rows_csv"], f"{out}_rows.csv")
    _write(resp["histograms_csv"], f"{out}_hist.csv")
    n_fail = len(resp["failures"])
    click.echo(f"{len(resp['rows'])} cases written, {n_fail} failed", err=True)
    for f in resp["failures"]:
        click.echo(f"  seed={f['seed']}: {f['error']}", err=True)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the qopf HTTP service."""
    import uvicorn
    uvicorn.run("qopf.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
