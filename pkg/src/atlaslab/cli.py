"""Command line client.

Every subcommand is a thin wrapper over the HTTP service: by default the
app is mounted in-process (no socket), --server points at a running one
instead.  Options resolve as: explicit flag > config-file section > built
in default.  The config file is YAML with one section per subcommand,
e.g.

    out_dir: results
    simulate:
      lam: 1.0
      n: 2000
    verify:
      replicas: 10

The output directory resolves as --out > config out_dir > $ATLASLAB_OUT
> current directory.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import yaml
from click.core import ParameterSource

from .experiments import TAGS, resolve_out_dir

# per-tag lambda grids used when `verify` gets no --lam
VERIFY_LAMBDAS = {
    "leftmost-scaling": (1.0, 2.0, 4.0),
    "density-profile": (1.0,),
    "particle-count": (1.0, 2.0),
    "quantile-law": (1.0, 2.0),
    "spacings-equilibrium": (2.0, 1.0),
    "domination": (1.0, 4.0),
}


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        # starlette deprecates its httpx-backed TestClient; it is still the
        # supported way to drive an ASGI app from synchronous code here
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _fail(resp) -> None:
    try:
        detail = resp.json().get("detail", resp.text)
    except Exception:
        detail = resp.text
    click.echo(f"error ({resp.status_code}): {detail}", err=True)
    sys.exit(2)


def _post(ctx, path: str, payload: dict) -> dict:
    with _client(ctx.obj["server"]) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        _fail(resp)
    return resp.json()


def _merged(ctx, section: str) -> dict:
    """Fill parameters left at their defaults from the config file."""
    file_cfg = ctx.obj["config"].get(section, {})
    out = {}
    for name, val in ctx.params.items():
        if (ctx.get_parameter_source(name) == ParameterSource.DEFAULT
                and name in file_cfg):
            raw = file_cfg[name]
            out[name] = tuple(raw) if isinstance(raw, list) else raw
        else:
            out[name] = val
    return out


def _out_dir(ctx, explicit) -> Path:
    if explicit:
        return Path(explicit)
    top = ctx.obj["config"].get("out_dir")
    return resolve_out_dir(None, top)  # falls back to $ATLASLAB_OUT, then cwd


def _write_xy(path: Path, header: tuple, rows, meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        for key, val in meta.items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _floats(text: str | None) -> list[float]:
    if not text:
        return []
    return [float(tok) for tok in text.replace(",", " ").split()]


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML config file; sections per subcommand.")
@click.option("--server", default=None,
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx, config, server):
    """Rank-based particle lab: simulator, analytic and FD free-boundary
    solvers, and seeded verification experiments."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = yaml.safe_load(Path(config).read_text()) or {} if config else {}
    ctx.obj["server"] = server


@main.command()
@click.option("--lam", "-l", "lams", multiple=True, type=float,
              help="Repeatable; defaults to a standard grid.")
@click.option("--t", type=float, default=1.0, show_default=True)
@click.option("--x-grid", default=None,
              help="Profile points 'lo:hi:count' or comma list.")
@click.option("--out", default=None, help="Directory for CSV outputs.")
@click.pass_context
def stefan(ctx, lams, t, x_grid, out):
    """Front constants (lambda, kappa, c1, c2) and optional profile CSVs."""
    p = _merged(ctx, "stefan")
    lams = list(p["lams"]) or [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 4.0, 8.0]
    if p["x_grid"] and ":" in str(p["x_grid"]):
        lo, hi, count = str(p["x_grid"]).split(":")
        xs = [float(lo) + i * (float(hi) - float(lo)) / (int(count) - 1)
              for i in range(int(count))]
    else:
        xs = _floats(p["x_grid"])
    data = _post(ctx, "/stefan", {"lams": lams, "t": p["t"], "xs": xs})

    click.echo(f"{'lam':>8} {'kappa':>20} {'c1':>20} {'c2':>20} {'front':>12}")
    for row in data["rows"]:
        click.echo(f"{row['lam']:>8g} {row['kappa']:>20.12f} "
                   f"{row['c1']:>20.12f} {row['c2']:>20.12f} {row['front']:>12.6f}")
    if p["out"] is not None or xs:
        directory = _out_dir(ctx, p["out"])
        directory.mkdir(parents=True, exist_ok=True)
        table = directory / "stefan-table.csv"
        _write_xy(table, ("lam", "kappa", "c1", "c2", "front"),
                  [(r["lam"], r["kappa"], r["c1"], r["c2"], r["front"])
                   for r in data["rows"]], {"t": p["t"]})
        click.echo(f"wrote {table}")
        for key, values in data["profiles"].items():
            prof = directory / f"stefan-profile-lam{key}.csv"
            _write_xy(prof, ("x", "value"), zip(xs, values),
                      {"lam": key, "t": p["t"]})
            click.echo(f"wrote {prof}")


@main.command("fd-solve")
@click.option("--lam", type=float, required=True)
@click.option("--t-end", type=float, default=1.0, show_default=True)
@click.option("--dxi", type=float, default=0.0125, show_default=True)
@click.option("--domain-length", type=float, default=50.0, show_default=True)
@click.option("--dt-factor", type=float, default=0.4, show_default=True)
@click.option("--t0", type=float, default=1e-3, show_default=True)
@click.option("--scheme", type=click.Choice(["ftcs", "crank_nicolson"]),
              default="ftcs", show_default=True)
@click.option("--checkpoints", type=int, default=200, show_default=True)
@click.option("--profile/--no-profile", default=True, show_default=True,
              help="Also export the lab-frame density profile.")
@click.option("--out", default=None)
@click.pass_context
def fd_solve(ctx, lam, t_end, dxi, domain_length, dt_factor, t0, scheme,
             checkpoints, profile, out):
    """Integrate the moving-boundary solver and export front history."""
    p = _merged(ctx, "fd-solve")
    data = _post(ctx, "/fd/solve", {
        "lam": p["lam"], "t_end": p["t_end"], "dxi": p["dxi"],
        "domain_length": p["domain_length"], "dt_factor": p["dt_factor"],
        "t0": p["t0"], "scheme": p["scheme"],
        "n_checkpoints": p["checkpoints"], "include_profile": p["profile"]})
    click.echo(f"lam={data['lam']:g} kappa_boot={data['kappa_boot']:.10f}")
    click.echo(f"y({data['t_final']:g}) = {data['y_final']:.8f}   "
               f"front speed {data['front_speed']:+.6f}   "
               f"gradient {data['gradient_at_front']:+.6f}")
    click.echo(f"excess mass {data['excess_mass']:.6f}   "
               f"envelope excess {data['envelope_excess']:.3g}")
    directory = _out_dir(ctx, p["out"])
    directory.mkdir(parents=True, exist_ok=True)
    hist = directory / f"fd-front-lam{p['lam']:g}.csv"
    _write_xy(hist, ("t", "y"),
              zip(data["history_times"], data["history_y"]),
              {"lam": p["lam"], "scheme": p["scheme"], "dxi": p["dxi"]})
    click.echo(f"wrote {hist}")
    if p["profile"]:
        prof = directory / f"fd-profile-lam{p['lam']:g}.csv"
        _write_xy(prof, ("x", "value"),
                  zip(data["profile_x"], data["profile_u"]),
                  {"lam": p["lam"], "t": data["t_final"], "scheme": p["scheme"]})
        click.echo(f"wrote {prof}")


@main.command()
@click.option("--lam", type=float, default=1.0, show_default=True)
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--dt", type=float, default=1e-3, show_default=True)
@click.option("--horizon", "-T", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--engine", type=click.Choice(["exact", "windowed"]),
              default="exact", show_default=True)
@click.option("--init", type=click.Choice(["poisson", "spacings"]),
              default="poisson", show_default=True)
@click.option("--rates", default=None,
              help="Spacings init: comma list of gap rates (last extends).")
@click.option("--gamma", default="1.0",
              help="Comma list of rank drifts, leftmost first.")
@click.option("--sample-times", default=None, help="Comma list of times.")
@click.option("--quantiles", default=None, help="Comma list of fractions.")
@click.option("--state/--no-state", default=False, show_default=True,
              help="Also export the final ranked positions.")
@click.option("--out", default=None)
@click.pass_context
def simulate(ctx, lam, n, dt, horizon, seed, engine, init, rates, gamma,
             sample_times, quantiles, state, out):
    """Run the interacting system and export trajectory/state CSVs."""
    p = _merged(ctx, "simulate")
    data = _post(ctx, "/simulate", {
        "lam": p["lam"], "n": p["n"], "dt": p["dt"], "horizon": p["horizon"],
        "seed": p["seed"], "engine": p["engine"], "init": p["init"],
        "rates": _floats(p["rates"]), "gamma": _floats(p["gamma"]) or [1.0],
        "sample_times": _floats(p["sample_times"]),
        "quantiles": _floats(p["quantiles"]), "include_state": p["state"]})
    click.echo(f"n={data['n']} t={data['sim_time']:g} "
               f"leftmost={data['leftmost']:.6f} drift_total={data['drift_total']:.6f}")
    directory = _out_dir(ctx, p["out"])
    directory.mkdir(parents=True, exist_ok=True)
    if data["trajectory_times"]:
        traj = directory / "trajectory.csv"
        header = ["t", "leftmost"] + [f"q{q:g}" for q in data["quantile_fractions"]]
        rows = [[t, y1] + list(qs) for t, y1, qs in
                zip(data["trajectory_times"], data["trajectory_leftmost"],
                    data["trajectory_quantiles"] or
                    [[]] * len(data["trajectory_times"]))]
        _write_xy(traj, tuple(header), rows,
                  {"lam": p["lam"], "n": p["n"], "dt": p["dt"], "seed": p["seed"]})
        click.echo(f"wrote {traj}")
    if p["state"]:
        spath = directory / "state.csv"
        _write_xy(spath, ("rank", "position"),
                  enumerate(data["positions"]),
                  {"lam": p["lam"], "t": data["sim_time"], "seed": p["seed"]})
        click.echo(f"wrote {spath}")


@main.command()
@click.argument("tag", type=click.Choice(TAGS))
@click.option("--lam", "-l", "lams", multiple=True, type=float,
              help="Repeatable; defaults to the tag's criterion grid.")
@click.option("--seed", type=int, default=20260814, show_default=True)
@click.option("--replicas", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--dt", type=float, default=None)
@click.option("--b", type=float, default=None)
@click.option("--fmt", type=click.Choice(["json", "csv", "markdown"]),
              default="json", show_default=True)
@click.option("--out", default=None)
@click.pass_context
def verify(ctx, tag, lams, seed, replicas, n, dt, b, fmt, out):
    """Run one verification experiment per lambda; exit 0 iff all pass."""
    p = _merged(ctx, "verify")
    lams = list(p["lams"]) or list(VERIFY_LAMBDAS[tag])
    directory = _out_dir(ctx, p["out"])
    payload_base = {"tag": tag, "seed": p["seed"]}
    for key in ("replicas", "n", "dt", "b"):
        if p[key] is not None:
            payload_base[key] = p[key]
    all_ok = True
    for lam in lams:
        data = _post(ctx, "/verify", {**payload_base, "lam": lam})
        for rec in data["records"]:
            mark = "PASS" if rec["passed"] else "FAIL"
            click.echo(f"[{mark}] {rec['claim_id']}: statistic "
                       f"{rec['statistic']:+.5f} vs tolerance {rec['tolerance']:.5f}")
        all_ok &= data["passed"]
        rendered = _post(ctx, "/report", {
            "report": data, "fmt": p["fmt"], "out_dir": str(directory)})
        click.echo(f"wrote {rendered['path']}")
    click.echo("all claims passed" if all_ok else "some claims FAILED")
    sys.exit(0 if all_ok else 1)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="A report JSON produced by verify.")
@click.option("--fmt", type=click.Choice(["json", "csv", "markdown"]),
              default="markdown", show_default=True)
@click.option("--out", default=None)
@click.pass_context
def report(ctx, input_path, fmt, out):
    """Re-render a stored verification report in another format."""
    p = _merged(ctx, "report")
    raw = json.loads(Path(p["input_path"]).read_text())
    directory = _out_dir(ctx, p["out"])
    rendered = _post(ctx, "/report", {
        "report": raw, "fmt": p["fmt"], "out_dir": str(directory)})
    click.echo(f"wrote {rendered['path']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("atlaslab.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
