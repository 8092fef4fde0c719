"""`lab` command line: run experiments, generate sets, compute contents, scan.

Exit codes: 0 all assertions pass, 1 assertion failure, 2 config error.
LAB_THREADS caps the worker count of the (J, seed) fan-out; the default
of 1 keeps runs strictly serial and byte-reproducible.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .config import parse_config, parse_generator_section
from .content import hausdorff_content
from .core import ConfigError, LabError, fmt, load_points_csv, save_points_csv
from .experiments import run as run_experiment
from .projections import exceptional_scan
from . import __version__


@click.group()
@click.version_option(version=__version__, prog_name="lab")
def main():
    """Desk-scale laboratory for discretized projection experiments."""


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def run_cmd(config_path):
    """Run the experiment described by a config file."""
    try:
        config = parse_config(config_path)
        code = run_experiment(config)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)
    except LabError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    sys.exit(code)


@main.command("gen")
@click.argument("spec_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--J", "J", type=int, default=None, help="Override the resolution level.")
def gen_cmd(spec_path, output, J):
    """Generate the point set of a [gen] config section into a CSV file."""
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(spec_path) as fh:
            cp.read_file(fh)
        if "gen" not in cp:
            raise ConfigError("missing [gen] section")
        section = dict(cp["gen"])
        J_val = J if J is not None else int(section.pop("J", "8"))
        section.pop("J", None)
        spec = parse_generator_section(section, J_default=J_val)
        X = spec.with_resolution(J_val).generate()
    except (ConfigError, LabError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)
    save_points_csv(X, output)
    click.echo(f"wrote {len(X)} points (n={X.n}, J={X.J}) to {output}")


@main.command("content")
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--s", "s", type=float, required=True, help="Content exponent.")
@click.option("--cover", type=click.Path(dir_okay=False), default=None, help="Write the optimal cover CSV here.")
def content_cmd(csv_path, s, cover):
    """Dyadic Hausdorff content of a point-set CSV."""
    try:
        X = load_points_csv(csv_path)
        result = hausdorff_content(X, s)
    except LabError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(f"content={fmt(result.value)} cover_size={len(result.cover)} terms={result.terms}")
    if cover:
        result.to_csv(cover)


@main.command("scan")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def scan_cmd(config_path):
    """Standalone exceptional-set scan: [A] target, [gen] viewpoints, [params] s."""
    try:
        config = parse_config(config_path)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(2)
    if "A" not in config.generators or "gen" not in config.generators:
        click.echo("config error: scan needs [A] and [gen] sections", err=True)
        sys.exit(2)
    J = config.J_sweep[-1]
    A = config.generators["A"].with_resolution(J).generate()
    viewpoints = config.generators["gen"].with_resolution(J).generate()
    scan = exceptional_scan(A, config.params.s, viewpoints)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    scan.to_csv(out / f"scan_J{J}.csv")
    n_exc = int(scan.exceptional.sum())
    click.echo(f"viewpoints={len(viewpoints)} exceptional={n_exc} threshold={fmt(scan.threshold)}")


@main.command("report")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def report_cmd(run_dir):
    """Summarize the manifest of a finished run directory."""
    manifest_path = Path(run_dir) / "manifest.json"
    if not manifest_path.exists():
        click.echo(f"error: no manifest.json under {run_dir}", err=True)
        sys.exit(1)
    manifest = json.loads(manifest_path.read_text())
    click.echo(f"experiment: {manifest['experiment']}")
    click.echo(f"version: {manifest['projlab_version']}  wall time: {manifest['wall_time_s']}s")
    click.echo(f"J sweep: {manifest['J_sweep']}  seeds: {manifest['seeds']}")
    failed = 0
    for a in manifest["assertions"]:
        status = "PASS" if a["passed"] else "FAIL"
        failed += 0 if a["passed"] else 1
        click.echo(f"  {status} {a['name']}: {a['detail']}")
    click.echo(f"outputs: {len(manifest['outputs'])} files")
    sys.exit(0 if failed == 0 else 1)


if __name__ == "__main__":
    main()
