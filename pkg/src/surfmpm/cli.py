"""Command line entry point: ``surfmpm run | sample-surface | diag``."""
from __future__ import annotations

import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from .config import load_scene
from .driver import Simulation
from .errors import MPMError
from .io import read_diagnostics
from .surface import write_obj, write_samples_csv


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose):
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--frames", type=int, default=None, help="Override the scene's frame count.")
@click.option("--deterministic", is_flag=True, help="Reference mode: fixed-order reductions, single thread.")
@click.option("--massless-mode", is_flag=True, help="Massless surface samples without balance particles.")
@click.option("--threads", type=int, default=None, help="Thread count for numerical libraries.")
def run(scene_path, out_dir, frames, deterministic, massless_mode, threads):
    """Simulate a scene and write particle frames and diagnostics."""
    if deterministic:
        threads = 1
    if threads is not None:
        _limit_threads(threads)
    try:
        cfg = load_scene(scene_path)
        sim = Simulation.from_config(cfg, massless=massless_mode)
        n = cfg.time.frames if frames is None else frames
        fmt = cfg.output.format
        click.echo(f"{sim.particles.n} particles, {n} frames -> {out_dir}")
        sim.run(n, cfg.time.frame_rate, out_dir, fmt=fmt, write_diagnostics=cfg.output.diagnostics,
                write_mesh=cfg.output.mesh,
                progress=lambda f, t: click.echo(f"frame {f} t={t:.6g} steps={sim.step_index}"))
    except MPMError as e:
        raise click.ClickException(str(e))


@main.command("sample-surface")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def sample_surface_cmd(scene_path, out_dir):
    """Write the initial boundary mesh (OBJ) and its samples (CSV)."""
    try:
        sim = Simulation.from_config(load_scene(scene_path))
        mesh, samples = sim.reconstruct()
    except MPMError as e:
        raise click.ClickException(str(e))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_obj(mesh, out / "surface.obj")
    write_samples_csv(samples, out / "samples.csv")
    click.echo(f"{mesh.n} elements, measure {mesh.total_measure():.6g}, {samples.n} samples")


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
def diag(in_dir):
    """Summarize the diagnostics CSV of a finished run."""
    path = Path(in_dir) / "diagnostics.csv"
    if not path.exists():
        raise click.ClickException(f"{path} not found")
    d = read_diagnostics(path)
    if not d:
        click.echo("no diagnostics rows")
        return
    click.echo(f"steps: {d['time'].size}  t_end: {d['time'][-1] + d['dt'][-1]:.6g}")
    click.echo(f"mass drift (rel): {np.max(np.abs(d['mass'] - d['mass'][0])) / d['mass'][0]:.3e}")
    for key in ("momentum", "angular_momentum", "com"):
        cols = sorted(k for k in d if k == key or k.startswith(key + "_"))
        for c in cols:
            click.echo(f"{c}: start {d[c][0]:.6g} max drift {np.max(np.abs(d[c] - d[c][0])):.3e}")
    E = d["kinetic"] + d["surface"] + d["pressure"] + d["elastic"]
    click.echo(f"energy: start {E[0]:.6g} end {E[-1]:.6g}")
    if "newton_iters" in d:
        click.echo(f"newton iterations: mean {np.mean(d['newton_iters']):.2f} max {int(np.max(d['newton_iters']))}")


def _limit_threads(k):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(k)
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(k)


if __name__ == "__main__":
    sys.exit(main())
