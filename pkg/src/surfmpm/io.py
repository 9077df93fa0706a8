"""Particle dumps (CSV or little-endian binary) and the diagnostics CSV."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .state import Particles

MAGIC = b"SMPM"
VERSION = 1


def _columns(dim):
    ax = "xyz"[:dim]
    return ["id", *ax, *("v" + a for a in ax), "phase", "T", "material"]


def record_dtype(dim):
    return np.dtype([("id", "<i8"), ("x", "<f8", (dim,)), ("v", "<f8", (dim,)),
                     ("phase", "<i4"), ("T", "<f8"), ("material", "<i4")])


def write_frame(particles: Particles, path, fmt="csv"):
    """One record per particle: id, position, velocity, phase, T, material."""
    path = Path(path)
    n, d = particles.n, particles.dim
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write(",".join(_columns(d)) + "\n")
            for i in range(n):
                row = [str(i)] + [f"{v:.17g}" for v in particles.x[i]] + [f"{v:.17g}" for v in particles.v[i]]
                row += [str(int(particles.phase[i])), f"{particles.T[i]:.17g}", str(int(particles.material[i]))]
                fh.write(",".join(row) + "\n")
    elif fmt == "binary":
        rec = np.zeros(n, dtype=record_dtype(d))
        rec["id"] = np.arange(n)
        rec["x"] = particles.x
        rec["v"] = particles.v
        rec["phase"] = particles.phase
        rec["T"] = particles.T
        rec["material"] = particles.material
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.array([VERSION, d], "<u4").tobytes())
            fh.write(np.array([n], "<u8").tobytes())
            fh.write(rec.tobytes())
    else:
        raise ValueError(f"unknown frame format {fmt!r}")
    return path


def read_frame(path) -> dict:
    """Read a frame written by ``write_frame``; returns arrays keyed by field."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == MAGIC:
            version, d = np.frombuffer(fh.read(8), "<u4")
            if version != VERSION:
                raise ValueError(f"unsupported frame version {version}")
            n = int(np.frombuffer(fh.read(8), "<u8")[0])
            rec = np.frombuffer(fh.read(), dtype=record_dtype(int(d)), count=n)
            return {k: np.array(rec[k]) for k in rec.dtype.names}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    d = sum(1 for c in header if c in ("x", "y", "z"))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {
        "id": data[:, 0].astype(np.int64),
        "x": data[:, 1:1 + d],
        "v": data[:, 1 + d:1 + 2 * d],
        "phase": data[:, 1 + 2 * d].astype(np.int32),
        "T": data[:, 2 + 2 * d],
        "material": data[:, 3 + 2 * d].astype(np.int32),
    }


class DiagnosticsWriter:
    """Appends one CSV row per step; a no-op when disabled."""

    def __init__(self, path, enabled=True):
        self.path = Path(path)
        self.enabled = enabled
        self._fields = None
        if enabled:
            self.path.write_text("")

    def append(self, row: dict):
        if not self.enabled:
            return
        flat = flatten_row(row)
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            if self._fields is None:
                self._fields = list(flat)
                w.writerow(self._fields)
            w.writerow([repr(float(flat[k])) if not isinstance(flat[k], (int, np.integer)) else int(flat[k])
                        for k in self._fields])


def flatten_row(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        a = np.asarray(v)
        if a.ndim == 0:
            out[k] = a.item()
        else:
            for j, x in enumerate(a.ravel()):
                out[f"{k}_{'xyz'[j]}"] = x.item()
    return out


def read_diagnostics(path) -> dict:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
