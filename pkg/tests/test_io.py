import numpy as np
import pytest

from surfmpm.io import DiagnosticsWriter, read_diagnostics, read_frame, write_frame
from surfmpm.kernels import GridGeometry
from surfmpm.shapes import Ball
from surfmpm.state import seed_particles


@pytest.fixture
def particles():
    g = GridGeometry.from_extent([0, 0, 0], [1, 1, 1], 0.1)
    p = seed_particles(Ball([0.5, 0.5, 0.5], 0.25), 2, g, seed=3)
    rng = np.random.default_rng(0)
    p.v = rng.normal(size=p.v.shape) * np.pi
    p.T = rng.normal(size=p.n) / 3.0
    p.phase[::3] = 1
    return p


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_frame_round_trip_is_exact(tmp_path, particles, fmt):
    path = write_frame(particles, tmp_path / f"f.{fmt}", fmt)
    d = read_frame(path)
    np.testing.assert_array_equal(d["id"], np.arange(particles.n))
    np.testing.assert_array_equal(d["x"], particles.x)
    np.testing.assert_array_equal(d["v"], particles.v)
    np.testing.assert_array_equal(d["T"], particles.T)
    np.testing.assert_array_equal(d["phase"], particles.phase)
    np.testing.assert_array_equal(d["material"], particles.material)


def test_unknown_format(tmp_path, particles):
    with pytest.raises(ValueError):
        write_frame(particles, tmp_path / "f", "hdf5")


def test_diagnostics_writer(tmp_path):
    w = DiagnosticsWriter(tmp_path / "d.csv")
    w.append({"time": 0.0, "momentum": np.array([1.0, 2.0]), "newton_iters": 3})
    w.append({"time": 0.1, "momentum": np.array([1.5, 2.0]), "newton_iters": 4})
    d = read_diagnostics(tmp_path / "d.csv")
    np.testing.assert_array_equal(d["momentum_x"], [1.0, 1.5])
    np.testing.assert_array_equal(d["newton_iters"], [3, 4])
    off = DiagnosticsWriter(tmp_path / "off.csv", enabled=False)
    off.append({"time": 0.0})
    assert not (tmp_path / "off.csv").exists()
