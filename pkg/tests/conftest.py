import numpy as np
import pytest

from surfmpm.kernels import GridGeometry
from surfmpm.state import LIQUID, SOLID, Particles, SurfaceSamples


def small_grid(dim=2, n=16):
    return GridGeometry.from_extent([0.0] * dim, [1.0] * dim, 1.0 / n)


def random_particles(rng, grid, n, *, center=None, spread=None, mixed=False, moving=True):
    """Random particle cloud with random velocities, affine fields and strains."""
    d = grid.dim
    center = np.full(d, 0.5) if center is None else np.asarray(center, float)
    spread = 4 * grid.dx if spread is None else spread
    x = center + spread * (rng.random((n, d)) - 0.5)
    m = 0.5 + rng.random(n)
    phase = np.where(rng.random(n) < 0.5, SOLID, LIQUID) if mixed else np.full(n, LIQUID)
    F = np.eye(d) + 0.1 * rng.normal(size=(n, d, d))
    F[phase == LIQUID] = np.eye(d)
    J = np.where(phase == LIQUID, 1.0 + 0.1 * rng.normal(size=n), np.linalg.det(F))
    return Particles(
        x=x, v=rng.normal(size=(n, d)) if moving else np.zeros((n, d)),
        A=rng.normal(size=(n, d, d)) if moving else np.zeros((n, d, d)),
        m=m, V0=m.copy(), J=J, F=F, T=rng.random(n), gradT=np.zeros((n, d)),
        phase=phase, material=np.zeros(n, int))


def random_samples(rng, particles, n, *, radius=None):
    """Samples scattered near random particles, with random area-weighted normals."""
    d = particles.dim
    radius = 0.02 if radius is None else radius
    base = particles.x[rng.integers(0, particles.n, n)]
    s = base + radius * rng.normal(size=(n, d))
    dA = 0.01 * rng.normal(size=(n, d))
    samples = SurfaceSamples.from_points(s, dA)
    samples.k_sigma = 0.5 + rng.random(n)
    return samples


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def energy_config(rng, dim=2, *, n_particles=None, n_samples=None, k_scale=1.0, mixed=True):
    """Random EnergyContext (<= 20 particles, <= 30 samples) and a small displacement."""
    from surfmpm.energy import EnergyContext

    g = small_grid(dim, 16 if dim == 2 else 10)
    n_p = int(rng.integers(3, 21)) if n_particles is None else n_particles
    n_s = int(rng.integers(1, 31)) if n_samples is None else n_samples
    p = random_particles(rng, g, n_p, mixed=mixed, moving=False)
    s = random_samples(rng, p, n_s)
    s.k_sigma = k_scale * (0.5 + rng.random(n_s))
    n = p.n
    ctx = EnergyContext(g, p, s, bulk_modulus=10.0 * (0.5 + rng.random(n)), viscosity=0.1 * rng.random(n),
                        mu_solid=5.0 * (0.5 + rng.random(n)), lambda_solid=5.0 * (0.5 + rng.random(n)))
    u = 0.1 * g.dx * rng.normal(size=(g.num_nodes, dim))
    return ctx, u


def fd_slope(f, exact, hs):
    """Log-log slope of the central-difference error against h."""
    errs = np.array([np.linalg.norm((f(h) - f(-h)) / (2 * h) - exact) for h in hs])
    return np.polyfit(np.log(hs), np.log(errs), 1)[0], errs


ACCEPTANCE = []


def record(number, title, ok, detail):
    """Log one acceptance line (shown in the terminal summary) and assert it."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
