"""Grid momentum update, collisions and time-step control.

Explicit steps apply forces at the start-of-step configuration. Implicit
(backward Euler) steps solve

    m_i (v_i' - v_i) = dt (f_i(x + dt v') - K v' + m_i g)

with Newton's method. Each linear system is solved by a Jacobi
preconditioned conjugate gradient on the definiteness-fixed Jacobian. The
residual is the gradient of the incremental potential

    Phi(v') = 1/2 |v' - v|_m^2 - dt m g.v' + E(dt v') + dt/2 v'.K v'

and Newton updates can optionally backtrack on Phi (Armijo).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .energy import EnergyContext
from .errors import ConfigurationError, ConvergenceError, SingularConfigurationError
from .kernels import GridGeometry
from .shapes import gradient as shape_gradient

log = logging.getLogger(__name__)


STICKY, SLIP, BILATERAL = 0, 1, 2
KINDS = {"sticky": STICKY, "slip": SLIP, "bilateral": BILATERAL}


@dataclass
class Collider:
    """Static boundary.

    ``signed_distance`` is positive in free space. A regular collider is the
    solid inside ``shape``; an inverted one (a container) is everything
    outside it. Kinds: ``sticky`` (v = 0), ``slip`` (inward normal velocity
    removed, separation allowed) and ``bilateral`` (all normal velocity
    removed, tangential sliding only). Slip kinds apply Coulomb friction.
    """

    shape: object
    kind: str = "slip"
    friction: float = 0.0
    inverted: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"collider kind must be one of {sorted(KINDS)}, got {self.kind!r}")
        if self.friction < 0:
            raise ConfigurationError("collider friction must be >= 0")

    def signed_distance(self, x):
        sd = self.shape.signed_distance(np.atleast_2d(x))
        return -sd if self.inverted else sd

    def normal(self, x):
        """Unit normal pointing into free space."""
        g = shape_gradient(self.shape, np.atleast_2d(x))
        g = -g if self.inverted else g
        return g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)


@dataclass
class SolverSettings:
    newton_tol: float = 1e-4
    newton_max_iters: int = 20
    krylov_tol: float = 1e-6
    krylov_max_iters: int = 500
    dt_min: float = 1e-6
    dt_max: float = 1e-3
    cfl_number: float = 0.5
    abs_tol: float = 1e-12
    line_search: bool = False
    line_search_max: int = 30        # halvings before the step is rejected

    def __post_init__(self):
        vals = (self.newton_tol, self.newton_max_iters, self.krylov_tol, self.krylov_max_iters,
                self.dt_min, self.dt_max, self.cfl_number)
        if any(v <= 0 for v in vals):
            raise ConfigurationError("solver settings must be positive")
        if self.dt_min > self.dt_max:
            raise ConfigurationError(f"dt_min {self.dt_min} exceeds dt_max {self.dt_max}")


@dataclass
class StepReport:
    velocity: np.ndarray
    newton_iters: int = 0
    krylov_iters: int = 0
    residual: float = 0.0


@dataclass
class CollisionSet:
    """Per-node collision data for the nodes inside some collider."""

    nodes: np.ndarray
    normal: np.ndarray
    kind: np.ndarray
    friction: np.ndarray

    @property
    def sticky(self):
        return self.kind == STICKY

    @classmethod
    def build(cls, grid: GridGeometry, colliders, candidates=None) -> "CollisionSet":
        d = grid.dim
        x = grid.node_positions()
        idx = np.arange(grid.num_nodes) if candidates is None else np.asarray(candidates, int)
        hit = {}
        for c in colliders:
            phi = c.signed_distance(x[idx])
            inside = idx[phi <= 0]
            if inside.size == 0:
                continue
            n = c.normal(x[inside])
            for i, ni in zip(inside, n):
                if i not in hit:       # first collider listed wins
                    hit[i] = (ni, KINDS[c.kind], c.friction)
        if not hit:
            return cls(np.zeros(0, int), np.zeros((0, d)), np.zeros(0, int), np.zeros(0))
        nodes = np.array(sorted(hit))
        return cls(nodes, np.array([hit[i][0] for i in nodes]),
                   np.array([hit[i][1] for i in nodes], int), np.array([hit[i][2] for i in nodes], float))

    @property
    def n(self):
        return self.nodes.size


def apply_collisions(velocity, grid: GridGeometry, colliders=None, *, cset: CollisionSet | None = None):
    """Project node velocities inside colliders; returns a new array."""
    v = np.array(velocity, float, copy=True)
    if cset is None:
        cset = CollisionSet.build(grid, colliders or [])
    if cset.n == 0:
        return v
    vi = v[cset.nodes]
    n = cset.normal
    vn = np.einsum("ij,ij->i", vi, n)
    vt = vi - vn[:, None] * n
    bil = cset.kind == BILATERAL
    removed = np.where(bil, np.abs(vn), -np.minimum(vn, 0.0))
    kept = np.where(bil, 0.0, np.maximum(vn, 0.0))
    out = _friction(vt, removed, cset.friction)[:, None] * vt + kept[:, None] * n
    out[cset.sticky] = 0.0
    v[cset.nodes] = out
    return v


def _friction(vt, vn_removed, mu):
    """Coulomb scale ``max(0, 1 - mu |v_n| / |v_t|)`` for tangential velocities."""
    tlen = np.linalg.norm(vt, axis=1)
    safe = np.where(tlen > 0, tlen, 1.0)
    return np.where(tlen > 0, np.maximum(0.0, 1.0 - mu * vn_removed / safe), 0.0)


def pcg(apply, b, precond=None, x0=None, tol=1e-6, maxiter=500, atol=0.0):
    """Preconditioned conjugate gradients on flat arrays.

    Stops when ``|r| <= max(tol |b|, atol)``. Returns ``(x, iters, converged)``.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, float, copy=True)
    r = b - apply(x) if x0 is not None else b.copy()
    stop = max(tol * np.linalg.norm(b), atol)
    if np.linalg.norm(r) <= stop:
        return x, 0, True
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        Ap = apply(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            log.debug("pcg: non-positive curvature %.3e at iteration %d", pAp, it)
            return x, it, False
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= stop:
            return x, it, True
        z = precond(r) if precond is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, False


def compute_cfl_dt(particle_velocity, dx, settings: SolverSettings, time_to_frame=None, eps_v=1e-12):
    """``clamp(cfl dx / max|v|, dt_min, dt_max)``, capped at the time left in the frame."""
    v = np.asarray(particle_velocity, float)
    vmax = float(np.max(np.linalg.norm(v, axis=1))) if v.size else 0.0
    dt = settings.cfl_number * dx / max(eps_v, vmax)
    dt = float(np.clip(dt, settings.dt_min, settings.dt_max))
    if time_to_frame is not None and time_to_frame > 0:
        dt = min(dt, float(time_to_frame))
    return dt


def explicit_step(velocity, mass, ctx: EnergyContext, dt, gravity, colliders=(), cset=None) -> StepReport:
    """Symplectic Euler: ``v' = v + dt/m (f(x) - K v + m g)`` on active nodes."""
    d = velocity.shape[1]
    g = np.asarray(gravity, float).reshape(1, d)
    act = mass > 0
    f = ctx.force(np.zeros_like(velocity)) - ctx.viscous_apply(velocity)
    vnew = np.zeros_like(velocity)
    vnew[act] = velocity[act] + dt * (f[act] / mass[act, None] + g)
    vnew = apply_collisions(vnew, ctx.grid, colliders, cset=cset) if (colliders or cset is not None) else vnew
    vnew[~act] = 0.0
    return StepReport(vnew, 0, 0, 0.0)


class _Projector:
    """Zeroes inactive and sticky components and the normal component at
    bilateral nodes and at slip nodes in contact."""

    def __init__(self, mass, cset: CollisionSet | None):
        self.keep = (mass > 0).astype(float)
        self.cset = cset
        self.slip_nodes = np.zeros(0, int)
        self.slip_normals = None
        self.slip_friction = np.zeros(0)
        self.slip_bilateral = np.zeros(0, bool)
        if cset is not None and cset.n:
            self.keep[cset.nodes[cset.sticky]] = 0.0

    def set_contacts(self, v):
        """Active set: bilateral nodes and slip nodes moving into their collider."""
        c = self.cset
        if c is None or c.n == 0:
            return
        vn = np.einsum("ij,ij->i", v[c.nodes], c.normal)
        on = ((c.kind == BILATERAL) | ((c.kind == SLIP) & (vn <= 0))) & (self.keep[c.nodes] > 0)
        self.slip_nodes = c.nodes[on]
        self.slip_normals = c.normal[on]
        self.slip_friction = c.friction[on]
        self.slip_bilateral = c.kind[on] == BILATERAL

    def __call__(self, x):
        x = x * self.keep[:, None]
        if self.slip_nodes.size:
            n = self.slip_normals
            xn = np.einsum("ij,ij->i", x[self.slip_nodes], n)
            x[self.slip_nodes] -= xn[:, None] * n
        return x


def _backtrack(potential, v, step, slope, max_halvings, c=1e-4):
    """Armijo backtracking on the incremental potential."""
    phi0 = potential(v)
    if slope >= 0:
        # not a descent direction (Krylov stopped early); take the full step
        return v + step
    slack = 1e-13 * abs(phi0)   # round-off in phi near convergence
    alpha = 1.0
    for _ in range(max_halvings):
        if potential(v + alpha * step) <= phi0 + c * alpha * slope + slack:
            return v + alpha * step
        alpha *= 0.5
    raise ConvergenceError(f"line search failed after {max_halvings} halvings")


def push_out_particles(x, colliders, margin: float) -> int:
    """Move positions inside (or within ``margin`` of) a collider onto its offset surface.

    Only positions change; returns the number of moved particles.
    """
    moved = np.zeros(x.shape[0], bool)
    for c in colliders:
        dist = c.signed_distance(x)
        hit = dist < margin
        if np.any(hit):
            x[hit] += (margin - dist[hit])[:, None] * c.normal(x[hit])
            moved |= hit
    return int(moved.sum())


def implicit_step(velocity, mass, ctx: EnergyContext, dt, gravity, settings: SolverSettings,
                  colliders=(), cset=None) -> StepReport:
    """Backward Euler by Newton iteration with projected collisions.

    Raises ConvergenceError when Newton does not reach ``newton_tol``.
    """
    d = velocity.shape[1]
    g = np.asarray(gravity, float).reshape(1, d)
    if cset is None:
        cset = CollisionSet.build(ctx.grid, colliders) if colliders else None
    proj = _Projector(mass, cset)
    m = mass[:, None]
    v0 = velocity * proj.keep[:, None]
    vhat = v0.copy()
    if cset is not None and cset.n:
        vhat = apply_collisions(vhat, ctx.grid, cset=CollisionSet(cset.nodes, cset.normal, cset.kind,
                                                               np.zeros(cset.n)))
    proj.set_contacts(vhat)

    def residual(v):
        return m * (v - v0) - dt * (ctx.force(dt * v) - ctx.viscous_apply(v) + m * g)

    def potential(v):
        try:
            e = ctx.energy(dt * v)
        except SingularConfigurationError:
            return np.inf
        return (0.5 * np.sum(m * (v - v0) ** 2) - dt * np.sum(m * g * v) + e
                + 0.5 * dt * np.sum(v * ctx.viscous_apply(v)))

    R = proj(residual(vhat))
    r0 = np.linalg.norm(R)
    scale = max(r0, np.linalg.norm(m * (np.abs(v0) + dt * np.abs(g))), 1e-300)
    newton_stop = max(settings.newton_tol * r0, settings.abs_tol * scale)
    total_k = 0
    it = 0
    res = r0
    while res > newton_stop:
        if it >= settings.newton_max_iters:
            raise ConvergenceError(f"Newton did not converge in {it} iterations (residual {res:.3e}, target {newton_stop:.3e})")
        it += 1
        ctx.prepare_hessian(dt * vhat, fixed=True)
        diag = m + dt * dt * ctx.hessian_diagonal() + dt * ctx.viscous_diagonal()
        diag = np.where(diag > 0, diag, 1.0)
        shape = vhat.shape

        def apply(x, shape=shape):
            X = proj(x.reshape(shape))
            Y = m * X + dt * dt * ctx.hessian_apply(X) + dt * ctx.viscous_apply(X)
            return proj(Y).ravel()

        def precond(r, shape=shape):
            return proj(proj(r.reshape(shape)) / diag).ravel()

        delta, k, ok = pcg(apply, -R.ravel(), precond, tol=settings.krylov_tol,
                           maxiter=settings.krylov_max_iters, atol=0.1 * newton_stop)
        total_k += k
        if not ok:
            log.debug("Krylov stopped after %d iterations without reaching tolerance", k)
        step = proj(delta.reshape(shape))
        if settings.line_search:
            vhat = _backtrack(potential, vhat, step, float(np.sum(R * step)), settings.line_search_max)
        else:
            vhat = vhat + step
        if not np.all(np.isfinite(vhat)):
            raise ConvergenceError("non-finite velocity in Newton iteration")
        proj.set_contacts(vhat)
        R = proj(residual(vhat))
        res = np.linalg.norm(R)
    if proj.slip_nodes.size:
        # Coulomb friction from the contact impulse carried by the residual
        Rf = residual(vhat)[proj.slip_nodes]
        n = proj.slip_normals
        lam = np.einsum("ij,ij->i", Rf, n)
        lam = np.where(proj.slip_bilateral, np.abs(lam), np.maximum(lam, 0.0))
        vt = vhat[proj.slip_nodes]
        vt = vt - np.einsum("ij,ij->i", vt, n)[:, None] * n
        vhat[proj.slip_nodes] = _friction(vt, lam / mass[proj.slip_nodes], proj.slip_friction)[:, None] * vt
    vhat = vhat * proj.keep[:, None]
    return StepReport(vhat, max(it, 1), total_k, float(res))
