"""Low-level numerical kernels.

Quadratic B-spline stencils on a uniform grid whose nodes sit at cell
centers, a batched polar SVD, and the derivatives of the area-weighted
normal magnitude ``|det(G) G^-T a|`` used by the surface energy.

All functions are vectorized over a leading batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DomainError, NumericError, SingularConfigurationError

EPS_J = 1e-10


@dataclass(frozen=True)
class GridGeometry:
    """Uniform grid: node ``i`` lives at ``origin + (i + 0.5) * dx``."""

    origin: np.ndarray
    dx: float
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if len(self.shape) != self.origin.size:
            raise ValueError("origin and shape dimensions differ")
        if min(self.shape) < 4:
            raise ValueError("grid needs at least 4 nodes per axis")

    @classmethod
    def from_extent(cls, origin, extent, dx):
        n = [int(round(e / dx)) for e in extent]
        return cls(np.asarray(origin, float), float(dx), tuple(n))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.dx * np.asarray(self.shape)

    @property
    def strides(self) -> np.ndarray:
        s = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            s[k] = s[k + 1] * self.shape[k + 1]
        return s

    def node_positions(self) -> np.ndarray:
        """All node positions, flat C order, shape (num_nodes, dim)."""
        axes = [self.origin[k] + (np.arange(n) + 0.5) * self.dx for k, n in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def safe_bounds(self):
        """Box at least 1.5 cells from the outermost node layer.

        Interior particles are kept here so that their surface skin and
        balance partners still have complete stencils.
        """
        lo = self.origin + 2.0 * self.dx
        hi = self.upper - 2.0 * self.dx
        return lo, hi

    def in_safe_region(self, x) -> np.ndarray:
        lo, hi = self.safe_bounds()
        x = np.atleast_2d(x)
        return np.all((x >= lo) & (x <= hi), axis=1)


@dataclass
class SplineStencil:
    """3^d quadratic B-spline stencils for a batch of positions.

    ``nodes`` are flat node indices, ``offsets`` are ``x_i - x``.
    """

    base: np.ndarray          # (B, d) int
    weights: np.ndarray       # (B, K)
    gradients: np.ndarray     # (B, K, d)
    nodes: np.ndarray         # (B, K) int
    offsets: np.ndarray       # (B, K, d)

    def __len__(self):
        return self.weights.shape[0]


_OFFSETS = {d: np.array(list(product(range(3), repeat=d)), dtype=np.int64) for d in (1, 2, 3)}


def _weights_1d(fx):
    w = np.stack([0.5 * (1.5 - fx) ** 2, 0.75 - (fx - 1.0) ** 2, 0.5 * (fx - 0.5) ** 2], axis=-1)
    dw = np.stack([fx - 1.5, -2.0 * (fx - 1.0), fx - 0.5], axis=-1)
    return w, dw


def spline_stencil(x, grid: GridGeometry, labels=None) -> SplineStencil:
    """Quadratic B-spline weights and gradients at each row of ``x``.

    Raises DomainError when a stencil would leave the grid; the message
    names the offending row (or ``labels[row]`` if given).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = grid.dim
    if x.shape[1] != d:
        raise ValueError(f"positions have dimension {x.shape[1]}, grid has {d}")
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(x), axis=1))[0])
        raise DomainError(f"non-finite position for item {labels[bad] if labels is not None else bad}")
    u = (x - grid.origin) / grid.dx - 0.5
    base = np.floor(u - 0.5).astype(np.int64)
    upper = np.asarray(grid.shape) - 3
    outside = np.any((base < 0) | (base > upper), axis=1)
    if np.any(outside):
        bad = int(np.flatnonzero(outside)[0])
        who = labels[bad] if labels is not None else bad
        raise DomainError(f"item {who} at {x[bad]} is outside the grid interior")
    fx = u - base
    w1, dw1 = _weights_1d(fx)                     # (B, d, 3)
    offs = _OFFSETS[d]                            # (K, d)
    K = offs.shape[0]
    B = x.shape[0]
    ax = np.arange(d)
    wk = w1[:, ax[None, :], offs]                 # (B, K, d) per-axis factors
    dwk = dw1[:, ax[None, :], offs]
    weights = np.prod(wk, axis=2)
    grads = np.empty((B, K, d))
    for a in range(d):
        g = dwk[:, :, a] / grid.dx
        for b in range(d):
            if b != a:
                g = g * wk[:, :, b]
        grads[:, :, a] = g
    idx = base[:, None, :] + offs[None, :, :]
    nodes = idx @ grid.strides
    offsets = grid.origin + (idx + 0.5) * grid.dx - x[:, None, :]
    return SplineStencil(base, weights, grads, nodes, offsets)


def polar_svd(F):
    """Batched polar SVD ``F = U diag(S) V^T`` with det U = det V = +1.

    Singular values come back in descending order; a reflection, if any,
    is carried by the last (smallest) singular value.
    """
    F = np.asarray(F, dtype=float)
    single = F.ndim == 2
    if single:
        F = F[None]
    if not np.all(np.isfinite(F)):
        raise NumericError("polar_svd received non-finite entries")
    U, S, Vt = np.linalg.svd(F)
    V = np.swapaxes(Vt, 1, 2).copy()
    U = U.copy()
    S = S.copy()
    du = np.linalg.det(U) < 0
    dv = np.linalg.det(V) < 0
    U[du, :, -1] *= -1.0
    S[du, -1] *= -1.0
    V[dv, :, -1] *= -1.0
    S[dv, -1] *= -1.0
    if single:
        return U[0], S[0], V[0]
    return U, S, V


def _levi_civita3():
    e = np.zeros((3, 3, 3))
    e[0, 1, 2] = e[1, 2, 0] = e[2, 0, 1] = 1.0
    e[0, 2, 1] = e[2, 1, 0] = e[1, 0, 2] = -1.0
    return e


_EPS2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
_EPS3 = _levi_civita3()
# d cof_ij / d G_kl in 2D (constant)
_DCOF2 = np.einsum("ik,jl->ijkl", _EPS2, _EPS2)
# d^2 cof_ij / d G_kl d G_mn in 3D (constant)
_D2COF3 = np.einsum("ikm,jln->ijklmn", _EPS3, _EPS3)


def cofactor(G):
    """``det(G) G^-T`` for a batch of 2x2 or 3x3 matrices (no inversion)."""
    G = np.asarray(G, dtype=float)
    d = G.shape[-1]
    if d == 2:
        return np.einsum("ijkl,...kl->...ij", _DCOF2, G)
    return 0.5 * np.einsum("ijklmn,...kl,...mn->...ij", _D2COF3, G, G)


def area_weighted_normal_derivatives(G, a, *, check=True, axis=None):
    """Value, gradient and Hessian of ``|det(G) G^-T a|`` with respect to G.

    Returns ``(value (B,), dG (B,d,d), d2G (B,d,d,d,d))``. Raises
    SingularConfigurationError when any ``det(G) <= EPS_J``.

    ``axis`` (B, d) optionally replaces the norm by ``|n . det(G) G^-T a|``
    on rows where ``n`` is nonzero: the area projected onto the plane with
    unit normal ``n``.
    """
    G = np.asarray(G, dtype=float)
    a = np.asarray(a, dtype=float)
    single = G.ndim == 2
    if single:
        G, a = G[None], a[None]
    d = G.shape[-1]
    if check:
        det = np.linalg.det(G)
        if np.any(~(det > EPS_J)):
            bad = int(np.flatnonzero(~(det > EPS_J))[0])
            raise SingularConfigurationError(f"surface element {bad} collapsed: det(G) = {det[bad]:.3e}")
    if d == 2:
        dc = np.einsum("ijkl,bj->bikl", _DCOF2, a)              # (B, i, k, l)
        c = np.einsum("bikl,bkl->bi", dc, G)
        d2c = None
    else:
        d2c = np.einsum("ijklmn,bj->biklmn", _D2COF3, a)        # (B, i, k,l, m,n)
        dc = np.einsum("biklmn,bmn->bikl", d2c, G)
        c = 0.5 * np.einsum("bikl,bkl->bi", dc, G)
    value = np.linalg.norm(c, axis=1)
    if np.any(value <= 0):
        raise SingularConfigurationError("zero area-weighted normal")
    chat = c / value[:, None]
    proj = (np.eye(d)[None] - chat[:, :, None] * chat[:, None, :]) / value[:, None, None]
    if axis is not None:
        axis = np.asarray(axis, dtype=float).reshape(c.shape)
        on = np.any(axis != 0, axis=1)
        if np.any(on):
            sn = np.einsum("bi,bi->b", axis[on], c[on])
            value[on] = np.abs(sn)
            chat[on] = np.sign(sn)[:, None] * axis[on]
            proj[on] = 0.0
    dG = np.einsum("bi,bikl->bkl", chat, dc)
    d2G = np.einsum("bikl,bij,bjmn->bklmn", dc, proj, dc)
    if d2c is not None:
        d2G = d2G + np.einsum("bi,biklmn->bklmn", chat, d2c)
    if single:
        return value[0], dG[0], d2G[0]
    return value, dG, d2G
