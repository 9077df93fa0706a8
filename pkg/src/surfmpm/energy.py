"""Discrete potential energy on moved grid nodes and its derivatives.

Every term is a function of a per-quadrature-point deformation
``G_q = I + sum_i u_i (grad N_i(q))^T`` where ``u_i = y_i - x_i`` is the
node displacement. Interior particles are the quadrature points of the
pressure and hyperelastic terms, surface samples those of the surface
term. Forces and Hessian products are then gathers and scatters through
the spline stencils.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import GridGeometry, area_weighted_normal_derivatives, cofactor, polar_svd, spline_stencil
from .state import LIQUID, SOLID, Particles, SurfaceSamples
from .transfer import scatter

_EPS3 = np.zeros((3, 3, 3))
_EPS3[0, 1, 2] = _EPS3[1, 2, 0] = _EPS3[2, 0, 1] = 1.0
_EPS3[0, 2, 1] = _EPS3[2, 1, 0] = _EPS3[1, 0, 2] = -1.0


def project_psd(H):
    """Clamp negative eigenvalues of symmetric (Q, n, n) blocks to zero."""
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    w, V = np.linalg.eigh(H)
    if np.all(w >= 0):
        return H
    w = np.maximum(w, 0.0)
    return np.einsum("qij,qj,qkj->qik", V, w, V)


def _contract(H, dG):
    """``H[q, a, b, c, e] dG[q, c, e]`` as a batched matrix product."""
    Q, d = dG.shape[0], dG.shape[1]
    return np.matmul(H.reshape(Q, d * d, d * d), dG.reshape(Q, d * d, 1)).reshape(Q, d, d)


def _dcofactor(F, dF):
    """Directional derivative of cof(F) along dF."""
    if F.shape[-1] == 2:
        return cofactor(dF)
    return np.einsum("ikm,jln,qmn,qkl->qij", _EPS3, _EPS3, F, dF)


def fixed_corotated(F, mu, lam, *, hessian=False):
    """Energy density, first Piola stress and (optionally) dP/dF.

    ``psi = mu sum (sigma - 1)^2 + lam/2 (J - 1)^2``. The Hessian is
    returned as (Q, d, d, d, d) with ``H[a, b, c, e] = dP_ab / dF_ce``.
    """
    F = np.asarray(F, float)
    Q, d, _ = F.shape
    U, S, V = polar_svd(F)
    R = U @ np.swapaxes(V, 1, 2)
    J = np.prod(S, axis=1)
    cof = cofactor(F)
    psi = mu * np.sum((S - 1.0) ** 2, axis=1) + 0.5 * lam * (J - 1.0) ** 2
    P = 2.0 * mu[:, None, None] * (F - R) + (lam * (J - 1.0))[:, None, None] * cof
    if not hessian:
        return psi, P, None
    denom = S[:, :, None] + S[:, None, :]
    denom = np.where(np.abs(denom) < 1e-8, np.copysign(1e-8, denom + 0.0), denom)
    H = np.empty((Q, d, d, d, d))
    for c in range(d):
        for e in range(d):
            E = np.zeros((Q, d, d))
            E[:, c, e] = 1.0
            M = np.swapaxes(U, 1, 2) @ E @ V
            Om = (M - np.swapaxes(M, 1, 2)) / denom
            dR = U @ Om @ np.swapaxes(V, 1, 2)
            dP = (2.0 * mu[:, None, None] * (E - dR)
                  + (lam * cof[:, c, e])[:, None, None] * cof
                  + (lam * (J - 1.0))[:, None, None] * _dcofactor(F, E))
            H[:, :, :, c, e] = dP
    return psi, P, H


@dataclass
class _Quad:
    nodes: np.ndarray
    grads: np.ndarray
    weights: np.ndarray

    def displacement_gradient(self, u):
        return np.matmul(np.swapaxes(u[self.nodes], 1, 2), self.grads)

    def scatter(self, P, num_nodes):
        """Node vectors ``sum_q P_q grad N_i(q)``."""
        return scatter(self.nodes, np.matmul(self.grads, np.swapaxes(P, 1, 2)), num_nodes)

    def diag(self, H, num_nodes):
        """Diagonal of ``B^T H B`` in node-component layout (n, d)."""
        Hd = np.einsum("qadae->qade", H)
        vals = np.einsum("qade,qkd,qke->qka", Hd, self.grads, self.grads, optimize=True)
        return scatter(self.nodes, vals, num_nodes)


class EnergyContext:
    """Potential energy ``e(y)`` for one step.

    Parameters are per-particle arrays (already evaluated at the particle
    temperatures); ``k_sigma`` is per sample and frozen for the step.
    ``contact_axis`` (per sample, zero rows ignored) makes a sample count
    only its area projected onto a wall with that unit normal.
    """

    def __init__(self, grid: GridGeometry, particles: Particles, samples: SurfaceSamples | None,
                 *, bulk_modulus, viscosity=None, mu_solid=None, lambda_solid=None, k_sigma=None,
                 contact_axis=None):
        self.grid = grid
        self.dim = grid.dim
        self.num_nodes = grid.num_nodes
        n = particles.n
        pst = spline_stencil(particles.x, grid)
        self.pquad = _Quad(pst.nodes, pst.gradients, pst.weights)
        self.V0 = particles.V0.copy()
        self.Vn = particles.volume()
        self.Jn = particles.J.copy()
        self.Fn = particles.F.copy()
        self.liquid = particles.phase == LIQUID
        self.solid = particles.phase == SOLID
        self.lam_l = np.broadcast_to(np.asarray(bulk_modulus, float), (n,)).copy()
        self.mu_v = np.zeros(n) if viscosity is None else np.broadcast_to(np.asarray(viscosity, float), (n,)).copy()
        self.mu_h = np.zeros(n) if mu_solid is None else np.broadcast_to(np.asarray(mu_solid, float), (n,)).copy()
        self.lam_h = np.zeros(n) if lambda_solid is None else np.broadcast_to(np.asarray(lambda_solid, float), (n,)).copy()
        if samples is not None and samples.n:
            sst = spline_stencil(samples.s, grid)
            self.squad = _Quad(sst.nodes, sst.gradients, sst.weights)
            self.dA = samples.dA.copy()
            k = samples.k_sigma if k_sigma is None else k_sigma
            self.k = np.broadcast_to(np.asarray(k, float), (samples.n,)).copy()
            self.axis = None if contact_axis is None else np.asarray(contact_axis, float).reshape(samples.n, -1)
        else:
            self.axis = None
            self.squad = None
            self.dA = np.zeros((0, self.dim))
            self.k = np.zeros(0)
        self._H = None

    # ------------------------------------------------------------------ energy
    def _pressure(self, Gu_l):
        J = (1.0 + np.trace(Gu_l, axis1=1, axis2=2)) * self.Jn[self.liquid]
        return J

    def energy_terms(self, u):
        d = self.dim
        Gu = self.pquad.displacement_gradient(u)
        out = {"pressure": 0.0, "elastic": 0.0, "surface": 0.0}
        if np.any(self.liquid):
            J = self._pressure(Gu[self.liquid])
            out["pressure"] = float(np.sum(0.5 * self.lam_l[self.liquid] * (J - 1.0) ** 2 * self.V0[self.liquid]))
        if np.any(self.solid):
            F = (np.eye(d) + Gu[self.solid]) @ self.Fn[self.solid]
            psi, _, _ = fixed_corotated(F, self.mu_h[self.solid], self.lam_h[self.solid])
            out["elastic"] = float(np.sum(psi * self.V0[self.solid]))
        if self.squad is not None:
            G = np.eye(d) + self.squad.displacement_gradient(u)
            val, _, _ = area_weighted_normal_derivatives(G, self.dA, axis=self.axis)
            out["surface"] = float(np.sum(self.k * val))
        return out

    def energy(self, u) -> float:
        return sum(self.energy_terms(u).values())

    def _stress(self, u, hessian=False, fixed=True):
        """Per-quadrature dE/dG (and d2E/dG2) for particles and samples."""
        d = self.dim
        n = self.Jn.size
        Gu = self.pquad.displacement_gradient(u)
        P = np.zeros((n, d, d))
        H = np.zeros((n, d, d, d, d)) if hessian else None
        if np.any(self.liquid):
            l = self.liquid
            J = self._pressure(Gu[l])
            coef = self.lam_l[l] * (J - 1.0) * self.Jn[l] * self.V0[l]
            P[l] = coef[:, None, None] * np.eye(d)
            if hessian:
                hc = self.lam_l[l] * self.Jn[l] ** 2 * self.V0[l]
                H[l] = hc[:, None, None, None, None] * np.einsum("ab,ce->abce", np.eye(d), np.eye(d))
        if np.any(self.solid):
            s = self.solid
            Fn = self.Fn[s]
            F = (np.eye(d) + Gu[s]) @ Fn
            _, PF, HF = fixed_corotated(F, self.mu_h[s], self.lam_h[s], hessian=hessian)
            V0 = self.V0[s]
            P[s] = np.einsum("qab,qdb->qad", PF, Fn) * V0[:, None, None]
            if hessian:
                if fixed:
                    HF = project_psd(HF.reshape(-1, d * d, d * d)).reshape(-1, d, d, d, d)
                H[s] = np.einsum("qabce,qdb,qfe->qadcf", HF, Fn, Fn, optimize=True) * V0[:, None, None, None, None]
        Ps = Hs = None
        if self.squad is not None:
            G = np.eye(d) + self.squad.displacement_gradient(u)
            _, dG, d2G = area_weighted_normal_derivatives(G, self.dA, axis=self.axis)
            Ps = self.k[:, None, None] * dG
            if hessian:
                Hs = self.k[:, None, None, None, None] * d2G
                if fixed:
                    Hs = project_psd(Hs.reshape(-1, d * d, d * d)).reshape(Hs.shape)
        return P, H, Ps, Hs

    def gradient(self, u):
        """``de/dy`` at every node, shape (num_nodes, d)."""
        P, _, Ps, _ = self._stress(u)
        g = self.pquad.scatter(P, self.num_nodes)
        if Ps is not None:
            g += self.squad.scatter(Ps, self.num_nodes)
        return g

    def force(self, u):
        return -self.gradient(u)

    def surface_force(self, u):
        if self.squad is None:
            return np.zeros((self.num_nodes, self.dim))
        _, _, Ps, _ = self._stress(u)
        return -self.squad.scatter(Ps, self.num_nodes)

    # ----------------------------------------------------------------- hessian
    def prepare_hessian(self, u, fixed=True):
        _, H, _, Hs = self._stress(u, hessian=True, fixed=fixed)
        self._H = (H, Hs)
        return self

    def hessian_apply(self, du, u=None, fixed=True):
        """``(d2e/dy2) du``; ``u`` given re-linearizes first."""
        if u is not None or self._H is None:
            self.prepare_hessian(np.zeros_like(du) if u is None else u, fixed=fixed)
        H, Hs = self._H
        dG = self.pquad.displacement_gradient(du)
        out = self.pquad.scatter(_contract(H, dG), self.num_nodes)
        if Hs is not None:
            dGs = self.squad.displacement_gradient(du)
            out += self.squad.scatter(_contract(Hs, dGs), self.num_nodes)
        return out

    def hessian_diagonal(self):
        H, Hs = self._H
        diag = self.pquad.diag(H, self.num_nodes)
        if Hs is not None:
            diag += self.squad.diag(Hs, self.num_nodes)
        return diag

    # --------------------------------------------------------------- viscosity
    def viscous_apply(self, v):
        """``K v`` with ``f_visc = -K v``; K is symmetric positive semidefinite."""
        L = self.pquad.displacement_gradient(v)
        eps = 0.5 * (L + np.swapaxes(L, 1, 2))
        w = self.mu_v * self.Vn * self.liquid
        return self.pquad.scatter(w[:, None, None] * eps, self.num_nodes)

    def viscous_force(self, v):
        return -self.viscous_apply(v)

    def viscous_diagonal(self):
        w = self.mu_v * self.Vn * self.liquid
        g = self.pquad.grads
        d = self.dim
        sq = np.sum(g * g, axis=2)                                   # |grad N|^2
        vals = 0.5 * (sq[:, :, None] + g * g) * w[:, None, None]
        return scatter(self.pquad.nodes, vals, self.num_nodes)

    def sample_nodes(self):
        """Nodes touched (N_i > 0) by any surface sample."""
        if self.squad is None:
            return np.zeros(0, dtype=int)
        return np.unique(self.squad.nodes[self.squad.weights > 0])
