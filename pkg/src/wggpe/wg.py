"""Weak Galerkin space of order k on a triangle mesh.

A function v = {v0, vb} carries a P_k polynomial v0 on every triangle and a
P_{k-1} polynomial vb on every interior edge; vb vanishes on the boundary
and those unknowns are eliminated.  Global numbering puts the interior
blocks first (triangle-major), then the interior-edge blocks in edge order.

Local numbering on a triangle: the dim P_k interior coefficients, then k
coefficients for each of the three local edges.  Local vectors always carry
all three edges; boundary edges simply map to global index -1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ConfigError
from .mesh import LOCAL_EDGES, TriMesh, locate
from .polybasis import EdgeBasis, TriBasis, default_quad_degree, edge_quadrature, tri_quadrature

__all__ = [
    "WgSpace",
    "WgFunction",
    "WeakGradientTable",
    "weak_gradient_local",
    "weak_gradient",
    "project_Q0",
    "project_Qb",
    "project_Qh",
    "project_Qh_vec",
    "stabilizer_local",
    "check_epsilon",
    "evaluate_interior",
    "interpolate_wg",
]


def check_epsilon(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"stabilizer exponent epsilon must lie in (0, 1), got {epsilon}")
    return float(epsilon)


@dataclass(frozen=True, eq=False)
class WeakGradientTable:
    """Per-triangle weak-gradient operators.

    ``G[t]`` maps a full local vector (interior + three edges) to the
    coefficients of the weak gradient in [P_{k-1}]^2, x-component block
    first.  ``Mq[t]`` is the [P_{k-1}]^2 mass matrix and ``R[t]`` the
    right-hand side of the defining relation, so ``Mq @ G = R``.
    """

    G: np.ndarray
    Mq: np.ndarray
    R: np.ndarray


class WgSpace:
    def __init__(self, mesh: TriMesh, k: int = 1, quad_degree: int | None = None):
        if k < 1:
            raise ConfigError("weak Galerkin order k must be >= 1")
        self.mesh = mesh
        self.k = k
        self.basis = TriBasis(k)
        self.grad_basis = TriBasis(k - 1)
        self.edge_basis = EdgeBasis(k - 1)
        self.n0 = self.basis.dim
        self.n1 = self.grad_basis.dim
        self.nb = 3 * k
        self.n_local = self.n0 + self.nb
        self.quad_degree = quad_degree or default_quad_degree(k)

        nt = mesh.n_triangles
        self.n_interior_dofs = nt * self.n0
        interior_edges = mesh.interior_edges
        edge_start = -np.ones(mesh.n_edges, dtype=np.int64)
        edge_start[interior_edges] = self.n_interior_dofs + k * np.arange(len(interior_edges))
        self.edge_start = edge_start
        self.n_edge_dofs = k * len(interior_edges)
        self.ndof = self.n_interior_dofs + self.n_edge_dofs

        l2g = np.empty((nt, self.n_local), dtype=np.int64)
        l2g[:, : self.n0] = np.arange(self.n_interior_dofs).reshape(nt, self.n0)
        start = edge_start[mesh.tri_edges]  # (nt, 3)
        edge_part = start[:, :, None] + np.arange(k)
        edge_part[start < 0] = -1
        l2g[:, self.n0 :] = edge_part.reshape(nt, self.nb)
        self.local_to_global = l2g

    def __repr__(self):
        return f"WgSpace(k={self.k}, triangles={self.mesh.n_triangles}, ndof={self.ndof})"

    # ------------------------------------------------------------ geometry

    @cached_property
    def centroids(self):
        return self.mesh.centroids

    @cached_property
    def h_T(self):
        return self.mesh.h_T

    @cached_property
    def element_quad(self):
        """Physical points (nt, nq, 2) and weights (nt, nq) of the element rule."""
        rule = tri_quadrature(self.quad_degree)
        return rule.map_to(self.mesh.tri_coords)

    @cached_property
    def phi(self):
        """P_k basis values at element quadrature points, (nt, nq, n0)."""
        X, _ = self.element_quad
        return self.basis.values(X, self.centroids, self.h_T)

    @cached_property
    def edge_quad(self):
        """Per-triangle, per-local-edge quadrature.

        Returns ``(X, W, t)`` with physical points (nt, 3, nqe, 2), weights
        (nt, 3, nqe) and the shared lo->hi edge parameter (nt, 3, nqe).
        """
        rule = edge_quadrature(max(3 * self.k, 2 * self.k + 1))
        p = self.mesh.tri_coords
        seg = np.stack([p[:, LOCAL_EDGES[:, 0]], p[:, LOCAL_EDGES[:, 1]]], axis=2)  # (nt,3,2,2)
        X, W = rule.map_to(seg)
        sign = self.mesh.tri_edge_sign[:, :, None]
        t = np.where(sign > 0, rule.points, 1.0 - rule.points)
        return X, W, t

    @cached_property
    def psi_local(self):
        """Edge-basis values at the local edge quadrature points, (nt, 3, nqe, k)."""
        _, _, t = self.edge_quad
        return self.edge_basis.values(t)

    @cached_property
    def phi_on_edges(self):
        """P_k basis traces at the local edge quadrature points, (nt, 3, nqe, n0)."""
        X, _, _ = self.edge_quad
        nt = self.mesh.n_triangles
        vals = self.basis.values(X.reshape(nt, -1, 2), self.centroids, self.h_T)
        return vals.reshape(X.shape[:-1] + (self.n0,))

    # ------------------------------------------------------------ local matrices

    @cached_property
    def mass_local(self):
        """Interior L2 mass matrices (nt, n0, n0)."""
        _, W = self.element_quad
        return np.einsum("tq,tqi,tqj->tij", W, self.phi, self.phi)

    @cached_property
    def edge_mass_local(self):
        """Edge mass matrices of P_{k-1}(e) for each local edge, (nt, 3, k, k)."""
        _, W, _ = self.edge_quad
        return np.einsum("teq,teqi,teqj->teij", W, self.psi_local, self.psi_local)

    @cached_property
    def edge_trace_local(self):
        """B[t, e, l, i] = <psi_l, phi_i>_e for each local edge, (nt, 3, k, n0)."""
        _, W, _ = self.edge_quad
        return np.einsum("teq,teql,teqi->teli", W, self.psi_local, self.phi_on_edges)

    @cached_property
    def weak_gradient_table(self) -> WeakGradientTable:
        return _weak_gradient_table(self)

    @cached_property
    def jump_local(self):
        """Unscaled stabilizer matrices sum_e P_e^T M_e P_e, (nt, nl, nl).

        P_e maps a local vector to the coefficients of Q_b v0 - v_b on edge e.
        """
        nt, k, n0 = self.mesh.n_triangles, self.k, self.n0
        Me = self.edge_mass_local
        Qb = np.linalg.solve(Me, self.edge_trace_local)  # (nt,3,k,n0)
        J = np.zeros((nt, self.n_local, self.n_local))
        for e in range(3):
            P = np.zeros((nt, k, self.n_local))
            P[:, :, :n0] = Qb[:, e]
            P[:, :, n0 + e * k : n0 + (e + 1) * k] -= np.eye(k)
            J += np.einsum("tli,tlm,tmj->tij", P, Me[:, e], P)
        return J

    @cached_property
    def grad_stiffness_local(self):
        """(grad v0, grad w0)_T matrices, (nt, n0, n0)."""
        X, W = self.element_quad
        g = self.basis.gradients(X, self.centroids, self.h_T)
        return np.einsum("tq,tqid,tqjd->tij", W, g, g)

    def stabilizer_local(self, epsilon: float) -> np.ndarray:
        epsilon = check_epsilon(epsilon)
        return self.h_T[:, None, None] ** (epsilon - 1.0) * self.jump_local

    # ------------------------------------------------------------ functions

    def zeros(self) -> "WgFunction":
        return WgFunction(self, np.zeros(self.ndof))

    def gather(self, x: np.ndarray) -> np.ndarray:
        """Local vectors (nt, nl) of a global coefficient vector (zeros on the boundary)."""
        x = np.asarray(x, dtype=float)
        padded = np.append(x, 0.0)
        return padded[self.local_to_global]

    def interior_coefficients(self, x) -> np.ndarray:
        return np.asarray(x)[: self.n_interior_dofs].reshape(-1, self.n0)


class WgFunction:
    """Coefficient vector over a :class:`WgSpace`."""

    def __init__(self, space: WgSpace, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ndof,):
            raise ValueError(f"expected {space.ndof} coefficients, got shape {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    @property
    def interior(self) -> np.ndarray:
        """v0 coefficients, (n_triangles, dim P_k)."""
        return self.space.interior_coefficients(self.coeffs)

    @property
    def edge(self) -> np.ndarray:
        """vb coefficients for every mesh edge, (n_edges, k); boundary rows are zero."""
        sp = self.space
        out = np.zeros((sp.mesh.n_edges, sp.k))
        inner = sp.edge_start >= 0
        idx = sp.edge_start[inner][:, None] + np.arange(sp.k)
        out[inner] = self.coeffs[idx]
        return out

    def local(self) -> np.ndarray:
        return self.space.gather(self.coeffs)

    def __add__(self, other):
        return WgFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return WgFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return WgFunction(self.space, a * self.coeffs)

    __rmul__ = __mul__


def _weak_gradient_table(space: WgSpace) -> WeakGradientTable:
    nt, n0, n1, k = space.mesh.n_triangles, space.n0, space.n1, space.k
    X, W = space.element_quad
    c, h = space.centroids, space.h_T
    p = space.grad_basis.values(X, c, h)  # (nt,nq,n1)
    dp = space.grad_basis.gradients(X, c, h)  # (nt,nq,n1,2)
    Mp = np.einsum("tq,tqm,tqn->tmn", W, p, p)

    Mq = np.zeros((nt, 2 * n1, 2 * n1))
    Mq[:, :n1, :n1] = Mp
    Mq[:, n1:, n1:] = Mp

    R = np.zeros((nt, 2 * n1, space.n_local))
    # -(v0, div q): q = (p_m, 0) -> dx p_m ; q = (0, p_m) -> dy p_m
    R[:, :n1, :n0] = -np.einsum("tq,tqi,tqm->tmi", W, space.phi, dp[..., 0])
    R[:, n1:, :n0] = -np.einsum("tq,tqi,tqm->tmi", W, space.phi, dp[..., 1])

    # <vb, q.n> on each local edge
    Xe, We, _ = space.edge_quad
    normals = space.mesh.local_normals()  # (nt,3,2)
    pe = space.grad_basis.values(Xe.reshape(nt, -1, 2), c, h).reshape(Xe.shape[:-1] + (n1,))
    for e in range(3):
        base = np.einsum("tq,tql,tqm->tml", We[:, e], space.psi_local[:, e], pe[:, e])  # (nt,n1,k)
        cols = slice(n0 + e * k, n0 + (e + 1) * k)
        R[:, :n1, cols] = base * normals[:, e, 0, None, None]
        R[:, n1:, cols] = base * normals[:, e, 1, None, None]

    G = np.linalg.solve(Mq, R)
    return WeakGradientTable(G=G, Mq=Mq, R=R)


# ---------------------------------------------------------------- operations


def weak_gradient_local(space: WgSpace, tri: int) -> np.ndarray:
    """Operator G_T of one triangle (2 dim P_{k-1} x local dofs)."""
    return space.weak_gradient_table.G[tri]


def weak_gradient(space: WgSpace, local_vectors: np.ndarray) -> np.ndarray:
    """Weak-gradient coefficients (nt, 2, dim P_{k-1}) from local vectors (nt, nl)."""
    coef = np.einsum("tqj,tj->tq", space.weak_gradient_table.G, local_vectors)
    return coef.reshape(len(coef), 2, space.n1)


def _element_rhs(space, tri, func, basis_values):
    X, W = space.element_quad
    sl = slice(None) if tri is None else tri
    Xs, Ws, B = X[sl], W[sl], basis_values[sl]
    vals = np.asarray(func(Xs[..., 0], Xs[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, Ws.shape)
    return np.einsum("...q,...q,...qi->...i", Ws, vals, B)


def project_Q0(space: WgSpace, func, tri: int | None = None) -> np.ndarray:
    """L2 projection of ``func(x, y)`` onto P_k(T).

    Returns (dim P_k,) for one triangle or (nt, dim P_k) when ``tri`` is None.
    """
    rhs = _element_rhs(space, tri, func, space.phi)
    M = space.mass_local if tri is None else space.mass_local[tri]
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def _edge_param_points(mesh, edge, t):
    a, b = mesh.vertices[mesh.edges[edge]]
    return a + np.asarray(t)[:, None] * (b - a)


def project_Qb(space: WgSpace, edge: int, func) -> np.ndarray:
    """L2 projection of ``func`` onto P_{k-1}(e) in the edge's lo->hi parametrisation."""
    rule = edge_quadrature(max(3 * space.k, 2 * space.k + 1) + 4)
    length = space.mesh.edge_lengths[edge]
    X = _edge_param_points(space.mesh, edge, rule.points)
    psi = space.edge_basis.values(rule.points)
    w = length * rule.weights
    vals = np.broadcast_to(np.asarray(func(X[:, 0], X[:, 1]), dtype=float), w.shape)
    Me = np.einsum("q,qi,qj->ij", w, psi, psi)
    return np.linalg.solve(Me, np.einsum("q,q,qi->i", w, vals, psi))


def project_Qb_all(space: WgSpace, func) -> np.ndarray:
    """Q_b on every mesh edge, (n_edges, k)."""
    mesh = space.mesh
    rule = edge_quadrature(max(3 * space.k, 2 * space.k + 1) + 4)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    X = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    psi = space.edge_basis.values(rule.points)
    w = mesh.edge_lengths[:, None] * rule.weights
    vals = np.broadcast_to(np.asarray(func(X[..., 0], X[..., 1]), dtype=float), w.shape)
    Me = np.einsum("eq,qi,qj->eij", w, psi, psi)
    rhs = np.einsum("eq,eq,qi->ei", w, vals, psi)
    return np.linalg.solve(Me, rhs[..., None])[..., 0]


def project_Qh(space: WgSpace, func) -> WgFunction:
    """Q_h = {Q_0, Q_b}; values on boundary edges are dropped (eliminated)."""
    x = np.zeros(space.ndof)
    x[: space.n_interior_dofs] = project_Q0(space, func).ravel()
    qb = project_Qb_all(space, func)
    inner = space.edge_start >= 0
    idx = space.edge_start[inner][:, None] + np.arange(space.k)
    x[idx] = qb[inner]
    return WgFunction(space, x)


def project_Qh_local(space: WgSpace, func) -> np.ndarray:
    """Local vectors (nt, nl) of Q_h func, keeping the boundary-edge traces.

    Used for element-wise identities where the boundary condition is
    irrelevant.
    """
    nt, n0, k = space.mesh.n_triangles, space.n0, space.k
    out = np.empty((nt, space.n_local))
    out[:, :n0] = project_Q0(space, func)
    qb = project_Qb_all(space, func)
    out[:, n0:] = qb[space.mesh.tri_edges].reshape(nt, 3 * k)
    return out


def project_Qh_vec(space: WgSpace, vec_field, tri: int | None = None) -> np.ndarray:
    """Componentwise L2 projection onto [P_{k-1}(T)]^2, shape (..., 2, dim P_{k-1})."""
    X, _ = space.element_quad
    p = space.grad_basis.values(X, space.centroids, space.h_T)
    Mq = space.weak_gradient_table.Mq[:, : space.n1, : space.n1]

    def comp(i):
        return lambda x, y: vec_field(x, y)[i]

    out = []
    for i in range(2):
        rhs = _element_rhs(space, tri, comp(i), p)
        M = Mq if tri is None else Mq[tri]
        out.append(np.linalg.solve(M, rhs[..., None])[..., 0])
    return np.stack(out, axis=-2)


def stabilizer_local(space: WgSpace, tri: int, epsilon: float) -> np.ndarray:
    """S_T with v^T S_T w = h_T^{eps-1} <Q_b v0 - vb, Q_b w0 - wb>_{dT}."""
    epsilon = check_epsilon(epsilon)
    return space.h_T[tri] ** (epsilon - 1.0) * space.jump_local[tri]


def evaluate_interior(space: WgSpace, x, points) -> np.ndarray:
    """Point values of the interior component v0 (uniform meshes only)."""
    p = np.asarray(points, dtype=float)
    tri = locate(space.mesh, p)
    coef = space.interior_coefficients(x)[tri]
    vals = space.basis.values(p[..., None, :], space.centroids[tri], space.h_T[tri])[..., 0, :]
    return np.einsum("...i,...i->...", vals, coef)


def interpolate_wg(space: WgSpace, func) -> np.ndarray:
    """Global vector with v0 = Q_0 func and vb the mean of the neighbouring Q_b v0 traces.

    Unlike :func:`project_Qh` only element-interior point values of ``func``
    are used, so a piecewise function whose kinks lie on coarser mesh edges
    (a prolonged coarse solution) is transferred without sampling the kinks.
    """
    x = np.zeros(space.ndof)
    v0 = project_Q0(space, func)
    x[: space.n_interior_dofs] = v0.ravel()
    if space.n_edge_dofs:
        qb = np.linalg.solve(space.edge_mass_local, np.einsum("teli,ti->tel", space.edge_trace_local, v0)[..., None])[..., 0]
        l2g = space.local_to_global[:, space.n0 :].reshape(-1)
        vals = qb.reshape(-1)
        keep = l2g >= 0
        total = np.bincount(l2g[keep], weights=vals[keep], minlength=space.ndof)
        count = np.bincount(l2g[keep], minlength=space.ndof)
        edge = slice(space.n_interior_dofs, None)
        x[edge] = total[edge] / np.maximum(count[edge], 1)
    return x
