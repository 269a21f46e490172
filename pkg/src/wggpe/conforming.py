"""Continuous P1 / P2 Lagrange elements for the same ground-state problem.

Node numbering: mesh vertices first, then (P2 only) one midpoint node per
mesh edge in edge order.  Nodes on the boundary carry the homogeneous
Dirichlet condition and are eliminated; the free nodes keep their relative
order.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .assembly import AssembledOperators, scatter_matrix
from .eigensolve import GroundState, ScfConfig, scf_solve
from .exceptions import ConfigError
from .mesh import LOCAL_EDGES, TriMesh, locate
from .polybasis import default_quad_degree, tri_quadrature
from .problem import NonlinearTerm, ProblemSpec

__all__ = [
    "LagrangeSpace",
    "ConformingOperators",
    "assemble_conforming",
    "scf_solve_conforming",
    "lagrange_values",
    "lagrange_gradients",
]


def lagrange_values(order: int, lam: np.ndarray) -> np.ndarray:
    """Shape functions at barycentric points lam (..., 3) -> (..., n_local)."""
    lam = np.asarray(lam, dtype=float)
    if order == 1:
        return lam.copy()
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    vert = lam * (2.0 * lam - 1.0)
    edge = 4.0 * lam[..., a] * lam[..., b]
    return np.concatenate([vert, edge], axis=-1)


def lagrange_gradients(order: int, lam: np.ndarray) -> np.ndarray:
    """Derivatives with respect to the barycentric coordinates, (..., n_local, 3)."""
    lam = np.asarray(lam, dtype=float)
    eye = np.eye(3)
    if order == 1:
        return np.broadcast_to(eye, lam.shape[:-1] + (3, 3)).copy()
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    vert = (4.0 * lam - 1.0)[..., :, None] * eye
    edge = 4.0 * (lam[..., b, None] * eye[a] + lam[..., a, None] * eye[b])
    return np.concatenate([vert, edge], axis=-2)


class LagrangeSpace:
    """Continuous piecewise polynomials of degree ``order`` (1 or 2), zero on the boundary."""

    def __init__(self, mesh: TriMesh, order: int = 1, quad_degree: int | None = None):
        if order not in (1, 2):
            raise ConfigError(f"Lagrange order must be 1 or 2, got {order}")
        self.mesh = mesh
        self.order = order
        self.quad_degree = quad_degree or default_quad_degree(order)
        nv = mesh.n_vertices
        bverts = np.unique(mesh.edges[mesh.boundary_edge_flags].ravel())
        on_bdry = np.zeros(nv, dtype=bool)
        on_bdry[bverts] = True
        nodes = [mesh.triangles]
        if order == 2:
            nodes.append(nv + mesh.tri_edges)
            on_bdry = np.concatenate([on_bdry, mesh.boundary_edge_flags])
        self.node_ids = np.concatenate(nodes, axis=1)  # (nt, n_local)
        self.boundary_nodes = on_bdry
        free = np.cumsum(~on_bdry) - 1
        self.node_to_dof = np.where(on_bdry, -1, free)
        self.ndof = int(np.count_nonzero(~on_bdry))
        self.local_to_global = self.node_to_dof[self.node_ids]

    def __repr__(self):
        return f"LagrangeSpace(order={self.order}, ndof={self.ndof})"

    @property
    def n_local(self) -> int:
        return 3 if self.order == 1 else 6

    @property
    def n_nodes(self) -> int:
        return len(self.boundary_nodes)

    @cached_property
    def node_coords(self) -> np.ndarray:
        mesh = self.mesh
        if self.order == 1:
            return mesh.vertices
        mid = mesh.vertices[mesh.edges].mean(axis=1)
        return np.vstack([mesh.vertices, mid])

    @cached_property
    def quad(self):
        rule = tri_quadrature(self.quad_degree)
        X, W = rule.map_to(self.mesh.tri_coords)
        return rule, X, W

    @cached_property
    def phi(self) -> np.ndarray:
        """Shape function values at quadrature points, (nt, nq, n_local)."""
        rule, _, W = self.quad
        ref = lagrange_values(self.order, rule.barycentric)
        return np.broadcast_to(ref, W.shape + (self.n_local,))

    @cached_property
    def grad_phi(self) -> np.ndarray:
        """Physical gradients at quadrature points, (nt, nq, n_local, 2)."""
        rule, _, _ = self.quad
        dref = lagrange_gradients(self.order, rule.barycentric)  # (nq, nl, 3)
        p = self.mesh.tri_coords
        # grad lam_i = rot90(opposite edge) / (2 area)
        area2 = 2.0 * self.mesh.areas
        opp = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)  # p[i-1] - p[i+1]
        glam = np.stack([-opp[..., 1], opp[..., 0]], axis=-1) / area2[:, None, None]
        return np.einsum("qlc,tcd->tqld", dref, glam)

    def gather(self, x) -> np.ndarray:
        padded = np.append(np.asarray(x, dtype=float), 0.0)
        return padded[self.local_to_global]

    def full_vector(self, x) -> np.ndarray:
        """Values at all nodes (boundary nodes zero)."""
        out = np.zeros(self.n_nodes)
        out[~self.boundary_nodes] = x
        return out


class ConformingOperators(AssembledOperators):
    """Stiffness + potential ``K_lin`` and mass ``M`` on the free nodes."""

    def __init__(self, space: LagrangeSpace, spec: ProblemSpec):
        self.space = space
        self.spec = spec
        self.method = f"p{space.order}"
        _, X, W = space.quad
        g = space.grad_phi
        if spec.diffusion is None:
            stiff = np.einsum("tq,tqid,tqjd->tij", W, g, g)
        else:
            A = spec.A(X[..., 0], X[..., 1])
            stiff = np.einsum("tq,tqid,tqde,tqje->tij", W, g, A, g)
        phi = np.ascontiguousarray(space.phi)
        self.mass_local = _kernels.weighted_mass(phi, W, np.ones_like(W))
        local = stiff + _kernels.weighted_mass(phi, W, spec.V(X[..., 0], X[..., 1]))
        self.local_K = 0.5 * (local + local.transpose(0, 2, 1))
        l2g = space.local_to_global
        self.K_lin = scatter_matrix(self.local_K, l2g, space.ndof)
        self.M = scatter_matrix(self.mass_local, l2g, space.ndof)

    @cached_property
    def M_full(self) -> sp.csr_matrix:
        """Mass matrix over all nodes, before the boundary elimination."""
        return scatter_matrix(self.mass_local, self.space.node_ids, self.space.n_nodes)

    def _elements(self, x):
        _, _, W = self.space.quad
        return np.ascontiguousarray(self.space.phi), W, self.space.gather(x)

    def density_blocks(self, x, beta=None) -> np.ndarray:
        beta = self.term.beta if beta is None else beta
        phi, W, coef = self._elements(x)
        return _kernels.density_blocks(phi, W, coef, beta)

    def density_term(self, x, beta=None) -> sp.csr_matrix:
        return scatter_matrix(self.density_blocks(x, beta), self.space.local_to_global, self.ndof)

    def l4_norm4(self, x) -> float:
        return _kernels.quartic_sum(*self._elements(x))

    def integral(self, x) -> float:
        phi, W, coef = self._elements(x)
        return float(np.einsum("tq,tqi,ti->", W, phi, coef))

    def evaluate(self, x, points) -> np.ndarray:
        sp_ = self.space
        p = np.asarray(points, dtype=float)
        tri = locate(sp_.mesh, p)
        v = sp_.mesh.tri_coords[tri]  # (..., 3, 2)
        d1, d2 = v[..., 1, :] - v[..., 0, :], v[..., 2, :] - v[..., 0, :]
        r = p - v[..., 0, :]
        det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
        l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
        lam = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        vals = lagrange_values(sp_.order, lam)
        return np.einsum("...i,...i->...", vals, sp_.gather(x)[tri])

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant on the free nodes."""
        sp_ = self.space
        c = sp_.node_coords[~sp_.boundary_nodes]
        vals = np.asarray(func(c[:, 0], c[:, 1]), dtype=float)
        return np.broadcast_to(vals, (sp_.ndof,)).copy()


def assemble_conforming(space: LagrangeSpace, spec: ProblemSpec) -> ConformingOperators:
    return ConformingOperators(space, spec)


def scf_solve_conforming(
    space: LagrangeSpace,
    spec: ProblemSpec,
    term: NonlinearTerm | None = None,
    config: ScfConfig | None = None,
    x0=None,
) -> GroundState:
    """Ground state of the conforming discretisation; ``term`` overrides the spec's nonlinearity."""
    if term is not None:
        spec = ProblemSpec(spec.domain, spec.potential, term, spec.diffusion)
    return scf_solve(ConformingOperators(space, spec), config, x0=x0)
