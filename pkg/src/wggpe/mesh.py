"""Uniform triangulations of rectangles with edge connectivity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .problem import Rectangle

__all__ = ["TriMesh", "uniform_mesh", "locate", "outward_normal", "write_triangle_files"]

# local edge j joins local vertices LOCAL_EDGES[j]
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangle mesh.

    ``edges`` are stored as (lo, hi) vertex pairs sorted lexicographically.
    ``tri_edge_sign[t, j]`` is +1 when local edge j of triangle t runs from
    the lower to the higher vertex index, i.e. when the edge's reference
    normal (its lo->hi tangent turned clockwise) points out of t.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_edge_sign: np.ndarray
    boundary_edge_flags: np.ndarray
    edge_triangles: np.ndarray  # (n_edges, 2), -1 where missing
    N: int | None = None
    rect: Rectangle | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def tri_coords(self) -> np.ndarray:
        """(n_tri, 3, 2) vertex coordinates."""
        return self.vertices[self.triangles]

    @property
    def areas(self) -> np.ndarray:
        p = self.tri_coords
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def centroids(self) -> np.ndarray:
        return self.tri_coords.mean(axis=1)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def h_T(self) -> np.ndarray:
        return self.edge_lengths[self.tri_edges].max(axis=1)

    @property
    def h(self) -> float:
        """Largest triangle side; for uniform meshes the cell diagonal, computed exactly."""
        if self.N is not None and self.rect is not None:
            r = self.rect
            return math.hypot((r.xmax - r.xmin) / self.N, (r.ymax - r.ymin) / self.N)
        return float(self.h_T.max())

    @property
    def inradius(self) -> np.ndarray:
        perimeter = self.edge_lengths[self.tri_edges].sum(axis=1)
        return 2.0 * self.areas / perimeter

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edge_flags)

    def local_normals(self) -> np.ndarray:
        """(n_tri, 3, 2) outward unit normals of the local edges."""
        p = self.tri_coords
        d = p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]]
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _build(vertices, triangles, N=None, rect=None) -> TriMesh:
    triangles = np.asarray(triangles, dtype=np.int64)
    nt = len(triangles)
    local = triangles[:, LOCAL_EDGES]  # (nt, 3, 2)
    lo = local.min(axis=2).ravel()
    hi = local.max(axis=2).ravel()
    keys = lo * (len(vertices) + 1) + hi
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise ValueError("non-manifold mesh: edge shared by more than two triangles")
    edges = np.stack([uniq // (len(vertices) + 1), uniq % (len(vertices) + 1)], axis=1)
    tri_edges = inverse.reshape(nt, 3)
    sign = np.where(local[:, :, 0] < local[:, :, 1], 1, -1).astype(np.int8)

    edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
    flat_t = np.repeat(np.arange(nt), 3)
    flat_e = tri_edges.ravel()
    order = np.argsort(flat_e, kind="stable")
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_e[order][1:] != flat_e[order][:-1]
    edge_tris[flat_e[order][first], 0] = flat_t[order][first]
    edge_tris[flat_e[order][~first], 1] = flat_t[order][~first]

    return TriMesh(
        vertices=np.asarray(vertices, dtype=float),
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        tri_edge_sign=sign,
        boundary_edge_flags=counts == 1,
        edge_triangles=edge_tris,
        N=N,
        rect=rect,
    )


def uniform_mesh(rect: Rectangle, N: int) -> TriMesh:
    """N x N grid of cells, each cut along its lower-left/upper-right diagonal."""
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    xs = np.linspace(rect.xmin, rect.xmax, N + 1)
    ys = np.linspace(rect.ymin, rect.ymax, N + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(N), np.arange(N))
    v00 = (j * (N + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + N + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _build(vertices, triangles, N=N, rect=rect)


def locate(mesh: TriMesh, points) -> np.ndarray:
    """Index of a triangle containing each point of a uniform mesh.

    Points on shared edges go to either neighbour.  Only meshes built by
    :func:`uniform_mesh` are supported.
    """
    if mesh.N is None or mesh.rect is None:
        raise ValueError("point location needs a uniform mesh")
    N, r = mesh.N, mesh.rect
    p = np.asarray(points, dtype=float)
    sx = (p[..., 0] - r.xmin) / (r.xmax - r.xmin) * N
    sy = (p[..., 1] - r.ymin) / (r.ymax - r.ymin) * N
    i = np.clip(np.floor(sx), 0, N - 1).astype(np.int64)
    j = np.clip(np.floor(sy), 0, N - 1).astype(np.int64)
    upper = (sy - j) > (sx - i)
    return 2 * (j * N + i) + upper


def outward_normal(mesh: TriMesh, tri: int, local_edge: int) -> np.ndarray:
    a, b = mesh.vertices[mesh.triangles[tri, LOCAL_EDGES[local_edge]]]
    d = b - a
    n = np.array([d[1], -d[0]])
    return n / np.linalg.norm(n)


def write_triangle_files(mesh: TriMesh, stem) -> tuple[Path, Path]:
    """Write ``stem.node`` / ``stem.ele`` in Triangle's plain-text layout (1-based)."""
    stem = Path(stem)
    node_path = stem.with_suffix(".node")
    ele_path = stem.with_suffix(".ele")
    on_bdry = np.zeros(mesh.n_vertices, dtype=int)
    on_bdry[mesh.edges[mesh.boundary_edge_flags].ravel()] = 1
    with open(node_path, "w") as fh:
        fh.write(f"{mesh.n_vertices} 2 0 1\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i + 1} {x:.17g} {y:.17g} {on_bdry[i]}\n")
    with open(ele_path, "w") as fh:
        fh.write(f"{mesh.n_triangles} 3 0\n")
        for i, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{i + 1} {a + 1} {b + 1} {c + 1}\n")
    return node_path, ele_path
