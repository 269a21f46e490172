"""Quadrature rules and scaled-monomial bases on triangles and edges."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ConfigError

__all__ = [
    "QuadRule",
    "tri_quadrature",
    "edge_quadrature",
    "TriBasis",
    "EdgeBasis",
    "eval_basis",
    "default_quad_degree",
    "monomial_integral_reference",
]

MAX_TRI_DEGREE = 20


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on a reference cell.

    Triangle rules live on the unit right triangle (0,0), (1,0), (0,1) with
    weights summing to 1/2; edge rules live on [0, 1] with weights summing
    to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)

    @property
    def barycentric(self) -> np.ndarray:
        if self.points.ndim == 1:
            return np.column_stack([1.0 - self.points, self.points])
        return np.column_stack([1.0 - self.points.sum(axis=1), self.points])

    def map_to(self, verts: np.ndarray):
        """Physical points and weights on one or many cells.

        ``verts`` has shape (..., 3, 2) for triangles or (..., 2, 2) for
        segments; the result has shapes (..., nq, 2) and (..., nq).
        """
        verts = np.asarray(verts, dtype=float)
        lam = self.barycentric
        pts = np.einsum("qv,...vd->...qd", lam, verts)
        if verts.shape[-2] == 3:
            d1 = verts[..., 1, :] - verts[..., 0, :]
            d2 = verts[..., 2, :] - verts[..., 0, :]
            jac = np.abs(d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])
        else:
            d = verts[..., 1, :] - verts[..., 0, :]
            jac = np.hypot(d[..., 0], d[..., 1])
        return pts, jac[..., None] * self.weights


@lru_cache(maxsize=None)
def tri_quadrature(d: int) -> QuadRule:
    """Fully symmetric triangle rule exact for polynomials of total degree d."""
    if not 1 <= int(d) <= MAX_TRI_DEGREE:
        raise ConfigError(f"triangle quadrature degree must be in 1..{MAX_TRI_DEGREE}, got {d}")
    d = int(d)
    if d == 1:
        return QuadRule(np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]), 1)
    import modepy

    q = modepy.XiaoGimbutasSimplexQuadrature(d, 2)
    # modepy's reference simplex is (-1,-1), (1,-1), (-1,1)
    pts = (np.asarray(q.nodes).T + 1.0) / 2.0
    w = np.asarray(q.weights) / 4.0
    return QuadRule(np.ascontiguousarray(pts), w, d)


@lru_cache(maxsize=None)
def edge_quadrature(d: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact to degree d."""
    n = max(1, (int(d) + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadRule((x + 1.0) / 2.0, w / 2.0, 2 * n - 1)


def default_quad_degree(k: int) -> int:
    """Element quadrature degree for WG of order k (quartic term is degree 4k)."""
    return max(4 * k, 2 * k + 2)


def monomial_integral_reference(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the unit right triangle: a! b! / (a+b+2)!."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)


def _exponents(k: int):
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


class TriBasis:
    """Scaled monomials ((x - x_T)/h_T)^a ((y - y_T)/h_T)^b with a + b <= k."""

    def __init__(self, k: int):
        if k < 0:
            raise ConfigError("polynomial degree must be non-negative")
        self.k = k
        self.exponents = np.array(_exponents(k), dtype=np.int64).reshape(-1, 2)

    @property
    def dim(self) -> int:
        return (self.k + 1) * (self.k + 2) // 2

    def __repr__(self):
        return f"TriBasis(k={self.k})"

    def values(self, points, center, h):
        """Values with shape points.shape[:-1] + (dim,).

        ``center`` (.., 2) and ``h`` (..,) broadcast against the leading
        axes of ``points`` with the point axis removed.
        """
        xi, eta = self._scaled(points, center, h)
        a, b = self.exponents[:, 0], self.exponents[:, 1]
        return xi[..., None] ** a * eta[..., None] ** b

    def gradients(self, points, center, h):
        """Gradients with shape points.shape[:-1] + (dim, 2)."""
        xi, eta = self._scaled(points, center, h)
        h = np.asarray(h, dtype=float)[..., None, None]
        a, b = self.exponents[:, 0], self.exponents[:, 1]
        xi = xi[..., None]
        eta = eta[..., None]
        gx = np.where(a > 0, a * xi ** np.maximum(a - 1, 0), 0.0) * eta ** b
        gy = np.where(b > 0, b * eta ** np.maximum(b - 1, 0), 0.0) * xi ** a
        return np.stack([gx, gy], axis=-1) / h[..., None]

    @staticmethod
    def _scaled(points, center, h):
        p = np.asarray(points, dtype=float)
        c = np.asarray(center, dtype=float)[..., None, :]
        hh = np.asarray(h, dtype=float)[..., None]
        if p.ndim == 1:
            p = p[None]
        rel = (p - c) / hh[..., None]
        return rel[..., 0], rel[..., 1]


class EdgeBasis:
    """Scaled monomials s^j, j <= degree, with s = (arclength - l/2)/l."""

    def __init__(self, degree: int):
        if degree < 0:
            raise ConfigError("edge degree must be non-negative")
        self.degree = degree

    @property
    def dim(self) -> int:
        return self.degree + 1

    def __repr__(self):
        return f"EdgeBasis(degree={self.degree})"

    def values(self, t):
        """Values at edge parameters ``t`` in [0, 1] (0 at the lower vertex)."""
        s = np.asarray(t, dtype=float) - 0.5
        return s[..., None] ** np.arange(self.dim)


def eval_basis(basis, points, center=None, h=None, gradients=False):
    """Evaluate a basis at points.

    For a :class:`TriBasis` the element centre and size are required and
    ``gradients=True`` returns ``(values, grads)``.  For an
    :class:`EdgeBasis` ``points`` are edge parameters in [0, 1].
    """
    if isinstance(basis, EdgeBasis):
        return basis.values(points)
    vals = basis.values(points, center, h)
    if gradients:
        return vals, basis.gradients(points, center, h)
    return vals
