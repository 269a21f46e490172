"""Global operators for the weak Galerkin discretisation.

``K_lin`` represents a_h(., .) = (A grad_w ., grad_w .) + (V ., .) + s(., .)
and ``M`` the L2 pairing of interior components.  Interior unknowns of
different triangles never couple, so every interior block of ``K(u) =
K_lin + N(u)`` is block diagonal; :class:`CondensedSolver` exploits this
and only factorises the Schur complement on the edge unknowns.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .problem import ProblemSpec
from .wg import WgFunction, WgSpace, check_epsilon, evaluate_interior, interpolate_wg, weak_gradient

__all__ = [
    "scatter_matrix",
    "block_diagonal",
    "AssembledOperators",
    "WgOperators",
    "CondensedSolver",
    "assemble_linear",
    "assemble_density_term",
    "energy",
    "l4_norm4",
    "h1_discrete_norm",
    "symmetry_defect",
    "dump_matrix_market",
]


def scatter_matrix(local: np.ndarray, l2g: np.ndarray, ndof: int) -> sp.csr_matrix:
    """Sum element matrices (nt, n, n) into a global CSR matrix; -1 indices are dropped."""
    nt, n, _ = local.shape
    rows = np.broadcast_to(l2g[:, :, None], (nt, n, n)).ravel()
    cols = np.broadcast_to(l2g[:, None, :], (nt, n, n)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((local.ravel()[keep], (rows[keep], cols[keep])), shape=(ndof, ndof))
    return A.tocsr()


def block_diagonal(blocks: np.ndarray, ndof: int | None = None) -> sp.csr_matrix:
    """CSR matrix with the (nt, n, n) blocks on the leading diagonal."""
    nt, n, _ = blocks.shape
    size = nt * n if ndof is None else ndof
    indptr = np.zeros(size + 1, dtype=np.int64)
    indptr[1 : nt * n + 1] = n * np.arange(1, nt * n + 1)
    indptr[nt * n + 1 :] = nt * n * n
    cols = (np.arange(nt)[:, None, None] * n + np.arange(n)[None, None, :]).repeat(n, axis=1)
    return sp.csr_matrix((blocks.ravel(), cols.ravel(), indptr), shape=(size, size))


def symmetry_defect(A) -> float:
    """max |A - A^T| / max |A|."""
    A = sp.csr_matrix(A)
    scale = abs(A).max()
    if scale == 0:
        return 0.0
    return float(abs(A - A.T).max() / scale)


def dump_matrix_market(A, path) -> Path:
    path = Path(path)
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), symmetry="general", precision=17)
    return path if path.suffix == ".mtx" else path.with_name(path.name + ".mtx")


class AssembledOperators:
    """Common interface of a discretised ground-state problem.

    Subclasses provide ``K_lin``, ``M``, ``spec`` and the element data used
    by :meth:`density_term`, :meth:`l4_norm4` and :meth:`integral`.
    """

    K_lin: sp.csr_matrix
    M: sp.csr_matrix
    spec: ProblemSpec
    method: str = ""

    @property
    def ndof(self) -> int:
        return self.K_lin.shape[0]

    @property
    def term(self):
        return self.spec.nonlinearity

    def density_term(self, x, beta: float | None = None) -> sp.csr_matrix:
        raise NotImplementedError

    def l4_norm4(self, x) -> float:
        raise NotImplementedError

    def integral(self, x) -> float:
        raise NotImplementedError

    def wrap(self, x):
        """x as a discrete function object; plain vectors by default."""
        return x

    def evaluate(self, x, points) -> np.ndarray:
        """Point values of the discrete function x."""
        raise NotImplementedError

    def interpolate(self, func) -> np.ndarray:
        """Coefficient vector approximating ``func(x, y)``."""
        raise NotImplementedError

    def prolong(self, coarse, x) -> np.ndarray:
        """Transfer a state of ``coarse`` (a nested coarser discretisation) and M-normalise it."""

        def func(X, Y):
            return coarse.evaluate(x, np.stack([X, Y], axis=-1))

        y = self.interpolate(func)
        return y / self.l2_norm(y)

    def K(self, x) -> sp.csr_matrix:
        if self.term.is_linear:
            return self.K_lin
        return (self.K_lin + self.density_term(x)).tocsr()

    def factorized(self, x=None):
        """Solver for K(x) (K_lin when x is None or the problem is linear)."""
        if x is None or self.term.is_linear:
            return self.shifted_solver(None)
        return self.shifted_solver(x)

    def shifted_solver(self, x=None, density_scale: float = 1.0, shift: float = 0.0):
        """Solver for K_lin + density_scale * N(x) - shift * M."""
        A = self.K_lin
        if x is not None and density_scale != 0.0:
            A = A + density_scale * self.density_term(x)
        if shift != 0.0:
            A = A - shift * self.M
        return spla.splu(sp.csc_matrix(A)).solve

    def l2_norm(self, x) -> float:
        return float(np.sqrt(x @ (self.M @ x)))

    def energy(self, x) -> float:
        """1/2 a(x, x) + 1/2 int F(u^2) with F(t) = beta/2 t^2."""
        quad = 0.5 * float(x @ (self.K_lin @ x))
        if self.term.is_linear:
            return quad
        return quad + 0.25 * self.term.beta * self.l4_norm4(x)

    def rayleigh(self, x) -> float:
        """<A^u u, u> / (u, u) with the density frozen at u itself."""
        Kx = self.K(x) @ x
        return float(x @ Kx) / float(x @ (self.M @ x))


class WgOperators(AssembledOperators):
    """Assembled weak Galerkin operators for one space, problem and epsilon."""

    def __init__(self, space: WgSpace, spec: ProblemSpec, epsilon: float = 0.1):
        self.space = space
        self.spec = spec
        self.epsilon = check_epsilon(epsilon)
        self.method = f"wg_k{space.k}"
        n0 = space.n0
        X, W = space.element_quad

        table = space.weak_gradient_table
        if spec.diffusion is None:
            stiff = np.einsum("tqi,tqj->tij", table.G, table.R)
        else:
            p = space.grad_basis.values(X, space.centroids, space.h_T)
            Acoef = spec.A(X[..., 0], X[..., 1])  # (nt,nq,2,2)
            n1 = space.n1
            D = np.zeros_like(table.Mq)
            for a in range(2):
                for b in range(2):
                    D[:, a * n1 : (a + 1) * n1, b * n1 : (b + 1) * n1] = np.einsum(
                        "tq,tq,tqm,tqn->tmn", W, Acoef[..., a, b], p, p
                    )
            stiff = np.einsum("tqi,tqr,trj->tij", table.G, D, table.G)

        Vq = spec.V(X[..., 0], X[..., 1])
        local = stiff + space.stabilizer_local(self.epsilon)
        local[:, :n0, :n0] += _kernels.weighted_mass(space.phi, W, Vq)
        local = 0.5 * (local + local.transpose(0, 2, 1))
        self.local_K = local
        self.K_lin = scatter_matrix(local, space.local_to_global, space.ndof)
        self.M = block_diagonal(space.mass_local, space.ndof)

    def density_blocks(self, x, beta=None) -> np.ndarray:
        beta = self.term.beta if beta is None else beta
        sp_ = self.space
        _, W = sp_.element_quad
        return _kernels.density_blocks(sp_.phi, W, sp_.interior_coefficients(x), beta)

    def density_term(self, x, beta=None) -> sp.csr_matrix:
        return block_diagonal(self.density_blocks(x, beta), self.space.ndof)

    def l4_norm4(self, x) -> float:
        sp_ = self.space
        _, W = sp_.element_quad
        return _kernels.quartic_sum(sp_.phi, W, sp_.interior_coefficients(x))

    def integral(self, x) -> float:
        sp_ = self.space
        _, W = sp_.element_quad
        u = np.einsum("tqi,ti->tq", sp_.phi, sp_.interior_coefficients(x))
        return float(np.sum(W * u))

    def wrap(self, x) -> WgFunction:
        return WgFunction(self.space, x)

    def evaluate(self, x, points) -> np.ndarray:
        return evaluate_interior(self.space, x, points)

    def interpolate(self, func) -> np.ndarray:
        return interpolate_wg(self.space, func)

    def shifted_solver(self, x=None, density_scale: float = 1.0, shift: float = 0.0):
        blocks = None
        if x is not None and density_scale != 0.0 and not self.term.is_linear:
            blocks = density_scale * self.density_blocks(x)
        if shift != 0.0:
            shifted = -shift * self.space.mass_local
            blocks = shifted if blocks is None else blocks + shifted
        return CondensedSolver(self, blocks)


class CondensedSolver:
    """Direct solver for K_lin + blockdiag(extra) via interior static condensation."""

    def __init__(self, ops: WgOperators, extra_blocks=None):
        space = ops.space
        n0 = space.n0
        self.space = space
        K = ops.local_K
        A = K[:, :n0, :n0]
        if extra_blocks is not None:
            A = A + extra_blocks
        self.B = np.ascontiguousarray(K[:, :n0, n0:])
        self.Ainv, S_local = _kernels.condense(A, self.B, K[:, n0:, n0:])
        self.edge_l2g = np.where(
            space.local_to_global[:, n0:] >= 0,
            space.local_to_global[:, n0:] - space.n_interior_dofs,
            -1,
        )
        self.n_edge = space.n_edge_dofs
        self.lu = None
        if self.n_edge:
            S = scatter_matrix(S_local, self.edge_l2g, self.n_edge)
            self.lu = spla.splu(S.tocsc())

    def __call__(self, b):
        return self.solve(b)

    def solve(self, b):
        space = self.space
        b = np.asarray(b, dtype=float)
        nint = space.n_interior_dofs
        b0 = b[:nint].reshape(-1, space.n0)
        y0 = np.einsum("tij,tj->ti", self.Ainv, b0)
        x = np.empty_like(b)
        if self.n_edge:
            contrib = np.einsum("tim,ti->tm", self.B, y0)
            keep = self.edge_l2g >= 0
            rb = b[nint:] - np.bincount(
                self.edge_l2g[keep], weights=contrib[keep], minlength=self.n_edge
            )
            xb = self.lu.solve(rb)
            x[nint:] = xb
            xb_loc = np.where(keep, np.append(xb, 0.0)[self.edge_l2g], 0.0)
            y0 = y0 - np.einsum("tij,tjm,tm->ti", self.Ainv, self.B, xb_loc)
        x[:nint] = y0.ravel()
        return x


# ---------------------------------------------------------------- functional API


def assemble_linear(space: WgSpace, spec: ProblemSpec, epsilon: float = 0.1) -> WgOperators:
    return WgOperators(space, spec, epsilon)


def _coeffs(state):
    return state.coeffs if isinstance(state, WgFunction) else np.asarray(state, dtype=float)


def assemble_density_term(ops: WgOperators, state, beta: float | None = None) -> sp.csr_matrix:
    """Matrix of (f(u0^2) v0, w0) for the current state."""
    return ops.density_term(_coeffs(state), beta)


def energy(ops: AssembledOperators, state) -> float:
    return ops.energy(_coeffs(state))


def l4_norm4(ops: AssembledOperators, state) -> float:
    return ops.l4_norm4(_coeffs(state))


def h1_discrete_norm(space: WgSpace, state) -> float:
    """sqrt( sum_T |grad v0|_T^2 + sum_T h_T^{-1} |Q_b v0 - vb|_{dT}^2 )."""
    loc = space.gather(_coeffs(state))
    n0 = space.n0
    v0 = loc[:, :n0]
    grad = np.einsum("ti,tij,tj->", v0, space.grad_stiffness_local, v0)
    jump = np.einsum("ti,tij,tj->t", loc, space.jump_local, loc)
    return float(np.sqrt(max(grad + np.sum(jump / space.h_T), 0.0)))


def weak_gradient_energy(space: WgSpace, state) -> float:
    """(grad_w v, grad_w v) evaluated by quadrature of the weak gradient itself."""
    coef = weak_gradient(space, space.gather(_coeffs(state)))
    X, W = space.element_quad
    p = space.grad_basis.values(X, space.centroids, space.h_T)
    g = np.einsum("tqm,tcm->tqc", p, coef)
    return float(np.sum(W[..., None] * g * g))
