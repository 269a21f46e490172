"""Element-batched numeric kernels.

Every kernel has a pure-numpy implementation and, when numba is importable,
an ``@njit`` twin.  ``WGGPE_BACKEND=numpy`` forces the numpy path;
``WGGPE_BACKEND=numba`` (the default when numba is installed) selects the
compiled one.  Both paths are exercised by the test-suite and compared in
``benchmarks/bench_kernels.py``.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None
    HAVE_NUMBA = False


def _requested_backend() -> str:
    name = os.environ.get("WGGPE_BACKEND", "numba" if HAVE_NUMBA else "numpy").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"WGGPE_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


# ---------------------------------------------------------------- numpy path


def density_blocks_numpy(phi, wq, coef, beta):
    """Per-element matrices  int_T beta u^2 phi_i phi_j  with u = coef . phi."""
    u = np.einsum("tqi,ti->tq", phi, coef)
    g = beta * wq * u * u
    return np.einsum("tq,tqi,tqj->tij", g, phi, phi)


def quartic_sum_numpy(phi, wq, coef):
    u = np.einsum("tqi,ti->tq", phi, coef)
    u2 = u * u
    return float(np.sum(wq * u2 * u2))


def weighted_mass_numpy(phi, wq, weight):
    """Per-element matrices  sum_q w_q weight_q phi_i phi_j."""
    return np.einsum("tq,tqi,tqj->tij", wq * weight, phi, phi)


def condense_numpy(A, B, C):
    """Batched static condensation.

    Returns ``(Ainv, S)`` with ``Ainv = A^{-1}`` and ``S = C - B^T A^{-1} B``
    for stacks A (nt, n, n), B (nt, n, m), C (nt, m, m).
    """
    Ainv = np.linalg.inv(A)
    S = C - np.einsum("tim,tij,tjn->tmn", B, Ainv, B)
    return Ainv, S


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def density_blocks_numba(phi, wq, coef, beta):
        nt, nq, n = phi.shape
        out = np.zeros((nt, n, n))
        for t in range(nt):
            for q in range(nq):
                u = 0.0
                for i in range(n):
                    u += coef[t, i] * phi[t, q, i]
                g = beta * wq[t, q] * u * u
                for i in range(n):
                    gi = g * phi[t, q, i]
                    for j in range(i, n):
                        out[t, i, j] += gi * phi[t, q, j]
            for i in range(n):
                for j in range(i + 1, n):
                    out[t, j, i] = out[t, i, j]
        return out

    @njit(cache=True)
    def quartic_sum_numba(phi, wq, coef):
        nt, nq, n = phi.shape
        total = 0.0
        for t in range(nt):
            for q in range(nq):
                u = 0.0
                for i in range(n):
                    u += coef[t, i] * phi[t, q, i]
                u2 = u * u
                total += wq[t, q] * u2 * u2
        return total

    @njit(cache=True)
    def weighted_mass_numba(phi, wq, weight):
        nt, nq, n = phi.shape
        out = np.zeros((nt, n, n))
        for t in range(nt):
            for q in range(nq):
                g = wq[t, q] * weight[t, q]
                for i in range(n):
                    gi = g * phi[t, q, i]
                    for j in range(i, n):
                        out[t, i, j] += gi * phi[t, q, j]
            for i in range(n):
                for j in range(i + 1, n):
                    out[t, j, i] = out[t, i, j]
        return out

    @njit(cache=True)
    def condense_numba(A, B, C):
        nt, n, _ = A.shape
        m = B.shape[2]
        Ainv = np.empty_like(A)
        S = np.empty_like(C)
        for t in range(nt):
            Ai = np.linalg.inv(A[t])
            Ainv[t] = Ai
            AB = Ai @ B[t]
            S[t] = C[t] - B[t].T @ AB
        return Ainv, S


_NUMPY = {
    "density_blocks": density_blocks_numpy,
    "quartic_sum": quartic_sum_numpy,
    "weighted_mass": weighted_mass_numpy,
    "condense": condense_numpy,
}
_NUMBA = (
    {
        "density_blocks": density_blocks_numba,
        "quartic_sum": quartic_sum_numba,
        "weighted_mass": weighted_mass_numba,
        "condense": condense_numba,
    }
    if HAVE_NUMBA
    else {}
)

BACKEND = _requested_backend()


def get_kernels(backend: str | None = None) -> dict:
    """Kernel table for ``backend`` ('numba' or 'numpy'; default: active backend)."""
    backend = backend or BACKEND
    if backend == "numba":
        if not HAVE_NUMBA:
            raise ValueError("numba backend requested but numba is not installed")
        return _NUMBA
    return _NUMPY


def _contig(*arrays):
    return tuple(np.ascontiguousarray(a, dtype=float) for a in arrays)


def density_blocks(phi, wq, coef, beta):
    phi, wq, coef = _contig(phi, wq, coef)
    return get_kernels()["density_blocks"](phi, wq, coef, float(beta))


def quartic_sum(phi, wq, coef):
    phi, wq, coef = _contig(phi, wq, coef)
    return float(get_kernels()["quartic_sum"](phi, wq, coef))


def weighted_mass(phi, wq, weight):
    phi, wq, weight = _contig(phi, wq, weight)
    return get_kernels()["weighted_mass"](phi, wq, weight)


def condense(A, B, C):
    A, B, C = _contig(A, B, C)
    return get_kernels()["condense"](A, B, C)
