"""Smallest generalized eigenpairs and the self-consistent field iteration."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledOperators
from .exceptions import ArgumentError, ConfigError, ConvergenceError

__all__ = [
    "EigenPair",
    "ScfConfig",
    "GroundState",
    "smallest_eigenpair",
    "scf_solve",
    "write_history_csv",
]

log = logging.getLogger(__name__)


@dataclass
class EigenPair:
    lam: float
    x: np.ndarray
    residual: float


@dataclass(frozen=True)
class ScfConfig:
    """Outer-iteration controls.

    ``damping`` is the initial mixing weight of the new eigenvector.
    ``anderson`` > 0 enables Anderson acceleration of the damped map with
    that history depth; 0 gives plain damped mixing.
    """

    damping: float = 0.3
    tol_lambda: float = 1e-10
    tol_state: float = 1e-8
    max_iters: int = 500
    eig_tol: float = 1e-10
    adaptive_damping: bool = True
    anderson: int = 5
    newton: bool = True
    newton_switch: float = 1e-1
    newton_max_iters: int = 20
    tol_residual: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError("damping must lie in (0, 1]")
        if min(self.tol_lambda, self.tol_state, self.eig_tol, self.tol_residual, self.newton_switch) <= 0:
            raise ConfigError("tolerances must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.anderson < 0:
            raise ConfigError("anderson depth must be >= 0")


@dataclass
class GroundState:
    lam: float
    x: np.ndarray
    energy: float
    l4norm4: float
    iterations: int
    history: list = field(default_factory=list)
    residual: float = float("nan")
    ops: AssembledOperators | None = field(default=None, repr=False)

    @property
    def beta(self) -> float:
        return self.ops.spec.beta if self.ops is not None else float("nan")

    @property
    def spec(self):
        return None if self.ops is None else self.ops.spec

    @property
    def u(self):
        """The state as a discrete function (a WgFunction for WG operators)."""
        return self.x if self.ops is None else self.ops.wrap(self.x)

    def identity_defect(self) -> float:
        """lambda - 2E - beta/2 |u|_4^4."""
        return self.lam - 2.0 * self.energy - 0.5 * self.beta * self.l4norm4


def _residual(K, M, lam, x):
    Kx = K @ x
    r = Kx - lam * (M @ x)
    return float(np.linalg.norm(r) / max(np.linalg.norm(Kx), 1e-300))


DENSE_LIMIT = 64


def _dense_smallest(K, M):
    """Dense path via the reversed pencil M v = mu K v (K SPD, M may be singular)."""
    import scipy.linalg

    mu, V = scipy.linalg.eigh(M.toarray(), K.toarray())
    return V[:, -1]


def smallest_eigenpair(K, M, tol: float = 1e-10, max_iters: int = 1000, solve=None, v0=None):
    """Smallest eigenvalue of K x = lam M x with K SPD and M positive semi-definite.

    Shift-invert Lanczos at shift 0: the iteration operator K^{-1} M only
    sees the subspace where M is definite, so singular M is allowed.
    ``solve`` may supply a prefactorised K^{-1}.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if M.nnz == 0 or abs(M).max() == 0:
        raise ArgumentError("mass matrix is identically zero")
    if solve is None:
        solve = spla.splu(sp.csc_matrix(K)).solve

    if n <= DENSE_LIMIT:
        x = _dense_smallest(K, M)
    else:
        op = spla.LinearOperator((n, n), matvec=solve, dtype=float)
        # a fixed start keeps runs bit-reproducible (ARPACK would draw a random one)
        v0 = solve(M @ (np.ones(n) if v0 is None else v0))
        try:
            _, V = spla.eigsh(
                K, k=1, M=M, sigma=0.0, which="LM", OPinv=op, v0=v0,
                tol=tol * 1e-2, maxiter=max_iters, ncv=min(n, 20),
            )
        except spla.ArpackNoConvergence as exc:
            if len(exc.eigenvectors) == 0:
                raise ConvergenceError("inner eigensolver did not converge") from exc
            V = exc.eigenvectors
        except spla.ArpackError:
            # Krylov space exhausted, e.g. rank(M) below the basis size
            if n > 4 * DENSE_LIMIT:
                raise
            V = _dense_smallest(K, M)[:, None]
        x = V[:, 0]

    x = x / np.sqrt(x @ (M @ x))
    lam = float(x @ (K @ x))
    res = _residual(K, M, lam, x)
    # polish with inverse iteration if Lanczos stopped short
    for _ in range(50):
        if res <= tol:
            break
        x = solve(M @ x)
        x /= np.sqrt(x @ (M @ x))
        lam = float(x @ (K @ x))
        res = _residual(K, M, lam, x)
    if res > tol:
        raise ConvergenceError(
            f"smallest_eigenpair residual {res:.3e} above tolerance {tol:.1e}", best_residual=res
        )
    return EigenPair(lam, x, res)


def _orient(ops, x):
    return -x if ops.integral(x) < 0 else x


def newton_refine(ops: AssembledOperators, x, config: ScfConfig, history=None):
    """Newton's method on  K(u) u = lam M u,  u^T M u = 1.

    The Jacobian block K_lin + 3 N(u) - lam M is the second derivative of
    the discrete energy shifted by lam; it is positive definite near the
    ground state, so both bordered solves reuse one factorisation.
    Returns ``(x, lam, converged, steps)``.
    """
    M = ops.M
    x = x / np.sqrt(x @ (M @ x))
    lam = ops.rayleigh(x)
    history = history if history is not None else []

    def resid(x, lam):
        Kx = ops.K(x) @ x
        F1 = Kx - lam * (M @ x)
        return F1, float(np.linalg.norm(F1) / max(np.linalg.norm(Kx), 1e-300))

    F1, res = resid(x, lam)
    for step in range(1, config.newton_max_iters + 1):
        if res <= config.tol_residual:
            return x, lam, True, step - 1
        Mx = M @ x
        F2 = 0.5 * (1.0 - x @ Mx)
        solve = ops.shifted_solver(x, 3.0, lam)
        a = solve(-F1)
        b = solve(Mx)
        denom = Mx @ b
        if not np.isfinite(denom) or denom == 0.0:
            return x, lam, False, step
        dlam = (F2 - Mx @ a) / denom
        dx = a + dlam * b
        accepted = False
        for _ in range(6):
            xn = x + dx
            xn = xn / np.sqrt(xn @ (M @ xn))
            if (xn @ Mx) < 0:
                xn = -xn
            lamn = ops.rayleigh(xn)
            F1n, resn = resid(xn, lamn)
            if resn < res or resn <= config.tol_residual:
                accepted = True
                break
            dx = 0.5 * dx
        if not accepted:
            return x, lam, False, step
        du = float(np.sqrt(max((xn - x) @ (M @ (xn - x)), 0.0)))
        history.append(dict(iteration=len(history) + 1, lam=lamn, dlam=lamn - lam, du=du, phase="newton"))
        log.debug("newton %2d  lam=%.14f  res=%.2e  du=%.2e", step, lamn, resn, du)
        x, lam, F1, res = xn, lamn, F1n, resn
    return x, lam, res <= config.tol_residual, config.newton_max_iters


def scf_solve(ops: AssembledOperators, config: ScfConfig | None = None, x0=None) -> GroundState:
    """Ground state of ``ops`` by a damped, Anderson-accelerated SCF loop.

    Each outer step solves the linear eigenproblem with the density frozen
    at the current iterate, aligns the sign of the new eigenvector with the
    iterate and mixes.  Once the relative residual of the mixed iterate
    drops below ``newton_switch`` it is polished by :func:`newton_refine`,
    and the result is accepted only if lambda is still the smallest
    eigenvalue of the frozen-density operator.  The reported eigenvalue is
    the Rayleigh value with the density of the returned state, so
    lambda = 2E + beta/2 |u|_4^4 holds to rounding.

    A starting vector ``x0`` close to the ground state (for instance a
    prolonged coarse-mesh solution) is handed to Newton directly.
    ``GroundState.iterations`` counts all outer steps, SCF and Newton.
    """
    cfg = config or ScfConfig()
    M = ops.M

    def mnorm(v):
        return float(np.sqrt(max(v @ (M @ v), 0.0)))

    if x0 is None:
        pair = smallest_eigenpair(ops.K_lin, M, tol=cfg.eig_tol, solve=ops.factorized(None))
        x = _orient(ops, pair.x)
    else:
        x = np.asarray(x0, dtype=float)
        x = _orient(ops, x / mnorm(x))

    if ops.term.is_linear:
        if x0 is not None:
            pair = smallest_eigenpair(ops.K_lin, M, tol=cfg.eig_tol, solve=ops.factorized(None), v0=x)
            x = _orient(ops, pair.x)
        lam = ops.rayleigh(x)
        return _finish(ops, x, lam, [dict(iteration=1, lam=lam, dlam=float("nan"), du=0.0, phase="scf")])

    history = []
    if x0 is not None and cfg.newton:
        # a good warm start (e.g. a prolonged coarse solution) goes straight to Newton
        if _residual(ops.K(x), M, ops.rayleigh(x), x) <= cfg.newton_switch:
            xn, lamn, ok, _ = newton_refine(ops, x, cfg, history)
            if ok and _is_ground_state(ops, xn, lamn, cfg):
                return _finish(ops, xn, lamn, history)
            history.clear()

    t = cfg.damping
    lam_prev = None
    dlam_signs = []
    # Anderson memory of iterates and residuals g(x) - x
    X_hist, F_hist = [], []
    use_newton = cfg.newton
    switch = cfg.newton_switch
    best = np.inf

    for it in range(1, cfg.max_iters + 1):
        pair = smallest_eigenpair(ops.K(x), M, tol=cfg.eig_tol, solve=ops.factorized(x), v0=x)
        y = pair.x if (pair.x @ (M @ x)) >= 0 else -pair.x
        f = y - x

        if cfg.anderson and F_hist:
            dF = np.array([F_hist[i + 1] - F_hist[i] for i in range(len(F_hist) - 1)] + [f - F_hist[-1]])
            dX = np.array([X_hist[i + 1] - X_hist[i] for i in range(len(X_hist) - 1)] + [x - X_hist[-1]])
            MdF = (M @ dF.T).T
            gram = dF @ MdF.T
            gram += 1e-14 * np.trace(gram) * np.eye(len(gram))
            gamma = np.linalg.lstsq(gram, MdF @ f, rcond=None)[0]
            x_new = x + t * f - (dX + t * dF).T @ gamma
        else:
            x_new = x + t * f
        X_hist.append(x.copy())
        F_hist.append(f)
        if len(F_hist) > cfg.anderson + 1:
            X_hist.pop(0)
            F_hist.pop(0)

        x_new = x_new / mnorm(x_new)
        if (x_new @ (M @ x)) < 0:
            x_new = -x_new
        du = mnorm(x_new - x)
        lam = pair.lam
        dlam = float("nan") if lam_prev is None else lam - lam_prev
        history.append(dict(iteration=it, lam=lam, dlam=dlam, du=du, phase="scf"))
        log.debug("scf %3d  lam=%.12f  dlam=%.2e  du=%.2e  t=%.3f", it, lam, dlam, du, t)
        best = min(best, du)

        if lam_prev is not None and cfg.adaptive_damping and dlam != 0:
            dlam_signs.append(np.sign(dlam))
            if len(dlam_signs) >= 3 and dlam_signs[-1] != dlam_signs[-2] and dlam_signs[-2] != dlam_signs[-3]:
                t = max(t / 2, 1e-3)
                dlam_signs.clear()
                X_hist.clear()
                F_hist.clear()

        converged = (
            lam_prev is not None
            and abs(dlam) <= cfg.tol_lambda * max(1.0, abs(lam))
            and du <= cfg.tol_state
        )
        x = x_new
        lam_prev = lam

        if use_newton:
            res = _residual(ops.K(x), M, ops.rayleigh(x), x)
            history[-1]["residual"] = res
            if converged or res <= switch:
                xn, lamn, ok, _ = newton_refine(ops, x, cfg, history)
                if ok and _is_ground_state(ops, xn, lamn, cfg):
                    return _finish(ops, xn, lamn, history)
                switch *= 0.1
                log.info("newton polish rejected at scf step %d; switch lowered to %.1e", it, switch)
                X_hist.clear()
                F_hist.clear()
                continue
        if converged:
            return _finish(ops, x, ops.rayleigh(x), history)

    raise ConvergenceError(
        f"SCF did not converge in {cfg.max_iters} iterations (last du={history[-1]['du']:.2e})",
        history=history,
        best_residual=best,
    )


def _is_ground_state(ops, x, lam, cfg):
    """lam must be the smallest eigenvalue of the operator frozen at x."""
    pair = smallest_eigenpair(ops.K(x), ops.M, tol=cfg.eig_tol, solve=ops.factorized(x), v0=x)
    return abs(pair.lam - lam) <= 1e-8 * max(1.0, abs(lam))


def _finish(ops, x, lam, history):
    x = _orient(ops, x)
    K = ops.K(x)
    return GroundState(
        lam=float(lam),
        x=x,
        energy=ops.energy(x),
        l4norm4=ops.l4_norm4(x),
        iterations=len(history),
        history=history,
        residual=_residual(K, ops.M, lam, x),
        ops=ops,
    )


def write_history_csv(state: GroundState, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lambda", "dlambda", "du"])
        for i, row in enumerate(state.history, start=1):
            w.writerow([i, f"{row['lam']:.17g}", f"{row['dlam']:.17g}", f"{row['du']:.17g}"])
    return path
