"""Continuous problem data: domain, coefficients, potential and nonlinearity.

The energy being minimised over the unit L2 sphere of H^1_0 is

    E(v) = 1/2 (A grad v, grad v) + 1/2 (V v, v) + 1/2 int F(v^2),

and for the Gross-Pitaevskii kind ``F(t) = beta/2 t^2`` so that
``f(t) = F'(t) = beta t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DomainError

__all__ = [
    "Rectangle",
    "NonlinearTerm",
    "Potential",
    "ProblemSpec",
    "constant_potential",
    "harmonic_potential",
    "harmonic_plus_gaussian_potential",
    "potential_from_dict",
    "evaluate_potential",
    "f_eval",
    "F_eval",
]


@dataclass(frozen=True)
class Rectangle:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise DomainError(f"rectangle has non-positive area: {self}")

    @classmethod
    def square(cls, a: float, b: float) -> "Rectangle":
        return cls(a, b, a, b)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        scale = tol * max(1.0, abs(self.xmin), abs(self.xmax), abs(self.ymin), abs(self.ymax))
        return (
            (p[:, 0] >= self.xmin - scale)
            & (p[:, 0] <= self.xmax + scale)
            & (p[:, 1] >= self.ymin - scale)
            & (p[:, 1] <= self.ymax + scale)
        )

    def to_tuple(self):
        return (self.xmin, self.xmax, self.ymin, self.ymax)


@dataclass(frozen=True)
class NonlinearTerm:
    """Gross-Pitaevskii nonlinearity ``F(t) = beta/2 t^2``.

    ``beta = 0`` turns the problem into a linear eigenproblem.  The growth
    exponents of the admissibility assumptions are fixed for this kind.
    """

    beta: float = 0.0
    kind: str = "gpe"

    # growth parameters of the admissible class, fixed by the GPE kind
    q = 1
    r = 2
    s = 1

    def __post_init__(self):
        if self.kind != "gpe":
            raise DomainError(f"unsupported nonlinearity kind {self.kind!r}")
        if self.beta < 0:
            raise DomainError("attractive interactions (beta < 0) are not supported")

    @property
    def is_linear(self) -> bool:
        return self.beta == 0.0

    def f(self, t):
        return f_eval(self, t)

    def F(self, t):
        return F_eval(self, t)


def _check_nonneg(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise DomainError("argument of F/f must be non-negative")
    return arr


def f_eval(term: NonlinearTerm, t):
    """f(t) = F'(t) = beta t."""
    arr = _check_nonneg(t)
    out = term.beta * arr
    return float(out) if out.ndim == 0 else out


def F_eval(term: NonlinearTerm, t):
    arr = _check_nonneg(t)
    out = 0.5 * term.beta * arr * arr
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Potential:
    """Named, serialisable scalar potential V(x, y) >= 0."""

    name: str
    params: tuple = ()
    func: Callable = field(compare=False, repr=False, default=None)

    def __call__(self, x, y):
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def to_dict(self) -> dict:
        keys = {
            "constant": ("c",),
            "harmonic": (),
            "harmonic_plus_gaussian": ("a", "x0", "y0"),
        }[self.name]
        return {"name": self.name, **dict(zip(keys, self.params))}


def constant_potential(c: float = 1.0) -> Potential:
    if c < 0:
        raise DomainError("constant potential must be non-negative")
    c = float(c)
    return Potential("constant", (c,), lambda x, y: np.full(np.broadcast(x, y).shape, c))


def harmonic_potential() -> Potential:
    return Potential("harmonic", (), lambda x, y: x * x + y * y)


def harmonic_plus_gaussian_potential(a: float = 8.0, x0: float = 1.0, y0: float = 0.0) -> Potential:
    if a < 0:
        raise DomainError("Gaussian amplitude must be non-negative")
    a, x0, y0 = float(a), float(x0), float(y0)

    def func(x, y):
        return x * x + y * y + a * np.exp(-(x - x0) ** 2 - (y - y0) ** 2)

    return Potential("harmonic_plus_gaussian", (a, x0, y0), func)


def potential_from_dict(d: dict) -> Potential:
    name = d["name"]
    if name == "constant":
        return constant_potential(d.get("c", 1.0))
    if name == "harmonic":
        return harmonic_potential()
    if name == "harmonic_plus_gaussian":
        return harmonic_plus_gaussian_potential(d.get("a", 8.0), d.get("x0", 1.0), d.get("y0", 0.0))
    raise DomainError(f"unknown potential {name!r}")


def identity_diffusion(x, y):
    """Identity coefficient, returned with shape ``x.shape + (2, 2)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    return out


@dataclass(frozen=True)
class ProblemSpec:
    domain: Rectangle
    potential: Potential = field(default_factory=lambda: constant_potential(0.0))
    nonlinearity: NonlinearTerm = field(default_factory=NonlinearTerm)
    # None means the identity matrix; a callable returns (..., 2, 2) arrays.
    diffusion: Callable | None = field(default=None, compare=False)

    @property
    def beta(self) -> float:
        return self.nonlinearity.beta

    def with_beta(self, beta: float) -> "ProblemSpec":
        return ProblemSpec(self.domain, self.potential, NonlinearTerm(beta), self.diffusion)

    def V(self, x, y):
        v = self.potential(x, y)
        if np.any(v < 0):
            raise DomainError("potential is negative at a quadrature point")
        return v

    def A(self, x, y):
        if self.diffusion is None:
            return identity_diffusion(x, y)
        return self.diffusion(x, y)

    def to_dict(self) -> dict:
        return {
            "domain": list(self.domain.to_tuple()),
            "potential": self.potential.to_dict(),
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(
            Rectangle(*map(float, d["domain"])),
            potential_from_dict(d["potential"]),
            NonlinearTerm(float(d.get("beta", 0.0))),
        )


def evaluate_potential(spec: ProblemSpec, points) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(spec.domain.contains(p)):
        raise DomainError("point outside the closed domain")
    return spec.V(p[:, 0], p[:, 1])
