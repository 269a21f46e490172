"""Weak Galerkin ground states of Gross-Pitaevskii type eigenvalue problems.

Typical use::

    from wggpe import EXAMPLES, uniform_mesh, WgSpace, WgOperators, scf_solve

    spec = EXAMPLES["example1"].spec(1.0)
    ops = WgOperators(WgSpace(uniform_mesh(spec.domain, 32), k=1), spec)
    state = scf_solve(ops)
"""
from .assembly import WgOperators, assemble_density_term, assemble_linear, energy, h1_discrete_norm, l4_norm4
from .bounds import BoundReport, bound_report, energy_bracket, lower_bound, upper_bound
from .cli import EXAMPLES, ExperimentConfig, emit_report, order_estimate, run_experiment
from .conforming import ConformingOperators, LagrangeSpace, assemble_conforming, scf_solve_conforming
from .eigensolve import EigenPair, GroundState, ScfConfig, scf_solve, smallest_eigenpair
from .exceptions import ArgumentError, ConfigError, ConvergenceError, DomainError, WgGpeError
from .mesh import TriMesh, uniform_mesh
from .problem import (
    NonlinearTerm,
    ProblemSpec,
    Rectangle,
    constant_potential,
    evaluate_potential,
    harmonic_plus_gaussian_potential,
    harmonic_potential,
)
from .wg import WgFunction, WgSpace, project_Q0, project_Qb, project_Qh, weak_gradient

__version__ = "0.1.0"
