import numpy as np
import pytest

from wggpe.assembly import scatter_matrix, symmetry_defect
from wggpe.conforming import LagrangeSpace, assemble_conforming, lagrange_gradients, lagrange_values, scf_solve_conforming
from wggpe.eigensolve import scf_solve
from wggpe.exceptions import ConfigError
from wggpe.mesh import uniform_mesh
from wggpe.problem import NonlinearTerm, ProblemSpec, Rectangle, constant_potential, harmonic_potential

from _ladders import ladder, state, values

UNIT = Rectangle.square(0, 1)
LAPLACE = ProblemSpec(UNIT, constant_potential(0.0), NonlinearTerm(0.0))


def test_bad_order():
    with pytest.raises(ConfigError):
        LagrangeSpace(uniform_mesh(UNIT, 2), 3)


@pytest.mark.parametrize("order, N", [(1, 1), (1, 4), (2, 1), (2, 4)])
def test_dof_counts(order, N):
    sp_ = LagrangeSpace(uniform_mesh(UNIT, N), order)
    interior_vertices = (N - 1) ** 2
    interior_edges = int((~sp_.mesh.boundary_edge_flags).sum())
    expected = interior_vertices + (interior_edges if order == 2 else 0)
    assert sp_.ndof == expected


@pytest.mark.parametrize("order", [1, 2])
def test_shape_functions_partition_of_unity(order):
    lam = np.random.default_rng(0).dirichlet(np.ones(3), size=20)
    assert np.allclose(lagrange_values(order, lam).sum(axis=-1), 1.0)
    sp_ = LagrangeSpace(uniform_mesh(Rectangle(0, 2, -1, 1), 3), order)
    assert np.abs(sp_.grad_phi.sum(axis=2)).max() <= 1e-13
    # the shape functions are nodal: value 1 at their own node, 0 at the others
    nodes = np.vstack([np.eye(3), 0.5 * (np.eye(3) + np.roll(np.eye(3), -1, axis=0))])[: sp_.n_local]
    assert np.allclose(lagrange_values(order, nodes), np.eye(sp_.n_local), atol=1e-15)
    assert lagrange_gradients(order, lam).shape == (20, sp_.n_local, 3)


@pytest.mark.parametrize("order", [1, 2])
def test_patch_test(order):
    ops = assemble_conforming(LagrangeSpace(uniform_mesh(Rectangle(-1, 2, 0, 1), 3), order), LAPLACE)
    sp_ = ops.space
    K_full = scatter_matrix(ops.local_K, sp_.node_ids, sp_.n_nodes)
    # constants lie in the kernel of the stiffness matrix
    assert np.abs(K_full @ np.ones(sp_.n_nodes)).max() <= 1e-12
    # linear functions are reproduced by the nodal interpolant
    f = lambda x, y: 1.0 + 2.0 * x - 3.0 * y  # noqa: E731
    c = sp_.node_coords
    full = f(c[:, 0], c[:, 1])
    tri = 7
    rule_pts = np.random.default_rng(1).dirichlet(np.ones(3), size=10)
    pts = rule_pts @ sp_.mesh.tri_coords[tri]
    vals = lagrange_values(order, rule_pts) @ full[sp_.node_ids[tri]]
    assert np.allclose(vals, f(pts[:, 0], pts[:, 1]), atol=1e-13)
    # and their Dirichlet energy is exact: |grad f|^2 * area = 13 * 3
    assert full @ (K_full @ full) == pytest.approx(13 * 3, rel=1e-13)


@pytest.mark.parametrize("order", [1, 2])
def test_total_mass(order):
    ops = assemble_conforming(LagrangeSpace(uniform_mesh(Rectangle(-8, 8, -1, 1), 5), order), LAPLACE)
    one = np.ones(ops.space.n_nodes)
    assert abs(one @ (ops.M_full @ one) - 32.0) <= 1e-12 * 32
    assert symmetry_defect(ops.K_lin) <= 1e-12 and symmetry_defect(ops.M) <= 1e-12
    assert np.linalg.eigvalsh(ops.M.toarray()).min() > 0
    assert np.linalg.eigvalsh(ops.K_lin.toarray()).min() > 0


def test_p1_unit_square_upper_bound_and_rate():
    errs = []
    for N in (16, 32, 64):
        gs = scf_solve(assemble_conforming(LagrangeSpace(uniform_mesh(UNIT, N), 1), LAPLACE))
        errs.append(gs.lam - 2 * np.pi**2)
    assert min(errs) > 0
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_p2_unit_square():
    gs = scf_solve_conforming(LagrangeSpace(uniform_mesh(UNIT, 16), 2), LAPLACE)
    assert 0 <= gs.lam - 2 * np.pi**2 <= 1e-3


def test_term_override():
    spec = ProblemSpec(Rectangle.square(-6, 6), harmonic_potential(), NonlinearTerm(0.0))
    space = LagrangeSpace(uniform_mesh(spec.domain, 8), 1)
    gs = scf_solve_conforming(space, spec, NonlinearTerm(20.0))
    assert gs.beta == 20.0
    assert abs(gs.identity_defect()) <= 1e-8


def test_evaluate_and_interpolate_p2_quadratic():
    ops = assemble_conforming(LagrangeSpace(uniform_mesh(UNIT, 3), 2), LAPLACE)
    f = lambda x, y: x * (1 - x) + y * (1 - y)  # noqa: E731
    x = ops.interpolate(f)
    # the centre cell of the 3 x 3 mesh touches no boundary node
    pts = (1 + np.random.default_rng(2).random((30, 2))) / 3
    assert np.allclose(ops.evaluate(x, pts), f(pts[:, 0], pts[:, 1]), atol=1e-13)


LADDER = (16, 32, 64, 128)


@pytest.fixture(scope="module")
def ex1():
    return ladder("example1", ("wg_k1", "p1", "p2"), LADDER)


def test_example1_p2_matches_converged_wg(ex1):
    assert values(ex1, "p2")[-1] == pytest.approx(1.085733, abs=1e-4)


def test_conforming_identity(ex1):
    for method in ("p1", "p2"):
        for N in LADDER:
            gs = state(ex1, method, N)
            assert abs(gs.identity_defect()) <= 1e-8


def test_conforming_energy_decreases(ex1):
    for method in ("p1", "p2"):
        E = values(ex1, method, "energy")
        assert all(b <= a + 1e-10 for a, b in zip(E, E[1:]))


def test_conforming_orders(ex1):
    assert 1.7 <= ex1.row("example1", "p1", 128).order_lambda <= 2.3
    assert 3.5 <= ex1.row("example1", "p2", 64).order_lambda <= 4.5
