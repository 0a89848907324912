import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse.linalg as sla
import sympy as sy

from morley_fasp.assembly import (assemble_morley, assemble_p1, dump_matrix, jump_seminorm,
                                  load_vector)
from morley_fasp.mesh import DOMAINS, Mesh, build_domain
from morley_fasp.spaces import build_morley, build_p1, morley_interpolant

from props import jump_ratios

CONVEX = ("unit-square", "four-square", "hexagon")


@pytest.mark.parametrize("name", DOMAINS)
def test_p1_matrices(name, mesh_cache):
    mesh = mesh_cache(name, 3)
    p1 = assemble_p1(mesh)
    assert np.max(np.abs(p1.A_N @ np.ones(mesh.n_vertices))) < 1e-12
    assert p1.M_N.sum() == pytest.approx(mesh.area.sum(), rel=1e-13)
    assert np.allclose(np.asarray(p1.M_N.sum(axis=1)).ravel(),
                       np.bincount(mesh.triangles.ravel(), np.repeat(mesh.area / 3, 3)))
    i = mesh.interior_vertices
    assert abs(p1.A_N[i][:, i] - p1.A_D).max() == 0
    for M in (p1.A_N, p1.M_N, p1.A_D, p1.M_0):
        assert abs(M - M.T).max() <= 1e-12 * abs(M).max()
    la.cholesky(p1.A_D.toarray())
    assert np.allclose(p1.M_L.diagonal(), p1.boundary.weights)


def test_laplace_eigenvalue_unit_square(mesh_cache):
    p1 = assemble_p1(mesh_cache("unit-square", 5))
    lam = sla.eigsh(p1.A_D.tocsc(), k=1, M=p1.M_0.tocsc(), sigma=0, which="LM")[0][0]
    assert abs(lam - 2 * np.pi ** 2) / (2 * np.pi ** 2) < 0.02


def test_morley_kernel_and_quadratic_energy(mesh_cache):
    mesh = mesh_cache("l-shape", 2)
    free = build_morley(mesh, "free")
    A = assemble_morley(free)
    g = np.array([1.5, -0.5])
    lin = morley_interpolant(free, lambda x: 2 + x @ g, lambda x: np.tile(g, (len(x), 1)))
    assert np.max(np.abs(A @ lin)) < 1e-9 * abs(A).max()
    q = morley_interpolant(free, lambda x: x[:, 0] ** 2,
                           lambda x: np.stack([2 * x[:, 0], 0 * x[:, 0]], axis=1))
    assert q @ (A @ q) == pytest.approx(4 * mesh.area.sum(), rel=1e-11)


@pytest.mark.parametrize("kind", ["first", "second"])
@pytest.mark.parametrize("name", DOMAINS)
def test_morley_spd(name, kind, mesh_cache):
    A = assemble_morley(build_morley(mesh_cache(name, 2), kind)).toarray()
    assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    la.cholesky(A)


def _global_quadratic_functionals(P, normals):
    """Morley functionals of the six global monomials on one triangle."""
    def grad(x, y):
        return np.array([[0, 0], [1, 0], [0, 1], [2 * x, 0], [y, x], [0, 2 * y]], float)
    rows = [[1, x, y, x * x, x * y, y * y] for x, y in P]
    for i in range(3):
        a, b = P[(i + 1) % 3], P[(i + 2) % 3]
        m = 0.5 * (a + b)
        rows.append(grad(*m) @ normals[i])
    return np.array(rows)


def test_one_dof_square_against_bruteforce():
    mesh = build_domain("unit-square", 0)
    space = build_morley(mesh, "first")
    A = assemble_morley(space).toarray()
    assert A.shape == (1, 1)
    e = space.edge_sites[0]
    total = 0.0
    for t in range(2):
        P = mesh.vertices[mesh.triangles[t]]
        N = _global_quadratic_functionals(P, mesh.edge_normal[mesh.tri_edges[t]])
        rhs = (mesh.tri_edges[t] == e).astype(float)
        c = np.linalg.solve(N, np.r_[0, 0, 0, rhs])
        H = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
        total += mesh.area[t] * np.sum(H * H)
    assert A[0, 0] == pytest.approx(total, rel=1e-12)


def test_load_vector(mesh_cache):
    mesh = mesh_cache("hexagon", 2)
    assert np.all(load_vector(mesh, lambda x: np.zeros(len(x))) == 0)
    assert load_vector(mesh, lambda x: np.ones(len(x))).sum() == pytest.approx(mesh.area.sum(), rel=1e-13)
    sp2 = build_morley(mesh, "second")
    assert load_vector(mesh, lambda x: np.ones(len(x)), sp2).shape == (sp2.ndof,)
    inner = build_p1(mesh, "interior")
    assert load_vector(mesh, lambda x: np.ones(len(x)), inner).shape == (inner.ndof,)


def test_load_vector_symbolic_single_triangle():
    P = np.array([[0.2, 0.1], [1.3, 0.4], [0.5, 1.1]])
    mesh = Mesh(P, np.array([[0, 1, 2]]))
    got = load_vector(mesh, lambda x: x[:, 0])
    s, t = sy.symbols("s t")
    X = [sy.Rational(str(v)) for v in P[:, 0]]
    Y = [sy.Rational(str(v)) for v in P[:, 1]]
    x = X[0] + (X[1] - X[0]) * s + (X[2] - X[0]) * t
    y = Y[0] + (Y[1] - Y[0]) * s + (Y[2] - Y[0]) * t
    jac = abs((X[1] - X[0]) * (Y[2] - Y[0]) - (X[2] - X[0]) * (Y[1] - Y[0]))
    lams = [1 - s - t, s, t]
    for i in range(3):
        exact = sy.integrate(sy.integrate(x * lams[i] * jac, (t, 0, 1 - s)), (s, 0, 1))
        assert got[i] == pytest.approx(float(exact), rel=1e-12, abs=1e-14)


def test_jump_seminorm_basics(mesh_cache, rng):
    mesh = mesh_cache("trident", 1)
    n = len(mesh.interior_vertices)
    assert jump_seminorm(mesh, np.zeros(n), 1) == 0.0
    for _ in range(10):
        p = rng.standard_normal(n)
        assert jump_seminorm(mesh, p, 1) >= jump_seminorm(mesh, p, 2)


def test_jump_seminorm_per_edge_oracle(mesh_cache, rng):
    mesh = mesh_cache("l-shape", 1)
    p = rng.standard_normal(len(mesh.interior_vertices))
    u = np.zeros(mesh.n_vertices)
    u[mesh.interior_vertices] = p
    grads = []
    for tri in mesh.triangles:
        M = np.column_stack([np.ones(3), mesh.vertices[tri]])
        grads.append(np.linalg.solve(M, u[tri])[1:])
    total1 = total2 = 0.0
    for e, (a, b) in enumerate(mesh.edges):
        tris = [t for t in range(mesh.n_triangles) if a in mesh.triangles[t] and b in mesh.triangles[t]]
        t_vec = mesh.vertices[b] - mesh.vertices[a]
        n = np.array([-t_vec[1], t_vec[0]]) / np.linalg.norm(t_vec)
        if len(tris) == 2:
            j = (grads[tris[0]] - grads[tris[1]]) @ n
            total1 += j * j
            total2 += j * j
        else:
            total1 += (grads[tris[0]] @ n) ** 2
    assert jump_seminorm(mesh, p, 1) == pytest.approx(total1, rel=1e-12)
    assert jump_seminorm(mesh, p, 2) == pytest.approx(total2, rel=1e-12)


def test_dump_matrix(tmp_path, mesh_cache):
    p1 = assemble_p1(mesh_cache("unit-square", 1))
    path = tmp_path / "a.txt"
    dump_matrix(p1.A_D, path)
    rows = np.loadtxt(path, ndmin=2)
    back = np.zeros(p1.A_D.shape)
    back[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    assert np.array_equal(back, p1.A_D.toarray())


def _no_growth(values, factor=1.5):
    """Later levels never exceed the first by more than ``factor``."""
    return max(values[1:]) <= factor * values[0]


@pytest.mark.parametrize("name", DOMAINS)
@pytest.mark.parametrize("k", [1, 2])
def test_jump_equivalence_level_independent(name, k, mesh_cache):
    ratios = [jump_ratios(mesh_cache(name, lv), k, samples=60, seed=lv) for lv in (2, 3, 4)]
    # left inequality: one constant bounds ||Delta p||^2 / jump over all levels
    assert _no_growth([r.max() for r in ratios])
    assert max(r.max() for r in ratios) < 10
    if k == 1 or name in CONVEX:
        # right inequality: the ratio stays away from zero
        assert _no_growth([1 / r.min() for r in ratios])
        assert min(r.min() for r in ratios) > 0.5
