"""Sparse assembly of P1 and Morley matrices and load vectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .spaces import (BoundarySpace, MorleySpace, build_boundary, build_morley,
                     local_basis)

_SQ15 = np.sqrt(15.0)
_A, _B = (6 - _SQ15) / 21, (6 + _SQ15) / 21
# 7-point rule on the triangle (barycentric points, weights sum to one)
QUAD7_POINTS = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
    [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B],
])
QUAD7_WEIGHTS = np.array([0.225] + [(155 - _SQ15) / 1200] * 3 + [(155 + _SQ15) / 1200] * 3)


@dataclass
class P1Matrices:
    """P1 stiffness and mass matrices with the interior/boundary split.

    ``A_N`` and ``M_N`` act on all vertices (V_h); ``A_D`` and ``M_0`` on
    interior vertices (V_h0); ``A_mix`` has V_h rows and V_h0 columns.
    ``M_L`` is the lumped boundary mass on boundary dofs.
    """

    mesh: Mesh
    boundary: BoundarySpace
    A_N: sp.csr_matrix
    M_N: sp.csr_matrix
    interior: np.ndarray
    A_D: sp.csr_matrix = field(init=False)
    M_0: sp.csr_matrix = field(init=False)
    A_mix: sp.csr_matrix = field(init=False)
    M_L: sp.dia_matrix = field(init=False)

    def __post_init__(self):
        i, b = self.interior, self.boundary.vertices
        self.A_D = self.A_N[i][:, i].tocsr()
        self.M_0 = self.M_N[i][:, i].tocsr()
        self.A_mix = self.A_N[:, i].tocsr()
        self.M_L = sp.diags(self.boundary.weights)
        self.A_II = self.A_D
        self.A_IB = self.A_N[i][:, b].tocsr()
        self.A_BB = self.A_N[b][:, b].tocsr()

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    def extend_interior(self, w: np.ndarray) -> np.ndarray:
        """Zero extension of V_h0 coefficients to V_h."""
        out = np.zeros((self.mesh.n_vertices,) + w.shape[1:])
        out[self.interior] = w
        return out


def _scatter(mesh: Mesh, local: np.ndarray, dofs: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum (M, k, k) element matrices into an n x n sparse matrix."""
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    vals = local.reshape(len(dofs), -1).ravel()
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def p1_stiffness(mesh: Mesh) -> sp.csr_matrix:
    g = mesh.gradients
    local = mesh.area[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    return _scatter(mesh, local, mesh.triangles, mesh.n_vertices)


def p1_mass(mesh: Mesh) -> sp.csr_matrix:
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.area[:, None, None] * base
    return _scatter(mesh, local, mesh.triangles, mesh.n_vertices)


def assemble_p1(mesh: Mesh) -> P1Matrices:
    return P1Matrices(mesh, build_boundary(mesh), p1_stiffness(mesh), p1_mass(mesh),
                      mesh.interior_vertices)


def assemble_morley(space: MorleySpace, basis=None) -> sp.csr_matrix:
    """Broken Hessian stiffness (sum over T of Hess u : Hess v)."""
    mesh = space.mesh
    if basis is None:
        basis = local_basis(mesh)
    H = basis.hessians()  # (M, 3, 6)
    W = np.array([1.0, 2.0, 1.0])
    local = mesh.area[:, None, None] * np.einsum("tai,a,taj->tij", H, W, H)
    return _scatter(mesh, local, space.local_dofs, space.ndof)


def morley_local_mass(mesh: Mesh, basis=None) -> np.ndarray:
    """Element mass matrices of the local Morley basis, (M, 6, 6)."""
    if basis is None:
        basis = local_basis(mesh)
    phi = _morley_at_quadrature(mesh, basis)  # (M, Q, 6)
    return mesh.area[:, None, None] * np.einsum("q,tqi,tqj->tij", QUAD7_WEIGHTS, phi, phi)


def _quadrature_points(mesh: Mesh) -> np.ndarray:
    x = mesh.vertices[mesh.triangles]  # (M, 3, 2)
    return np.einsum("qi,tid->tqd", QUAD7_POINTS, x)


def _morley_at_quadrature(mesh: Mesh, basis) -> np.ndarray:
    pts = _quadrature_points(mesh)
    M, Q = pts.shape[:2]
    tri = np.repeat(np.arange(M), Q)
    return basis.evaluate(tri, pts.reshape(-1, 2)).reshape(M, Q, 6)


def load_vector(mesh: Mesh, f, space=None, basis=None) -> np.ndarray:
    """(f, phi_i) with the 7-point rule.

    ``space`` is None for V_h (all vertices), a P1 space, or a
    :class:`MorleySpace`. ``f`` maps an (n, 2) point array to n values.
    """
    pts = _quadrature_points(mesh)
    fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    wq = mesh.area[:, None] * QUAD7_WEIGHTS[None, :] * fv  # (M, Q)
    if isinstance(space, MorleySpace):
        if basis is None:
            basis = local_basis(mesh)
        phi = _morley_at_quadrature(mesh, basis)
        local = np.einsum("tq,tqi->ti", wq, phi)
        dofs = space.local_dofs
        n = space.ndof
    else:
        local = np.einsum("tq,qi->ti", wq, QUAD7_POINTS)
        dofs = mesh.triangles if space is None else space.dof_of_vertex[mesh.triangles]
        n = mesh.n_vertices if space is None else space.ndof
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=local[keep], minlength=n)


def p1_gradient_per_triangle(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Constant gradient of a V_h function on each triangle, (M, 2)."""
    return np.einsum("ti,tid->td", u[mesh.triangles], mesh.gradients)


def normal_jumps(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Jump of the normal derivative of a V_h function on each edge.

    On boundary edges this is the one-sided normal derivative.
    """
    g = p1_gradient_per_triangle(mesh, u)
    n = mesh.edge_normal
    left, right = mesh.edge_tris[:, 0], mesh.edge_tris[:, 1]
    sl, sr = mesh.edge_signs[:, 0], mesh.edge_signs[:, 1]
    jump = np.sum(g[left] * n, axis=1) * sl
    inner = right >= 0
    jump[inner] += np.sum(g[right[inner]] * n[inner], axis=1) * sr[inner]
    jump[~inner] = np.sum(g[left[~inner]] * n[~inner], axis=1)
    return jump


def jump_seminorm(mesh: Mesh, p: np.ndarray, kind: int) -> float:
    """sum_e h_e^{-1} int_e [[dp/dn_e]]^2 for interior-vertex coefficients ``p``.

    ``kind=1`` sums over all edges, ``kind=2`` over interior edges only.
    For P1 the jump is constant per edge, so each term is the squared jump.
    """
    if kind not in (1, 2):
        raise ValueError("kind must be 1 or 2")
    u = np.zeros(mesh.n_vertices)
    u[mesh.interior_vertices] = p
    j2 = normal_jumps(mesh, u) ** 2
    if kind == 2:
        j2 = j2[~mesh.boundary_edge_mask]
    return float(j2.sum())


def dump_matrix(A, path) -> None:
    """Write ``A`` as 0-based ``i j value`` lines."""
    C = sp.coo_matrix(A)
    with Path(path).open("w") as fh:
        for i, j, v in zip(C.row.tolist(), C.col.tolist(), C.data.tolist()):
            fh.write(f"{i} {j} {v!r}\n")


def assemble_biharmonic(mesh: Mesh, kind: str):
    """Morley space of the given kind and its stiffness matrix."""
    space = build_morley(mesh, kind)
    return space, assemble_morley(space)
