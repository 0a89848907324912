"""Discrete Laplacians, harmonic extension, boundary operators and transfers.

Boundary operators are stored as quadratic-form matrices. The lumped
boundary mass ``M_L`` plays the role of the boundary inner product, so an
operator with form matrix ``Q`` acts on coefficient vectors as
``M_L^{-1} Q``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .assembly import P1Matrices
from .backend import PoissonBackend
from .spaces import MorleySpace

LinearMap = LinearOperator

DENSE_BUDGET = 4096


class BudgetError(ValueError):
    """Raised when a dense boundary build would exceed the dof budget."""


class DiscreteLaplacian:
    """Delta_{h,1}: V_h0 -> V_h and Delta_{h,2}: V_h0 -> V_h0."""

    def __init__(self, p1: P1Matrices, variant: str = "direct", tol: float = 1e-12):
        self.p1 = p1
        self._mass_full = PoissonBackend(p1.M_N, variant, tol)
        self._mass_interior = PoissonBackend(p1.M_0, variant, tol)

    def apply(self, k: int, w: np.ndarray) -> np.ndarray:
        if k == 1:
            return -self._mass_full.solve(self.p1.A_mix @ w)
        if k == 2:
            return -self._mass_interior.solve(self.p1.A_D @ w)
        raise ValueError("k must be 1 or 2")

    def norm(self, k: int, w: np.ndarray) -> float:
        """L2 norm of Delta_{h,k} w."""
        v = self.apply(k, w)
        M = self.p1.M_N if k == 1 else self.p1.M_0
        return float(np.sqrt(v @ (M @ v)))


def laplacian_apply(p1: P1Matrices, k: int, w: np.ndarray) -> np.ndarray:
    return DiscreteLaplacian(p1).apply(k, w)


class HarmonicExtender:
    """Discrete harmonic extension E_h: B_h -> V_h and its adjoint."""

    def __init__(self, p1: P1Matrices, backend: PoissonBackend | None = None):
        self.p1 = p1
        self.A_II = backend if backend is not None else PoissonBackend(p1.A_II)
        self.n_boundary = p1.boundary.ndof

    def extend(self, lam: np.ndarray) -> np.ndarray:
        p1 = self.p1
        u = np.zeros((p1.mesh.n_vertices,) + lam.shape[1:])
        u[p1.boundary.vertices] = lam
        u[p1.interior] = -self.A_II.solve(p1.A_IB @ lam)
        return u

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """E_h^T y for a V_h dual vector ``y``."""
        p1 = self.p1
        z = self.A_II.solve(y[p1.interior])
        return y[p1.boundary.vertices] - p1.A_IB.T @ z

    __call__ = extend


def harmonic_extend(p1: P1Matrices, lam: np.ndarray) -> np.ndarray:
    return HarmonicExtender(p1).extend(lam)


def s_apply(extender: HarmonicExtender, lam: np.ndarray) -> np.ndarray:
    """Form of S_h applied to ``lam``: E^T M_N E lam (dual coefficients)."""
    return extender.adjoint(extender.p1.M_N @ extender.extend(lam))


def s_operator(extender: HarmonicExtender) -> LinearOperator:
    n = extender.n_boundary
    return LinearOperator((n, n), matvec=lambda x: s_apply(extender, x), dtype=float)


@dataclass
class BoundaryOperatorSet:
    """Dense form matrices of the boundary operators.

    Attributes
    ----------
    S : L2(Omega) Gram matrix of the harmonic extensions.
    schur : extension energy (Schur complement of A_N on the boundary).
    F : ``schur + S``.
    D : segment-wise extension energies on ring dofs, (n_ring, n_ring).
    ring, corner : boundary dof index sets.
    weights : lumped boundary mass.
    h : global mesh size.
    """

    S: np.ndarray
    schur: np.ndarray
    F: np.ndarray
    D: np.ndarray
    ring: np.ndarray
    corner: np.ndarray
    weights: np.ndarray
    h: float

    @property
    def ndof(self) -> int:
        return len(self.weights)


def build_boundary_operators(extender: HarmonicExtender, chunk: int = 128,
                             budget: int = DENSE_BUDGET) -> BoundaryOperatorSet:
    """Build S, schur, F and D with 2 * N_S Poisson solves, in column chunks."""
    p1 = extender.p1
    bsp = p1.boundary
    n = bsp.ndof
    if n > budget:
        raise BudgetError(f"{n} boundary dofs exceed the dense budget {budget}")
    S = np.empty((n, n))
    schur = np.empty((n, n))
    A_BB = p1.A_BB.toarray()
    for start in range(0, n, chunk):
        cols = np.arange(start, min(start + chunk, n))
        lam = np.zeros((n, len(cols)))
        lam[cols, np.arange(len(cols))] = 1.0
        E = extender.extend(lam)
        S[:, cols] = extender.adjoint(p1.M_N @ E)
        schur[:, cols] = A_BB[:, cols] + p1.A_IB.T @ E[p1.interior]
    S = 0.5 * (S + S.T)
    schur = 0.5 * (schur + schur.T)
    ring = bsp.ring
    seg = bsp.segment_of_dof[ring]
    D = np.where(seg[:, None] == seg[None, :], schur[np.ix_(ring, ring)], 0.0)
    return BoundaryOperatorSet(S, schur, schur + S, D, ring, bsp.corner,
                               bsp.weights.copy(), p1.mesh.h)


# ----------------------------------------------------------------------
# transfers between P1 and Morley spaces
def transfer_Ih(space: MorleySpace) -> sp.csr_matrix:
    """I_h as a sparse (n_interior x ndof) matrix.

    Morley vertex values are single-valued, so the patch average of the
    per-triangle values is the vertex dof itself.
    """
    mesh = space.mesh
    interior = mesh.interior_vertices
    cols = space.vertex_dof[interior]
    keep = cols >= 0
    return sp.csr_matrix((np.ones(keep.sum()), (np.flatnonzero(keep), cols[keep])),
                         shape=(len(interior), space.ndof))


def transfer_Pi(space: MorleySpace, k: int) -> sp.csr_matrix:
    """Pi_{h,k} as a sparse (ndof x n_interior) matrix.

    Interior edge dofs average the two one-sided normal derivatives of the
    P1 function. Boundary-edge dofs vanish for k=1 and take the one-sided
    normal derivative for k=2.
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    mesh = space.mesh
    n_int = len(mesh.interior_vertices)
    col_of_vertex = -np.ones(mesh.n_vertices, dtype=np.int64)
    col_of_vertex[mesh.interior_vertices] = np.arange(n_int)

    vrows = space.vertex_dof[mesh.interior_vertices]
    vkeep = vrows >= 0
    rows = [vrows[vkeep]]
    cols = [np.flatnonzero(vkeep)]
    vals = [np.ones(vkeep.sum())]

    edges = space.edge_sites
    if k == 1:
        edges = edges[~mesh.boundary_edge_mask[edges]]
    n_e = mesh.edge_normal[edges]
    count = np.where(mesh.edge_tris[edges, 1] >= 0, 2.0, 1.0)
    for side in (0, 1):
        tri = mesh.edge_tris[edges, side]
        ok = tri >= 0
        t = tri[ok]
        dn = np.einsum("tid,td->ti", mesh.gradients[t], n_e[ok]) / count[ok, None]
        c = col_of_vertex[mesh.triangles[t]]
        r = np.repeat(space.edge_dof[edges[ok]][:, None], 3, axis=1)
        m = c >= 0
        rows.append(r[m])
        cols.append(c[m])
        vals.append(dn[m])
    P = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(space.ndof, n_int)).tocsr()
    P.sum_duplicates()
    return P


def morley_from_p1(space: MorleySpace, p: np.ndarray) -> np.ndarray:
    """Morley dofs of a global P1 function given on all vertices, per triangle.

    Returns the (M, 6) local functionals of p restricted to each triangle.
    """
    mesh = space.mesh
    g = np.einsum("ti,tid->td", p[mesh.triangles], mesh.gradients)
    n = mesh.edge_normal[mesh.tri_edges]
    return np.hstack([p[mesh.triangles], np.einsum("td,ted->te", g, n)])
