"""Degree-of-freedom maps for the P1, boundary trace and Morley spaces."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh

# monomial order used for the local Morley basis
MONOMIALS = ("1", "x", "y", "xx", "xy", "yy")


@dataclass(frozen=True)
class P1Space:
    """Continuous piecewise linears on all vertices or interior vertices only."""

    mesh: Mesh
    variant: str  # "full" (V_h) or "interior" (V_h0)
    vertices: np.ndarray  # dof -> vertex
    dof_of_vertex: np.ndarray  # vertex -> dof or -1

    @property
    def ndof(self) -> int:
        return len(self.vertices)


def build_p1(mesh: Mesh, variant: str = "full") -> P1Space:
    if variant == "full":
        verts = np.arange(mesh.n_vertices)
    elif variant == "interior":
        verts = mesh.interior_vertices
    else:
        raise ValueError(f"unknown P1 variant {variant!r}")
    dof = -np.ones(mesh.n_vertices, dtype=np.int64)
    dof[verts] = np.arange(len(verts))
    return P1Space(mesh, variant, verts, dof)


@dataclass(frozen=True)
class BoundarySpace:
    """Traces of V_h on the boundary, split into ring and corner dofs.

    Dofs follow ascending vertex index. ``weights`` holds the lumped
    boundary mass: half the length of the two boundary edges at a vertex.
    """

    mesh: Mesh
    vertices: np.ndarray
    dof_of_vertex: np.ndarray
    ring: np.ndarray
    corner: np.ndarray
    weights: np.ndarray
    segment_of_dof: np.ndarray  # segment index for ring dofs, -1 at corners

    @property
    def ndof(self) -> int:
        return len(self.vertices)


def build_boundary(mesh: Mesh) -> BoundarySpace:
    verts = mesh.boundary_vertices
    dof = -np.ones(mesh.n_vertices, dtype=np.int64)
    dof[verts] = np.arange(len(verts))

    weights = np.zeros(len(verts))
    bedges = np.flatnonzero(mesh.boundary_edge_mask)
    half = 0.5 * mesh.edge_length[bedges]
    np.add.at(weights, dof[mesh.edges[bedges, 0]], half)
    np.add.at(weights, dof[mesh.edges[bedges, 1]], half)

    is_corner = np.zeros(len(verts), dtype=bool)
    is_corner[dof[mesh.boundary.corners]] = True
    segment = -np.ones(len(verts), dtype=np.int64)
    for i, seg in enumerate(mesh.boundary.segments):
        segment[dof[seg[1:-1]]] = i
    return BoundarySpace(mesh, verts, dof, np.flatnonzero(~is_corner),
                         np.flatnonzero(is_corner), weights, segment)


@dataclass(frozen=True)
class MorleySpace:
    """Morley element space with a given boundary condition.

    ``kind`` is ``"first"`` (clamped), ``"second"`` (simply supported) or
    ``"free"``. Vertex dofs are numbered first, then edge dofs, each in
    ascending mesh index order. Edge dofs are averages of the derivative
    along the global edge normal.
    """

    mesh: Mesh
    kind: str
    vertex_sites: np.ndarray
    edge_sites: np.ndarray
    vertex_dof: np.ndarray  # vertex -> dof or -1
    edge_dof: np.ndarray  # edge -> dof or -1

    @property
    def ndof(self) -> int:
        return len(self.vertex_sites) + len(self.edge_sites)

    @property
    def n_vertex_dofs(self) -> int:
        return len(self.vertex_sites)

    @cached_property
    def degree(self) -> np.ndarray:
        """Derivative order of each dof (0 at vertices, 1 on edges)."""
        return np.r_[np.zeros(len(self.vertex_sites), int), np.ones(len(self.edge_sites), int)]

    @cached_property
    def local_dofs(self) -> np.ndarray:
        """(M, 6) global dof of each local functional; -1 if constrained.

        Local order: three vertex values, then the three edge normal
        derivatives with local edge i opposite local vertex i.
        """
        t = self.mesh.triangles
        return np.hstack([self.vertex_dof[t], self.edge_dof[self.mesh.tri_edges]])


def build_morley(mesh: Mesh, kind: str) -> MorleySpace:
    if kind == "free":
        verts = np.arange(mesh.n_vertices)
        edges = np.arange(mesh.n_edges)
    elif kind == "second":
        verts = mesh.interior_vertices
        edges = np.arange(mesh.n_edges)
    elif kind == "first":
        verts = mesh.interior_vertices
        edges = np.flatnonzero(~mesh.boundary_edge_mask)
    else:
        raise ValueError(f"unknown Morley kind {kind!r}")
    vdof = -np.ones(mesh.n_vertices, dtype=np.int64)
    vdof[verts] = np.arange(len(verts))
    edof = -np.ones(mesh.n_edges, dtype=np.int64)
    edof[edges] = len(verts) + np.arange(len(edges))
    return MorleySpace(mesh, kind, verts, edges, vdof, edof)


@dataclass(frozen=True)
class LocalMorleyBasis:
    """Dual Morley basis on every triangle in scaled monomial coordinates.

    Basis function j on triangle T is
    ``sum_k coeffs[T, k, j] * m_k((x - center[T]) / scale[T])`` with the
    monomials of :data:`MONOMIALS`.
    """

    center: np.ndarray  # (M, 2)
    scale: np.ndarray  # (M,)
    coeffs: np.ndarray  # (M, 6, 6)

    def hessians(self) -> np.ndarray:
        """Constant Hessians (xx, xy, yy) of each basis function, (M, 3, 6)."""
        c = self.coeffs
        s2 = self.scale[:, None] ** 2
        return np.stack([2 * c[:, 3] / s2, c[:, 4] / s2, 2 * c[:, 5] / s2], axis=1)

    def evaluate(self, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Values of the six basis functions of ``tri[i]`` at ``points[i]``.

        ``tri`` has shape (P,), ``points`` (P, 2); returns (P, 6).
        """
        xi = (points - self.center[tri]) / self.scale[tri][:, None]
        mono = _monomials(xi[:, 0], xi[:, 1])
        return np.einsum("pk,pkj->pj", mono, self.coeffs[tri])


def _monomials(x, y):
    return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)


def _monomial_gradients(x, y):
    z, o = np.zeros_like(x), np.ones_like(x)
    gx = np.stack([z, o, z, 2 * x, y, z], axis=-1)
    gy = np.stack([z, z, o, z, x, 2 * y], axis=-1)
    return gx, gy


def nodal_matrix(mesh: Mesh, center=None, scale=None) -> np.ndarray:
    """Morley functionals applied to the scaled monomials, (M, 6, 6)."""
    p, t = mesh.vertices, mesh.triangles
    if center is None:
        center = p[t].mean(axis=1)
    if scale is None:
        scale = mesh.diameter
    xv = (p[t] - center[:, None, :]) / scale[:, None, None]
    rows_v = _monomials(xv[..., 0], xv[..., 1])  # (M, 3, 6)

    # the normal derivative of a quadratic is linear along the edge, so its
    # edge average is its value at the midpoint
    mid = 0.5 * (xv[:, [1, 2, 0]] + xv[:, [2, 0, 1]])
    gx, gy = _monomial_gradients(mid[..., 0], mid[..., 1])
    n = mesh.edge_normal[mesh.tri_edges]  # (M, 3, 2)
    rows_e = (gx * n[..., :1] + gy * n[..., 1:]) / scale[:, None, None]
    return np.concatenate([rows_v, rows_e], axis=1)


def local_basis(mesh: Mesh, tri=None) -> LocalMorleyBasis:
    """Solve the 6x6 duality system on each physical triangle.

    Parameters
    ----------
    tri : int or array of int, optional
        Restrict to these triangles; all triangles by default.
    """
    p, t = mesh.vertices, mesh.triangles
    center = p[t].mean(axis=1)
    scale = mesh.diameter.copy()
    N = nodal_matrix(mesh, center, scale)
    if tri is not None:
        idx = np.atleast_1d(tri)
        N, center, scale = N[idx], center[idx], scale[idx]
    det = np.linalg.det(N)
    if np.any(np.abs(det) < 1e-12):
        raise np.linalg.LinAlgError("singular Morley nodal matrix (degenerate triangle)")
    coeffs = np.linalg.inv(N)
    return LocalMorleyBasis(center, scale, coeffs)


def morley_interpolant(space: MorleySpace, func, grad) -> np.ndarray:
    """Morley dofs of a smooth function given its value and gradient callables.

    Edge dofs use the exact average of the normal derivative when ``grad``
    is at most linear along edges (quadratic ``func``); Simpson's rule is
    used, which is exact up to cubic integrands.
    """
    mesh = space.mesh
    p = mesh.vertices
    w = np.zeros(space.ndof)
    w[:space.n_vertex_dofs] = func(p[space.vertex_sites])
    e = mesh.edges[space.edge_sites]
    a, b = p[e[:, 0]], p[e[:, 1]]
    n = mesh.edge_normal[space.edge_sites]
    dn = [np.sum(grad(x) * n, axis=1) for x in (a, 0.5 * (a + b), b)]
    w[space.n_vertex_dofs:] = (dn[0] + 4 * dn[1] + dn[2]) / 6.0
    return w
