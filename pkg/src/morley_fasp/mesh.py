"""Triangular meshes of polygonal domains.

A :class:`Mesh` is immutable after construction. It stores the vertex
coordinates, counterclockwise triangles and the derived edge structure
(global edge normals, left/right adjacency), together with the boundary
loop, the polygon corners and the straight boundary segments between them.

Built-in domains::

    unit-square   [0,1]^2, two triangles
    four-square   [0,1]^2, 2x2 cells with alternating diagonals
    hexagon       regular hexagon, circumradius 1, six triangles
    l-shape       [-1,1]^2 minus [0,1]x[-1,0]
    trident       [0,3]x[1,2] union [1,2]x[0,1]

Every domain is refined by uniform quadrisection.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

DOMAINS = ("unit-square", "four-square", "hexagon", "l-shape", "trident")

_ANGLE_TOL = 1e-10


class MeshError(ValueError):
    """Raised for malformed mesh input."""


@dataclass(frozen=True)
class BoundaryTopology:
    """Boundary loop, polygon corners and straight segments.

    Attributes
    ----------
    loop : ndarray
        Boundary vertices in counterclockwise order, starting at the first
        corner.
    corners : ndarray
        Corner vertex indices in loop order.
    reentrant : ndarray of bool
        ``reentrant[i]`` is True when the interior angle at ``corners[i]``
        exceeds pi.
    segments : list of ndarray
        ``segments[i]`` runs along the loop from ``corners[i]`` to
        ``corners[i+1]`` (both endpoints included).
    """

    loop: np.ndarray
    corners: np.ndarray
    reentrant: np.ndarray
    segments: tuple

    @property
    def m0(self) -> int:
        return int(np.count_nonzero(self.reentrant))

    @property
    def n_segments(self) -> int:
        return len(self.segments)


class Mesh:
    """Conforming triangulation with edge and boundary structure.

    Parameters
    ----------
    vertices : (N, 2) array_like
    triangles : (M, 3) array_like of int
        Vertex indices; reoriented to counterclockwise if needed.
    corners : array_like of int, optional
        Polygon corners. Detected geometrically when omitted.
    """

    def __init__(self, vertices, triangles, corners=None):
        p = np.array(vertices, dtype=float)
        t = np.array(triangles, dtype=np.int64)
        if p.ndim != 2 or p.shape[1] != 2:
            raise MeshError("vertices must have shape (N, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (M, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(p)):
            raise MeshError("triangle references a missing vertex")
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(np.abs(area2) <= 1e-14 * np.max(np.abs(area2), initial=1.0)):
            raise MeshError("degenerate triangle")
        flip = area2 < 0
        t[flip] = t[flip][:, [0, 2, 1]]
        p.setflags(write=False)
        t.setflags(write=False)
        self.vertices = p
        self.triangles = t
        self._build_edges()
        self.boundary = self._build_boundary(corners)

    # ------------------------------------------------------------------
    # construction helpers
    def _build_edges(self):
        t = self.triangles
        # local edge i is opposite local vertex i
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(-1, 3)

        n_edges = len(edges)
        edge_tris = -np.ones((n_edges, 2), dtype=np.int64)
        owner = np.repeat(np.arange(len(t)), 3)
        order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=n_edges)
        if counts.max() > 2:
            raise MeshError("non-manifold edge shared by more than two triangles")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_tris[:, 0] = owner[order[starts]]
        two = counts == 2
        edge_tris[two, 1] = owner[order[starts[two] + 1]]

        vec = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        length = np.hypot(vec[:, 0], vec[:, 1])
        normal = np.stack([-vec[:, 1], vec[:, 0]], axis=1) / length[:, None]

        for name, arr in [("edges", edges), ("tri_edges", tri_edges),
                          ("edge_tris", edge_tris), ("edge_length", length),
                          ("edge_normal", normal)]:
            arr.setflags(write=False)
            setattr(self, name, arr)

    def _build_boundary(self, corners) -> BoundaryTopology:
        bedges = self.edges[self.edge_tris[:, 1] < 0]
        if len(bedges) == 0:
            raise MeshError("mesh has no boundary")
        # orient each boundary edge counterclockwise w.r.t. its triangle
        succ = {}
        for e in np.flatnonzero(self.edge_tris[:, 1] < 0):
            tri = self.triangles[self.edge_tris[e, 0]]
            a, b = self.edges[e]
            ia = int(np.flatnonzero(tri == a)[0])
            if tri[(ia + 1) % 3] == b:
                succ[int(a)] = int(b)
            else:
                succ[int(b)] = int(a)
        if len(succ) != len(bedges):
            raise MeshError("boundary is not a simple closed curve")
        start = min(succ)
        loop = [start]
        while True:
            nxt = succ[loop[-1]]
            if nxt == start:
                break
            loop.append(nxt)
        if len(loop) != len(succ):
            raise MeshError("boundary has more than one component")
        loop = np.array(loop, dtype=np.int64)

        p = self.vertices
        prev = p[np.roll(loop, 1)]
        nxt = p[np.roll(loop, -1)]
        cur = p[loop]
        d_in = cur - prev
        d_out = nxt - cur
        cross = d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]
        scale = (np.linalg.norm(d_in, axis=1) * np.linalg.norm(d_out, axis=1))
        turn = cross / scale
        if corners is None:
            is_corner = np.abs(turn) > _ANGLE_TOL
        else:
            corner_set = set(int(c) for c in corners)
            if not corner_set <= set(loop.tolist()):
                raise MeshError("corner is not a boundary vertex")
            is_corner = np.array([v in corner_set for v in loop.tolist()])
        if not np.any(is_corner):
            raise MeshError("boundary has no corners")
        first = int(np.flatnonzero(is_corner)[0])
        loop = np.roll(loop, -first)
        is_corner = np.roll(is_corner, -first)
        turn = np.roll(turn, -first)
        pos = np.flatnonzero(is_corner)
        corner_v = loop[pos]
        # counterclockwise loop: a clockwise turn marks an interior angle > pi
        reentrant = turn[pos] < -_ANGLE_TOL
        segments = []
        for i, a in enumerate(pos):
            b = pos[i + 1] if i + 1 < len(pos) else len(loop)
            seg = np.concatenate([loop[a:b], [loop[b % len(loop)]]])
            seg.setflags(write=False)
            segments.append(seg)
        for arr in (loop, corner_v, reentrant):
            arr.setflags(write=False)
        return BoundaryTopology(loop, corner_v, reentrant, tuple(segments))

    # ------------------------------------------------------------------
    # sizes and geometry
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def area(self) -> np.ndarray:
        p, t = self.vertices, self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def diameter(self) -> np.ndarray:
        """Per-triangle diameter h_T (longest edge)."""
        return self.edge_length[self.tri_edges].max(axis=1)

    @property
    def h(self) -> float:
        """Global mesh size, max h_T."""
        return float(self.diameter.max())

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        return self.edge_tris[:, 1] < 0

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary.loop] = True
        return mask

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertex_mask)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Boundary vertex indices in ascending order."""
        return np.flatnonzero(self.boundary_vertex_mask)

    @cached_property
    def gradients(self) -> np.ndarray:
        """Gradients of the P1 hat functions, shape (M, 3, 2)."""
        p, t = self.vertices, self.triangles
        x = p[t]
        # gradient of barycentric coordinate i is rot(edge opposite i) / 2|T|
        e = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        g = np.stack([-e[..., 1], e[..., 0]], axis=2)
        return g / (2.0 * self.area[:, None, None])

    @cached_property
    def outer_normals(self) -> np.ndarray:
        """Unit outer normal of each triangle on each local edge, (M, 3, 2)."""
        p, t = self.vertices, self.triangles
        x = p[t]
        e = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        n = np.stack([e[..., 1], -e[..., 0]], axis=2)
        return n / np.linalg.norm(n, axis=2, keepdims=True)

    @cached_property
    def edge_signs(self) -> np.ndarray:
        """n_e . n_e^T for the left and right triangle of every edge, (E, 2).

        Entries are +1 or -1; the right entry is 0 on boundary edges.
        """
        signs = np.zeros((self.n_edges, 2))
        for side in (0, 1):
            tri = self.edge_tris[:, side]
            ok = tri >= 0
            local = np.argmax(self.tri_edges[tri[ok]] == np.flatnonzero(ok)[:, None], axis=1)
            nT = self.outer_normals[tri[ok], local]
            signs[ok, side] = np.sign(np.sum(nT * self.edge_normal[ok], axis=1))
        return signs

    # ------------------------------------------------------------------
    # patches
    @cached_property
    def vertex_patches(self) -> list:
        """Triangles around each vertex, ordered so neighbours share an edge."""
        around = [[] for _ in range(self.n_vertices)]
        for k, tri in enumerate(self.triangles):
            for v in tri:
                around[v].append(k)
        out = []
        for v, tris in enumerate(around):
            out.append(self._order_patch(v, tris))
        return out

    def _order_patch(self, v, tris):
        if len(tris) <= 1:
            return list(tris)
        # neighbours across the edges that contain v
        links = {k: [] for k in tris}
        members = set(tris)
        for k in tris:
            for e in self.tri_edges[k]:
                if v in self.edges[e]:
                    other = self.edge_tris[e, 1] if self.edge_tris[e, 0] == k else self.edge_tris[e, 0]
                    if other >= 0 and other in members:
                        links[k].append(int(other))
        ends = [k for k in tris if len(links[k]) < 2]
        start = ends[0] if ends else tris[0]
        order = [start]
        prev = None
        while True:
            nxt = [k for k in links[order[-1]] if k != prev and k not in order]
            if not nxt:
                break
            prev = order[-1]
            order.append(nxt[0])
        return order

    def edge_patch(self, edge: int) -> list:
        return [int(k) for k in self.edge_tris[edge] if k >= 0]

    # ------------------------------------------------------------------
    def edge_jump_frame(self, edge: int):
        """Normal frame used to evaluate normal-derivative jumps on an edge.

        Returns
        -------
        normal : ndarray (2,)
            The fixed global normal n_e.
        left, right : int
            Adjacent triangles; ``right`` is -1 on a boundary edge.
        sign_left, sign_right : float
            n_e . n_e^L and n_e . n_e^R (``sign_right`` is 0 on the boundary).
        """
        left, right = (int(k) for k in self.edge_tris[edge])
        sl, sr = self.edge_signs[edge]
        return self.edge_normal[edge].copy(), left, right, float(sl), float(sr)

    def refine(self) -> "Mesh":
        """Uniform quadrisection through edge midpoints."""
        n = self.n_vertices
        mid = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        verts = np.vstack([self.vertices, mid])
        t = self.triangles
        m = n + self.tri_edges  # m[:, i] is the midpoint opposite vertex i
        children = np.concatenate([
            np.stack([t[:, 0], m[:, 2], m[:, 1]], axis=1),
            np.stack([t[:, 1], m[:, 0], m[:, 2]], axis=1),
            np.stack([t[:, 2], m[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ])
        # keep children of one parent together for locality
        children = children.reshape(4, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
        return Mesh(verts, children, corners=self.boundary.corners)

    def __repr__(self):
        return (f"Mesh(vertices={self.n_vertices}, triangles={self.n_triangles}, "
                f"edges={self.n_edges}, corners={len(self.boundary.corners)}, "
                f"m0={self.boundary.m0})")


def refine(mesh: Mesh) -> Mesh:
    return mesh.refine()


def coarse_mesh(name: str) -> Mesh:
    """Initial mesh of a built-in domain."""
    if name == "unit-square":
        v = [[0, 0], [1, 0], [1, 1], [0, 1]]
        t = [[0, 1, 2], [0, 2, 3]]
    elif name == "four-square":
        v = [[x, y] for y in (0, 0.5, 1) for x in (0, 0.5, 1)]
        # diagonals all pass through the centre vertex 4
        t = [[0, 1, 4], [0, 4, 3], [1, 2, 4], [2, 5, 4],
             [3, 4, 6], [4, 7, 6], [4, 5, 8], [4, 8, 7]]
    elif name == "hexagon":
        ang = np.pi / 3 * np.arange(6)
        v = [[0.0, 0.0]] + [[np.cos(a), np.sin(a)] for a in ang]
        t = [[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)]
    elif name == "l-shape":
        v = [[-1, -1], [0, -1], [-1, 0], [0, 0], [1, 0], [-1, 1], [0, 1], [1, 1]]
        t = [[0, 1, 3], [0, 3, 2], [2, 3, 6], [2, 6, 5], [3, 4, 7], [3, 7, 6]]
    elif name == "trident":
        v = [[1, 0], [2, 0], [0, 1], [1, 1], [2, 1], [3, 1],
             [0, 2], [1, 2], [2, 2], [3, 2]]
        t = [[0, 1, 4], [0, 4, 3],
             [2, 3, 7], [2, 7, 6], [3, 4, 8], [3, 8, 7], [4, 5, 9], [4, 9, 8]]
    else:
        raise MeshError(f"unknown domain {name!r}; expected one of {DOMAINS}")
    return Mesh(np.array(v, dtype=float), t)


def build_domain(name: str, level: int) -> Mesh:
    """Coarse mesh of ``name`` refined ``level`` times."""
    if level < 0:
        raise MeshError("level must be non-negative")
    mesh = coarse_mesh(name)
    for _ in range(level):
        mesh = mesh.refine()
    return mesh


# ----------------------------------------------------------------------
# text format
def save_mesh(mesh: Mesh, path) -> None:
    """Write ``mesh`` in the ``tri-mesh v1`` text format."""
    lines = ["tri-mesh v1", f"V {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"T {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    corners = mesh.boundary.corners.tolist()
    lines.append(f"C {len(corners)}")
    lines.append(" ".join(str(c) for c in corners))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read a ``tri-mesh v1`` file."""
    tokens = Path(path).read_text().split()
    if tokens[:2] != ["tri-mesh", "v1"]:
        raise MeshError("missing 'tri-mesh v1' header")
    pos = 2

    def section(tag, width, cast):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tag:
            raise MeshError(f"expected section {tag!r}")
        try:
            count = int(tokens[pos + 1])
        except (IndexError, ValueError) as exc:
            raise MeshError(f"bad count in section {tag!r}") from exc
        pos += 2
        body = tokens[pos:pos + count * width]
        if len(body) != count * width:
            raise MeshError(f"section {tag!r} is truncated")
        pos += count * width
        try:
            return np.array([cast(s) for s in body]).reshape(count, width)
        except ValueError as exc:
            raise MeshError(f"non-numeric entry in section {tag!r}") from exc

    verts = section("V", 2, float)
    tris = section("T", 3, int)
    corners = None
    if pos < len(tokens):
        corners = section("C", 1, int).ravel()
    if pos != len(tokens):
        raise MeshError("trailing data after mesh sections")
    if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
        raise MeshError("triangle references a missing vertex")
    return Mesh(verts, tris, corners=corners)
