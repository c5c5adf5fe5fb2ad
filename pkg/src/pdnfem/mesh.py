"""Simplicial meshes, structured generators, Clough-Tocher / Worsey-Farin splits."""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class SimplicialMesh:
    """Conforming simplicial mesh in 2D or 3D.

    Cells are stored with ascending vertex indices; ``orientation`` keeps the
    sign of the geometric determinant of each stored cell.  Entities of every
    dimension ``k`` are enumerated as sorted vertex tuples in ``entities[k]``.
    """

    def __init__(self, vertices, cells):
        vertices = np.array(vertices, dtype=float)
        cells = np.sort(np.array(cells, dtype=np.int64), axis=1)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (V, 2) or (V, 3) array")
        dim = vertices.shape[1]
        if cells.ndim != 2 or cells.shape[1] != dim + 1:
            raise MeshError(f"cells must have {dim + 1} vertices")
        if cells.min() < 0 or cells.max() >= len(vertices):
            raise MeshError("cell references a nonexistent vertex")
        if np.any(np.diff(cells, axis=1) == 0):
            raise MeshError("cell with repeated vertex")
        self.dim = dim
        self.vertices = vertices
        self.cells = cells
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)

        edges = self.vertices[cells[:, 1:]] - self.vertices[cells[:, :1]]
        det = np.linalg.det(edges)
        scale = np.max(np.abs(edges)) ** dim if len(cells) else 1.0
        if np.any(np.abs(det) <= 1e-14 * scale):
            raise MeshError("degenerate cell")
        self.orientation = np.sign(det).astype(int)
        self.volumes = np.abs(det) / factorial(dim)

        self.entities = {}
        self.entity_index = {}
        self.cell_entities = {}
        self.entity_cells = {}
        for k in range(dim + 1):
            local = list(itertools.combinations(range(dim + 1), k + 1))
            index = {}
            ce = np.empty((len(cells), len(local)), dtype=np.int64)
            for c, cell in enumerate(cells):
                for li, loc in enumerate(local):
                    key = tuple(int(cell[i]) for i in loc)
                    ce[c, li] = index.setdefault(key, len(index))
            ents = np.array(list(index), dtype=np.int64).reshape(len(index), k + 1)
            cells_of = [[] for _ in range(len(index))]
            for c in range(len(cells)):
                for e in ce[c]:
                    cells_of[e].append(c)
            self.entities[k] = ents
            self.entity_index[k] = index
            self.cell_entities[k] = ce
            self.entity_cells[k] = cells_of

        facet_cells = self.entity_cells[dim - 1]
        if any(len(cs) > 2 for cs in facet_cells):
            raise MeshError("nonconforming mesh: facet shared by more than two cells")
        self.boundary = {}
        bfacets = np.array([len(cs) == 1 for cs in facet_cells])
        self.boundary[dim - 1] = bfacets
        self.boundary[dim] = np.zeros(len(cells), dtype=bool)
        for k in range(dim - 1):
            flags = np.zeros(len(self.entities[k]), dtype=bool)
            for f in np.flatnonzero(bfacets):
                for sub in itertools.combinations(self.entities[dim - 1][f], k + 1):
                    flags[self.entity_index[k][sub]] = True
            self.boundary[k] = flags

    def __repr__(self):
        counts = ", ".join(str(c) for c in self.counts())
        return f"SimplicialMesh(dim={self.dim}, counts=({counts}))"

    def num(self, k):
        return len(self.entities[k])

    def counts(self):
        """``(V, E, F)`` in 2D or ``(V, E, F, T)`` in 3D."""
        return tuple(self.num(k) for k in range(self.dim + 1))

    def euler(self):
        return sum((-1) ** k * n for k, n in enumerate(self.counts()))

    @cached_property
    def lambda_gradients(self):
        """Physical gradients of the barycentric coordinates, shape (ncells, d+1, d)."""
        x = self.vertices[self.cells]
        E = x[:, 1:] - x[:, :1]  # rows are edge vectors, x - x0 = E^T xi
        g = np.empty((len(self.cells), self.dim + 1, self.dim))
        g[:, 1:] = np.linalg.inv(E).swapaxes(1, 2)
        g[:, 0] = -g[:, 1:].sum(axis=1)
        return g

    @cached_property
    def diameter(self):
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def scaled(self, factor):
        return SimplicialMesh(self.vertices * factor, self.cells)

    def cell_points(self, c, lam):
        """Physical coordinates of barycentric points ``lam`` in cell ``c``."""
        return np.asarray(lam) @ self.vertices[self.cells[c]]

    def entity_frame(self, k, idx):
        return entity_frame(self, k, idx)

    def frame_digest(self):
        """Stable fingerprint of all frames keyed by vertex tuples."""
        rows = []
        for k in range(1, self.dim):
            for ent, idx in sorted(self.entity_index[k].items()):
                fr = entity_frame(self, k, idx)
                rows.append((k, ent, (np.round(np.concatenate(
                    [fr.tangents.ravel(), fr.normals.ravel()]), 12) + 0.0).tobytes()))
        h = hashlib.sha256()
        for k, ent, blob in rows:
            h.update(repr((k, ent)).encode())
            h.update(blob)
        return h.hexdigest()


@dataclass(frozen=True)
class EntityFrame:
    entity: tuple
    tangents: np.ndarray  # (k, d)
    normals: np.ndarray  # (d-k, d)


def _unit(v):
    return v / np.linalg.norm(v)


def entity_frame(mesh, k, idx):
    """Orthonormal tangents/normals of entity ``idx`` of dimension ``k``.

    Tangents are oriented from the lowest to the highest global vertex index.
    2D edges: normal is the tangent rotated by -90 degrees.  3D edges: first
    normal is the component of the first coordinate axis that is not nearly
    parallel to the tangent, second is tangent x first.  3D faces: normal is
    (v1-v0)x(v2-v0), tangents are (v1-v0) and normal x that.
    """
    if not 0 < k < mesh.dim:
        raise MeshError(f"frames are defined for edges and (3D) faces, got dimension {k}")
    if not 0 <= idx < mesh.num(k):
        raise MeshError(f"invalid entity id {idx}")
    verts = tuple(int(v) for v in mesh.entities[k][idx])
    x = mesh.vertices[list(verts)]
    d = mesh.dim
    if k == 1:
        tau = _unit(x[1] - x[0])
        if d == 2:
            return EntityFrame(verts, tau[None], np.array([[tau[1], -tau[0]]]))
        for axis in np.eye(3):
            if abs(axis @ tau) < 0.9:
                break
        nu1 = _unit(axis - (axis @ tau) * tau)
        nu2 = np.cross(tau, nu1)
        return EntityFrame(verts, tau[None], np.array([nu1, nu2]))
    nu = _unit(np.cross(x[1] - x[0], x[2] - x[0]))
    t1 = _unit(x[1] - x[0])
    t2 = np.cross(nu, t1)
    return EntityFrame(verts, np.array([t1, t2]), nu[None])


def barycentric(mesh, c, point):
    """Barycentric coordinates of physical ``point`` (or points) in cell ``c``."""
    x = mesh.vertices[mesh.cells[c]]
    J = (x[1:] - x[:1]).T
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    rest = np.linalg.solve(J, (pts - x[0]).T).T
    lam = np.hstack([1.0 - rest.sum(axis=1, keepdims=True), rest])
    return lam[0] if np.ndim(point) == 1 else lam


def _check_box(lo, hi, dim):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (dim,) or hi.shape != (dim,):
        raise MeshError(f"domain corners must have {dim} coordinates")
    if np.any(hi - lo <= 0):
        raise MeshError("degenerate domain")
    return lo, hi


def build_structured_2d(n, lo=(0.0, 0.0), hi=(1.0, 1.0)):
    """n x n squares, each cut along the diagonal from (x0, y0) to (x1, y1)."""
    if n < 1:
        raise MeshError("n must be positive")
    lo, hi = _check_box(lo, hi, 2)
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    verts = np.array([(x, y) for y in ys for x in xs])
    vid = lambda i, j: j * (n + 1) + i
    cells = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells += [(a, b, d), (a, d, c)]
    return SimplicialMesh(verts, cells)


def build_structured_3d(n, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    """n^3 cubes, each split into 6 Kuhn tetrahedra around the main diagonal."""
    if n < 1:
        raise MeshError("n must be positive")
    lo, hi = _check_box(lo, hi, 3)
    axes = [np.linspace(lo[i], hi[i], n + 1) for i in range(3)]
    verts = np.array([(x, y, z) for z in axes[2] for y in axes[1] for x in axes[0]])
    vid = lambda i, j, k: (k * (n + 1) + j) * (n + 1) + i
    cells = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for perm in itertools.permutations(range(3)):
                    cur = [i, j, k]
                    path = [vid(*cur)]
                    for ax in perm:
                        cur[ax] += 1
                        path.append(vid(*cur))
                    cells.append(path)
    return SimplicialMesh(verts, cells)


def single_simplex(dim):
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    return SimplicialMesh(verts, [list(range(dim + 1))])


def two_simplices(dim):
    """Two simplices sharing the facet opposite the origin."""
    verts = np.vstack([np.zeros(dim), np.eye(dim), np.ones(dim)])
    return SimplicialMesh(verts, [list(range(dim + 1)), list(range(1, dim + 2))])


NAMED_MESHES = {
    "single-tri": lambda: single_simplex(2),
    "two-tri": lambda: two_simplices(2),
    "single-tet": lambda: single_simplex(3),
    "two-tet": lambda: two_simplices(3),
}


def named_mesh(name):
    try:
        return NAMED_MESHES[name]()
    except KeyError:
        raise MeshError(f"unknown mesh {name!r}; choose from {sorted(NAMED_MESHES)}") from None


def read_mesh(path):
    """Read the ASCII format: ``dim V C``, V coordinate lines, C index lines."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        dim, nv, nc = (int(t) for t in lines[0])
        verts = [[float(t) for t in ln] for ln in lines[1:1 + nv]]
        cells = [[int(t) for t in ln] for ln in lines[1 + nv:1 + nv + nc]]
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh file {path}") from exc
    if len(verts) != nv or len(cells) != nc or any(len(v) != dim for v in verts):
        raise MeshError(f"malformed mesh file {path}")
    return SimplicialMesh(verts, cells)


def write_mesh(mesh, path):
    out = [f"{mesh.dim} {len(mesh.vertices)} {len(mesh.cells)}"]
    out += [" ".join(f"{x:.17g}" for x in v) for v in mesh.vertices]
    out += [" ".join(str(i) for i in c) for c in mesh.cells]
    Path(path).write_text("\n".join(out) + "\n")


@dataclass
class SplitMap:
    """Parent mesh, its refinement and the bookkeeping between them.

    ``vertex_origin[i] = (k, idx)`` says child vertex ``i`` was created for
    parent entity ``idx`` of dimension ``k`` (``k = 0``: it *is* parent vertex
    ``idx``).  ``cell_parent[c]`` is the macro cell containing child cell ``c``.
    """

    kind: str
    parent: SimplicialMesh
    child: SimplicialMesh
    vertex_origin: list
    cell_parent: np.ndarray
    macro_cells: list = field(default_factory=list)
    macro_faces: dict = field(default_factory=dict)

    def locate(self, verts):
        """Parent entity ``(k, idx)`` whose relative interior contains the child entity."""
        origins = [self.vertex_origin[v] for v in verts]
        top = max(o[0] for o in origins)
        if top > 0:
            return next(o for o in origins if o[0] == top)
        key = tuple(sorted(o[1] for o in origins))
        k = len(key) - 1
        return (k, self.parent.entity_index[k][key])

    def interior_micro_facets(self, macro):
        d = self.child.dim
        out = []
        for f, cs in enumerate(self.child.entity_cells[d - 1]):
            if len(cs) == 2 and all(self.cell_parent[c] == macro for c in cs):
                out.append(f)
        return out


def identity_split(mesh):
    n = len(mesh.cells)
    return SplitMap(
        kind="none", parent=mesh, child=mesh,
        vertex_origin=[(0, i) for i in range(len(mesh.vertices))],
        cell_parent=np.arange(n), macro_cells=[[c] for c in range(n)],
        macro_faces={f: [f] for f in range(mesh.num(mesh.dim - 1))})


def clough_tocher_split(mesh):
    """Connect the vertices of every triangle to its barycenter."""
    if mesh.dim != 2:
        raise MeshError("Clough-Tocher split needs a 2D mesh")
    verts = [v for v in mesh.vertices]
    origin = [(0, i) for i in range(len(mesh.vertices))]
    cells, parent = [], []
    for c, cell in enumerate(mesh.cells):
        z = len(verts)
        verts.append(mesh.vertices[cell].mean(axis=0))
        origin.append((2, c))
        for a, b in itertools.combinations(cell, 2):
            cells.append((a, b, z))
            parent.append(c)
    return _finish_split("clough-tocher", mesh, verts, cells, parent, origin)


def incenter(x):
    """Incenter of a tetrahedron with vertex rows ``x``."""
    areas = []
    for i in range(4):
        f = np.delete(x, i, axis=0)
        areas.append(0.5 * np.linalg.norm(np.cross(f[1] - f[0], f[2] - f[0])))
    areas = np.array(areas)
    return areas @ x / areas.sum()


def worsey_farin_split(mesh):
    """Incenter per tetrahedron, barycenter per face, 12 micro tetrahedra per macro."""
    if mesh.dim != 3:
        raise MeshError("Worsey-Farin split needs a 3D mesh")
    verts = [v for v in mesh.vertices]
    origin = [(0, i) for i in range(len(mesh.vertices))]
    face_point = {}
    for f, fv in enumerate(mesh.entities[2]):
        face_point[f] = len(verts)
        verts.append(mesh.vertices[fv].mean(axis=0))
        origin.append((2, f))
    cells, parent = [], []
    for c, cell in enumerate(mesh.cells):
        z = len(verts)
        verts.append(incenter(mesh.vertices[cell]))
        origin.append((3, c))
        for f in mesh.cell_entities[2][c]:
            m = face_point[f]
            for a, b in itertools.combinations(mesh.entities[2][f], 2):
                cells.append((a, b, m, z))
                parent.append(c)
    return _finish_split("worsey-farin", mesh, verts, cells, parent, origin)


def _finish_split(kind, mesh, verts, cells, parent, origin):
    child = SimplicialMesh(np.array(verts), cells)
    parent = np.array(parent)
    macro_cells = [list(np.flatnonzero(parent == c)) for c in range(len(mesh.cells))]
    sm = SplitMap(kind, mesh, child, origin, parent, macro_cells)
    d = mesh.dim
    faces = {f: [] for f in range(mesh.num(d - 1))}
    for f, fv in enumerate(child.entities[d - 1]):
        k, idx = sm.locate(tuple(fv))
        if k == d - 1:
            faces[idx].append(f)
    sm.macro_faces = faces
    return sm
