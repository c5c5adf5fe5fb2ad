"""Mass, stiffness and derivative matrices, and essential boundary conditions.

Everything is assembled in broken coordinates.  The broken basis is
L2-orthonormal on each physical cell, so the broken mass matrix is the
identity and a space with transform ``T`` has mass ``T^T T``.  Derivatives of
a degree-p broken function are exact in the broken degree p-1 basis, which
makes every stiffness matrix a plain product ``(G T)^T (G T)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import entity_frame
from .orthopoly import lattice
from .spaces import BrokenSpace, FESpace, RANK_RTOL, _entity_rows, _selector_weights, nullspace

DERIVATIVE_TOL = 1e-10

# operator -> (source rank, target rank) given the dimension
_OPS = {
    "grad": lambda d: (1, d),
    "curl": lambda d: (3, 3) if d == 3 else (1, 2),
    "rot": lambda d: (2, 1) if d == 2 else None,
    "div": lambda d: (d, 1),
}

FORM_OPERATORS = {"gradgrad": "grad", "curlcurl": "curl", "divdiv": "div"}


class AssemblyError(RuntimeError):
    pass


@dataclass
class OperatorMatrix:
    """A dense matrix together with the spaces it maps between."""

    form: str
    rows: str
    cols: str
    matrix: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _same_mesh(a, b):
    return (a.cells.shape == b.cells.shape and np.array_equal(a.cells, b.cells)
            and np.allclose(a.vertices, b.vertices, rtol=0, atol=1e-14))


def resolve_operator(op, d, rank):
    """Canonical operator name for a source of the given rank ('curl' of a 2D vector is rot)."""
    if op == "curl" and d == 2 and rank == 2:
        op = "rot"
    if op not in _OPS or _OPS[op](d) is None:
        raise AssemblyError(f"operator {op!r} is not defined in {d}D")
    src, _ = _OPS[op](d)
    if src != rank:
        raise AssemblyError(f"{op} needs a rank-{src} field, got rank {rank}")
    return op


def broken_operator(broken, op, q=None):
    """Dense matrix of ``op`` from ``broken`` into the broken degree-q space.

    Returns ``(G, target)`` where ``target`` is the BrokenSpace of the image.
    """
    d = broken.d
    op = resolve_operator(op, d, broken.rank)
    _, rt = _OPS[op](d)
    q = max(broken.p - 1, 0) if q is None else q
    target = BrokenSpace(broken.mesh, rt, q)
    G = np.zeros((target.dim, broken.dim))
    nb, nq = broken.nb, target.nb
    # entries: (target comp, source comp, derivative axis, sign)
    if op == "grad":
        terms = [(x, 0, x, 1.0) for x in range(d)]
    elif op == "div":
        terms = [(0, x, x, 1.0) for x in range(d)]
    elif op == "rot":
        terms = [(0, 1, 0, 1.0), (0, 0, 1, -1.0)]
    elif d == 2:  # curl of a scalar
        terms = [(0, 0, 1, 1.0), (1, 0, 0, -1.0)]
    else:
        terms = [(0, 2, 1, 1.0), (0, 1, 2, -1.0), (1, 0, 2, 1.0),
                 (1, 2, 0, -1.0), (2, 1, 0, 1.0), (2, 0, 1, -1.0)]
    for c in range(broken.ncells):
        if broken.p == 0:
            break
        D = broken.derivative_blocks(c, q)
        for tc, sc, x, sgn in terms:
            r0 = target.offset(c, tc)
            c0 = broken.offset(c, sc)
            G[r0:r0 + nq, c0:c0 + nb] += sgn * D[x]
    return G, target


def embed_degree(broken, q):
    """Inclusion of the broken degree-p space into broken degree q >= p (graded prefix)."""
    big = BrokenSpace(broken.mesh, broken.rank, q)
    P = np.zeros((big.dim, broken.dim))
    for c in range(broken.ncells):
        for comp in range(broken.rank):
            r0, c0 = big.offset(c, comp), broken.offset(c, comp)
            P[r0:r0 + broken.nb, c0:c0 + broken.nb] = np.eye(broken.nb)
    return P


def assemble_mass(space):
    T = space.T
    return OperatorMatrix("mass", space.name, space.name, T.T @ T)


def assemble_stiffness(space, form):
    if form not in FORM_OPERATORS:
        raise AssemblyError(f"unknown form {form!r}; expected one of {sorted(FORM_OPERATORS)}")
    G, _ = broken_operator(space.broken, FORM_OPERATORS[form])
    X = G @ space.T
    return OperatorMatrix(form, space.name, space.name, X.T @ X)


def _describe(space, j):
    basis = getattr(space, "basis", None)
    if basis is not None and getattr(space, "T_bc", None) is None:
        return repr(basis[j])
    return f"column {j} of {space.name}"


def derivative_matrix(src, dst, op):
    """Coefficients ``D`` with ``op(phi_j^src) = sum_i D_ij phi_i^dst``."""
    if not _same_mesh(src.broken.mesh, dst.broken.mesh):
        raise AssemblyError("derivative_matrix needs both spaces on the same (split) mesh")
    q = max(dst.p, src.p - 1)
    G, target = broken_operator(src.broken, op, q)
    if target.rank != dst.rank:
        raise AssemblyError(f"{op} maps into rank {target.rank}, target space has rank {dst.rank}")
    X = G @ src.T
    Td = embed_degree(dst.broken, q) @ dst.T
    if getattr(dst, "orthonormal", False):
        D = Td.T @ X
    else:
        D = np.linalg.lstsq(Td, X, rcond=None)[0]
    R = np.linalg.norm(X - Td @ D, axis=0)
    scale = np.maximum(1.0, np.linalg.norm(X, axis=0))
    bad = np.flatnonzero(R > DERIVATIVE_TOL * scale)
    if bad.size:
        j = int(bad[np.argmax(R[bad])])
        raise AssemblyError(
            f"{op} of {_describe(src, j)} is not contained in {dst.name} "
            f"(L2 residual {R[j]:.3e})")
    return OperatorMatrix(op, dst.name, src.name, D)


# --------------------------------------------------------------------------
# boundary conditions


@dataclass(frozen=True)
class BoundaryCondition:
    """Homogeneous trace condition on boundary facets.

    ``selector``: 'tangential' (u x n = 0), 'normal' (u . n = 0) or 'full'.
    ``facets``: macro boundary facet ids; ``None`` means the whole boundary.
    """

    selector: str = "tangential"
    facets: tuple | None = None


class BoundedSpace(FESpace):
    """A space restricted by a boundary condition: ``T = parent.T @ T_bc``."""

    def __init__(self, parent, bc, T_bc):
        super().__init__(parent.name, parent.broken, parent.T @ T_bc, parent.split)
        self.parent = parent
        self.bc = bc
        self.T_bc = T_bc

    @property
    def orthonormal(self):
        return self.parent.orthonormal


def boundary_rows(broken, split, bc, sample_factor=1):
    """Sampled trace functionals of ``bc`` on the boundary facets of ``split.child``."""
    child = broken.mesh
    d = child.dim
    k = d - 1
    parent = split.parent
    allowed = None
    if bc.facets is not None:
        allowed = {int(f) for f in bc.facets}
    m = max(1, broken.p) * sample_factor
    lam = lattice(k, m)
    rows = []
    for e in np.flatnonzero(child.boundary[k]):
        verts = tuple(int(v) for v in child.entities[k][e])
        loc = split.locate(verts)
        if loc[0] != k or not parent.boundary[k][loc[1]]:
            continue
        if allowed is not None and loc[1] not in allowed:
            continue
        if bc.selector == "full":
            W = _selector_weights("full", 0, broken.rank, d, None)
        else:
            if broken.rank != d:
                raise AssemblyError(f"{bc.selector} boundary condition needs a vector space")
            W = _selector_weights(bc.selector, 0, broken.rank, d, entity_frame(child, k, e))
        rows += _entity_rows(broken, child.entities[k][e], child.entity_cells[k][e], lam, W, 0,
                             bc=True)
    if not rows:
        return np.zeros((0, broken.dim))
    return np.vstack(rows)


def apply_bc(space, bc, sample_factor=1, rtol=RANK_RTOL):
    """Restrict ``space`` to the kernel of the boundary trace functionals.

    Only the columns that the trace actually sees are passed through the
    nullspace; every other basis function is kept unchanged.
    """
    B = boundary_rows(space.broken, space.split, bc, sample_factor) @ space.T
    n = space.dim
    if B.shape[0] == 0:
        return BoundedSpace(space, bc, np.eye(n))
    colnorm = np.linalg.norm(B, axis=0)
    touched = np.flatnonzero(colnorm > 1e-12 * colnorm.max())
    free = np.setdiff1d(np.arange(n), touched)
    N, _, _ = nullspace(B[:, touched], rtol=rtol)
    T_bc = np.zeros((n, len(free) + N.shape[1]))
    T_bc[free, np.arange(len(free))] = 1.0
    T_bc[np.ix_(touched, np.arange(len(free), T_bc.shape[1]))] = N
    if T_bc.shape[1] == 0:
        raise AssemblyError(f"boundary condition leaves {space.name} empty")
    return BoundedSpace(space, bc, T_bc)


def trace_residual(space, bc, sample_factor=2):
    """Largest sampled boundary trace of any column of ``space`` (relative to its size)."""
    B = boundary_rows(space.broken, space.split, bc, sample_factor)
    if B.shape[0] == 0:
        return 0.0
    return float(np.abs(B @ space.T).max() / max(np.abs(space.T).max(), 1e-300))


# --------------------------------------------------------------------------
# export


def write_matrix_market(path, op, comment=None):
    """Write a dense operator as a MatrixMarket coordinate file."""
    import scipy.io
    import scipy.sparse as sp

    A = sp.coo_matrix(np.asarray(op.matrix if isinstance(op, OperatorMatrix) else op))
    text = comment or (f"{op.form}: rows={op.rows} cols={op.cols}"
                       if isinstance(op, OperatorMatrix) else None)
    scipy.io.mmwrite(path, A, comment=text or "", precision=16)
