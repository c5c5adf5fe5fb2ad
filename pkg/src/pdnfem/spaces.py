"""Global finite element spaces as subspaces of broken polynomial spaces.

A space is a broken space (per-cell orthonormal P_p, one block per vector
component) together with a transform ``T`` whose columns are the global basis
functions written in broken coordinates.  Two ways to get ``T``:

* :func:`glue` expands the entity-attached bases of :mod:`pdnfem.refelem`;
* :func:`constrain` takes the numerical nullspace of sampled jump functionals.

Because the broken basis is L2-orthonormal on every physical cell, Euclidean
inner products of broken coefficient vectors are L2 inner products.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .mesh import entity_frame, identity_split, worsey_farin_split
from .orthopoly import OrthoIndex, dim_poly, lattice, multi_indices, reference_volume, \
    simplex_ortho_eval, simplex_rule
from .refelem import build_element, direction_vector, enumerate_basis, reference_projection, \
    supported

RANK_RTOL = 1e-9
RANK_GAP = 10.0


class RankDecisionError(RuntimeError):
    """Singular values too close to the rank threshold to trust the dimension."""


def ortho_values(d, p, lam):
    """Reference orthonormal P_p basis at barycentric points, shape (npts, nb)."""
    lam = np.atleast_2d(lam)
    zero = (0,) * (d + 1)
    return np.stack([simplex_ortho_eval(OrthoIndex(n, zero), lam)
                     for n in multi_indices(d, p)], axis=1)


@lru_cache(maxsize=None)
def reference_derivative_tensor(d, p):
    """``R[i, m, k] = int psi_m d(psi_k)/d(lambda_i)`` on the reference simplex."""
    rule = simplex_rule(d, 2 * p)
    zero = (0,) * (d + 1)
    vals, grads = [], []
    for n in multi_indices(d, p):
        v, g = simplex_ortho_eval(OrthoIndex(n, zero), rule.points, grad=True)
        vals.append(v)
        grads.append(g)
    V = np.array(vals)  # (nb, npts)
    G = np.array(grads)  # (nb, npts, d+1)
    R = np.einsum("mq,q,kqi->imk", V, rule.weights, G)
    R.setflags(write=False)
    return R


class BrokenSpace:
    """Discontinuous P_p (scalar or vector) on every cell of ``mesh``."""

    def __init__(self, mesh, rank, p):
        if p < 0:
            raise ValueError("degree must be nonnegative")
        self.mesh = mesh
        self.rank = rank
        self.p = p
        self.d = mesh.dim
        self.nb = dim_poly(self.d, p)
        self.ncells = len(mesh.cells)
        self.dim = self.ncells * rank * self.nb
        self.scale = np.sqrt(reference_volume(self.d) / mesh.volumes)

    def __repr__(self):
        return f"BrokenSpace(rank={self.rank}, p={self.p}, dim={self.dim})"

    def offset(self, c, comp=0):
        return (c * self.rank + comp) * self.nb

    def cell_slice(self, c):
        return slice(self.offset(c), self.offset(c + 1))

    def values(self, c, lam):
        return ortho_values(self.d, self.p, lam) * self.scale[c]

    def derivative_blocks(self, c, q=None):
        """``D[x]`` maps P_p coefficients on cell c to P_q coefficients of d/dx_x."""
        q = self.p if q is None else q
        if q < self.p - 1:
            raise ValueError("target degree too low to hold the derivative")
        nq = dim_poly(self.d, q)
        R = reference_derivative_tensor(self.d, max(self.p, q))
        g = self.mesh.lambda_gradients[c]
        D = np.einsum("imk,ix->xmk", R, g)
        return D[:, :nq, :self.nb]

    def derivative_values(self, c, lam, order):
        """All order-``order`` partials of the cell basis, shape (npts, d**order, nb)."""
        E = self.values(c, lam)
        if order == 0:
            return E[:, None, :]
        D = self.derivative_blocks(c)
        out = []
        for seq in itertools.product(range(self.d), repeat=order):
            M = E
            for x in seq:
                M = M @ D[x]
            out.append(M)
        return np.stack(out, axis=1)

    def gram(self, quad_degree=None):
        """Quadrature mass matrix of one cell's scalar block (identity up to roundoff)."""
        rule = simplex_rule(self.d, quad_degree or 2 * self.p + 2)
        V = ortho_values(self.d, self.p, rule.points)
        return (V * rule.weights[:, None]).T @ V


class FESpace:
    """Broken space plus transform ``T`` (broken dim x space dim)."""

    def __init__(self, name, broken, T, split=None):
        self.name = name
        self.broken = broken
        self.T = T
        self.split = split or identity_split(broken.mesh)

    @property
    def dim(self):
        return self.T.shape[1]

    @property
    def mesh(self):
        return self.broken.mesh

    @property
    def rank(self):
        return self.broken.rank

    @property
    def p(self):
        return self.broken.p

    @property
    def orthonormal(self):
        return False

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, p={self.p}, dim={self.dim})"


@dataclass(frozen=True)
class GlobalDof:
    function: object  # refelem.BasisFunction
    index: int


class GluedSpace(FESpace):
    """Space spanned by glued entity-attached basis functions."""

    def __init__(self, name, broken, T, split, basis, element):
        super().__init__(name, broken, T, split)
        self.basis = basis
        self.element = element

    def dof_table(self):
        """Map (entity, profile, direction, side) -> global index."""
        return {(b.entity, b.profile, b.direction, b.side): i for i, b in enumerate(self.basis)}


class ConstrainedSpace(FESpace):
    def __init__(self, name, broken, T, split, spec, singular_values, constraint_rank):
        super().__init__(name, broken, T, split)
        self.spec = spec
        self.singular_values = singular_values
        self.constraint_rank = constraint_rank

    @property
    def orthonormal(self):
        return True


def split_for(mesh, kind):
    if kind == "worsey-farin":
        return worsey_farin_split(mesh)
    if kind == "none":
        return identity_split(mesh)
    raise ValueError(f"unknown split {kind!r}")


def build_broken(mesh, rank, p):
    return BrokenSpace(mesh, rank, p)


def glue(mesh, elem, split=None):
    """Global space of a reference element family on ``mesh``."""
    if elem.dim != mesh.dim:
        raise ValueError(f"{elem.family} is a {elem.dim}D element, mesh is {mesh.dim}D")
    split = split or split_for(mesh, elem.split_kind)
    child = split.child
    basis = enumerate_basis(split, elem.family, elem.degree)
    broken = BrokenSpace(child, elem.rank, elem.degree)
    T = np.zeros((broken.dim, len(basis)))
    d = child.dim
    cells_of = {}
    for k in range(d + 1):
        for e, verts in enumerate(child.entities[k]):
            cells_of[tuple(int(v) for v in verts)] = child.entity_cells[k][e]
    for j, bf in enumerate(basis):
        vec = direction_vector(split, bf)
        for c in cells_of[bf.entity]:
            pos = supported(split, bf, c)
            if pos is None:
                continue
            coef = reference_projection(d, elem.degree, pos, bf.profile) / broken.scale[c]
            for comp in range(elem.rank):
                if vec[comp] != 0.0:
                    o = broken.offset(c, comp)
                    T[o:o + broken.nb, j] = vec[comp] * coef
    return GluedSpace(elem.family, broken, T, split, basis, elem)


# --------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class Clause:
    """Continuity of one trace across entities of dimension ``dim``.

    ``order``: derivatives of order 0..order must match ('full' only).
    ``selector``: 'full' | 'tangential' | 'normal' | 'curl-normal'.
    ``scope``: 'macro' = child entities lying on macro entities of the same
    dimension (all incident cells are tied); 'micro' = child entities interior
    to a macro cell.
    """

    dim: int
    order: int = 0
    selector: str = "full"
    scope: str = "macro"


@dataclass(frozen=True)
class ContinuitySpec:
    name: str
    rank: str  # 'scalar' | 'vector'
    split: str = "none"
    clauses: tuple = field(default_factory=tuple)


def _selector_weights(selector, order, rank, d, frame):
    """Weights over (component, derivative multi-index) for one clause."""
    nder = d ** order
    if selector == "full":
        return np.eye(rank * nder).reshape(rank * nder, rank, nder)
    if selector in ("tangential", "normal"):
        if order != 0 or rank != d:
            raise ValueError(f"{selector} clauses act on vector values only")
        dirs = frame.tangents if selector == "tangential" else frame.normals
        return dirs[:, :, None]
    if selector == "curl-normal":
        if order != 1 or d != 3:
            raise ValueError("curl-normal clauses need order 1 in 3D")
        eps = np.zeros((3, 3, 3))
        for i, j, k in itertools.permutations(range(3)):
            eps[i, j, k] = np.linalg.det(np.eye(3)[[i, j, k]])
        # row s, component k, derivative j: sum_i nu_i eps_ijk
        return np.einsum("si,ijk->skj", frame.normals, eps)
    raise ValueError(f"unknown selector {selector!r}")


def _frame_or_none(mesh, k, e):
    if 0 < k < mesh.dim:
        return entity_frame(mesh, k, e)
    return None


def _entity_rows(broken, verts, cells, lam_entity, W, order, bc=False):
    """Jump (or trace, if ``bc``) rows of one clause on one entity."""
    mesh = broken.mesh
    rank, nb = broken.rank, broken.nb
    blocks = []
    for c in cells:
        cell = mesh.cells[c]
        pos = np.searchsorted(cell, verts)
        lam = np.zeros((len(lam_entity), mesh.dim + 1))
        lam[:, pos] = lam_entity
        Ed = broken.derivative_values(c, lam, order)  # (npts, nder, nb)
        blocks.append(np.einsum("sjm,pmk->psjk", W, Ed).reshape(-1, rank * nb))
    rows = []
    if bc:
        for c, B in zip(cells, blocks):
            R = np.zeros((len(B), broken.dim))
            R[:, broken.offset(c):broken.offset(c + 1)] = B
            rows.append(R)
        return rows
    for c, B in zip(cells[1:], blocks[1:]):
        R = np.zeros((len(B), broken.dim))
        R[:, broken.offset(cells[0]):broken.offset(cells[0] + 1)] = blocks[0]
        R[:, broken.offset(c):broken.offset(c + 1)] -= B
        rows.append(R)
    return rows


def clause_entities(split, clause):
    """(entity index, incident cells) pairs selected by a clause."""
    child = split.child
    out = []
    for e, verts in enumerate(child.entities[clause.dim]):
        loc = split.locate(tuple(int(v) for v in verts))
        cells = child.entity_cells[clause.dim][e]
        if len(cells) < 2:
            continue
        if clause.scope == "macro" and loc[0] == clause.dim:
            out.append((e, cells))
        elif clause.scope == "micro" and loc[0] == child.dim:
            out.append((e, cells))
    return out


def constraint_matrix(broken, split, spec, sample_factor=1):
    """Stack all sampled jump functionals of ``spec`` (rows in broken coordinates)."""
    mesh = broken.mesh
    d = mesh.dim
    m = max(1, broken.p) * sample_factor
    rows = []
    for clause in spec.clauses:
        orders = range(clause.order + 1) if clause.selector == "full" else [clause.order]
        for e, cells in clause_entities(split, clause):
            verts = mesh.entities[clause.dim][e]
            frame = _frame_or_none(mesh, clause.dim, e)
            lam_e = lattice(clause.dim, m)
            for r in orders:
                W = _selector_weights(clause.selector, r, broken.rank, d, frame)
                rows += _entity_rows(broken, verts, cells, lam_e, W, r)
    if not rows:
        return np.zeros((0, broken.dim))
    return np.vstack(rows)


def nullspace(C, rtol=RANK_RTOL, gap=RANK_GAP):
    """Orthonormal nullspace basis of C with an audited rank decision.

    Returns ``(N, singular_values, rank)``.  Raises RankDecisionError when a
    singular value falls within a factor ``gap`` of the threshold.
    """
    n = C.shape[1]
    if C.shape[0] == 0:
        return np.eye(n), np.zeros(0), 0
    norms = np.linalg.norm(C, axis=1)
    C = C[norms > 0] / norms[norms > 0, None]
    if C.shape[0] == 0:
        return np.eye(n), np.zeros(0), 0
    if C.shape[0] > n:
        C = scipy.linalg.qr(C, mode="r", overwrite_a=False)[0][:n]
    _, s, Vt = scipy.linalg.svd(C, full_matrices=True)
    thr = rtol * s[0]
    rank = int(np.sum(s > thr))
    band = s[(s > thr / gap) & (s < thr * gap)]
    if band.size:
        raise RankDecisionError(
            f"ambiguous rank: singular values {band} within {gap}x of threshold {thr:.3e}; "
            "pass an explicit rtol")
    return Vt[rank:].T.copy(), s, rank


def constrain(base, spec, split=None, sample_factor=1, rtol=RANK_RTOL):
    """Subspace of ``base`` satisfying every clause of ``spec``."""
    split = split or identity_split(base.mesh)
    # unit-diameter copy keeps derivative rows comparable
    scaled = BrokenSpace(base.mesh.scaled(1.0 / base.mesh.diameter), base.rank, base.p)
    C = constraint_matrix(scaled, split, spec, sample_factor)
    N, s, rank = nullspace(C, rtol=rtol)
    return ConstrainedSpace(spec.name, base, N, split, spec, s, rank)


# --------------------------------------------------------------------------
# named spaces


def _specs(d):
    F, E = d - 1, 1
    return {
        "CG": ContinuitySpec("CG", "scalar", clauses=(Clause(F),)),
        "DG": ContinuitySpec("DG", "scalar"),
        "VDG": ContinuitySpec("VDG", "vector"),
        "VL": ContinuitySpec("VL", "vector", clauses=(Clause(F),)),
        "NED2": ContinuitySpec("NED2", "vector", clauses=(Clause(F, 0, "tangential"),)),
        "BDM": ContinuitySpec("BDM", "vector", clauses=(Clause(F, 0, "normal"),)),
        "Y": ContinuitySpec("Y", "vector", clauses=(Clause(F, 0, "tangential"), Clause(0))),
        "HERMITE": ContinuitySpec("HERMITE", "scalar", clauses=(Clause(F), Clause(0, 1))),
        "Z": ContinuitySpec("Z", "vector", clauses=(
            Clause(F, 0, "tangential"), Clause(E), Clause(0))),
        "V0": ContinuitySpec("V0", "scalar", "worsey-farin", (
            Clause(F, 1, "full", "micro"), Clause(F), Clause(E, 1), Clause(0, 1))),
        "V1": ContinuitySpec("V1", "vector", "worsey-farin", (
            Clause(F, 0, "full", "micro"), Clause(F, 0, "tangential"), Clause(E), Clause(0))),
        "V2": ContinuitySpec("V2", "vector", "worsey-farin", (
            Clause(F, 0, "normal", "micro"), Clause(F, 0, "normal"))),
        "V3": ContinuitySpec("V3", "scalar", "worsey-farin"),
        "W0": ContinuitySpec("W0", "scalar", clauses=(Clause(F), Clause(E, 1), Clause(0, 2))),
        "W1": ContinuitySpec("W1", "vector", clauses=(
            Clause(F, 0, "tangential"), Clause(E), Clause(E, 1, "curl-normal"), Clause(0, 1))),
        "W2": ContinuitySpec("W2", "vector", clauses=(
            Clause(F, 0, "normal"), Clause(E, 0, "normal"), Clause(0))),
        "W3": ContinuitySpec("W3", "scalar"),
    }


SPEC_TAGS = tuple(_specs(3))
GLUED_TAGS = {
    "hrot": "hrot_tri", "zh": "zhp_tet", "hdiv": "hdiv_tet", "hcurl-wf": "hcurl_tet_wf",
    "lagrange": "vlagrange", "scalar-lagrange": "lagrange",
}


def continuity_spec(tag, d):
    try:
        return _specs(d)[tag]
    except KeyError:
        raise ValueError(f"unknown space tag {tag!r}") from None


def constrained_space(tag, p, mesh, sample_factor=1, rtol=RANK_RTOL, split=None):
    spec = continuity_spec(tag, mesh.dim)
    split = split or split_for(mesh, spec.split)
    rank = 1 if spec.rank == "scalar" else mesh.dim
    base = BrokenSpace(split.child, rank, p)
    return constrain(base, spec, split, sample_factor, rtol)


def glued_space(tag, p, mesh, split=None):
    family = GLUED_TAGS.get(tag, tag)
    return glue(mesh, build_element(family, p, mesh.dim), split)


def build_space(tag, p, mesh, **kw):
    """Named space: a continuity-spec tag (V0, W2, Y, ...) or a glued family tag."""
    if tag in GLUED_TAGS or tag in GLUED_TAGS.values():
        return glued_space(tag, p, mesh, kw.get("split"))
    return constrained_space(tag, p, mesh, **kw)


# --------------------------------------------------------------------------
# printed dimension formulas


def _half(x):
    return Fraction(x, 2)


_MIN_P = {"V0": 3, "V1": 2, "V2": 0, "V3": 0, "W0": 4, "W1": 4, "W2": 2, "W3": 0}


def printed_dimension(tag, p, V, E, F, T):
    """Dimension formulas as printed for the V- and W-complex spaces."""
    if tag not in _MIN_P:
        raise ValueError(f"no printed formula for {tag!r}")
    if p < _MIN_P[tag]:
        raise ValueError(f"{tag} formula needs p >= {_MIN_P[tag]}")
    if tag == "V0":
        val = (4 * V + ((p - 3) + 2 * (p - 2)) * E
               + (Fraction(3, 2) * (p * p - p + 2) - (6 * p - 6)) * F
               + 2 * (p - 1) * (p - 2) * (p - 3) * T)
    elif tag == "V1":
        val = (3 * V + 3 * (p - 1) * E + (3 * p * p - 3 * p + 2) * F
               + (6 * p ** 3 - 3 * p * p + 3 * p + 1) * T)
    elif tag == "V2":
        val = (Fraction(3, 2) * (p + 2) * (p + 1) * F
               + (9 * (p + 1) * (p + 2) + 6 * (p + 2) * (p + 1) * (p - 1)) * T)
    elif tag == "V3":
        val = 2 * (p + 3) * (p + 2) * (p + 1) * T
    elif tag == "W0":
        val = (10 * V + (2 * (p - 4) + (p - 5)) * E + _binom(p - 4, 2) * F
               + _binom(p - 1, 3) * T)
    elif tag == "W1":
        val = (12 * V + (5 * p - 13) * E + (p * p - 6 * p + 8) * F
               + (_half(p ** 3) - p * p - _half(p) + 1) * T)
    elif tag == "W2":
        val = (3 * V + 2 * (p - 1) * E + _half((p - 1) * (p - 2)) * F
               + (_half(p ** 3) - p * p + _half(p) - 1) * T)
    else:  # W3 is plain discontinuous P_p; no formula is printed for it
        val = dim_poly(3, p) * T
    if Fraction(val).denominator != 1:
        raise ValueError(f"{tag} formula is not an integer at p={p}")
    return int(val)


paper_dimension = printed_dimension


def corrected_dimension(tag, p, V, E, F, T):
    """Printed formula, except the W2 cell term replaced by (p-1)(p+1)(p+2)/2."""
    if tag != "W2":
        return printed_dimension(tag, p, V, E, F, T)
    if p < 2:
        raise ValueError("W2 formula needs p >= 2")
    return (3 * V + 2 * (p - 1) * E + (p - 1) * (p - 2) // 2 * F
            + (p - 1) * (p + 1) * (p + 2) // 2 * T)


def _binom(n, k):
    return comb(n, k) if n >= 0 else 0


@dataclass
class AuditRow:
    tag: str
    p: int
    V: int
    E: int
    F: int
    T: int
    printed: int
    computed: int
    corrected: int

    @property
    def match(self):
        return self.printed == self.computed

    def as_dict(self):
        return {"tag": self.tag, "p": self.p, "V": self.V, "E": self.E, "F": self.F,
                "T": self.T, "printed": self.printed, "computed": self.computed,
                "corrected": self.corrected, "match": self.match}


def audit_dimensions(tag, p, mesh, **kw):
    counts = mesh.counts()
    space = constrained_space(tag, p, mesh, **kw)
    return AuditRow(tag, p, *counts, printed_dimension(tag, p, *counts), space.dim,
                    corrected_dimension(tag, p, *counts))
