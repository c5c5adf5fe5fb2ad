"""Entity-attached nodal bases for the partially discontinuous element families.

Every basis function is a scalar profile attached to an entity of the (possibly
split) mesh times a direction vector.  Profiles are written in the barycentric
coordinates of the entity's vertices taken in ascending global order, so a
function that is *shared* by several cells is single valued without any sign
or permutation tables.  A *broken* function is the restriction of the same
profile to the cells of one macro cell.

Profiles (``mu`` = barycentric coordinates of the entity's vertices):

* vertex:  ``mu_0``
* edge:    ``J_j^{2,2}`` scaled edge polynomial times ``mu_0 mu_1``, ``j <= p-2``
* face:    collapsed product with weights 2 times ``mu_0 mu_1 mu_2``, ``n1+n2 <= p-3``
* cell:    collapsed product with weights 2 times ``mu_0 mu_1 mu_2 mu_3``, ``|n| <= p-4``
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import entity_frame, identity_split, single_simplex, worsey_farin_split
from .orthopoly import collapsed_product, dim_poly, multi_indices, simplex_ortho_eval, \
    OrthoIndex, simplex_rule

FAMILIES = ("lagrange", "vlagrange", "hrot_tri", "hcurl_tet_wf", "hdiv_tet", "zhp_tet")

_E = "shared"
_B = "broken"


def _axes(d):
    return [(f"e{i}", _E) for i in range(d)]


def _family_rule(family, d, k):
    """Direction/continuity pairs for an attachment located in a macro entity of dim k."""
    if family == "lagrange":
        return [("scalar", _E)]
    if family == "vlagrange":
        return _axes(d)
    if family == "hrot_tri":
        return [("tau", _E), ("nu", _B)] if k == 1 else _axes(2)
    if family in ("zhp_tet", "hcurl_tet_wf"):
        return [("tau1", _E), ("tau2", _E), ("nu", _B)] if k == 2 else _axes(3)
    if family == "hdiv_tet":
        if k == 1:
            return [("nu1", _E), ("nu2", _E), ("tau", _B)]
        if k == 2:
            return [("nu", _E), ("tau1", _B), ("tau2", _B)]
        return _axes(3)
    raise ValueError(f"unknown element family {family!r}")


_FAMILY_DIM = {"hrot_tri": 2, "hcurl_tet_wf": 3, "hdiv_tet": 3, "zhp_tet": 3}
_MIN_DEGREE = {"lagrange": 1, "vlagrange": 1}


def profile_indices(k, p):
    """Profile indices for an entity of dimension k at degree p."""
    if k == 0:
        return [()]
    if k == 1:
        return [(j,) for j in range(p - 1)]
    if k == 2:
        return multi_indices(2, p - 3)
    return multi_indices(3, p - 4)


def eval_profile(profile, mu):
    """Profile value and its partials in ``mu`` (shape ``(npts, k+1)``)."""
    mu = np.atleast_2d(mu)
    k = mu.shape[1] - 1
    if k == 0:
        return mu[:, 0].copy(), np.ones_like(mu)
    val, grad = collapsed_product(mu, profile, (2,) * (k + 1))
    bub = np.prod(mu, axis=1)
    dbub = np.empty_like(mu)
    for i in range(k + 1):
        dbub[:, i] = np.prod(np.delete(mu, i, axis=1), axis=1)
    return val * bub, grad * bub[:, None] + val[:, None] * dbub


@dataclass(frozen=True)
class BasisFunction:
    entity: tuple  # sorted child-mesh vertex ids
    profile: tuple
    direction: str
    continuity: str
    side: int | None  # macro cell for broken functions
    location: tuple  # (dim, id) of the macro entity holding the attachment
    cell_dim: int = 3

    @property
    def kind(self):
        if len(self.entity) == self.cell_dim + 1:
            return "interior"
        return ("vertex", "edge", "face")[len(self.entity) - 1]


def direction_vector(split, bf):
    d = split.parent.dim
    if bf.direction == "scalar":
        return np.ones(1)
    if bf.direction[0] == "e":
        return np.eye(d)[int(bf.direction[1])]
    k, idx = bf.location
    fr = entity_frame(split.parent, k, idx)
    name = bf.direction
    if name in ("tau", "tau1"):
        return fr.tangents[0]
    if name == "tau2":
        return fr.tangents[1]
    if name in ("nu", "nu1"):
        return fr.normals[0]
    if name == "nu2":
        return fr.normals[1]
    raise ValueError(f"unknown direction {name!r}")


def enumerate_basis(split, family, p):
    """All global basis functions of ``family`` at degree ``p`` on ``split.child``."""
    child = split.child
    d = child.dim
    out = []
    for k in range(d + 1):
        profiles = profile_indices(k, p)
        if not profiles:
            continue
        for e, verts in enumerate(child.entities[k]):
            verts = tuple(int(v) for v in verts)
            loc = split.locate(verts)
            sides = sorted({int(split.cell_parent[c]) for c in child.entity_cells[k][e]})
            for direction, cont in _family_rule(family, d, loc[0]):
                for prof in profiles:
                    if cont == _E:
                        out.append(BasisFunction(verts, prof, direction, cont, None, loc, d))
                    else:
                        for s in sides:
                            out.append(BasisFunction(verts, prof, direction, cont, s, loc, d))
    return out


def supported(split, bf, c):
    cell = split.child.cells[c]
    if bf.side is not None and split.cell_parent[c] != bf.side:
        return None
    pos = np.searchsorted(cell, bf.entity)
    if np.any(pos >= len(cell)) or np.any(cell[np.minimum(pos, len(cell) - 1)] != bf.entity):
        return None
    return tuple(int(i) for i in pos)


@lru_cache(maxsize=None)
def reference_projection(d, p, pos, profile):
    """Coefficients of a profile in the orthonormal P_p basis of the reference cell."""
    rule = simplex_rule(d, 2 * p)
    val, _ = eval_profile(profile, rule.points[:, list(pos)])
    out = np.empty(dim_poly(d, p))
    for i, n in enumerate(multi_indices(d, p)):
        psi = simplex_ortho_eval(OrthoIndex(n, (0,) * (d + 1)), rule.points)
        out[i] = rule.integrate(val * psi)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ReferenceElement:
    """A family on its reference macro cell (single simplex or its Worsey-Farin split)."""

    family: str
    degree: int
    dim: int
    rank: int
    split_kind: str
    split: object
    basis: tuple

    def __len__(self):
        return len(self.basis)

    @property
    def n_cells(self):
        return len(self.split.child.cells)

    def count(self, kind=None, continuity=None):
        return sum(1 for b in self.basis
                   if (kind is None or b.kind == kind)
                   and (continuity is None or b.continuity == continuity))


def _build(family, d, p, split_kind="none"):
    lo = _MIN_DEGREE.get(family, 2)
    if p < lo:
        raise ValueError(f"{family} needs degree >= {lo}, got {p}")
    mesh = single_simplex(d)
    split = worsey_farin_split(mesh) if split_kind == "worsey-farin" else identity_split(mesh)
    rank = 1 if family == "lagrange" else d
    return ReferenceElement(family, p, d, rank, split_kind, split,
                            tuple(enumerate_basis(split, family, p)))


def build_hrot_tri(p):
    return _build("hrot_tri", 2, p)


def build_hdiv_tet(p):
    return _build("hdiv_tet", 3, p)


def build_hcurl_tet_wf(p):
    return _build("hcurl_tet_wf", 3, p, "worsey-farin")


def build_zhp_tet(p):
    return _build("zhp_tet", 3, p)


def build_lagrange(d, p, vector=False):
    return _build("vlagrange" if vector else "lagrange", d, p)


def build_element(family, p, d=None):
    if family in _FAMILY_DIM:
        return _build(family, _FAMILY_DIM[family], p,
                      "worsey-farin" if family == "hcurl_tet_wf" else "none")
    if d is None:
        raise ValueError(f"{family} needs an explicit dimension")
    return build_lagrange(d, p, vector=(family == "vlagrange"))


def evaluate(split, bf, c, lam, rank):
    """Value ``(npts, rank)`` and gradient ``(npts, rank, d)`` of one basis function on cell c."""
    lam = np.atleast_2d(lam)
    d = split.child.dim
    npts = len(lam)
    pos = supported(split, bf, c)
    if pos is None:
        return np.zeros((npts, rank)), np.zeros((npts, rank, d))
    val, dmu = eval_profile(bf.profile, lam[:, list(pos)])
    gx = dmu @ split.child.lambda_gradients[c][list(pos)]
    vec = direction_vector(split, bf)
    return val[:, None] * vec[None], vec[None, :, None] * gx[:, None, :]


def tabulate(elem, cell, points, what="value"):
    """Tabulate every basis function of ``elem`` on micro cell ``cell``.

    ``points`` are barycentric coordinates in that cell.  Returns an array
    indexed (function, point, component[, derivative direction]).
    """
    split = elem.split
    d = elem.dim
    rank = elem.rank
    if what == "div" and rank == 1:
        raise ValueError("divergence of a scalar element")
    if what == "curl" and rank == 1 and d == 3:
        raise ValueError("curl of a scalar element in 3D")
    if not 0 <= cell < elem.n_cells:
        raise ValueError(f"invalid cell {cell}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vals, grads = [], []
    for bf in elem.basis:
        v, g = evaluate(split, bf, cell, points, rank)
        vals.append(v)
        grads.append(g)
    V = np.array(vals)
    G = np.array(grads)  # (nf, npts, rank, d)
    if what == "value":
        return V
    if what == "grad":
        return G[:, :, 0, :] if rank == 1 else G
    if what == "div":
        return np.trace(G, axis1=2, axis2=3)[..., None]
    if what == "curl":
        if d == 2 and rank == 1:
            return np.stack([G[:, :, 0, 1], -G[:, :, 0, 0]], axis=-1)
        if d == 2:
            return (G[:, :, 1, 0] - G[:, :, 0, 1])[..., None]
        return np.stack([G[:, :, 2, 1] - G[:, :, 1, 2],
                         G[:, :, 0, 2] - G[:, :, 2, 0],
                         G[:, :, 1, 0] - G[:, :, 0, 1]], axis=-1)
    raise ValueError(f"unknown tabulation {what!r}")
