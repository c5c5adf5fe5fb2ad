import numpy as np
import pytest

from pdnfem.mesh import barycentric, identity_split, two_simplices, worsey_farin_split
from pdnfem.orthopoly import dim_poly, lattice, simplex_rule
from pdnfem.refelem import (build_element, build_hcurl_tet_wf, build_hdiv_tet, build_hrot_tri,
                            build_lagrange, build_zhp_tet, enumerate_basis, eval_profile,
                            evaluate, profile_indices, tabulate)

RNG = np.random.default_rng(7)


class TestCounts:
    def test_hrot_p2(self):
        e = build_hrot_tri(2)
        assert e.count("vertex") == 6
        assert e.count("edge", "shared") == 3 and e.count("edge", "broken") == 3
        assert e.count("interior") == 0 and len(e) == 12

    def test_hrot_p3_bubbles(self):
        assert build_hrot_tri(3).count("interior") == 2

    @pytest.mark.parametrize("p", [2, 3, 4, 5])
    def test_hrot_total(self, p):
        assert len(build_hrot_tri(p)) == 2 * dim_poly(2, p)

    def test_hdiv_p2(self):
        e = build_hdiv_tet(2)
        assert e.count("vertex") == 12
        assert e.count("edge", "shared") == 12 and e.count("edge", "broken") == 6
        assert e.count("face") == 0 and len(e) == 30

    def test_hdiv_p3_faces(self):
        e = build_hdiv_tet(3)
        assert e.count("face", "shared") == 4 and e.count("face", "broken") == 8

    def test_zhp_p3(self):
        e = build_zhp_tet(3)
        assert (e.count("vertex"), e.count("edge"), e.count("face")) == (12, 36, 12)
        assert len(e) == 60

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_3d_totals(self, p):
        assert len(build_hdiv_tet(p)) == 3 * dim_poly(3, p)
        assert len(build_zhp_tet(p)) == 3 * dim_poly(3, p)

    def test_wf_face_normal_count(self):
        e = build_hcurl_tet_wf(2)
        split = e.split
        per_face = {}
        for b in e.basis:
            if b.direction == "nu":
                per_face[b.location] = per_face.get(b.location, 0) + 1
        assert sorted(per_face.values()) == [4, 4, 4, 4]
        assert split.parent.num(2) == 4

    def test_lagrange(self):
        assert len(build_lagrange(2, 1)) == 3
        assert len(build_lagrange(2, 2)) == 6
        assert len(build_lagrange(3, 3)) == 20
        pts = RNG.dirichlet(np.ones(3), 5)
        assert np.allclose(tabulate(build_lagrange(2, 1), 0, pts).sum(axis=0), 1.0)

    @pytest.mark.parametrize("builder", [build_hrot_tri, build_hdiv_tet, build_hcurl_tet_wf,
                                         build_zhp_tet])
    def test_low_degree_rejected(self, builder):
        with pytest.raises(ValueError):
            builder(1)

    def test_lagrange_degree_zero_rejected(self):
        with pytest.raises(ValueError):
            build_lagrange(2, 0)


def local_rank(elem, cell):
    p = elem.degree
    pts = lattice(elem.dim, p)
    V = tabulate(elem, cell, pts).reshape(len(elem), -1)
    return np.linalg.matrix_rank(V, tol=1e-10 * np.abs(V).max())


@pytest.mark.parametrize("family,dim,ps", [
    ("hrot_tri", 2, range(2, 6)), ("hdiv_tet", 3, range(2, 6)), ("zhp_tet", 3, range(2, 6)),
    ("lagrange", 2, range(1, 6)), ("vlagrange", 3, range(1, 5)),
])
def test_local_completeness(family, dim, ps):
    for p in ps:
        elem = build_element(family, p, dim)
        assert local_rank(elem, 0) == elem.rank * dim_poly(dim, p)


@pytest.mark.parametrize("p", [2, 3])
def test_wf_local_completeness(p):
    elem = build_hcurl_tet_wf(p)
    for c in range(elem.n_cells):
        assert local_rank(elem, c) == 3 * dim_poly(3, p)


def test_wf_count_matches_c0_vectors():
    from pdnfem.spaces import ContinuitySpec, Clause, constrain, BrokenSpace
    elem = build_hcurl_tet_wf(2)
    split = elem.split
    spec = ContinuitySpec("c0", "scalar", "worsey-farin", (Clause(2, 0, "full", "micro"),))
    scalar = constrain(BrokenSpace(split.child, 1, 2), spec, split)
    assert len(elem) == 3 * scalar.dim


def test_vertex_hat_at_vertex():
    e = build_hdiv_tet(2)
    f = next(i for i, b in enumerate(e.basis) if b.kind == "vertex" and b.entity == (0,)
             and b.direction == "e1")
    v = tabulate(e, 0, np.eye(4)[[0]])
    assert np.allclose(v[f, 0], [0, 1, 0])


def test_bubble_vanishes_on_faces():
    e = build_hcurl_tet_wf(4)
    child = e.split.child
    for i, b in enumerate(e.basis):
        if b.kind != "interior":
            continue
        c = next(c for c in range(e.n_cells) if set(b.entity) == set(child.cells[c]))
        lam = RNG.dirichlet(np.ones(3), 6)
        pts = np.hstack([lam, np.zeros((6, 1))])
        assert np.abs(tabulate(e, c, pts)[i]).max() < 1e-12


def test_shared_functions_vanish_on_other_edges():
    e = build_hrot_tri(4)
    t = np.linspace(0.05, 0.95, 7)
    for i, b in enumerate(e.basis):
        if b.kind != "edge":
            continue
        for other in [(0, 1), (0, 2), (1, 2)]:
            if other == b.entity:
                continue
            pts = np.zeros((7, 3))
            pts[:, other[0]], pts[:, other[1]] = t, 1 - t
            assert np.abs(tabulate(e, 0, pts)[i]).max() < 1e-12


# ---------------------------------------------------------------- trace conformity

TRACE = {"hrot_tri": "tangential", "zhp_tet": "tangential", "hcurl_tet_wf": "tangential",
         "hdiv_tet": "normal", "vlagrange": "full"}


@pytest.mark.parametrize("family,p", [("hrot_tri", 3), ("zhp_tet", 4), ("hdiv_tet", 3),
                                      ("hcurl_tet_wf", 3), ("vlagrange", 2)])
def test_shared_traces_agree(family, p):
    d = 2 if family == "hrot_tri" else 3
    mesh = two_simplices(d)
    split = worsey_farin_split(mesh) if family == "hcurl_tet_wf" else identity_split(mesh)
    child = split.child
    basis = enumerate_basis(split, family, p)
    shared_macro = tuple(range(1, d + 1))
    corners = mesh.vertices[list(shared_macro)]
    lam = RNG.dirichlet(np.ones(d), 20)
    X = lam @ corners
    n = np.cross(*(corners[1:] - corners[0])) if d == 3 else \
        np.array([corners[1, 1] - corners[0, 1], corners[0, 0] - corners[1, 0]])
    n = n / np.linalg.norm(n)
    worst = 0.0
    for x in X:
        # the two child cells (one per macro side) containing x
        cells = []
        for c in range(len(child.cells)):
            l = barycentric(child, c, x)
            if l.min() > -1e-12:
                cells.append((c, l))
        sides = {int(split.cell_parent[c]): (c, l) for c, l in cells}
        assert len(sides) == 2
        (c0, l0), (c1, l1) = sides[0], sides[1]
        for b in basis:
            if b.continuity != "shared":
                continue
            v0 = evaluate(split, b, c0, l0, d)[0][0]
            v1 = evaluate(split, b, c1, l1, d)[0][0]
            jump = v0 - v1
            if TRACE[family] == "tangential":
                jump = jump - np.dot(jump, n) * n
            elif TRACE[family] == "normal":
                jump = np.dot(jump, n)
            worst = max(worst, float(np.abs(jump).max()))
    assert worst < 1e-10


# ---------------------------------------------------------------- orthogonality


def rel_offdiag(G):
    s = np.sqrt(np.diag(G))
    R = G / np.outer(s, s)
    return np.abs(R - np.diag(np.diag(R))).max()


@pytest.mark.parametrize("k,p", [(1, 9), (2, 9), (3, 9)])
def test_profile_family_gram_diagonal(k, p):
    profs = profile_indices(k, p)
    assert len(profs) > 1
    rule = simplex_rule(k, 2 * p)
    V = np.array([eval_profile(pr, rule.points)[0] for pr in profs])
    G = (V * rule.weights) @ V.T
    assert rel_offdiag(G) < 1e-10


def test_tabulate_grad_fd():
    e = build_zhp_tet(4)
    child = e.split.child
    lam = RNG.dirichlet(np.ones(4), 3)
    x = lam @ child.vertices[child.cells[0]]
    G = tabulate(e, 0, lam, "grad")  # (nf, npts, 3, 3)
    h = 1e-6
    for j in range(3):
        dx = np.zeros(3)
        dx[j] = h
        fp = tabulate(e, 0, barycentric(child, 0, x + dx))
        fm = tabulate(e, 0, barycentric(child, 0, x - dx))
        fd = (fp - fm) / (2 * h)
        scale = max(np.abs(fd).max(), 1.0)
        assert np.abs(G[..., j] - fd).max() <= 1e-6 * scale


def test_curl_of_gradient_vanishes():
    scalar = build_lagrange(3, 4)
    vec = build_zhp_tet(3)
    pts = lattice(3, 3)
    coef = RNG.standard_normal(len(scalar))
    g = np.einsum("f,fpx->px", coef, tabulate(scalar, 0, pts, "grad"))
    V = tabulate(vec, 0, pts).reshape(len(vec), -1)
    a = np.linalg.lstsq(V.T, g.reshape(-1), rcond=None)[0]
    assert np.abs(V.T @ a - g.reshape(-1)).max() < 1e-10
    test_pts = RNG.dirichlet(np.ones(4), 10)
    curl = np.einsum("f,fpc->pc", a, tabulate(vec, 0, test_pts, "curl"))
    assert np.abs(curl).max() < 1e-10 * max(1.0, np.abs(a).max())


def test_div_and_rank_mismatch():
    with pytest.raises(ValueError):
        tabulate(build_lagrange(3, 2), 0, [[0.25] * 4], "curl")
    with pytest.raises(ValueError):
        tabulate(build_lagrange(2, 2), 0, [[1 / 3] * 3], "div")
    with pytest.raises(ValueError):
        tabulate(build_hdiv_tet(2), 5, [[0.25] * 4])
    d = tabulate(build_hdiv_tet(2), 0, [[0.25] * 4], "div")
    assert d.shape == (30, 1, 1)
