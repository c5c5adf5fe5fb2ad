import numpy as np
import pytest

from pdnfem.mesh import named_mesh, worsey_farin_split
from pdnfem.spaces import (BrokenSpace, RankDecisionError, audit_dimensions, build_broken,
                           constrained_space, constraint_matrix, continuity_spec,
                           corrected_dimension, glued_space, nullspace, printed_dimension)

SINGLE = (4, 6, 4, 1)


class TestBroken:
    def test_dims(self):
        assert build_broken(named_mesh("single-tet"), 1, 0).dim == 1
        wf = worsey_farin_split(named_mesh("single-tet")).child
        assert build_broken(wf, 3, 3).dim == 720
        assert build_broken(named_mesh("two-tri"), 1, 2).dim == 12

    def test_negative_degree(self):
        with pytest.raises(ValueError):
            build_broken(named_mesh("two-tri"), 1, -1)

    @pytest.mark.parametrize("d,p", [(2, 5), (3, 4)])
    def test_gram_identity(self, d, p):
        b = BrokenSpace(named_mesh("single-tri" if d == 2 else "single-tet"), 1, p)
        assert np.abs(b.gram() - np.eye(b.nb)).max() < 1e-10


class TestPrintedFormulas:
    def test_v0_p3(self):
        assert printed_dimension("V0", 3, *SINGLE) == 28

    def test_w0_p5(self):
        assert printed_dimension("W0", 5, *SINGLE) == 56

    def test_w1_p4(self):
        assert printed_dimension("W1", 4, *SINGLE) == 105

    def test_w2_printed_vs_corrected(self):
        assert printed_dimension("W2", 2, *SINGLE) == 24
        assert corrected_dimension("W2", 2, *SINGLE) == 30

    def test_v3(self):
        assert printed_dimension("V3", 0, *SINGLE) == 12

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            printed_dimension("V0", 2, *SINGLE)
        with pytest.raises(ValueError):
            printed_dimension("W0", 3, *SINGLE)
        with pytest.raises(ValueError):
            printed_dimension("Q1", 3, *SINGLE)


class TestConstrained:
    @pytest.mark.parametrize("tag,p,dim", [("V0", 3, 28), ("V1", 2, 105), ("V2", 1, 90),
                                           ("V3", 0, 12)])
    def test_v_spaces_single_tet(self, tag, p, dim):
        assert constrained_space(tag, p, named_mesh("single-tet")).dim == dim

    def test_invariants(self):
        mesh = named_mesh("two-tet")
        s = constrained_space("W1", 4, mesh)
        T = s.T
        assert np.abs(T.T @ T - np.eye(s.dim)).max() < 1e-12
        scaled = BrokenSpace(mesh.scaled(1 / mesh.diameter), 3, 4)
        C = constraint_matrix(scaled, s.split, s.spec)
        C = C / np.linalg.norm(C, axis=1, keepdims=True)
        assert np.abs(C @ T).max() <= 1e-9 * np.linalg.norm(C, 2)

    @pytest.mark.parametrize("tag,p", [("V0", 3), ("W2", 2), ("Y", 2)])
    def test_sampling_adequacy(self, tag, p):
        mesh = named_mesh("two-tri" if tag == "Y" else "two-tet")
        a = constrained_space(tag, p, mesh)
        b = constrained_space(tag, p, mesh, sample_factor=2)
        assert a.dim == b.dim

    def test_unknown_tag(self):
        with pytest.raises(ValueError):
            continuity_spec("V7", 3)


class TestAudit:
    def test_v0_match(self):
        r = audit_dimensions("V0", 3, named_mesh("single-tet"))
        assert (r.printed, r.computed, r.match) == (28, 28, True)

    def test_w2_mismatch(self):
        r = audit_dimensions("W2", 2, named_mesh("single-tet"))
        assert (r.printed, r.computed, r.corrected, r.match) == (24, 30, 30, False)

    def test_v3(self):
        r = audit_dimensions("V3", 0, named_mesh("single-tet"))
        assert r.printed == r.computed == 12
        assert set(r.as_dict()) >= {"tag", "p", "V", "E", "F", "T", "printed", "computed", "match"}


class TestNullspace:
    def test_basic(self):
        C = np.array([[1.0, 1.0, 0.0]])
        N, s, r = nullspace(C)
        assert r == 1 and N.shape == (3, 2)
        assert np.abs(C @ N).max() < 1e-14

    def test_ambiguous_rank(self):
        C = np.array([[1.0, 1.0], [1.0, 1.0 + 3e-9]])  # nearly parallel rows
        with pytest.raises(RankDecisionError):
            nullspace(C)
        N, _, r = nullspace(C, rtol=1e-12)
        assert r == 2 and N.shape == (2, 0)

    def test_empty(self):
        N, s, r = nullspace(np.zeros((0, 4)))
        assert r == 0 and np.array_equal(N, np.eye(4))


def _residual(g, tag):
    mesh = g.broken.mesh
    scaled = BrokenSpace(mesh.scaled(1 / mesh.diameter), g.rank, g.p)
    C = constraint_matrix(scaled, g.split, continuity_spec(tag, mesh.dim))
    C = C / np.linalg.norm(C, axis=1, keepdims=True)
    return np.abs(C @ g.T).max() / np.abs(g.T).max()


@pytest.mark.parametrize("glued,tag,mesh,p", [
    ("hrot", "Y", "two-tri", 2), ("hrot", "Y", "two-tri", 3),
    ("zh", "Z", "two-tet", 3), ("hdiv", "W2", "two-tet", 2), ("hdiv", "W2", "two-tet", 3),
    ("hcurl-wf", "V1", "single-tet", 2), ("hcurl-wf", "V1", "two-tet", 2),
    ("lagrange", "VL", "two-tet", 2),
])
def test_cross_pathway(glued, tag, mesh, p):
    m = named_mesh(mesh)
    g = glued_space(glued, p, m)
    c = constrained_space(tag, p, m)
    assert g.dim == c.dim == np.linalg.matrix_rank(g.T)
    assert _residual(g, tag) <= 1e-9


def test_glued_examples():
    assert glued_space("zh", 3, named_mesh("single-tet")).dim == 60
    g = glued_space("hrot", 2, named_mesh("two-tri"))
    # 2 per vertex, 1 tangential per edge, 1 normal per edge side
    assert g.dim == 2 * 4 + 5 + (4 * 1 + 1 * 2)
    table = g.dof_table()
    assert len(table) == g.dim


def test_glued_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        glued_space("hrot", 2, named_mesh("two-tet"))


def _contained(A, B, tol=1e-9):
    """Columns of A (orthonormal or not) lie in range(B) for orthonormal B."""
    R = A - B @ (B.T @ A)
    return np.abs(R).max() <= tol * max(1.0, np.abs(A).max())


@pytest.mark.parametrize("mesh,p", [("two-tri", 2), ("two-tet", 3)])
def test_nesting(mesh, p):
    m = named_mesh(mesh)
    mid = "Y" if m.dim == 2 else "Z"
    vl = constrained_space("VL", p, m).T
    yz = constrained_space(mid, p, m).T
    ned = constrained_space("NED2", p, m).T
    assert _contained(vl, yz) and _contained(yz, ned)
    assert vl.shape[1] < yz.shape[1] < ned.shape[1]
