"""Eigenvalue experiments, complex exactness checks and condition numbers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assembly import FORM_OPERATORS, BoundaryCondition, apply_bc, assemble_mass, assemble_stiffness, \
    broken_operator, derivative_matrix
from .mesh import build_structured_2d, build_structured_3d, named_mesh
from .spaces import RANK_GAP, RANK_RTOL, BrokenSpace, Clause, ContinuitySpec, RankDecisionError, \
    build_space, constrain, constrained_space, split_for

ZERO_RTOL = 1e-8
DD_TOL = 1e-10


class AnalysisError(RuntimeError):
    pass


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    threshold: float
    n_zero: int

    @property
    def retained(self):
        return self.eigenvalues[self.n_zero:]

    def __len__(self):
        return len(self.eigenvalues)


def solve_gevp(S, M, threshold=None, zero_rtol=ZERO_RTOL):
    """Full spectrum of ``S x = lambda M x`` for symmetric S and SPD M."""
    S = np.asarray(S, dtype=float)
    M = np.asarray(M, dtype=float)
    if S.shape != M.shape or S.shape[0] != S.shape[1]:
        raise AnalysisError(f"shape mismatch: S {S.shape}, M {M.shape}")
    S = 0.5 * (S + S.T)
    M = 0.5 * (M + M.T)
    try:
        scipy.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise AnalysisError("mass matrix is not symmetric positive definite") from None
    lam = scipy.linalg.eigh(S, M, eigvals_only=True)
    lam.sort()
    if threshold is None:
        threshold = zero_rtol * float(np.abs(lam).max(initial=0.0))
    n_zero = int(np.sum(np.abs(lam) <= threshold))
    return Spectrum(lam, float(threshold), n_zero)


def numerical_rank(A, rtol=RANK_RTOL, gap=RANK_GAP):
    """Rank with the same gap audit as the constraint nullspaces."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = scipy.linalg.svdvals(A)
    if s[0] == 0.0:
        return 0
    thr = rtol * s[0]
    band = s[(s > thr / gap) & (s < thr * gap)]
    if band.size:
        raise RankDecisionError(f"ambiguous rank: singular values {band} near {thr:.3e}")
    return int(np.sum(s > thr))


# --------------------------------------------------------------------------
# Maxwell eigenvalues


def exact_maxwell_spectrum(d, count, convention="table"):
    """Smallest ``count`` values of ``m^2+n^2(+l^2)`` over index tuples, with multiplicity.

    ``convention='table'`` counts every nonnegative index tuple except the zero
    tuple.  ``convention='physical'`` (3D only) keeps tuples with at most one
    zero index and counts two polarizations when all indices are positive.
    """
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    if count < 1:
        raise ValueError("count must be positive")
    if convention not in ("table", "physical"):
        raise ValueError(f"unknown convention {convention!r}")
    R = 1
    while True:
        vals = []
        for idx in itertools.product(range(R + 1), repeat=d):
            nz = sum(1 for v in idx if v)
            if nz == 0:
                continue
            mult = 1
            if convention == "physical" and d == 3:
                if nz < 2:
                    continue
                mult = 2 if nz == 3 else 1
            vals += [sum(v * v for v in idx)] * mult
        vals = sorted(v for v in vals if v <= R * R)
        if len(vals) >= count:
            return vals[:count]
        R += 1


# potential spaces whose gradients span the curl kernel of each Maxwell element
_POTENTIAL = {
    "hrot": lambda d: ContinuitySpec("potential", "scalar",
                                     clauses=(Clause(d - 1), Clause(0, 1))),
    "zh": lambda d: ContinuitySpec("potential", "scalar", clauses=(Clause(2), Clause(1, 1))),
    "lagrange": lambda d: ContinuitySpec("potential", "scalar", clauses=(Clause(d - 1, 1),)),
    "ned2": lambda d: ContinuitySpec("potential", "scalar", clauses=(Clause(d - 1),)),
}
_MAXWELL_SPACE = {"hrot": "hrot", "zh": "zh", "lagrange": "lagrange", "ned2": "NED2"}
_MAXWELL_DIMS = {"hrot": (2,), "zh": (3,), "lagrange": (2, 3), "ned2": (2, 3)}


@dataclass
class MaxwellResult:
    element: str
    p: int
    n: int
    d: int
    dim: int
    spectrum: Spectrum
    computed: list
    exact: list
    gradient_rank: int | None

    @property
    def relative_errors(self):
        return [abs(c - e) / e for c, e in zip(self.computed, self.exact)]

    @property
    def zero_modes_match(self):
        return self.gradient_rank is None or self.gradient_rank == self.spectrum.n_zero

    def rows(self):
        out = []
        for i, (e, c) in enumerate(itertools.zip_longest(self.exact, self.computed)):
            err = abs(c - e) / e if (c is not None and e is not None) else None
            out.append({"mode": i + 1, "exact": e, "computed": c, "rel_error": err})
        return out


def maxwell_mesh(d, n):
    hi = (math.pi,) * d
    if d == 2:
        return build_structured_2d(n, (0.0, 0.0), hi)
    return build_structured_3d(n, (0.0, 0.0, 0.0), hi)


def maxwell_experiment(element, p, n, d, count=10, zero_rtol=ZERO_RTOL, threshold=None,
                       convention="table", check_kernel=True, mesh=None):
    """Curl-curl eigenvalues with ``u x n = 0`` on ``(0, pi)^d``."""
    if element not in _MAXWELL_SPACE:
        raise ValueError(f"unknown Maxwell element {element!r}")
    if d not in _MAXWELL_DIMS[element]:
        raise ValueError(f"{element} is not available in {d}D")
    mesh = mesh or maxwell_mesh(d, n)
    bc = BoundaryCondition("tangential")
    space = apply_bc(build_space(_MAXWELL_SPACE[element], p, mesh), bc)
    M = assemble_mass(space).matrix
    S = assemble_stiffness(space, "curlcurl").matrix
    spec = solve_gevp(S, M, threshold=threshold, zero_rtol=zero_rtol)
    grank = None
    if check_kernel:
        pot = constrain(BrokenSpace(space.broken.mesh, 1, p + 1), _POTENTIAL[element](d),
                        space.split)
        pot = apply_bc(pot, BoundaryCondition("full"))
        grank = numerical_rank(derivative_matrix(pot, space, "grad").matrix)
    computed = [float(x) for x in spec.retained[:count]]
    exact = exact_maxwell_spectrum(d, count, convention)
    return MaxwellResult(element, p, n, d, space.dim, spec, computed, exact, grank)


# --------------------------------------------------------------------------
# exactness


_COMPLEXES = {
    "V": (3, (("V0", 0), ("V1", -1), ("V2", -2), ("V3", -3)), ("grad", "curl", "div")),
    "W": (3, (("W0", 3), ("W1", 2), ("W2", 1), ("W3", 0)), ("grad", "curl", "div")),
    "2D": (2, (("HERMITE", 1), ("Y", 0), ("DG", -1)), ("grad", "rot")),
}


@dataclass
class ExactnessReport:
    complex: str
    p: int
    tags: list
    degrees: list
    dims: list
    ranks: list
    kernels: list
    dd_norms: list
    alternating_sum: int
    checks: dict = field(default_factory=dict)  # name -> (ok, discrepancy)

    @property
    def ok(self):
        return all(ok for ok, _ in self.checks.values())


def complex_spaces(kind, p, mesh):
    if kind not in _COMPLEXES:
        raise ValueError(f"unknown complex {kind!r}")
    d, members, ops = _COMPLEXES[kind]
    if mesh.dim != d:
        raise ValueError(f"the {kind} complex lives on {d}D meshes")
    degrees = [p + s for _, s in members]
    if min(degrees) < 0:
        raise ValueError(f"degree {p} too low for the {kind} complex")
    spec_split = "worsey-farin" if kind == "V" else "none"
    split = split_for(mesh, spec_split)
    spaces = [constrained_space(t, q, mesh, split=split) for (t, _), q in zip(members, degrees)]
    return spaces, list(ops)


def exactness_check(kind, p, mesh):
    spaces, ops = complex_spaces(kind, p, mesh)
    D = [derivative_matrix(a, b, op).matrix for a, b, op in zip(spaces, spaces[1:], ops)]
    dims = [s.dim for s in spaces]
    ranks = [numerical_rank(x) for x in D]
    kernels = [dims[i] - ranks[i] for i in range(len(D))]
    dd = [float(np.abs(b @ a).max(initial=0.0)) for a, b in zip(D, D[1:])]
    alt = 1 + sum((-1) ** (i + 1) * n for i, n in enumerate(dims))
    checks = {}
    for i, v in enumerate(dd):
        checks[f"{ops[i + 1]}.{ops[i]}=0"] = (v <= DD_TOL, v)
    checks["ker(grad)=constants"] = (kernels[0] == 1, kernels[0] - 1)
    for i in range(1, len(D)):
        checks[f"ker({ops[i]})=ran({ops[i - 1]})"] = (kernels[i] == ranks[i - 1],
                                                     kernels[i] - ranks[i - 1])
    checks[f"{ops[-1]} onto"] = (ranks[-1] == dims[-1], ranks[-1] - dims[-1])
    for i in range(len(D)):
        checks[f"rank-nullity({ops[i]})"] = (ranks[i] + kernels[i] == dims[i], 0)
    checks["alternating sum"] = (alt == 0, alt)
    tags = [s.name for s in spaces]
    return ExactnessReport(kind, p, tags, [s.p for s in spaces], dims, ranks, kernels, dd, alt,
                           checks)


# --------------------------------------------------------------------------
# condition numbers


_CONDITION_FORM = {"hdiv": "divdiv", "hrot": "curlcurl", "zh": "curlcurl",
                   "hcurl-wf": "curlcurl", "scalar-lagrange": "gradgrad"}


@dataclass
class ConditionReport:
    tag: str
    p: int
    mesh: str
    dim: int
    kernel_dim: int
    kappa_M: float
    kappa_Mt: float
    kappa_S: float
    kappa_St: float

    def as_dict(self):
        return dict(self.__dict__)


def normalize(A):
    """``D^{-1/2} A D^{-1/2}`` with ``D = diag(A)``; zero diagonal entries are left alone."""
    A = np.asarray(A, dtype=float)
    d = np.diag(A).copy()
    d[d <= 0] = 1.0
    s = 1.0 / np.sqrt(d)
    return A * s[:, None] * s[None, :]


def condition_number(A, skip=0):
    """``lambda_max / lambda_min`` of a symmetric matrix, ignoring its ``skip`` smallest eigenvalues."""
    lam = scipy.linalg.eigvalsh(0.5 * (A + A.T))
    lam = lam[skip:]
    if lam.size == 0 or lam[0] <= 0:
        raise AnalysisError("matrix has no positive spectrum to measure")
    return float(lam[-1] / lam[0])


def condition_experiment(tag="hdiv", ps=range(3, 10), mesh="two-tet"):
    if tag not in _CONDITION_FORM:
        raise ValueError(f"no condition experiment for {tag!r}")
    m = named_mesh(mesh) if isinstance(mesh, str) else mesh
    label = mesh if isinstance(mesh, str) else f"mesh({len(m.cells)} cells)"
    form = _CONDITION_FORM[tag]
    out = []
    for p in ps:
        space = build_space(tag, p, m)
        M = assemble_mass(space).matrix
        G, _ = broken_operator(space.broken, FORM_OPERATORS[form])
        k = space.dim - numerical_rank(G @ space.T)
        S = assemble_stiffness(space, form).matrix
        out.append(ConditionReport(tag, p, label, space.dim, k,
                                   condition_number(M), condition_number(normalize(M)),
                                   condition_number(S, k), condition_number(normalize(S), k)))
    return out
