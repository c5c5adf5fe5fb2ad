"""Jacobi polynomials, orthogonal polynomials on simplices and simplex quadrature.

All polynomials on a simplex are written in barycentric coordinates.  The
collapsed (Dubiner-type) products are evaluated in homogeneous form, i.e. every
factor ``J_n((u/s)) * s**n`` is expanded as a polynomial in ``(u, s)``, so the
formulas stay finite on the collapsed vertices and the partial derivatives with
respect to each barycentric coordinate are well defined.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import factorial, lgamma, exp, log

import numpy as np
from scipy.special import roots_jacobi

MAX_QUADRATURE_DEGREE = 30


@dataclass(frozen=True)
class JacobiParams:
    n: int
    alpha: int = 0
    beta: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("Jacobi degree must be nonnegative")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("Jacobi weights must be nonnegative")


@dataclass(frozen=True)
class OrthoIndex:
    """Degree multi-index ``n`` (length d) and weight multi-index ``alpha`` (length d+1)."""

    n: tuple
    alpha: tuple

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "alpha", tuple(int(v) for v in self.alpha))
        if len(self.alpha) != len(self.n) + 1:
            raise ValueError("weight multi-index must have one more entry than the degree index")
        if min(self.n + self.alpha, default=0) < 0:
            raise ValueError("multi-indices must be nonnegative")

    @property
    def d(self):
        return len(self.n)

    @property
    def degree(self):
        return sum(self.n)


def scaled_jacobi(n, a, b, u, s):
    """Return ``s**n J_n^{a,b}(u/s)`` together with its partials in ``u`` and ``s``.

    Uses the homogenized three-term recurrence, so ``s = 0`` is harmless.
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    shape = np.broadcast(u, s).shape
    u = np.broadcast_to(u, shape)
    s = np.broadcast_to(s, shape)
    p0 = np.ones(shape)
    du0 = np.zeros(shape)
    ds0 = np.zeros(shape)
    if n == 0:
        return p0, du0, ds0
    p1 = 0.5 * ((a + b + 2) * u + (a - b) * s)
    du1 = np.full(shape, 0.5 * (a + b + 2))
    ds1 = np.full(shape, 0.5 * (a - b))
    for k in range(1, n):
        c = 2 * k + a + b
        A = 2.0 * (k + 1) * (k + a + b + 1) * c
        B = (c + 1.0) * (c + 2) * c
        C = (c + 1.0) * (a * a - b * b)
        D = 2.0 * (k + a) * (k + b) * (c + 2)
        lin = B * u + C * s
        p2 = (lin * p1 - D * s * s * p0) / A
        du2 = (B * p1 + lin * du1 - D * s * s * du0) / A
        ds2 = (C * p1 + lin * ds1 - D * (2 * s * p0 + s * s * ds0)) / A
        p0, du0, ds0 = p1, du1, ds1
        p1, du1, ds1 = p2, du2, ds2
    return p1, du1, ds1


def jacobi_eval(params, x):
    """Value of the Jacobi polynomial ``J_n^{alpha,beta}`` at ``x``."""
    return scaled_jacobi(params.n, params.alpha, params.beta, x, 1.0)[0]


def jacobi_deriv(params, x):
    """First derivative of ``J_n^{alpha,beta}`` at ``x``."""
    return scaled_jacobi(params.n, params.alpha, params.beta, x, 1.0)[1]


def jacobi_norm(params):
    """Return ``(gamma, c)``: the squared weighted norm on [-1, 1] and on [0, 1]."""
    n, a, b = params.n, params.alpha, params.beta
    lg =((a + b + 1) * log(2.0) - log(2 * n + a + b + 1)
          + lgamma(n + a + 1) + lgamma(n + b + 1)
          - lgamma(n + a + b + 1) - lgamma(n + 1))
    gamma = exp(lg)
    return gamma, 2.0 ** (-a - b - 1) * gamma


def collapsed_product(mu, n, alpha):
    """Homogeneous collapsed Jacobi product and its barycentric gradient.

    ``mu`` has shape ``(npts, k+1)``; ``n`` has length ``k`` and ``alpha``
    length ``k+1``.  Factor ``j`` is ``J_{n_j}^{a_j, alpha_j}`` evaluated at
    ``(mu_j - sum_{i>j} mu_i) / sum_{i>=j} mu_i`` and scaled by
    ``(sum_{i>=j} mu_i)**n_j`` with
    ``a_j = 2 sum_{i>j} n_i + sum_{i>j} alpha_i + k - j - 1``.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    npts, k1 = mu.shape
    k = k1 - 1
    if len(n) != k or len(alpha) != k1:
        raise ValueError("index lengths do not match the number of barycentric coordinates")
    val = np.ones(npts)
    grad = np.zeros((npts, k1))
    for j in range(k):
        a = 2 * sum(n[j + 1:]) + sum(alpha[j + 1:]) + k - j - 1
        b = alpha[j]
        tail = mu[:, j + 1:].sum(axis=1)
        u = mu[:, j] - tail
        s = mu[:, j] + tail
        P, Pu, Ps = scaled_jacobi(n[j], a, b, u, s)
        dP = np.zeros((npts, k1))
        dP[:, j] = Pu + Ps
        dP[:, j + 1:] = (Ps - Pu)[:, None]
        grad = grad * P[:, None] + val[:, None] * dP
        val = val * P
    return val, grad


def multi_indices(d, degree):
    """All degree multi-indices of length ``d`` with ``|n| <= degree``, graded order."""
    out = []
    for total in range(degree + 1):
        for n in itertools.product(range(total + 1), repeat=d):
            if sum(n) == total:
                out.append(n)
    # graded, then reverse-lexicographic so n=(total,0,..) comes first
    out.sort(key=lambda n: (sum(n), tuple(-v for v in n)))
    return out


def dim_poly(d, p):
    """Dimension of the polynomials of degree <= p in d variables."""
    if p < 0:
        return 0
    return factorial(p + d) // (factorial(p) * factorial(d))


def reference_volume(d):
    return 1.0 / factorial(d)


@dataclass(frozen=True)
class QuadratureRule:
    d: int
    points: np.ndarray  # barycentric, shape (npts, d+1)
    weights: np.ndarray
    exact_degree: int

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


def _gauss_jacobi01(m, alpha):
    """Gauss-Jacobi on [0, 1] for the weight (1-t)**alpha."""
    x, w = roots_jacobi(m, alpha, 0.0)
    return 0.5 * (x + 1.0), w * 2.0 ** (-alpha - 1)


@lru_cache(maxsize=None)
def simplex_rule(d, degree):
    """Collapsed-coordinate Gauss-Jacobi rule on the reference d-simplex.

    The reference simplex has volume ``1/d!``; points are returned in
    barycentric coordinates ``(lambda_0, ..., lambda_d)``.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"unsupported simplex dimension {d}")
    if degree < 0 or degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    m = degree // 2 + 1
    rules = [_gauss_jacobi01(m, d - 1 - i) for i in range(d)]
    pts = []
    wts = []
    for combo in itertools.product(*[range(m)] * d):
        rest = 1.0
        lam = []
        w = 1.0
        for i, q in enumerate(combo):
            t, wt = rules[i][0][q], rules[i][1][q]
            lam.append(rest * t)
            rest = rest * (1.0 - t)
            w *= wt
        lam.append(rest)
        pts.append(lam)
        wts.append(w)
    points = np.array(pts)
    weights = np.array(wts)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(d, points, weights, degree)


@lru_cache(maxsize=None)
def _ortho_scale(n, alpha):
    d = len(n)
    rule = simplex_rule(d, min(2 * sum(n) + sum(alpha), MAX_QUADRATURE_DEGREE))
    val, _ = collapsed_product(rule.points, n, alpha)
    weight = np.prod(rule.points ** np.array(alpha, dtype=float), axis=1)
    return 1.0 / np.sqrt(rule.integrate(val * val * weight))


def simplex_ortho_eval(index, lam, grad=False):
    """Orthonormal simplex polynomial for the weight ``prod lambda_i**alpha_i``.

    ``lam`` holds barycentric points of shape ``(npts, d+1)``.  With
    ``grad=True`` the partial derivatives with respect to each of the ``d+1``
    barycentric coordinates of the homogeneous extension are returned too.
    """
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    if lam.shape[1] != index.d + 1:
        raise ValueError(
            f"index of dimension {index.d} evaluated at points with {lam.shape[1]} coordinates")
    val, g = collapsed_product(lam, index.n, index.alpha)
    c = _ortho_scale(index.n, index.alpha)
    if grad:
        return c * val, c * g
    return c * val


def scaled_edge_poly(j, alpha2, alpha1, lam1, lam2):
    """``J_j^{alpha2,alpha1}((lam1-lam2)/(lam1+lam2)) (lam1+lam2)**j`` as a polynomial."""
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    return scaled_jacobi(j, alpha2, alpha1, lam1 - lam2, lam1 + lam2)[0]


def lattice(k, m):
    """Principal lattice of degree ``m`` on a k-simplex, barycentric, shape (npts, k+1)."""
    if k == 0 or m == 0:
        if k == 0:
            return np.ones((1, 1))
        return np.full((1, k + 1), 1.0 / (k + 1))
    pts = []
    for idx in itertools.product(range(m + 1), repeat=k):
        if sum(idx) <= m:
            pts.append(list(idx) + [m - sum(idx)])
    return np.array(pts, dtype=float) / m
