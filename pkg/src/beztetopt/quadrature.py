"""Gauss quadrature on the reference tetrahedron, triangle and unit segment.

Rules are conical products of Gauss-Jacobi formulas (Duffy transform), so a
rule requested at order ``q`` integrates every polynomial of total degree
``<= q`` exactly and all weights are positive.  Tetrahedron weights sum to the
reference volume 1/6, triangle weights to the reference area 1/2.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import InputError

_MAX_ORDER = 60


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric, (nq, 4) on tets / (nq, 3) on triangles
    weights: np.ndarray  # (nq,)
    order: int

    def __len__(self):
        return len(self.weights)


def _n_points(order):
    if not 0 <= order <= _MAX_ORDER:
        raise InputError(f"unsupported quadrature order {order}")
    return max(1, (order + 2) // 2)


def _mapped(roots_fn, n, *args):
    t, w = roots_fn(n, *args) if args else roots_fn(n)
    return (t + 1.0) / 2.0, w


@lru_cache(maxsize=None)
def tet_quadrature(order):
    """Conical-product rule on the reference tetrahedron."""
    n = _n_points(order)
    x1, w1 = _mapped(roots_jacobi, n, 2.0, 0.0)
    x2, w2 = _mapped(roots_jacobi, n, 1.0, 0.0)
    x3, w3 = _mapped(roots_legendre, n)
    X1, X2, X3 = np.meshgrid(x1, x2, x3, indexing="ij")
    W = np.einsum("i,j,k->ijk", w1 / 8.0, w2 / 4.0, w3 / 2.0)
    xi = X1
    eta = X2 * (1.0 - X1)
    zeta = X3 * (1.0 - X1) * (1.0 - X2)
    lam = np.stack([1.0 - xi - eta - zeta, xi, eta, zeta], axis=-1)
    pts = lam.reshape(-1, 4)
    wts = W.reshape(-1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, order)


@lru_cache(maxsize=None)
def tri_quadrature(order):
    """Conical-product rule on the reference triangle."""
    n = _n_points(order)
    x1, w1 = _mapped(roots_jacobi, n, 1.0, 0.0)
    x2, w2 = _mapped(roots_legendre, n)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    W = np.einsum("i,j->ij", w1 / 4.0, w2 / 2.0)
    a = X1
    b = X2 * (1.0 - X1)
    mu = np.stack([1.0 - a - b, a, b], axis=-1)
    pts = mu.reshape(-1, 3)
    wts = W.reshape(-1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, order)


@lru_cache(maxsize=None)
def line_quadrature(order):
    """Gauss-Legendre rule on [0, 1]; weights sum to 1."""
    n = _n_points(order)
    x, w = _mapped(roots_legendre, n)
    x.setflags(write=False)
    w = w / 2.0
    w.setflags(write=False)
    return QuadratureRule(x, w, order)
