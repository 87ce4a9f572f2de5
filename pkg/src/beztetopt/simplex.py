"""Bernstein, rational Bernstein and Lagrange bases on the reference tetrahedron.

Every basis is indexed by the multi-index ``(i, j, k, l)`` with
``i + j + k + l = p``.  The enumeration order is fixed once, here, and used by
every other module:

1. vertices ``(p,0,0,0), (0,p,0,0), (0,0,p,0), (0,0,0,p)``;
2. edge nodes, edge order ``(0,1), (1,2), (2,0), (0,3), (1,3), (2,3)``,
   nodes walked from the first vertex towards the second;
3. face-interior nodes, face ``f`` being the one opposite vertex ``f``
   (``f = 0..3``), nodes sorted by descending multi-index;
4. interior nodes, sorted by descending multi-index.

Barycentric coordinates relate to the parent coordinates by
``lambda_1 = 1 - xi - eta - zeta``, ``lambda_2 = xi``, ``lambda_3 = eta``,
``lambda_4 = zeta``; parametric derivatives below are taken with respect to
``(xi, eta, zeta)``.

Triangle (face) counterparts live here as well so face collocation and face
quadrature reuse the same conventions.
"""

from functools import lru_cache

import numpy as np

from .errors import InputError

EDGE_VERTEX_IDS = ((0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3))
FACE_VERTEX_IDS = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

TRI_EDGE_VERTEX_IDS = ((0, 1), (1, 2), (2, 0))

_LAMBDA_SUM_TOL = 1e-8


def n_basis(p):
    """Number of tetrahedral basis functions of degree p."""
    return (p + 1) * (p + 2) * (p + 3) // 6


def n_face_basis(p):
    """Number of triangular basis functions of degree p."""
    return (p + 1) * (p + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(p):
    """Multi-indices of degree ``p`` in canonical order, shape (n_f, 4)."""
    if p < 1:
        raise InputError(f"degree must be >= 1, got {p}")
    out = []
    for v in range(4):
        mi = [0, 0, 0, 0]
        mi[v] = p
        out.append(tuple(mi))
    for a, b in EDGE_VERTEX_IDS:
        for t in range(1, p):
            mi = [0, 0, 0, 0]
            mi[a] = p - t
            mi[b] = t
            out.append(tuple(mi))
    for f in range(4):
        a, b, c = FACE_VERTEX_IDS[f]
        face = []
        for ta in range(1, p - 1):
            for tb in range(1, p - ta):
                tc = p - ta - tb
                if tc < 1:
                    continue
                mi = [0, 0, 0, 0]
                mi[a], mi[b], mi[c] = ta, tb, tc
                face.append(tuple(mi))
        face.sort(reverse=True)
        out.extend(face)
    interior = []
    for i in range(1, p):
        for j in range(1, p - i):
            for k in range(1, p - i - j):
                l = p - i - j - k
                if l >= 1:
                    interior.append((i, j, k, l))
    interior.sort(reverse=True)
    out.extend(interior)
    arr = np.asarray(out, dtype=int)
    assert arr.shape == (n_basis(p), 4)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _index_lookup(p):
    return {tuple(mi): r for r, mi in enumerate(multi_indices(p))}


@lru_cache(maxsize=None)
def tri_multi_indices(p):
    """Triangle multi-indices of degree ``p`` in canonical order, shape (n, 3)."""
    out = []
    for v in range(3):
        mi = [0, 0, 0]
        mi[v] = p
        out.append(tuple(mi))
    for a, b in TRI_EDGE_VERTEX_IDS:
        for t in range(1, p):
            mi = [0, 0, 0]
            mi[a] = p - t
            mi[b] = t
            out.append(tuple(mi))
    interior = []
    for i in range(1, p):
        for j in range(1, p - i):
            k = p - i - j
            if k >= 1:
                interior.append((i, j, k))
    interior.sort(reverse=True)
    out.extend(interior)
    arr = np.asarray(out, dtype=int)
    arr.setflags(write=False)
    return arr


def lagrange_nodes(p):
    """Barycentric coordinates of the degree-p node lattice, shape (n_f, 4)."""
    return multi_indices(p).astype(float) / p


def tri_lagrange_nodes(p):
    return tri_multi_indices(p).astype(float) / p


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != 4:
        raise InputError(f"barycentric point must have 4 components, got shape {lam.shape}")
    s = lam.sum(axis=-1)
    if not np.all(np.abs(s - 1.0) < _LAMBDA_SUM_TOL):
        raise InputError("barycentric coordinates do not sum to 1")
    return lam


@lru_cache(maxsize=None)
def _multinomials(p, dim=4):
    mi = multi_indices(p) if dim == 4 else tri_multi_indices(p)
    from math import factorial

    coef = np.array(
        [factorial(p) / np.prod([factorial(int(e)) for e in row]) for row in mi]
    )
    coef.setflags(write=False)
    return coef


def _bernstein_values(mi, coef, lam):
    # lam (..., d), mi (n, d) -> (..., n)
    powers = lam[..., None, :] ** mi  # 0**0 == 1.0
    return coef * powers.prod(axis=-1)


def _bernstein_bary_grads(mi, coef, lam):
    """Derivatives w.r.t. each barycentric component, shape (..., n, d)."""
    n, d = mi.shape
    lamb = lam[..., None, :]
    powers = lamb ** mi  # (..., n, d)
    out = np.zeros(lam.shape[:-1] + (n, d))
    for m in range(d):
        red = np.maximum(mi[:, m] - 1, 0)
        pw_m = np.where(mi[:, m] > 0, lamb[..., m] ** red, 0.0)
        rest = np.ones(lam.shape[:-1] + (n,))
        for mm in range(d):
            if mm != m:
                rest = rest * powers[..., mm]
        out[..., m] = coef * mi[:, m] * pw_m * rest
    return out


def eval_bernstein(p, lam):
    """Bernstein basis values at barycentric point(s), shape (..., n_f)."""
    lam = _check_lambda(lam)
    return _bernstein_values(multi_indices(p), _multinomials(p), lam)


def eval_bernstein_grad(p, lam):
    """Parametric gradients dB/d(xi, eta, zeta), shape (..., n_f, 3).

    A derivative term whose reduced exponent would be negative contributes
    exactly zero.
    """
    lam = _check_lambda(lam)
    g = _bernstein_bary_grads(multi_indices(p), _multinomials(p), lam)
    return np.stack(
        [g[..., 1] - g[..., 0], g[..., 2] - g[..., 0], g[..., 3] - g[..., 0]],
        axis=-1,
    )


def eval_rational(p, lam, weights):
    """Rational Bernstein values and parametric gradients.

    Returns ``(values, grads)`` with shapes (..., n_f) and (..., n_f, 3).
    Weights must all be positive.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape[-1] != n_basis(p):
        raise InputError("weight vector does not match basis size")
    if np.any(weights <= 0):
        raise InputError("rational weights must be positive")
    B = eval_bernstein(p, lam)
    dB = eval_bernstein_grad(p, lam)
    Bw = B * weights
    W = Bw.sum(axis=-1)
    dBw = dB * weights[..., :, None]
    dW = dBw.sum(axis=-2)
    R = Bw / W[..., None]
    dR = dBw / W[..., None, None] - Bw[..., None] * dW[..., None, :] / (W**2)[..., None, None]
    return R, dR


def _lagrange_1d_table(p, x):
    """l_t(x) for t = 0..p; x has any shape, returns (p+1, *x.shape)."""
    x = np.asarray(x, dtype=float)
    table = [np.ones_like(x)]
    for t in range(1, p + 1):
        acc = np.ones_like(x)
        for r in range(t):
            acc = acc * (p * x - r) / (t - r)
        table.append(acc)
    return np.stack(table, axis=0)


def eval_lagrange(p, lam):
    """Lagrange basis values at barycentric point(s), shape (..., n_f)."""
    lam = _check_lambda(lam)
    mi = multi_indices(p)
    tables = [_lagrange_1d_table(p, lam[..., m]) for m in range(4)]
    vals = np.ones(lam.shape[:-1] + (len(mi),))
    for r, (i, j, k, l) in enumerate(mi):
        vals[..., r] = tables[0][i] * tables[1][j] * tables[2][k] * tables[3][l]
    return vals


def eval_tri_bernstein(p, mu):
    """Triangle Bernstein values at barycentric point(s) mu, shape (..., n)."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape[-1] != 3:
        raise InputError("triangle barycentric point must have 3 components")
    return _bernstein_values(tri_multi_indices(p), _multinomials(p, dim=3), mu)


def eval_tri_bernstein_grad(p, mu):
    """Triangle gradients w.r.t. the face parameters (a, b).

    The face parameterization is mu = (1 - a - b, a, b); returns (..., n, 2).
    """
    mu = np.asarray(mu, dtype=float)
    g = _bernstein_bary_grads(tri_multi_indices(p), _multinomials(p, dim=3), mu)
    return np.stack([g[..., 1] - g[..., 0], g[..., 2] - g[..., 0]], axis=-1)


@lru_cache(maxsize=None)
def collocation_matrix(p):
    """Bernstein values at the degree-p node lattice and its inverse."""
    A = eval_bernstein(p, lagrange_nodes(p))
    return A, np.linalg.inv(A)


@lru_cache(maxsize=None)
def tri_collocation_matrix(p):
    """Triangle Bernstein values at the face node lattice and its inverse."""
    A = eval_tri_bernstein(p, tri_lagrange_nodes(p))
    return A, np.linalg.inv(A)


def bezier_from_samples(p, samples):
    """Control net reproducing the Lagrange interpolant of lattice samples.

    ``samples`` holds one row per lattice node (canonical order) and may carry
    any number of columns (coordinates, homogeneous coordinates, fields).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != n_basis(p):
        raise InputError("sample count does not match the degree-p lattice")
    _, Ainv = collocation_matrix(p)
    return Ainv @ samples


@lru_cache(maxsize=None)
def face_node_ids(p, f):
    """Element-node indices of face ``f`` in canonical triangle order."""
    a, b, c = FACE_VERTEX_IDS[f]
    lookup = _index_lookup(p)
    ids = []
    for ta, tb, tc in tri_multi_indices(p):
        mi = [0, 0, 0, 0]
        mi[a], mi[b], mi[c] = int(ta), int(tb), int(tc)
        ids.append(lookup[tuple(mi)])
    arr = np.asarray(ids, dtype=int)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def edge_node_ids(p, a, b):
    """Element-node indices along edge (a, b), walked from vertex a to b."""
    lookup = _index_lookup(p)
    ids = []
    for t in range(p + 1):
        mi = [0, 0, 0, 0]
        mi[a] += p - t
        mi[b] += t
        ids.append(lookup[tuple(mi)])
    arr = np.asarray(ids, dtype=int)
    arr.setflags(write=False)
    return arr


def face_lambda(p, f, mu):
    """Embed triangle barycentric points of face ``f`` into tet coordinates."""
    mu = np.asarray(mu, dtype=float)
    a, b, c = FACE_VERTEX_IDS[f]
    lam = np.zeros(mu.shape[:-1] + (4,))
    lam[..., a] = mu[..., 0]
    lam[..., b] = mu[..., 1]
    lam[..., c] = mu[..., 2]
    return lam
