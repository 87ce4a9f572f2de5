"""Element matrices, assembly, boundary conditions, solves and quantities.

Strain/stress bookkeeping uses Voigt order (xx, yy, zz, xy, yz, xz) with
engineering shear, matching the displacement-gradient matrix layout used for
the stiffness integrand.  Quadrature orders: ``2p`` for polynomial-geometry
stiffness, ``2p + 2`` for rational elements and all volume/error integrals.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import simplex
from .errors import InputError, MeshValidityError, NumericalError
from .mesh import BEZIER, element_basis, jacobians, volume_rule_order
from .quadrature import line_quadrature, tri_quadrature

DIRECT_SOLVE_MAX_DOFS = 200_000
_CHUNK = 256


@dataclass(frozen=True)
class Material:
    E: float
    nu: float

    def __post_init__(self):
        if not -1.0 < self.nu < 0.5:
            raise InputError(f"Poisson ratio {self.nu} outside (-1, 0.5)")

    @cached_property
    def C(self):
        lam = self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))
        mu = self.E / (2 * (1 + self.nu))
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] += 2 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        C.setflags(write=False)
        return C

    @cached_property
    def mu(self):
        return self.E / (2 * (1 + self.nu))


def is_rational(mesh, elems=None):
    elems = slice(None) if elems is None else elems
    if mesh.kind != BEZIER:
        return False
    return not np.allclose(mesh.weights[mesh.elements[elems]], 1.0, atol=1e-14)


def stiffness_order(mesh):
    return 2 * mesh.p + 2 if is_rational(mesh) else 2 * mesh.p


def physical_gradients(mesh, order, elems=None):
    """Basis values, physical gradients, J, detJ at quadrature points.

    Returns ``(rule, vals, gradx, J, Jinv, detJ)`` with gradx (nE, nq, n_f, 3).
    """
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    rule, vals, grads = element_basis(mesh, order, elems)
    P = mesh.points[mesh.elements[elems]]
    J = np.einsum("eqna,enm->eqam", grads, P)
    detJ = np.linalg.det(J)
    if detJ.min() <= 0:
        raise MeshValidityError(f"non-positive Jacobian (min {detJ.min():.3e})")
    Jinv = np.linalg.inv(J)
    gradx = np.einsum("eqma,eqna->eqnm", Jinv, grads)
    return rule, vals, gradx, J, Jinv, detJ


def strain_matrix(gradx):
    """Voigt displacement-gradient matrices B (nE, nq, 6, 3 n_f)."""
    nE, nq, nf, _ = gradx.shape
    B = np.zeros((nE, nq, 6, 3 * nf))
    gx, gy, gz = gradx[..., 0], gradx[..., 1], gradx[..., 2]
    B[:, :, 0, 0::3] = gx
    B[:, :, 1, 1::3] = gy
    B[:, :, 2, 2::3] = gz
    B[:, :, 3, 0::3] = gy
    B[:, :, 3, 1::3] = gx
    B[:, :, 4, 1::3] = gz
    B[:, :, 4, 2::3] = gy
    B[:, :, 5, 0::3] = gz
    B[:, :, 5, 2::3] = gx
    return B


def element_stiffness_elasticity(mesh, material, elems=None, order=None, with_jacobian=True):
    """Elasticity element matrices for a batch of elements, (nE, 3n, 3n).

    ``with_jacobian=False`` drops the |J| factor (pseudo-elastic mesh update).
    """
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    order = stiffness_order(mesh) if order is None else order
    rule, _, gradx, _, _, detJ = physical_gradients(mesh, order, elems)
    B = strain_matrix(gradx)
    scale = detJ * rule.weights if with_jacobian else np.broadcast_to(
        rule.weights, detJ.shape
    )
    return np.einsum("eqai,ab,eqbj,eq->eij", B, material.C, B, scale, optimize=True)


def element_matrix_laplace(mesh, elems=None, order=None):
    """Laplace element matrices (n_f x n_f) for the weight-smoothing solve."""
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    order = volume_rule_order(mesh.p) if order is None else order
    rule, _, gradx, _, _, detJ = physical_gradients(mesh, order, elems)
    return np.einsum("eqnm,eqkm,eq,q->enk", gradx, gradx, detJ, rule.weights, optimize=True)


def assemble_coo(rows, cols, vals, n):
    """Deterministic assembly: equal (row, col) entries are summed in value
    order, so the result is bitwise independent of element ordering."""
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows.astype(np.int64) * n + cols
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    starts = np.flatnonzero(first)
    summed = np.add.reduceat(vals, starts)
    return sp.csr_matrix((summed, (rows[starts], cols[starts])), shape=(n, n))


def _element_dofs(conn, ndof):
    if ndof == 1:
        return conn
    return (conn[:, :, None] * ndof + np.arange(ndof)).reshape(len(conn), -1)


def assemble(mesh, element_matrix_fn, ndof, chunk=_CHUNK):
    """Assemble a global sparse symmetric matrix from per-element batches.

    ``element_matrix_fn(elems)`` returns the (nE, k, k) batch for the listed
    elements.  The reduction is deterministic and independent of chunking.
    """
    n = mesh.n_nodes * ndof
    rows, cols, vals = [], [], []
    for start in range(0, mesh.n_elements, chunk):
        elems = np.arange(start, min(start + chunk, mesh.n_elements))
        Ke = element_matrix_fn(elems)
        dofs = _element_dofs(mesh.elements[elems], ndof)
        k = dofs.shape[1]
        r = np.repeat(dofs, k, axis=1).ravel()
        c = np.tile(dofs, (1, k)).ravel()
        rows.append(r)
        cols.append(c)
        vals.append(Ke.ravel())
    return assemble_coo(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n
    )


def assemble_stiffness(mesh, material):
    return assemble(mesh, lambda el: element_stiffness_elasticity(mesh, material, el), 3)


def assemble_laplace(mesh):
    return assemble(mesh, lambda el: element_matrix_laplace(mesh, el), 1)


# ---------------------------------------------------------------------------
# boundary faces: geometry, tractions


def face_geometry(mesh, bf, mu):
    """Face point(s), tangents and area elements at triangle coordinates."""
    mu = np.atleast_2d(mu)
    pts = mesh.points[bf.nodes]
    w = mesh.weights[bf.nodes]
    vals = simplex.eval_tri_bernstein(mesh.p, mu)
    dval = simplex.eval_tri_bernstein_grad(mesh.p, mu)
    if mesh.kind == BEZIER:
        if np.allclose(w, 1.0, atol=1e-14):
            R, dR = vals, dval
        else:
            Bw = vals * w
            W = Bw.sum(axis=-1)
            dBw = dval * w[:, None]
            dW = dBw.sum(axis=-2)
            R = Bw / W[:, None]
            dR = dBw / W[:, None, None] - Bw[..., None] * dW[:, None, :] / (
                W**2
            )[:, None, None]
    else:
        # nodal face geometry evaluated through its Bernstein net
        _, Ainv = simplex.tri_collocation_matrix(mesh.p)
        R = np.einsum("qn,nm->qm", vals, Ainv)
        dR = np.einsum("qnd,nm->qmd", dval, Ainv)
    x = R @ pts
    T = np.einsum("qnd,nm->qdm", dR, pts)  # (nq, 2, 3)
    nvec = np.cross(T[:, 0], T[:, 1]) * bf.outward
    dA = np.linalg.norm(nvec, axis=1)
    return x, R, nvec, dA


def traction_load(mesh, sid, t_vec, order=None):
    """Consistent load vector for a constant traction on a tagged surface."""
    t_vec = np.asarray(t_vec, dtype=float)
    order = volume_rule_order(mesh.p) if order is None else order
    rule = tri_quadrature(order)
    F = np.zeros(3 * mesh.n_nodes)
    found = False
    for bf in mesh.boundary_faces:
        if bf.sid != sid:
            continue
        found = True
        _, R, _, dA = face_geometry(mesh, bf, rule.points)
        contrib = np.einsum("q,qn,c->nc", rule.weights * dA, R, t_vec)
        np.add.at(F.reshape(-1, 3), bf.nodes, contrib)
    if not found:
        raise InputError(f"no boundary faces tagged with surface {sid}")
    return F


def pressure_load(mesh, sid, magnitude, order=None):
    """Load from pressure p acting against the outward normal (compressive p>0)."""
    order = volume_rule_order(mesh.p) if order is None else order
    rule = tri_quadrature(order)
    F = np.zeros(3 * mesh.n_nodes)
    found = False
    for bf in mesh.boundary_faces:
        if bf.sid != sid:
            continue
        found = True
        _, R, nvec, _ = face_geometry(mesh, bf, rule.points)
        contrib = np.einsum("q,qn,qc->nc", -magnitude * rule.weights, R, nvec)
        np.add.at(F.reshape(-1, 3), bf.nodes, contrib)
    if not found:
        raise InputError(f"no boundary faces tagged with surface {sid}")
    return F


def boundary_edges(mesh, selector, tol=1e-9):
    """Boundary element edges whose full node chains satisfy ``selector``.

    Returns a list of node-id arrays (p + 1 each), deduplicated, walked in
    canonical order.  On Bezier meshes the geometric chain is tested at the
    Lagrange lattice of the edge.
    """
    found = {}
    p = mesh.p
    for bf in mesh.boundary_faces:
        elem_nodes = mesh.elements[bf.elem]
        a, b, c = simplex.FACE_VERTEX_IDS[bf.local_face]
        for va, vb in ((a, b), (b, c), (c, a)):
            ids = elem_nodes[simplex.edge_node_ids(p, va, vb)]
            key = tuple(sorted((int(ids[0]), int(ids[-1]))))
            if key in found:
                continue
            ts = np.linspace(0, 1, p + 1)[:, None]
            lam = np.zeros((p + 1, 4))
            lam[:, va] = (1 - ts)[:, 0]
            lam[:, vb] = ts[:, 0]
            from .mesh import eval_element

            pts = eval_element(mesh, bf.elem, lam)
            if all(selector(x) for x in pts):
                found[key] = ids
    return list(found.values())


def edge_load(mesh, edges, t_per_length, order=None):
    """Consistent load for a constant line traction along element edges."""
    t = np.asarray(t_per_length, dtype=float)
    order = volume_rule_order(mesh.p) if order is None else order
    rule = line_quadrature(order)
    F = np.zeros(3 * mesh.n_nodes)
    p = mesh.p
    for ids in edges:
        cps = mesh.points[ids]
        w = mesh.weights[ids]
        tq = rule.points
        mi = np.arange(p + 1)
        from math import comb

        coef = np.array([comb(p, int(i)) for i in mi])
        B = coef * tq[:, None] ** mi * (1 - tq[:, None]) ** (p - mi)
        dB = coef * (
            mi * tq[:, None] ** np.maximum(mi - 1, 0) * (1 - tq[:, None]) ** (p - mi)
            - (p - mi) * tq[:, None] ** mi * (1 - tq[:, None]) ** np.maximum(p - mi - 1, 0)
        )
        Bw = B * w
        W = Bw.sum(axis=1)
        dW = (dB * w).sum(axis=1)
        R = Bw / W[:, None]
        dR = (dB * w) / W[:, None] - Bw * dW[:, None] / (W**2)[:, None]
        dx = dR @ cps
        ds = np.linalg.norm(dx, axis=1)
        contrib = np.einsum("q,qn,c->nc", rule.weights * ds, R, t)
        np.add.at(F.reshape(-1, 3), ids, contrib)
    return F


# ---------------------------------------------------------------------------
# constrained solve


class ConstrainedSystem:
    """Symmetric system with eliminated Dirichlet dofs and a reusable factor."""

    def __init__(self, K, fixed_dofs, fixed_values=None):
        self.K = K.tocsr()
        n = K.shape[0]
        self.n = n
        fixed_dofs = np.asarray(fixed_dofs, dtype=int)
        self.fixed = fixed_dofs
        self.fixed_values = (
            np.zeros(len(fixed_dofs)) if fixed_values is None else np.asarray(fixed_values)
        )
        mask = np.ones(n, dtype=bool)
        mask[fixed_dofs] = False
        self.free = np.flatnonzero(mask)
        self._Kff = self.K[self.free][:, self.free].tocsc()
        self._Kfc = self.K[self.free][:, fixed_dofs]
        self._factor = None

    def _get_factor(self):
        if self._factor is None:
            if self._Kff.shape[0] <= DIRECT_SOLVE_MAX_DOFS:
                self._factor = spla.splu(self._Kff)
            else:
                self._factor = None
        return self._factor

    def solve_free(self, rhs_free):
        if self._Kff.shape[0] == 0:
            return np.zeros(0)
        factor = self._get_factor()
        if factor is not None:
            return factor.solve(rhs_free)
        M = sp.diags(1.0 / self._Kff.diagonal())
        x, info = spla.cg(self._Kff, rhs_free, rtol=1e-12, atol=0.0, M=M, maxiter=20000)
        if info != 0:
            raise NumericalError(f"CG failed to converge (info {info})")
        return x

    def solve(self, F, residual_tol=1e-10):
        rhs = F[self.free] - self._Kfc @ self.fixed_values
        uf = self.solve_free(rhs)
        U = np.zeros(self.n)
        U[self.free] = uf
        U[self.fixed] = self.fixed_values
        r = self._Kff @ uf - rhs
        scale = max(np.linalg.norm(rhs), np.linalg.norm(self._Kff @ uf), 1e-300)
        rel = np.linalg.norm(r) / scale
        if rel > residual_tol:
            raise NumericalError(f"linear solve residual {rel:.3e} above {residual_tol}")
        return U


def solve(K, F, fixed_dofs, fixed_values=None):
    return ConstrainedSystem(K, fixed_dofs, fixed_values).solve(F)


# ---------------------------------------------------------------------------
# quantities of interest


def strains_at(mesh, U, elems, order):
    """Voigt strains of a displacement field at quadrature points."""
    rule, _, gradx, _, _, detJ = physical_gradients(mesh, order, elems)
    B = strain_matrix(gradx)
    ue = U.reshape(-1, 3)[mesh.elements[elems]].reshape(len(elems), -1)
    eps = np.einsum("eqai,ei->eqa", B, ue)
    return rule, eps, detJ


def compliance(U, F):
    return float(U @ F)


def edge_objective(mesh, U, edges, component):
    """Mean squared displacement component over unique edge control points."""
    ids = sorted({int(i) for ids in edges for i in ids})
    vals = U.reshape(-1, 3)[ids, component]
    return float(np.mean(vals**2)), ids


def energy_norm_error(mesh, U, material, exact_strain_fn, elems=None):
    """Absolute and relative energy-norm error against an exact strain field."""
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    order = volume_rule_order(mesh.p)
    rule, vals, gradx, _, _, detJ = physical_gradients(mesh, order, elems)
    B = strain_matrix(gradx)
    ue = U.reshape(-1, 3)[mesh.elements[elems]].reshape(len(elems), -1)
    eps_h = np.einsum("eqai,ei->eqa", B, ue)
    X = np.einsum("eqn,enm->eqm", vals, mesh.points[mesh.elements[elems]])
    eps_ex = exact_strain_fn(X.reshape(-1, 3)).reshape(X.shape[0], X.shape[1], 6)
    diff = eps_h - eps_ex
    C = material.C
    err2 = np.einsum("eqa,ab,eqb,eq,q->", diff, C, diff, detJ, rule.weights)
    ref2 = np.einsum("eqa,ab,eqb,eq,q->", eps_ex, C, eps_ex, detJ, rule.weights)
    return float(np.sqrt(err2)), float(np.sqrt(err2 / ref2))


def lame_sphere_solution(E, nu, P, Ri, Ra):
    """Exact fields of the internally pressurized hollow sphere.

    Uses the standard compressive-negative convention: sigma_rr(Ri) = -P,
    sigma_rr(Ra) = 0 (the hoop stresses are tensile).  Returns
    ``(displacement_fn, strain_fn, stress_fn)``; the strain/stress functions
    map (n, 3) points to (n, 6) Voigt arrays.
    """
    d = Ra**3 - Ri**3
    C1 = P * Ri**3 / d
    b = P * Ri**3 * Ra**3 * (1 + nu) / (2 * E * d)
    a = C1 * (1 - 2 * nu) / E

    def radii(X):
        r = np.linalg.norm(X, axis=-1)
        # coarse approximate geometry sags off the spheres by O(h^2); only
        # reject points that cannot come from a shell discretization at all
        if np.any(r < 0.5 * Ri) or np.any(r > 1.5 * Ra):
            raise InputError("evaluation point outside [Ri, Ra]")
        return r

    def displacement(X):
        X = np.atleast_2d(X)
        r = radii(X)
        ur = a * r + b / r**2
        return X * (ur / r)[:, None]

    def strain(X):
        X = np.atleast_2d(X)
        r = radii(X)
        n = X / r[:, None]
        up = a - 2 * b / r**3
        uor = a + b / r**3
        eps = np.empty((len(X), 6))
        nn = np.einsum("ni,nj->nij", n, n)
        full = up[:, None, None] * nn + uor[:, None, None] * (np.eye(3) - nn)
        eps[:, 0] = full[:, 0, 0]
        eps[:, 1] = full[:, 1, 1]
        eps[:, 2] = full[:, 2, 2]
        eps[:, 3] = 2 * full[:, 0, 1]
        eps[:, 4] = 2 * full[:, 1, 2]
        eps[:, 5] = 2 * full[:, 0, 2]
        return eps

    material = Material(E, nu)

    def stress(X):
        return strain(X) @ material.C.T

    return displacement, strain, stress
