"""Tetrahedral mesh data model shared by the whole pipeline.

A mesh stores one global array of control points (or Lagrange nodes — the
``kind`` attribute says which basis interprets them), per-node weights, and
per-element index lists in the canonical node order of :mod:`.simplex`.
Boundary faces carry the link to the NURBS surface they discretize plus the
surface parameters of their nodes.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import simplex
from .errors import InputError, MeshValidityError
from .quadrature import tet_quadrature

LAGRANGE = "lagrange"
BEZIER = "bezier"


@dataclass
class BoundaryFace:
    elem: int
    local_face: int
    nodes: np.ndarray  # (n_face,) global node ids, canonical triangle order
    sid: int = -1
    params: np.ndarray | None = None  # (n_face, 2) surface parameters
    outward: float = 1.0  # sign so cross(t_a, t_b) points out of the domain


@dataclass
class TetMesh:
    p: int
    points: np.ndarray  # (N, 3)
    weights: np.ndarray  # (N,)
    elements: np.ndarray  # (nE, n_f)
    kind: str = LAGRANGE
    boundary_faces: list = field(default_factory=list)
    # bookkeeping used by reconstruction/sensitivity (filled by bezierize)
    node_params: dict = field(default_factory=dict)  # node -> {sid: (u, v)}

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def n_elements(self):
        return len(self.elements)

    def copy(self):
        return replace(
            self,
            points=self.points.copy(),
            weights=self.weights.copy(),
            boundary_faces=[
                BoundaryFace(
                    f.elem,
                    f.local_face,
                    f.nodes,
                    f.sid,
                    None if f.params is None else f.params.copy(),
                    f.outward,
                )
                for f in self.boundary_faces
            ],
            node_params={k: dict(v) for k, v in self.node_params.items()},
        )

    def boundary_node_ids(self):
        ids = set()
        for f in self.boundary_faces:
            ids.update(int(n) for n in f.nodes)
        return np.array(sorted(ids), dtype=int)

    def basis_at(self, lam):
        """Basis values (and parametric grads for the geometry basis) at points.

        For a Lagrange mesh the geometry basis is nodal Lagrange; for a Bezier
        mesh the per-element rational basis is built later from the tabulated
        Bernstein values, so this returns plain Bernstein tables.
        """
        if self.kind == LAGRANGE:
            return simplex.eval_lagrange(self.p, lam)
        return simplex.eval_bernstein(self.p, lam)


def make_mesh(p, points, elements, kind=LAGRANGE, weights=None):
    """Assemble a mesh and derive its structural boundary faces."""
    points = np.asarray(points, dtype=float)
    elements = np.asarray(elements, dtype=int)
    if elements.shape[1] != simplex.n_basis(p):
        raise InputError(
            f"elements with {elements.shape[1]} nodes do not match degree {p}"
        )
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)
    mesh = TetMesh(p=p, points=points, weights=w, elements=elements, kind=kind)
    mesh.boundary_faces = _structural_boundary(mesh)
    return mesh


def _face_key(elements, e, f):
    verts = [int(elements[e, v]) for v in simplex.FACE_VERTEX_IDS[f]]
    return tuple(sorted(verts))


def face_adjacency(mesh):
    """Map face key -> list of (element, local face)."""
    adj = {}
    for e in range(mesh.n_elements):
        for f in range(4):
            adj.setdefault(_face_key(mesh.elements, e, f), []).append((e, f))
    return adj


def _structural_boundary(mesh):
    faces = []
    for key, owners in face_adjacency(mesh).items():
        if len(owners) == 1:
            e, f = owners[0]
            nodes = mesh.elements[e][simplex.face_node_ids(mesh.p, f)]
            faces.append(BoundaryFace(e, f, nodes.copy()))
        elif len(owners) > 2:
            raise MeshValidityError(f"face {key} shared by {len(owners)} elements")
    faces.sort(key=lambda bf: (bf.elem, bf.local_face))
    for bf in faces:
        bf.outward = _outward_sign(mesh, bf)
    return faces


def check_conformity(mesh):
    """Every interior face must be shared by exactly two elements."""
    boundary = {(bf.elem, bf.local_face) for bf in mesh.boundary_faces}
    for key, owners in face_adjacency(mesh).items():
        if len(owners) == 2:
            continue
        if len(owners) == 1 and owners[0] in boundary:
            continue
        raise MeshValidityError(f"non-conforming face {key}: {owners}")


@lru_cache(maxsize=None)
def _tet_tab(kind, p, order):
    rule = tet_quadrature(order)
    if kind == LAGRANGE:
        vals = simplex.eval_lagrange(p, rule.points)
        # L = B A^-1 exactly, so Lagrange gradients reuse the Bernstein ones
        _, Ainv = simplex.collocation_matrix(p)
        dB = simplex.eval_bernstein_grad(p, rule.points)
        grads = np.einsum("qnd,nm->qmd", dB, Ainv)
        return rule, vals, grads
    B = simplex.eval_bernstein(p, rule.points)
    dB = simplex.eval_bernstein_grad(p, rule.points)
    return rule, B, dB


def element_basis(mesh, order, elems=None):
    """Geometry basis values/gradients per element at a quadrature rule.

    Returns ``(rule, vals, grads)`` with vals (nE, nq, n_f) and grads
    (nE, nq, n_f, 3); rational weights are folded in per element.
    """
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    rule, B, dB = _tet_tab(mesh.kind, mesh.p, order)
    nq, nf = B.shape
    if mesh.kind == LAGRANGE:
        vals = np.broadcast_to(B, (len(elems), nq, nf))
        grads = np.broadcast_to(dB, (len(elems), nq, nf, 3))
        return rule, vals, grads
    w = mesh.weights[mesh.elements[elems]]  # (nE, nf)
    if np.allclose(w, 1.0, atol=1e-14):
        vals = np.broadcast_to(B, (len(elems), nq, nf))
        grads = np.broadcast_to(dB, (len(elems), nq, nf, 3))
        return rule, vals, grads
    Bw = B[None] * w[:, None, :]  # (nE, nq, nf)
    W = Bw.sum(axis=2)
    dBw = dB[None] * w[:, None, :, None]
    dW = dBw.sum(axis=2)  # (nE, nq, 3)
    R = Bw / W[..., None]
    dR = dBw / W[..., None, None] - Bw[..., None] * dW[:, :, None, :] / (W**2)[..., None, None]
    return rule, R, dR


def jacobians(mesh, order, elems=None):
    """Jacobian matrices and determinants at quadrature points.

    J[a, m] = d x_m / d xi_a.  Returns ``(rule, J (nE,nq,3,3), detJ (nE,nq))``.
    """
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    rule, _, grads = element_basis(mesh, order, elems)
    P = mesh.points[mesh.elements[elems]]  # (nE, nf, 3)
    J = np.einsum("eqna,enm->eqam", grads, P)
    detJ = np.linalg.det(J)
    return rule, J, detJ


def volume_rule_order(p):
    return 2 * p + 2


def compute_volume(mesh):
    """Total mesh volume by quadrature; rejects inverted elements."""
    rule, _, detJ = jacobians(mesh, volume_rule_order(mesh.p))
    if detJ.min() <= 0.0:
        raise MeshValidityError(
            f"non-positive Jacobian detected (min det J = {detJ.min():.3e})"
        )
    return float(np.einsum("eq,q->", detJ, rule.weights))


def element_volumes(mesh):
    rule, _, detJ = jacobians(mesh, volume_rule_order(mesh.p))
    return detJ @ rule.weights


def assert_positive_jacobians(mesh, order=None):
    order = volume_rule_order(mesh.p) if order is None else order
    _, _, detJ = jacobians(mesh, order)
    if detJ.min() <= 0.0:
        raise MeshValidityError(
            f"non-positive Jacobian (min det J = {detJ.min():.3e})"
        )
    return float(detJ.min())


def eval_element(mesh, e, lam):
    """Geometry map of one element at barycentric point(s)."""
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    nodes = mesh.elements[e]
    if mesh.kind == LAGRANGE:
        vals = simplex.eval_lagrange(mesh.p, lam)
    else:
        w = mesh.weights[nodes]
        if np.allclose(w, 1.0, atol=1e-14):
            vals = simplex.eval_bernstein(mesh.p, lam)
        else:
            vals, _ = simplex.eval_rational(mesh.p, lam, w)
    return vals @ mesh.points[nodes]


def _outward_sign(mesh, bf):
    """Orient the face parameterization so its normal leaves the domain."""
    center_mu = np.full(3, 1.0 / 3.0)
    lam = simplex.face_lambda(mesh.p, bf.local_face, center_mu)
    x_face = eval_element(mesh, bf.elem, lam)[0]
    centroid = eval_element(mesh, bf.elem, np.full(4, 0.25))[0]
    tri_p = mesh.points[bf.nodes]
    tri_w = mesh.weights[bf.nodes]
    vals = simplex.eval_tri_bernstein(mesh.p, center_mu)
    dval = simplex.eval_tri_bernstein_grad(mesh.p, center_mu)
    if mesh.kind == BEZIER and not np.allclose(tri_w, 1.0, atol=1e-14):
        num = (vals * tri_w) @ tri_p
        W = (vals * tri_w).sum()
        dW = (dval * tri_w[:, None]).sum(axis=0)
        dnum = np.einsum("nd,nm->dm", dval * tri_w[:, None], tri_p)
        S = num / W
        T = (dnum - np.outer(dW, S)) / W  # (2, 3)
    elif mesh.kind == LAGRANGE:
        # nodal face geometry: use Bernstein net of the sampled values
        _, Ainv = simplex.tri_collocation_matrix(mesh.p)
        net = Ainv @ tri_p
        T = np.einsum("nd,nm->dm", dval, net)
    else:
        T = np.einsum("nd,nm->dm", dval, tri_p)
    n = np.cross(T[0], T[1])
    return 1.0 if n @ (x_face - centroid) > 0 else -1.0


# ---------------------------------------------------------------------------
# uniform refinement by splitting (1 tet -> 8), exact for rational geometry


def _child_corner_barys():
    v = np.eye(4)
    m = {}
    for a in range(4):
        for b in range(a + 1, 4):
            m[(a, b)] = 0.5 * (v[a] + v[b])
    children = [
        [v[0], m[(0, 1)], m[(0, 2)], m[(0, 3)]],
        [m[(0, 1)], v[1], m[(1, 2)], m[(1, 3)]],
        [m[(0, 2)], m[(1, 2)], v[2], m[(2, 3)]],
        [m[(0, 3)], m[(1, 3)], m[(2, 3)], v[3]],
        # octahedron split along the m02-m13 diagonal
        [m[(0, 2)], m[(1, 3)], m[(0, 1)], m[(1, 2)]],
        [m[(0, 2)], m[(1, 3)], m[(1, 2)], m[(2, 3)]],
        [m[(0, 2)], m[(1, 3)], m[(2, 3)], m[(0, 3)]],
        [m[(0, 2)], m[(1, 3)], m[(0, 3)], m[(0, 1)]],
    ]
    out = []
    for corners in children:
        corners = np.asarray(corners)
        # orient positively in parent parametric coordinates
        xi = corners[:, 1:]
        if np.linalg.det(xi[1:] - xi[0]) < 0:
            corners = corners[[0, 1, 3, 2]]
        out.append(corners)
    return out


def _decasteljau_reduce(p, data, lam):
    """One de Casteljau step: degree-p net -> degree-(p-1) net."""
    if p == 1:
        lo = np.zeros((1, 4), dtype=int)
    else:
        lo = simplex.multi_indices(p - 1)
    lookup = {tuple(mi): r for r, mi in enumerate(simplex.multi_indices(p))}
    out = np.zeros((len(lo),) + data.shape[1:])
    for r, mlo in enumerate(np.atleast_2d(lo)):
        for m in range(4):
            mm = list(mlo)
            mm[m] += 1
            out[r] += lam[m] * data[lookup[tuple(mm)]]
    return out


@lru_cache(maxsize=None)
def subdivision_operators(p):
    """Per-child (n_f x n_f) matrices mapping parent net to child net.

    Valid for homogeneous (rational) nets, so weights subdivide exactly too.
    """
    mi = simplex.multi_indices(p)
    nf = len(mi)
    ops = []
    for corners in _child_corner_barys():
        S = np.zeros((nf, nf))
        for r, target in enumerate(mi):
            data = np.eye(nf)
            q = p
            for c in range(4):
                for _ in range(int(target[c])):
                    data = _decasteljau_reduce(q, data, corners[c])
                    q -= 1
            S[r] = data[0]
        S.setflags(write=False)
        ops.append(S)
    return ops


def uniform_split(mesh):
    """Split every element into eight, preserving the geometry map exactly.

    New control points come from de Casteljau subdivision of each parent
    element (not from linear midpoints), so curved rational geometry is
    reproduced bit-exactly in the refined mesh.  Boundary faces inherit their
    surface id; surface parameters are left for re-classification.
    """
    if mesh.kind != BEZIER:
        return _split_lagrange(mesh)
    return _split_bezier(mesh)


def _node_key(mesh, e, bary2):
    """Exact node identity: multiset of parent vertices weighted on the 2p grid."""
    verts = [int(v) for v in mesh.elements[e, :4]]
    items = tuple(sorted((verts[c], int(bary2[c])) for c in range(4) if bary2[c]))
    return items


def _split_core(mesh, child_net_fn):
    p = mesh.p
    mi = simplex.multi_indices(p)
    children = _child_corner_barys()
    corner2 = [np.rint(c * 2).astype(int) for c in children]  # integer on the 2-grid
    node_ids = {}
    new_points = []
    new_weights = []
    new_elements = []
    child_face_src = {}
    for e in range(mesh.n_elements):
        for ci, corners in enumerate(children):
            net_hom = child_net_fn(e, ci)
            ids = np.empty(len(mi), dtype=int)
            for r, target in enumerate(mi):
                bary2 = (np.asarray(target) @ corner2[ci])  # on the 2p lattice
                key = _node_key(mesh, e, bary2)
                nid = node_ids.get(key)
                if nid is None:
                    nid = len(new_points)
                    node_ids[key] = nid
                    w = net_hom[r, 3]
                    new_points.append(net_hom[r, :3] / w)
                    new_weights.append(w)
                ids[r] = nid
            new_elements.append(ids)
            # record which parent face (if any) each child face lies on
            for f in range(4):
                tri = [corners[v] for v in simplex.FACE_VERTEX_IDS[f]]
                zero = np.all(np.abs(np.asarray(tri)) < 1e-12, axis=0)
                if zero.any():
                    parent_face = int(np.argmax(zero))
                    child_face_src[(len(new_elements) - 1, f)] = (e, parent_face)
    fine = make_mesh(
        p,
        np.asarray(new_points),
        np.asarray(new_elements),
        kind=mesh.kind,
        weights=np.asarray(new_weights),
    )
    parent_sid = {(bf.elem, bf.local_face): bf.sid for bf in mesh.boundary_faces}
    for bf in fine.boundary_faces:
        src = child_face_src.get((bf.elem, bf.local_face))
        if src is not None and src in parent_sid:
            bf.sid = parent_sid[src]
    return fine


def _split_bezier(mesh):
    ops = subdivision_operators(mesh.p)
    hom = np.concatenate(
        [mesh.points * mesh.weights[:, None], mesh.weights[:, None]], axis=1
    )

    def child_net(e, ci):
        return ops[ci] @ hom[mesh.elements[e]]

    return _split_core(mesh, child_net)


def _split_lagrange(mesh):
    """Lagrange meshes refine by sampling the parent geometry at child nodes."""
    nodes = simplex.lagrange_nodes(mesh.p)
    children = _child_corner_barys()

    def child_net(e, ci):
        lam = nodes @ children[ci]
        pts = eval_element(mesh, e, lam)
        return np.concatenate([pts, np.ones((len(pts), 1))], axis=1)

    return _split_core(mesh, child_net)
