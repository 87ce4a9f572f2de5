"""Boundary classification, rational face reconstruction and weight smoothing.

The pipeline turns a Lagrange mesh plus its NURBS boundary representation
into the analysis-ready rational Bezier mesh:

1. every boundary face is matched with a surface and per-node parameters are
   computed (closest-point projection);
2. interior elements convert nodal samples to control nets (collocation
   inverse), which is exact for the polynomial geometry they carry;
3. boundary faces get homogeneous control points from the surface itself,
   solving the face collocation system, shared nodes resolved once by an
   ownership rule (design patches first, planar fill-ins last);
4. interior weights are smoothed by a Laplace solve with the reconstructed
   boundary weights as Dirichlet data.

For every boundary control point the linear reconstruction operator (one row
of ``B^-1 N`` against the owning patch) is cached on the mesh, which is what
moves the boundary between optimizer iterations and feeds the analytic design
sensitivities.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import simplex
from .errors import (
    ClassificationError,
    InversionError,
    MeshValidityError,
    NumericalError,
    ReconstructionError,
)
from .mesh import BEZIER, TetMesh, eval_element, assert_positive_jacobians
from .nurbs import point_inversion


@dataclass
class ReconRow:
    """Cartesian reconstruction row of one boundary control point.

    ``point = coeffs @ patch_control_points`` with the patch weights folded
    in (weights are design-independent, so the row is constant under
    coordinate design changes).
    """

    sid: int
    coeffs: np.ndarray  # (n*m,) over the owning patch control net (i-major)
    weight: float


def face_collocation_matrix(p):
    """Face Bernstein collocation matrix at the node lattice and its inverse."""
    return simplex.tri_collocation_matrix(p)


def mesh_bbox_diag(mesh):
    lo = mesh.points.min(axis=0)
    hi = mesh.points.max(axis=0)
    return float(np.linalg.norm(hi - lo))


def face_lattice_points(mesh, bf):
    """Physical positions of the face's collocation lattice."""
    mu = simplex.tri_lagrange_nodes(mesh.p)
    lam = simplex.face_lambda(mesh.p, bf.local_face, mu)
    return eval_element(mesh, bf.elem, lam)


def classify_boundary(mesh, surfaces, tol_geo=None):
    """Assign every boundary face to a surface and invert its node lattice.

    ``surfaces`` is a list of NurbsSurface with unique ``sid`` tags.  A face
    is classified to the surface with the smallest centroid projection
    residual among those below ``tol_geo``; all its lattice nodes must then
    invert below the tolerance as well.
    """
    tol = tol_geo if tol_geo is not None else 1e-6 * mesh_bbox_diag(mesh)
    by_sid = {s.sid: s for s in surfaces}
    if len(by_sid) != len(surfaces):
        raise ClassificationError("surface ids are not unique")
    center_mu = np.full((1, 3), 1.0 / 3.0)
    for bf in mesh.boundary_faces:
        lam_c = simplex.face_lambda(mesh.p, bf.local_face, center_mu)
        xc = eval_element(mesh, bf.elem, lam_c)[0]
        lattice = face_lattice_points(mesh, bf)
        # the interpolated face centroid sags off a curved surface by O(h^2),
        # so the centroid only ranks candidates; nodes are held to tol_geo
        diam = np.linalg.norm(lattice[:, None] - lattice[None], axis=-1).max()
        center_tol = max(tol, 0.25 * diam)
        candidates = []
        pool = [by_sid[bf.sid]] if bf.sid in by_sid else surfaces
        for s in pool:
            box = s.meta.get("_bbox")
            if box is None:
                flat = s.cps.reshape(-1, 3)
                box = (flat.min(axis=0), flat.max(axis=0))
                s.meta["_bbox"] = box
            if np.any(xc < box[0] - center_tol) or np.any(xc > box[1] + center_tol):
                continue
            try:
                u, v, res = point_inversion(s, xc, tol=center_tol)
            except InversionError:
                continue
            candidates.append((res, s.sid, (u, v)))
        candidates.sort(key=lambda c: (c[0], c[1]))
        assigned = False
        for _, sid, seed in candidates:
            s = by_sid[sid]
            params = np.empty((len(lattice), 2))
            ok = True
            for r, (node, x) in enumerate(zip(bf.nodes, lattice)):
                cached = mesh.node_params.get(int(node), {}).get(sid)
                if cached is not None:
                    params[r] = cached
                    continue
                try:
                    u, v, _ = point_inversion(s, x, tol=tol, seed=seed)
                except InversionError:
                    ok = False
                    break
                params[r] = (u, v)
            if ok:
                bf.sid = sid
                bf.params = params
                for node, uv in zip(bf.nodes, params):
                    mesh.node_params.setdefault(int(node), {})[sid] = tuple(uv)
                assigned = True
                break
        if not assigned:
            raise ClassificationError(
                f"boundary face of element {bf.elem} (centroid {xc}) matches no "
                f"surface within tol_geo={tol:.3e}"
            )
    return mesh


def reconstruct_face(bf, surface, p, scales=None):
    """Homogeneous face control points from the NURBS patch (Eq. 26/27 form).

    Returns ``(cps_hom (n_face, 4), cart_rows (n_face, n*m))``: the
    homogeneous face net and the linear rows giving each Cartesian control
    point as a combination of the patch's Cartesian control points.

    ``scales`` optionally overrides the per-node homogeneous scale (default:
    the patch weight function at the node parameters).  Passing one canonical
    scale per mesh node keeps edge sub-solves identical across adjacent faces
    of different patches, which is what makes the control net watertight at
    patch junctions.
    """
    if bf.params is None:
        raise ReconstructionError("face carries no surface parameters")
    _, Binv = face_collocation_matrix(p)
    N = np.array([surface.basis_row(u, v).ravel() for u, v in bf.params])
    Ph = surface.homogeneous().reshape(-1, 4)
    W_at = N @ Ph[:, 3]
    T = N * Ph[:, 3] / W_at[:, None]  # Cartesian interpolation rows per node
    if scales is None:
        scales = W_at
    cps = Binv @ (scales[:, None] * np.column_stack([T @ surface.cps.reshape(-1, 3), np.ones(len(T))]))
    cart_rows = (Binv * scales) @ T / cps[:, 3][:, None]
    if np.any(cps[:, 3] <= 0):
        raise ReconstructionError(
            f"non-positive reconstructed weight on surface {surface.sid}"
        )
    return cps, cart_rows


def _degenerate_loci(surface):
    """Collapsed-edge locations of a patch and a blend radius around each.

    At a collapsed patch edge the weight function has a direction-dependent
    limit, so the homogeneous scale field is blended to a constant inside a
    cap around the locus (any smooth positive scale field keeps positions
    interpolated exactly).
    """
    if "_degenerate_loci" in surface.meta:
        return surface.meta["_degenerate_loci"]
    loci = []
    if not np.allclose(surface.weights, surface.weights.flat[0]):
        (u0, u1), (v0, v1) = surface.domain
        diag = max(surface.bbox_diag(), 1e-30)
        sides = [
            [(u0, v0 + t * (v1 - v0)) for t in np.linspace(0, 1, 9)],
            [(u1, v0 + t * (v1 - v0)) for t in np.linspace(0, 1, 9)],
            [(u0 + t * (u1 - u0), v0) for t in np.linspace(0, 1, 9)],
            [(u0 + t * (u1 - u0), v1) for t in np.linspace(0, 1, 9)],
        ]
        for side in sides:
            pts = np.array([surface.eval(u, v) for u, v in side])
            if np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)) < 1e-9 * diag:
                um, vm = side[len(side) // 2]
                row = surface.basis_row(um, vm).ravel()
                w_const = float(row @ surface.weights.ravel())
                loci.append((pts[0], w_const, 0.15 * diag))
    surface.meta["_degenerate_loci"] = loci
    return loci


def _regularized_scale(w, x, loci):
    for point, w_const, r0 in loci:
        d = np.linalg.norm(x - point)
        if d < r0:
            t = d / r0
            s = t * t * (3 - 2 * t)
            return float(w**s * w_const ** (1 - s))
    return w


def surface_priority(surface):
    """Ownership rank for shared boundary nodes: design, curved, planar."""
    prio = surface.meta.get("priority")
    if prio is not None:
        return prio
    if surface.meta.get("design"):
        return 0
    curved = (
        surface.ku.degree > 1 or surface.kvv.degree > 1
    ) and not np.allclose(surface.weights, surface.weights.flat[0])
    return 1 if curved else 2


def smooth_weights(mesh):
    """Laplace-smooth interior control-point weights (boundary = Dirichlet).

    Uses the same degree-p basis as the analysis mesh on the current control
    net.  Returns the relative residual of the solved system.
    """
    from .fem import assemble_laplace

    K = assemble_laplace(mesh)
    boundary = mesh.boundary_node_ids()
    mask = np.ones(mesh.n_nodes, dtype=bool)
    mask[boundary] = False
    free = np.flatnonzero(mask)
    if len(free) == 0:
        return 0.0
    rhs = -K[free][:, boundary] @ mesh.weights[boundary]
    Kff = K[free][:, free].tocsc()
    w = spla.spsolve(Kff, rhs)
    res = np.linalg.norm(Kff @ w - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > 1e-10:
        raise NumericalError(f"weight smoothing residual {res:.3e} above 1e-10")
    mesh.weights[free] = w
    if np.any(mesh.weights <= 0):
        raise ReconstructionError("weight smoothing produced non-positive weights")
    return float(res)


def bezierize(lag_mesh, surfaces, tol_geo=None):
    """Convert a classified Lagrange mesh into the rational Bezier mesh."""
    if any(bf.params is None for bf in lag_mesh.boundary_faces):
        classify_boundary(lag_mesh, surfaces, tol_geo)
    by_sid = {s.sid: s for s in surfaces}
    p = lag_mesh.p

    # interior conversion: nodal samples -> Bernstein control net
    _, Ainv = simplex.collocation_matrix(p)
    points = np.zeros_like(lag_mesh.points)
    seen = np.zeros(lag_mesh.n_nodes, dtype=bool)
    for e in range(lag_mesh.n_elements):
        conn = lag_mesh.elements[e]
        net = Ainv @ lag_mesh.points[conn]
        fresh = ~seen[conn]
        points[conn[fresh]] = net[fresh]
        seen[conn[fresh]] = True
    mesh = TetMesh(
        p=p,
        points=points,
        weights=np.ones(lag_mesh.n_nodes),
        elements=lag_mesh.elements,
        kind=BEZIER,
        boundary_faces=[
            type(bf)(bf.elem, bf.local_face, bf.nodes, bf.sid, bf.params, bf.outward)
            for bf in lag_mesh.boundary_faces
        ],
        node_params={k: dict(v) for k, v in lag_mesh.node_params.items()},
    )

    order = sorted(
        range(len(mesh.boundary_faces)),
        key=lambda i: (
            surface_priority(by_sid[mesh.boundary_faces[i].sid]),
            mesh.boundary_faces[i].sid,
            i,
        ),
    )
    # pass 1: per-node owner patch and canonical homogeneous scale.  Every
    # face solve below samples with the owner scales, so adjacent faces of
    # different patches see identical edge data (watertight junctions).
    owner = {}
    rho = {}
    geom = lag_mesh.points.copy()
    for i in order:
        bf = mesh.boundary_faces[i]
        s = by_sid[bf.sid]
        wflat = s.weights.ravel()
        loci = _degenerate_loci(s)
        for slot, node in enumerate(bf.nodes):
            node = int(node)
            if node in owner:
                continue
            owner[node] = bf.sid
            row = s.basis_row(*bf.params[slot]).ravel()
            x = s.eval(*bf.params[slot])
            rho[node] = _regularized_scale(float(row @ wflat), x, loci)
            geom[node] = x
    # pass 2: face solves; first writer per node is a face of the owner patch
    recon = {}
    max_disc = 0.0
    for i in order:
        bf = mesh.boundary_faces[i]
        s = by_sid[bf.sid]
        scales = np.array([rho[int(n)] for n in bf.nodes])
        cps, cart_rows = reconstruct_face(bf, s, p, scales=scales)
        for slot, node in enumerate(bf.nodes):
            node = int(node)
            w = cps[slot, 3]
            P = cps[slot, :3] / w
            if node not in recon:
                mesh.weights[node] = w
                recon[node] = ReconRow(bf.sid, cart_rows[slot], w)
            else:
                prev = recon[node].coeffs @ by_sid[recon[node].sid].cps.reshape(-1, 3)
                max_disc = max(max_disc, float(np.linalg.norm(P - prev)))
    mesh.recon = recon
    mesh.recon_report = {"max_shared_discrepancy": max_disc}
    smooth_weights(mesh)
    _collocate_homogeneous(mesh, geom)
    try:
        assert_positive_jacobians(mesh)
    except MeshValidityError as err:
        raise MeshValidityError(f"inverted element after reconstruction: {err}") from err
    return mesh


def _collocate_homogeneous(mesh, geom):
    """Re-solve every control net so the rational geometry map interpolates
    the lattice samples ``geom`` with the final node weights.

    Face/edge sub-systems decouple, so shared slots receive identical values
    from every adjacent element and reconstructed boundary faces are
    reproduced exactly (their restricted weight function equals the patch's).
    """
    p = mesh.p
    A, Ainv = simplex.collocation_matrix(p)
    lattice_vals = A  # Bernstein values at the lattice, (n_f, n_f)
    done = np.zeros(mesh.n_nodes, dtype=bool)
    for e in range(mesh.n_elements):
        conn = mesh.elements[e]
        w = mesh.weights[conn]
        W_at = lattice_vals @ w
        H = np.concatenate(
            [geom[conn] * W_at[:, None], W_at[:, None]], axis=1
        )
        net = Ainv @ H
        fresh = ~done[conn]
        mesh.points[conn[fresh]] = net[fresh, :3] / net[fresh, 3][:, None]
        done[conn[fresh]] = True


def boundary_conformity(mesh, surfaces, faces=None):
    """Max distance between face collocation points and their surface images."""
    by_sid = {s.sid: s for s in surfaces}
    worst = 0.0
    for bf in faces if faces is not None else mesh.boundary_faces:
        s = by_sid[bf.sid]
        lattice = face_lattice_points(mesh, bf)
        for x, (u, v) in zip(lattice, bf.params):
            worst = max(worst, float(np.linalg.norm(x - s.eval(u, v))))
    return worst


def apply_boundary_targets(mesh, surfaces, design_sids):
    """Re-evaluate reconstruction rows of nodes owned by design patches.

    Returns ``(node_ids, targets)`` with the new control-point positions the
    moved surfaces imply; positions themselves are not modified here (the
    pseudo-elastic update or a remesh does the moving).
    """
    by_sid = {s.sid: s for s in surfaces}
    ids, targets = [], []
    for node, row in mesh.recon.items():
        if row.sid not in design_sids:
            continue
        s = by_sid[row.sid]
        ids.append(node)
        targets.append(row.coeffs @ s.cps.reshape(-1, 3))
    return np.asarray(ids, dtype=int), np.asarray(targets, dtype=float)
