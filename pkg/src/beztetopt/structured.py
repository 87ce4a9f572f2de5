"""Deterministic structured tetrahedral meshers for the benchmark geometries.

Nodes are identified on integer lattices (never by coordinate hashing), so
meshes are watertight by construction and bit-reproducible.  Quads and prisms
are split into tetrahedra with rank-based diagonal rules, which keeps faces
conforming across blocks, strips and sectors.
"""

import numpy as np

from . import simplex
from .errors import InputError, MeshValidityError
from .mesh import LAGRANGE, make_mesh


class _NodeBook:
    def __init__(self):
        self.ids = {}
        self.keys = []

    def id_of(self, key):
        nid = self.ids.get(key)
        if nid is None:
            nid = len(self.keys)
            self.ids[key] = nid
            self.keys.append(key)
        return nid


def _split_quad(q, even):
    """Split cyclic quad (q0..q3) into two triangles by parity."""
    if even:
        return (q[0], q[1], q[2]), (q[0], q[2], q[3])
    return (q[1], q[2], q[3]), (q[1], q[3], q[0])


_PRISM_ROTS = None


def _prism_rotations():
    global _PRISM_ROTS
    if _PRISM_ROTS is None:
        e = [0, 1, 2, 3, 4, 5]
        c = [1, 2, 0, 4, 5, 3]
        f = [3, 5, 4, 0, 2, 1]

        def compose(a, b):
            return [a[b[i]] for i in range(6)]

        rots = [e, c, compose(c, c)]
        rots += [compose(r, f) for r in rots]
        _PRISM_ROTS = rots
    return _PRISM_ROTS


def split_prism(corners, ranks):
    """Split a prism (b0,b1,b2,t0,t1,t2) into 3 tets, min-rank diagonal rule.

    The rule depends only on global node ranks, so any two blocks that share a
    quad face pick the same diagonal.
    """
    best = None
    for rot in _prism_rotations():
        rc = [ranks[i] for i in rot]
        if best is None or rc[0] < best[1][0]:
            best = (rot, rc)
    rot, rc = best
    v = [corners[i] for i in rot]
    if min(rc[1], rc[5]) < min(rc[2], rc[4]):
        tets = [(v[0], v[1], v[2], v[5]), (v[0], v[1], v[5], v[4]), (v[0], v[4], v[5], v[3])]
    else:
        tets = [(v[0], v[1], v[2], v[4]), (v[0], v[4], v[2], v[5]), (v[0], v[4], v[5], v[3])]
    return tets


def lattice_mesh(p, macro_tets, xyz_of, canon=None, tag_components=0):
    """Build a degree-p Lagrange mesh from macro tets on an integer lattice.

    ``macro_tets`` holds 4-tuples of integer index tuples whose combinable
    components are multiples of ``p`` (tag components, e.g. a sector id, come
    first and must agree across each tet).  Lattice nodes are the exact
    integer barycentric combinations, deduplicated through ``canon`` and
    mapped to physical space by ``xyz_of(canonical_key)``.
    """
    canon = canon or (lambda idx: idx)
    mi = simplex.multi_indices(p)
    book = _NodeBook()
    elements = []
    oriented = []
    for tet in macro_tets:
        arr = np.asarray(tet, dtype=np.int64)
        if tag_components:
            tags = arr[:, :tag_components]
            if not (tags == tags[0]).all():
                raise MeshValidityError("macro tet spans incompatible lattice tags")
        corners_xyz = np.array([xyz_of(canon(tuple(r))) for r in arr])
        if np.linalg.det(corners_xyz[1:] - corners_xyz[0]) < 0:
            arr = arr[[0, 1, 3, 2]]
        oriented.append(arr)
    for arr in oriented:
        tags = tuple(arr[0, :tag_components])
        comb = mi @ arr[:, tag_components:]
        if (comb % p).any():
            raise MeshValidityError("macro corner indices are not multiples of p")
        comb //= p
        ids = [book.id_of(canon(tags + tuple(row))) for row in comb]
        elements.append(ids)
    points = np.array([xyz_of(k) for k in book.keys])
    return make_mesh(p, points, np.asarray(elements, dtype=int), kind=LAGRANGE)


def _segmented_axis(breaks, h):
    """Fine 1D grid hitting every breakpoint; returns (coords, coarse ids)."""
    coords = [float(breaks[0])]
    coarse = [0]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, round(abs(b - a) / h))
        seg = np.linspace(a, b, n + 1)[1:]
        coords.extend(seg.tolist())
        coarse.append(len(coords) - 1)
    return np.asarray(coords), coarse


def _grid_prisms(cells, ranks_of):
    """Triangulate quad cell columns into prisms with a parity diagonal.

    ``cells`` yields (quad_bottom4, quad_top4, parity) with corner index
    tuples; returns macro tets via the min-rank prism rule.
    """
    tets = []
    for bottom, top, even in cells:
        tb = _split_quad(bottom, even)
        tt = _split_quad(top, even)
        for tri_b, tri_t in zip(tb, tt):
            corners = list(tri_b) + list(tri_t)
            ranks = [ranks_of(c) for c in corners]
            tets.extend(split_prism(corners, ranks))
    return tets


def box_mesh(p, lx, ly, h_l, top_fn=None, lz=None, nz_hint=None):
    """Structured mesh of a column domain z in [0, top(x, y)] over [0,lx]x[0,ly].

    ``top_fn(x, y)`` returns the (positive) column height; a constant ``lz``
    gives a plain box.  Used by the cantilever benchmark, where the top NURBS
    patch is a graph surface over (x, y).
    """
    if top_fn is None:
        if lz is None:
            raise InputError("either top_fn or lz is required")
        top_fn = lambda x, y: lz
        zmax = lz
    else:
        zmax = max(top_fn(x, y) for x in np.linspace(0, lx, 9) for y in np.linspace(0, ly, 9))
    nx = max(1, round(lx / h_l))
    ny = max(1, round(ly / h_l))
    nz = nz_hint or max(1, round(zmax / h_l))
    fx = np.linspace(0.0, lx, nx * p + 1)
    fy = np.linspace(0.0, ly, ny * p + 1)
    fz = np.linspace(0.0, 1.0, nz * p + 1)

    def xyz_of(key):
        i, j, k = key
        x, y = fx[i], fy[j]
        return np.array([x, y, fz[k] * top_fn(x, y)])

    book = _NodeBook()
    for i in range(nx + 1):
        for j in range(ny + 1):
            for k in range(nz + 1):
                book.id_of((i * p, j * p, k * p))
    ranks_of = lambda c: book.ids[c]

    def cells():
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    q = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                    bottom = [(a * p, b * p, k * p) for a, b in q]
                    top = [(a * p, b * p, (k + 1) * p) for a, b in q]
                    yield bottom, top, (i + j) % 2 == 0
    tets = _grid_prisms(cells(), ranks_of)
    return lattice_mesh(p, tets, xyz_of)


def sphere_octant_mesh(p, r_in, r_out, h_l, graded=True):
    """Structured octant shell between two spheres.

    Directions are sampled through the rational octant patch itself, so every
    boundary node lies exactly on a sphere or a symmetry plane and the node
    spacing is coherent with the patch parameterization (which is what lets
    the rational boundary reconstruction recover the arcs).  Radial layers are
    geometrically graded towards the inner sphere by default (the strain
    fields of pressurized shells decay like r^-3).
    """
    n = max(1, round(r_out / h_l))
    nr = max(1, round(r_out / h_l))
    N = n * p
    NR = nr * p

    def xyz_of(key):
        i, j, k = key
        d = np.array([i, j, N - i - j], dtype=float)
        d /= np.linalg.norm(d)
        if graded:
            r = r_in * (r_out / r_in) ** (k / NR)
        else:
            r = r_in + (r_out - r_in) * k / NR
        return r * d

    book = _NodeBook()
    for i in range(n + 1):
        for j in range(n + 1 - i):
            for k in range(nr + 1):
                book.id_of((i * p, j * p, k * p))
    ranks_of = lambda c: book.ids[c]
    tets = []
    for i in range(n):
        for j in range(n - i):
            tris = [((i, j), (i + 1, j), (i, j + 1))]
            if i + j < n - 1:
                tris.append(((i + 1, j), (i + 1, j + 1), (i, j + 1)))
            for tri in tris:
                for k in range(nr):
                    corners = [(a * p, b * p, k * p) for a, b in tri]
                    corners += [(a * p, b * p, (k + 1) * p) for a, b in tri]
                    ranks = [ranks_of(c) for c in corners]
                    tets.extend(split_prism(corners, ranks))
    return lattice_mesh(p, tets, xyz_of)


_SECTOR_CORNERS6 = [
    # 6 x barycentric corners of the three direction-sector quads
    ((6, 0, 0), (3, 3, 0), (2, 2, 2), (3, 0, 3)),
    ((0, 6, 0), (0, 3, 3), (2, 2, 2), (3, 3, 0)),
    ((0, 0, 6), (3, 0, 3), (2, 2, 2), (0, 3, 3)),
]


def _sector_key6(s, A, B, mp):
    va, ma, c, mb = (np.asarray(v, dtype=np.int64) for v in _SECTOR_CORNERS6[s])
    k = (mp - A) * (mp - B) * va + A * (mp - B) * ma + A * B * c + (mp - A) * B * mb
    return tuple(int(x) for x in k)


def radial_sector_mesh(p, h_l, r_inner_fn, r_outer_fn):
    """Octant-corner domain between an inner star-shaped surface and an outer one.

    Directions are gridded on three median-bounded sectors of the positive
    octant so no element face straddles an outer-box ridge.  ``r_inner_fn`` /
    ``r_outer_fn`` map a unit direction to the inner/outer radius along it.
    Used by the cube-with-hole benchmark.
    """
    m = max(1, int(np.ceil(1.4 / h_l)))
    nr = max(1, int(np.ceil(1.3 / h_l)))
    mp = m * p
    NR = nr * p

    def canon(idx):
        s, A, B, k = idx
        return _sector_key6(s, A, B, mp) + (k,)

    def xyz_of(key):
        k1, k2, k3, kr = key
        d = np.array([k1, k2, k3], dtype=float)
        d /= np.linalg.norm(d)
        ri = r_inner_fn(d)
        ro = r_outer_fn(d)
        return (ri + (ro - ri) * kr / NR) * d

    book = _NodeBook()
    coarse = {}
    for s in range(3):
        for a in range(m + 1):
            for b in range(m + 1):
                for k in range(nr + 1):
                    idx = (s, a * p, b * p, k * p)
                    coarse[idx] = book.id_of(canon(idx))
    ranks_of = lambda c: coarse[c]

    def cells():
        for s in range(3):
            for a in range(m):
                for b in range(m):
                    q = [(a, b), (a + 1, b), (a + 1, b + 1), (a, b + 1)]
                    for k in range(nr):
                        bottom = [(s, x * p, y * p, k * p) for x, y in q]
                        top = [(s, x * p, y * p, (k + 1) * p) for x, y in q]
                        yield bottom, top, (a + b) % 2 == 0
    tets = _grid_prisms(cells(), ranks_of)
    return lattice_mesh(p, tets, xyz_of, canon=canon, tag_components=1)


def t_shape_mesh(p, h_l, geom):
    """Structured mesh of the hammer T: vertical handle plus horizontal head.

    ``geom`` is a mapping with the current shape values: handle faces at
    -x4/x3, head ends xl_bot/xl_top (slanted) and xr, wing undersides z6/z7,
    junction height zj, head top z5, half width w.
    """
    x3, x4 = geom["x3"], geom["x4"]
    xl_bot, xl_top, xr = geom["xl_bot"], geom["xl_top"], geom["xr"]
    z5, z6, z7, zj = geom["z5"], geom["z6"], geom["z7"], geom["zj"]
    w = geom["w"]
    if z5 <= max(z6, z7) + 0.2 or -x4 <= xl_top + 0.05 or -x4 <= xl_bot + 0.05:
        raise MeshValidityError("t-shape degenerated: head or wings too thin")
    xl_ref = min(xl_bot, xl_top)
    x_breaks = [xl_ref, -x4, x3, xr]
    z_breaks = sorted({0.0, z6, z7, zj, z5})
    z_breaks = [z for z in z_breaks if 0.0 <= z <= z5]
    fx, cx = _segmented_axis(x_breaks, h_l)
    fz, cz = _segmented_axis(z_breaks, h_l)
    ny = max(1, round(2 * w / h_l))
    fy = np.linspace(-w, w, ny + 1)

    def strip_of_x(x):
        if x < -x4 - 1e-12:
            return "left"
        if x > x3 + 1e-12:
            return "right"
        return "mid"

    # coarse cell active test: is the cell (by midpoint) inside the T?
    def active(xm, zm):
        s = strip_of_x(xm)
        if s == "mid":
            return 0.0 < zm < z5
        if s == "left":
            return z6 < zm < z5
        return z7 < zm < z5

    nxc = len(fx) - 1
    nzc = len(fz) - 1
    FX = _refine_axis(fx, p)
    FY = _refine_axis(fy, p)
    FZ = _refine_axis(fz, p)

    def xyz_of(key):
        i, j, k = key
        x, y, z = FX[i], FY[j], FZ[k]
        if x < -x4 - 1e-12 and abs(xl_top - xl_bot) > 0:
            # shear the left strip so its outer face follows the tapered end
            t = (z - z6) / (z5 - z6)
            xl_here = xl_bot + (xl_top - xl_bot) * min(max(t, 0.0), 1.0)
            lam = (x - xl_ref) / ((-x4) - xl_ref)
            x = xl_here + lam * ((-x4) - xl_here)
        return np.array([x, y, z])

    book = _NodeBook()
    for i in range(nxc + 1):
        for j in range(ny + 1):
            for k in range(nzc + 1):
                book.id_of((i * p, j * p, k * p))
    ranks_of = lambda c: book.ids[c]

    def cells():
        for i in range(nxc):
            for k in range(nzc):
                xm = 0.5 * (fx[i] + fx[i + 1])
                zm = 0.5 * (fz[k] + fz[k + 1])
                if not active(xm, zm):
                    continue
                for j in range(ny):
                    q = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                    bottom = [(a * p, b * p, k * p) for a, b in q]
                    top = [(a * p, b * p, (k + 1) * p) for a, b in q]
                    yield bottom, top, (i + j) % 2 == 0
    tets = _grid_prisms(cells(), ranks_of)
    return lattice_mesh(p, tets, xyz_of)


def _refine_axis(coarse, p):
    """Insert p-1 evenly spaced fine points inside every coarse interval."""
    out = [float(coarse[0])]
    for a, b in zip(coarse[:-1], coarse[1:]):
        out.extend(np.linspace(a, b, p + 1)[1:].tolist())
    return np.asarray(out)
