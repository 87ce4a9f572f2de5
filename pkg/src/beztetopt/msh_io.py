"""Reader for Gmsh MSH 4.1 ASCII files (tetrahedra of degree 1 to 4).

Supported blocks: ``$MeshFormat``, ``$PhysicalNames``, ``$Entities``,
``$Nodes``, ``$Elements``.  Element types 4/11/29/30 (tets p=1..4) become the
mesh; triangle types 2/9/21/23 only contribute physical-surface tags to the
matching boundary faces.  Gmsh node ordering is permuted into the canonical
order of :mod:`.simplex` at read time; the assumed Gmsh convention is the
documented recursive one (principal vertices, then edge nodes along
``(0,1), (1,2), (2,0), (3,0), (3,2), (3,1)``, then face nodes per face
``(0,2,1), (0,1,3), (0,3,2), (3,2,1)``, then volume nodes).
"""

from functools import lru_cache

import numpy as np

from . import simplex
from .errors import FormatError
from .mesh import make_mesh

TET_TYPES = {4: 1, 11: 2, 29: 3, 30: 4}
TRI_TYPES = {2: 1, 9: 2, 21: 3, 23: 4}

_GMSH_TET_EDGES = ((0, 1), (1, 2), (2, 0), (3, 0), (3, 2), (3, 1))
_GMSH_TET_FACES = ((0, 2, 1), (0, 1, 3), (0, 3, 2), (3, 2, 1))
_GMSH_TRI_EDGES = ((0, 1), (1, 2), (2, 0))


def _gmsh_tri_lattice(q):
    """Gmsh recursive triangle lattice as integer multi-indices (i, j, k)."""
    if q == 0:
        return [(0, 0, 0)]
    out = [(q, 0, 0), (0, q, 0), (0, 0, q)]
    for a, b in _GMSH_TRI_EDGES:
        for t in range(1, q):
            mi = [0, 0, 0]
            mi[a], mi[b] = q - t, t
            out.append(tuple(mi))
    if q >= 3:
        for sub in _gmsh_tri_lattice(q - 3):
            out.append(tuple(s + 1 for s in sub))
    return out


def _gmsh_tet_lattice(p):
    """Gmsh recursive tetrahedron lattice as multi-indices (i, j, k, l)."""
    if p == 0:
        return [(0, 0, 0, 0)]
    out = []
    for v in range(4):
        mi = [0, 0, 0, 0]
        mi[v] = p
        out.append(tuple(mi))
    for a, b in _GMSH_TET_EDGES:
        for t in range(1, p):
            mi = [0, 0, 0, 0]
            mi[a], mi[b] = p - t, t
            out.append(tuple(mi))
    for a, b, c in _GMSH_TET_FACES:
        for ta, tb, tc in _gmsh_tri_lattice(p - 3) if p >= 3 else []:
            mi = [0, 0, 0, 0]
            mi[a], mi[b], mi[c] = ta + 1, tb + 1, tc + 1
            out.append(tuple(mi))
    if p >= 4:
        for sub in _gmsh_tet_lattice(p - 4):
            out.append(tuple(s + 1 for s in sub))
    return out


@lru_cache(maxsize=None)
def gmsh_tet_permutation(p):
    """``perm[c]`` = gmsh slot holding canonical node ``c``."""
    gmsh = _gmsh_tet_lattice(p)
    lookup = {mi: g for g, mi in enumerate(gmsh)}
    canon = [tuple(int(x) for x in mi) for mi in simplex.multi_indices(p)]
    if len(gmsh) != len(canon):
        raise FormatError(f"gmsh lattice size mismatch for degree {p}")
    return np.array([lookup[mi] for mi in canon], dtype=int)


class _Scanner:
    def __init__(self, text, path):
        self.lines = text.splitlines()
        self.i = 0
        self.path = path

    def next_line(self, section):
        while self.i < len(self.lines):
            line = self.lines[self.i].strip()
            self.i += 1
            if line:
                return line
        raise FormatError(f"{self.path}: unterminated section {section}")

    def peek(self):
        j = self.i
        while j < len(self.lines):
            line = self.lines[j].strip()
            if line:
                return line
            j += 1
        return None

    def skip_to_end(self, section):
        end = f"$End{section[1:]}"
        while True:
            if self.next_line(section) == end:
                return


def read_msh(path):
    """Read a MSH 4.1 ASCII file into a Lagrange tetrahedral mesh.

    Returns the mesh; boundary faces that match a tagged surface triangle get
    their ``sid`` set to the physical-surface tag.
    """
    with open(path) as fh:
        sc = _Scanner(fh.read(), path)

    header = sc.next_line("$MeshFormat")
    if header != "$MeshFormat":
        raise FormatError(f"{path}: expected $MeshFormat, found {header!r}")
    version, ftype, _ = sc.next_line("$MeshFormat").split()
    if not version.startswith("4.1"):
        raise FormatError(f"{path}: unsupported MSH version {version} (need 4.1)")
    if ftype != "0":
        raise FormatError(f"{path}: binary MSH is not supported")
    sc.skip_to_end("$MeshFormat")

    surface_physical = {}  # (dim, entity tag) -> physical tag
    node_xyz = {}
    tets = []
    tet_degree = None
    tri_tags = []  # (corner node tags, physical tag)

    while True:
        line = sc.peek()
        if line is None:
            break
        section = sc.next_line("file")
        if section == "$PhysicalNames":
            n = int(sc.next_line(section))
            for _ in range(n):
                sc.next_line(section)
            sc.skip_to_end(section)
        elif section == "$Entities":
            np_, nc, ns, nv = (int(t) for t in sc.next_line(section).split())
            for _ in range(np_ + nc):
                sc.next_line(section)
            for _ in range(ns):
                tok = sc.next_line(section).split()
                tag = int(tok[0])
                nphys = int(tok[7])
                if nphys > 0:
                    surface_physical[(2, tag)] = int(tok[8])
            for _ in range(nv):
                sc.next_line(section)
            sc.skip_to_end(section)
        elif section == "$Nodes":
            nblocks, _, _, _ = (int(t) for t in sc.next_line(section).split())
            for _ in range(nblocks):
                _, _, parametric, nnodes = (int(t) for t in sc.next_line(section).split())
                if parametric:
                    raise FormatError(f"{path}: parametric nodes are not supported")
                tags = [int(sc.next_line(section)) for _ in range(nnodes)]
                for t in tags:
                    xyz = [float(v) for v in sc.next_line(section).split()[:3]]
                    node_xyz[t] = xyz
            sc.skip_to_end(section)
        elif section == "$Elements":
            nblocks, _, _, _ = (int(t) for t in sc.next_line(section).split())
            for _ in range(nblocks):
                dim, etag, etype, nelem = (int(t) for t in sc.next_line(section).split())
                for _ in range(nelem):
                    tok = [int(t) for t in sc.next_line(section).split()]
                    conn = tok[1:]
                    if etype in TET_TYPES:
                        degree = TET_TYPES[etype]
                        if tet_degree is None:
                            tet_degree = degree
                        elif tet_degree != degree:
                            raise FormatError(
                                f"{path}: mixed tetrahedron degrees "
                                f"({tet_degree} and {degree})"
                            )
                        tets.append(conn)
                    elif etype in TRI_TYPES:
                        phys = surface_physical.get((dim, etag))
                        tri_tags.append((tuple(sorted(conn[:3])), phys))
                    else:
                        raise FormatError(
                            f"{path}: unsupported element type {etype} "
                            f"in entity {etag}"
                        )
            sc.skip_to_end(section)
        elif section.startswith("$"):
            sc.skip_to_end(section)
        else:
            raise FormatError(f"{path}: unexpected token {section!r}")

    if tet_degree is None:
        raise FormatError(f"{path}: no tetrahedra found")
    id_map = {}
    points = []
    for tag in sorted(node_xyz):
        id_map[tag] = len(points)
        points.append(node_xyz[tag])
    perm = gmsh_tet_permutation(tet_degree)
    nf = simplex.n_basis(tet_degree)
    elements = np.empty((len(tets), nf), dtype=int)
    for e, conn in enumerate(tets):
        if len(conn) != nf:
            raise FormatError(f"{path}: tetrahedron {e} has {len(conn)} nodes, need {nf}")
        gm = [id_map[t] for t in conn]
        elements[e] = [gm[perm[c]] for c in range(nf)]
    m = make_mesh(tet_degree, np.asarray(points), elements, kind="lagrange")
    if tri_tags:
        tagged = {
            corners: phys for corners, phys in tri_tags if phys is not None
        }
        for bf in m.boundary_faces:
            key = tuple(sorted(int(v) for v in m.elements[bf.elem, list(simplex.FACE_VERTEX_IDS[bf.local_face])]))
            if key in tagged:
                bf.sid = tagged[key]
    return m
