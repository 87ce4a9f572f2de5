"""Constructors for the NURBS patches used by the benchmark geometries."""

import numpy as np

from .errors import InputError
from .nurbs import KnotVector, NurbsSurface

SQRT2_INV = 1.0 / np.sqrt(2.0)


def open_knots(n, p, lo=0.0, hi=1.0):
    """Open knot vector with ``n`` basis functions of degree ``p``.

    Interior knots are spaced uniformly.
    """
    if n < p + 1:
        raise InputError(f"need at least {p + 1} control points for degree {p}")
    interior = np.linspace(lo, hi, n - p + 1)[1:-1]
    knots = np.concatenate([[lo] * (p + 1), interior, [hi] * (p + 1)])
    return KnotVector(knots, p)


def bilinear_patch(c00, c10, c01, c11, sid=0, name=""):
    """Flat (or ruled) patch through four corners; u runs 0->1 from c00 to c10."""
    cps = np.array([[c00, c01], [c10, c11]], dtype=float)
    kv = KnotVector(np.array([0.0, 0.0, 1.0, 1.0]), 1)
    return NurbsSurface(kv, kv, cps, np.ones((2, 2)), sid=sid, name=name)


def grid_patch(cps, weights=None, pu=None, pv=None, sid=0, name=""):
    """Patch from an explicit (n, m, 3) control grid with open uniform knots."""
    cps = np.asarray(cps, dtype=float)
    n, m = cps.shape[:2]
    pu = pu if pu is not None else min(2, n - 1)
    pv = pv if pv is not None else min(2, m - 1)
    w = np.ones((n, m)) if weights is None else np.asarray(weights, dtype=float)
    return NurbsSurface(open_knots(n, pu), open_knots(m, pv), cps, w, sid=sid, name=name)


def sphere_octant_patch(radius, sid=0, name="sphere"):
    """Exact octant of a sphere as a degenerate rational biquadratic patch.

    The u = 0 edge collapses onto the pole (0, 0, R); the u = 1 edge is the
    quarter equator in the z = 0 plane.
    """
    R = float(radius)
    cps = np.array(
        [
            [[0, 0, R], [0, 0, R], [0, 0, R]],
            [[R, 0, R], [R, R, R], [0, R, R]],
            [[R, 0, 0], [R, R, 0], [0, R, 0]],
        ],
        dtype=float,
    )
    w = np.array(
        [
            [1.0, SQRT2_INV, 1.0],
            [SQRT2_INV, 0.5, SQRT2_INV],
            [1.0, SQRT2_INV, 1.0],
        ]
    )
    kv = KnotVector(np.array([0.0, 0, 0, 1, 1, 1]), 2)
    return NurbsSurface(kv, kv, cps, w, sid=sid, name=name)


_ARC_AXES = {"x": (1, 2, 0), "y": (2, 0, 1), "z": (0, 1, 2)}


def quarter_annulus_patch(r_in, r_out, plane_normal, sid=0, name=""):
    """Quarter annulus on a coordinate plane, exact rational arcs.

    ``plane_normal`` in {"x", "y", "z"} names the zero coordinate; the patch
    spans radii [r_in, r_out] between the two in-plane positive axes.
    u is angular (rational quadratic), v is radial (linear).
    """
    a, b, n = _ARC_AXES[plane_normal]
    arc = np.zeros((3, 3))
    arc[0, a], arc[1, a], arc[1, b], arc[2, b] = 1.0, 1.0, 1.0, 1.0
    cps = np.stack([arc * r_in, arc * r_out], axis=1)  # (3 angular, 2 radial, 3)
    w = np.tile(np.array([1.0, SQRT2_INV, 1.0])[:, None], (1, 2))
    ku = KnotVector(np.array([0.0, 0, 0, 1, 1, 1]), 2)
    kvv = KnotVector(np.array([0.0, 0, 1, 1]), 1)
    return NurbsSurface(ku, kvv, cps, w, sid=sid, name=name)
