"""B-spline / NURBS curves and surfaces: evaluation, derivatives, inversion.

Surfaces are tensor-product rational B-splines stored exactly as authored
(no degree elevation or knot refinement happens here).  Control points are
kept in Cartesian form with a separate positive weight grid; homogeneous
(xw, yw, zw, w) views are built on demand.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InversionError

_DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class KnotVector:
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 1:
            raise InputError(f"degree must be >= 1, got {p}")
        if len(knots) < 2 * (p + 1):
            raise InputError("knot vector too short for an open vector")
        if np.any(np.diff(knots) < 0):
            raise InputError("knots must be non-decreasing")
        if not (np.allclose(knots[: p + 1], knots[0]) and np.allclose(knots[-p - 1 :], knots[-1])):
            raise InputError("only open (clamped) knot vectors are supported")

    @property
    def n(self):
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @property
    def domain(self):
        return float(self.knots[self.degree]), float(self.knots[-self.degree - 1])

    def clamp(self, x):
        lo, hi = self.domain
        return min(max(float(x), lo), hi)

    def find_span(self, x):
        lo, hi = self.domain
        if not lo - _DOMAIN_TOL <= x <= hi + _DOMAIN_TOL:
            raise InputError(f"parameter {x} outside knot range [{lo}, {hi}]")
        x = self.clamp(x)
        span = int(np.searchsorted(self.knots, x, side="right")) - 1
        return min(max(span, self.degree), self.n - 1)


def bspline_basis(kv, x):
    """Nonzero B-spline basis values at x.

    Returns ``(span, values)`` where ``values[k]`` belongs to basis function
    ``span - degree + k``.  The 0/0 convention of the Cox-de Boor recursion is
    resolved as 0.
    """
    span = kv.find_span(x)
    x = kv.clamp(x)
    p = kv.degree
    knots = kv.knots
    N = np.zeros(p + 1)
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    N[0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            den = right[r + 1] + left[j - r]
            temp = N[r] / den if den != 0.0 else 0.0
            N[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N[j] = saved
    return span, N


def bspline_basis_derivs(kv, x, order=2):
    """Nonzero basis values and derivatives up to ``order``.

    Returns ``(span, ders)`` with ``ders`` of shape (order + 1, degree + 1).
    """
    if order < 0 or order > 2:
        raise InputError("derivative order must be 0, 1 or 2")
    span = kv.find_span(x)
    x = kv.clamp(x)
    p = kv.degree
    knots = kv.knots
    ndu = np.zeros((p + 1, p + 1))
    ndu[0, 0] = 1.0
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r] if ndu[j, r] != 0.0 else 0.0
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    ders = np.zeros((order + 1, p + 1))
    ders[0] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, order + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk] if ndu[pk + 1, rk] != 0.0 else 0.0
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                den = ndu[pk + 1, rk + j]
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / den if den != 0.0 else 0.0
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r] if ndu[pk + 1, r] != 0.0 else 0.0
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, order + 1):
        ders[k] *= fac
        fac *= p - k
    return span, ders


@dataclass(frozen=True)
class NurbsCurve:
    kv: KnotVector
    cps: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        cps = np.asarray(self.cps, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if cps.shape != (self.kv.n, 3) or w.shape != (self.kv.n,):
            raise InputError("curve control net inconsistent with knot vector")
        if np.any(w <= 0):
            raise InputError("curve weights must be positive")
        object.__setattr__(self, "cps", cps)
        object.__setattr__(self, "weights", w)

    def eval(self, t):
        span, N = bspline_basis(self.kv, t)
        sl = slice(span - self.kv.degree, span + 1)
        w = self.weights[sl]
        num = (N * w) @ self.cps[sl]
        return num / (N * w).sum()

    def homogeneous(self):
        return np.column_stack([self.cps * self.weights[:, None], self.weights])


@dataclass(frozen=True)
class NurbsSurface:
    ku: KnotVector
    kvv: KnotVector
    cps: np.ndarray  # (n, m, 3)
    weights: np.ndarray  # (n, m)
    sid: int = 0
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        cps = np.asarray(self.cps, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if cps.shape != (self.ku.n, self.kvv.n, 3):
            raise InputError(
                f"control net shape {cps.shape} inconsistent with knot vectors "
                f"({self.ku.n} x {self.kvv.n})"
            )
        if w.shape != (self.ku.n, self.kvv.n):
            raise InputError("weight grid inconsistent with control net")
        if np.any(w <= 0):
            raise InputError("surface weights must be positive")
        object.__setattr__(self, "cps", cps)
        object.__setattr__(self, "weights", w)

    @property
    def domain(self):
        return self.ku.domain, self.kvv.domain

    def bbox_diag(self):
        lo = self.cps.reshape(-1, 3).min(axis=0)
        hi = self.cps.reshape(-1, 3).max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def homogeneous(self):
        return np.concatenate(
            [self.cps * self.weights[..., None], self.weights[..., None]], axis=-1
        )

    def _local(self, u, v, order):
        su, du = bspline_basis_derivs(self.ku, u, order)
        sv, dv = bspline_basis_derivs(self.kvv, v, order)
        slu = slice(su - self.ku.degree, su + 1)
        slv = slice(sv - self.kvv.degree, sv + 1)
        H = self.homogeneous()[slu, slv]  # (pu+1, pv+1, 4)
        return du, dv, H

    def eval(self, u, v):
        du, dv, H = self._local(u, v, 0)
        A = np.einsum("i,j,ijc->c", du[0], dv[0], H)
        return A[:3] / A[3]

    def derivs(self, u, v):
        """Point and first partials (S, Su, Sv)."""
        du, dv, H = self._local(u, v, 1)
        A = np.einsum("i,j,ijc->c", du[0], dv[0], H)
        Au = np.einsum("i,j,ijc->c", du[1], dv[0], H)
        Av = np.einsum("i,j,ijc->c", du[0], dv[1], H)
        S = A[:3] / A[3]
        Su = (Au[:3] - S * Au[3]) / A[3]
        Sv = (Av[:3] - S * Av[3]) / A[3]
        return S, Su, Sv

    def derivs2(self, u, v):
        """Point, first and second partials (S, Su, Sv, Suu, Suv, Svv)."""
        du, dv, H = self._local(u, v, 2)

        def A(ou, ov):
            return np.einsum("i,j,ijc->c", du[ou], dv[ov], H)

        A00, A10, A01 = A(0, 0), A(1, 0), A(0, 1)
        A20, A11, A02 = A(2, 0), A(1, 1), A(0, 2)
        w = A00[3]
        S = A00[:3] / w
        Su = (A10[:3] - S * A10[3]) / w
        Sv = (A01[:3] - S * A01[3]) / w
        Suu = (A20[:3] - 2 * Su * A10[3] - S * A20[3]) / w
        Suv = (A11[:3] - Su * A01[3] - Sv * A10[3] - S * A11[3]) / w
        Svv = (A02[:3] - 2 * Sv * A01[3] - S * A02[3]) / w
        return S, Su, Sv, Suu, Suv, Svv

    def basis_row(self, u, v):
        """Dense row of all n*m basis values N_i(u) M_j(v), shape (n, m)."""
        su, Nu = bspline_basis(self.ku, u)
        sv, Nv = bspline_basis(self.kvv, v)
        row = np.zeros((self.ku.n, self.kvv.n))
        row[su - self.ku.degree : su + 1, sv - self.kvv.degree : sv + 1] = np.outer(Nu, Nv)
        return row

    def iso_curve(self, side):
        """Boundary curve on one of the four patch sides.

        ``side`` is one of "u0", "u1", "v0", "v1"; e.g. "u0" is the curve
        v -> S(u_min, v).
        """
        if side == "u0":
            return NurbsCurve(self.kvv, self.cps[0], self.weights[0])
        if side == "u1":
            return NurbsCurve(self.kvv, self.cps[-1], self.weights[-1])
        if side == "v0":
            return NurbsCurve(self.ku, self.cps[:, 0], self.weights[:, 0])
        if side == "v1":
            return NurbsCurve(self.ku, self.cps[:, -1], self.weights[:, -1])
        raise InputError(f"unknown side {side!r}")


def surface_eval(surface, u, v):
    return surface.eval(u, v)


def surface_derivs(surface, u, v):
    return surface.derivs(u, v)


def point_inversion(surface, x, seed_grid=16, tol=None, max_iter=50, seed=None):
    """Closest-point projection of ``x`` onto a surface.

    Seeds with the best points of a ``seed_grid`` x ``seed_grid`` parameter
    sample (cached on the surface), then runs Newton iteration on the
    orthogonality system; steps that hit a singular system (collapsed patch
    edges) fall back to damped gradient descent on the squared distance.
    An explicit ``seed=(u, v)`` is tried first.  Returns ``(u, v, residual)``.

    Raises :class:`InversionError` when the residual stays above ``tol``
    (default ``1e-10 * bbox diagonal``).
    """
    x = np.asarray(x, dtype=float)
    scale = max(surface.bbox_diag(), 1e-30)
    if tol is None:
        tol = 1e-10 * scale
    # iterate well past the acceptance tolerance so stored parameters do not
    # inherit tol_geo-sized noise (it would contaminate the reconstruction)
    target = min(tol, 1e-13 * scale)
    (u0, u1), (v0, v1) = surface.domain
    if seed is not None:
        u, v, res = _newton_invert(surface, x, seed[0], seed[1], target, max_iter)
        if res <= tol:
            return u, v, res
    cache = surface.meta.setdefault("_inversion_seeds", {})
    if seed_grid not in cache:
        us = np.linspace(u0, u1, seed_grid + 1)
        vs = np.linspace(v0, v1, seed_grid + 1)
        pts = np.array([[surface.eval(u, v) for v in vs] for u in us])
        cache[seed_grid] = (us, vs, pts)
    us, vs, pts = cache[seed_grid]
    d2 = ((pts - x) ** 2).sum(axis=-1)
    order = np.argsort(d2, axis=None)

    best = (np.inf, None)
    for flat in order[:6]:
        iu, iv = np.unravel_index(flat, d2.shape)
        u, v = us[iu], vs[iv]
        u, v, res = _newton_invert(surface, x, u, v, target, max_iter)
        if res > target:
            # collapsed patch edges trap iterates; retry from an interior nudge
            un = u + 0.02 * (0.5 * (u0 + u1) - u)
            vn = v + 0.02 * (0.5 * (v0 + v1) - v)
            u2, v2, res2 = _newton_invert(surface, x, un, vn, target, max_iter)
            if res2 < res:
                u, v, res = u2, v2, res2
        if res < best[0]:
            best = (res, (u, v))
        if res <= target:
            return u, v, res
    res, uv = best
    if res <= tol:
        return uv[0], uv[1], res
    raise InversionError(
        f"point inversion stalled at residual {res:.3e} (tol {tol:.3e})",
        residual=res,
        uv=uv,
    )


def _newton_invert(surface, x, u, v, tol, max_iter):
    (u0, u1), (v0, v1) = surface.domain

    def clamp(uu, vv):
        return min(max(uu, u0), u1), min(max(vv, v0), v1)

    mu = 0.0
    for _ in range(2 * max_iter):
        S, Su, Sv, Suu, Suv, Svv = surface.derivs2(u, v)
        r = S - x
        d2 = r @ r
        res = np.sqrt(d2)
        if res <= tol:
            return u, v, res
        g = np.array([r @ Su, r @ Sv])
        if np.linalg.norm(g) < 1e-14 * max(res, 1.0) * max(surface.bbox_diag(), 1.0):
            return u, v, res  # stationary: true closest point reached
        J = np.array(
            [
                [Su @ Su + r @ Suu, Su @ Sv + r @ Suv],
                [Su @ Sv + r @ Suv, Sv @ Sv + r @ Svv],
            ]
        )
        taken = False
        det = np.linalg.det(J)
        if abs(det) > 1e-14 * max(abs(J).max(), 1.0) ** 2:
            step = -np.linalg.solve(J, g)
            if np.all(np.isfinite(step)):
                for _ in range(8):
                    un, vn = clamp(u + step[0], v + step[1])
                    rn = surface.eval(un, vn) - x
                    if rn @ rn <= d2 or np.sqrt(rn @ rn) <= tol:
                        taken = True
                        break
                    step *= 0.5
        if not taken:
            # Levenberg-damped gradient steps on the squared distance keep the
            # iteration alive across collapsed (singular) patch edges.
            H = np.array([[Su @ Su, Su @ Sv], [Su @ Sv, Sv @ Sv]])
            mu = max(mu, 1e-8 * (H[0, 0] + H[1, 1]) + 1e-30)
            for _ in range(40):
                step = -np.linalg.solve(H + mu * np.eye(2), g)
                un, vn = clamp(u + step[0], v + step[1])
                rn = surface.eval(un, vn) - x
                if rn @ rn < d2:
                    mu *= 0.25
                    taken = True
                    break
                mu *= 4.0
            if not taken:
                return u, v, res
        if abs(un - u) < 1e-15 * (u1 - u0) and abs(vn - v) < 1e-15 * (v1 - v0):
            return un, vn, np.linalg.norm(surface.eval(un, vn) - x)
        u, v = un, vn
    return u, v, np.linalg.norm(surface.eval(u, v) - x)
