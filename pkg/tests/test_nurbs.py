import numpy as np
import pytest

from beztetopt import nurbs, patches
from beztetopt.errors import InputError, InversionError
from beztetopt.nurbs import KnotVector, bspline_basis, bspline_basis_derivs, point_inversion


CUBIC_KV = KnotVector(np.array([0, 0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1, 1.0]), 3)


def cox_de_boor(knots, i, p, x):
    """Plain recursive Cox-de Boor evaluation (independent oracle)."""
    if p == 0:
        # half-open spans, closed at the right end of the last span
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        if x == knots[-1] and knots[i] < knots[i + 1] == knots[-1]:
            return 1.0
        return 0.0
    out = 0.0
    den = knots[i + p] - knots[i]
    if den > 0:
        out += (x - knots[i]) / den * cox_de_boor(knots, i, p - 1, x)
    den = knots[i + p + 1] - knots[i + 1]
    if den > 0:
        out += (knots[i + p + 1] - x) / den * cox_de_boor(knots, i + 1, p - 1, x)
    return out


def full_basis(kv, x):
    span, N = bspline_basis(kv, x)
    out = np.zeros(kv.n)
    out[span - kv.degree : span + 1] = N
    return out


def test_open_knot_endpoint():
    vals = full_basis(CUBIC_KV, 0.0)
    expected = np.zeros(6)
    expected[0] = 1.0
    np.testing.assert_allclose(vals, expected, atol=1e-15)


def test_partition_of_unity():
    rng = np.random.default_rng(0)
    for x in rng.uniform(0, 1, 100):
        span, N = bspline_basis(CUBIC_KV, x)
        assert N.sum() == pytest.approx(1.0, abs=1e-13)
        assert np.all(N >= -1e-14)


def test_against_recursive_oracle():
    for x in (0.5, 0.1, 1 / 3, 0.999, 1.0):
        vals = full_basis(CUBIC_KV, x)
        oracle = np.array([cox_de_boor(CUBIC_KV.knots, i, 3, x) for i in range(6)])
        np.testing.assert_allclose(vals, oracle, atol=1e-12)


def test_parameter_outside_range():
    with pytest.raises(InputError):
        bspline_basis(CUBIC_KV, 1.5)


def test_derivative_sums_to_zero():
    for x in (0.0, 0.2, 0.5, 0.77, 1.0):
        _, ders = bspline_basis_derivs(CUBIC_KV, x, order=2)
        assert ders[1].sum() == pytest.approx(0.0, abs=1e-12)
        assert ders[2].sum() == pytest.approx(0.0, abs=1e-11)


def test_derivatives_match_central_differences():
    h = 1e-7
    rng = np.random.default_rng(1)
    for x in rng.uniform(0.05, 0.95, 20):
        _, ders = bspline_basis_derivs(CUBIC_KV, x, order=1)
        span, _ = bspline_basis(CUBIC_KV, x)
        fd = (full_basis(CUBIC_KV, x + h) - full_basis(CUBIC_KV, x - h)) / (2 * h)
        scale = max(1.0, np.abs(fd).max())
        np.testing.assert_allclose(
            ders[1], fd[span - 3 : span + 1], atol=1e-5 * scale
        )


def test_straight_line_second_derivative():
    kv = KnotVector(np.array([0.0, 0, 1, 1]), 1)
    cps = np.array([[0.0, 0, 0], [1, 2, 3]])
    curve = nurbs.NurbsCurve(kv, cps, np.ones(2))
    # degree-1 curve: second derivative identically zero by definition; check
    # affine reproduction instead on an elevated straight quadratic
    quad = patches.grid_patch(
        np.array([[[0.0, 0, 0], [0, 1, 0]], [[0.5, 0, 0], [0.5, 1, 0]], [[1, 0, 0], [1, 1, 0]]]),
        pu=2,
        pv=1,
    )
    _, _, _, Suu, _, _ = quad.derivs2(0.3, 0.5)
    np.testing.assert_allclose(Suu, 0.0, atol=1e-12)
    np.testing.assert_allclose(curve.eval(0.25), [0.25, 0.5, 0.75], atol=1e-15)


def test_bilinear_patch_affine_midpoint():
    s = patches.bilinear_patch([0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0])
    np.testing.assert_allclose(s.eval(0.5, 0.5), [0.5, 0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(s.eval(0.0, 0.0), [0.0, 0.0, 0.0], atol=1e-15)


def test_sphere_octant_norm():
    s = patches.sphere_octant_patch(4.0)
    rng = np.random.default_rng(2)
    for u, v in rng.uniform(0, 1, size=(50, 2)):
        assert np.linalg.norm(s.eval(u, v)) == pytest.approx(4.0, abs=1e-10)


def test_sphere_tangent_orthogonal_to_radius():
    s = patches.sphere_octant_patch(4.0)
    S, Su, Sv = s.derivs(0.37, 0.81)
    assert abs(S @ Su) < 1e-8
    assert abs(S @ Sv) < 1e-8


def test_surface_derivs_match_central_differences():
    s = patches.sphere_octant_patch(2.0)
    h = 1e-6
    for u, v in [(0.3, 0.4), (0.7, 0.2), (0.5, 0.9)]:
        S, Su, Sv = s.derivs(u, v)
        fdu = (s.eval(u + h, v) - s.eval(u - h, v)) / (2 * h)
        fdv = (s.eval(u, v + h) - s.eval(u, v - h)) / (2 * h)
        np.testing.assert_allclose(Su, fdu, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(Sv, fdv, rtol=1e-5, atol=1e-7)


def test_planar_patch_partials_in_plane():
    s = patches.bilinear_patch([0, 0, 1], [2, 0, 1], [0, 3, 1], [2, 3, 1])
    _, Su, Sv = s.derivs(0.3, 0.6)
    assert Su[2] == pytest.approx(0.0, abs=1e-14)
    assert Sv[2] == pytest.approx(0.0, abs=1e-14)


def test_affine_map_commutes_with_eval():
    rng = np.random.default_rng(3)
    cps = rng.normal(size=(4, 3, 3))
    s = patches.grid_patch(cps, pu=2, pv=2)
    A = rng.normal(size=(3, 3))
    b = rng.normal(size=3)
    s2 = patches.grid_patch(cps @ A.T + b, pu=2, pv=2)
    for u, v in rng.uniform(0, 1, size=(20, 2)):
        np.testing.assert_allclose(s2.eval(u, v), A @ s.eval(u, v) + b, atol=1e-12)


def test_point_inversion_round_trip():
    s = patches.sphere_octant_patch(4.0)
    x = s.eval(0.37, 0.62)
    u, v, res = point_inversion(s, x)
    assert res < 1e-10
    assert (abs(u - 0.37) < 1e-8 and abs(v - 0.62) < 1e-8) or res < 1e-10


def test_point_inversion_round_trip_random():
    s = patches.sphere_octant_patch(1.0)
    rng = np.random.default_rng(4)
    for u0, v0 in rng.uniform(0.0, 1.0, size=(100, 2)):
        x = s.eval(u0, v0)
        u, v, res = point_inversion(s, x)
        assert res < 1e-8


def test_point_inversion_corner():
    s = patches.bilinear_patch([0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0])
    u, v, res = point_inversion(s, [0.0, 0.0, 0.0])
    assert res < 1e-12
    assert u == pytest.approx(0.0, abs=1e-9)
    assert v == pytest.approx(0.0, abs=1e-9)


def test_point_inversion_failure():
    s = patches.bilinear_patch([0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0])
    with pytest.raises(InversionError) as err:
        point_inversion(s, [0.5, 0.5, 1.0], tol=1e-6)
    assert err.value.residual == pytest.approx(1.0, rel=1e-6)


def test_point_inversion_degenerate_apex():
    s = patches.sphere_octant_patch(1.0)
    # the collapsed edge maps to the pole
    u, v, res = point_inversion(s, [0.0, 0.0, 1.0])
    assert res < 1e-9


def test_quarter_annulus_radii():
    s = patches.quarter_annulus_patch(1.0, 4.0, "x")
    for u in (0.0, 0.25, 0.5, 1.0):
        assert np.linalg.norm(s.eval(u, 0.0)) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(s.eval(u, 1.0)) == pytest.approx(4.0, abs=1e-12)
        assert s.eval(u, 0.5)[0] == pytest.approx(0.0, abs=1e-14)
