import math

import numpy as np
import pytest

from beztetopt.errors import InputError
from beztetopt.quadrature import line_quadrature, tet_quadrature, tri_quadrature


def tet_monomial_exact(a, b, c):
    # int_T xi^a eta^b zeta^c = a! b! c! / (a + b + c + 3)!
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


def test_reference_volume():
    rule = tet_quadrature(2)
    assert rule.weights.sum() == pytest.approx(1 / 6, abs=1e-15)


def test_centroid_moment():
    rule = tet_quadrature(3)
    xi = rule.points[:, 1]
    assert (rule.weights * xi).sum() == pytest.approx(1 / 24, abs=1e-15)


def test_order8_monomial():
    rule = tet_quadrature(8)
    xi, eta, zeta = rule.points[:, 1], rule.points[:, 2], rule.points[:, 3]
    val = (rule.weights * xi**2 * eta**3 * zeta).sum()
    assert val == pytest.approx(tet_monomial_exact(2, 3, 1), rel=1e-13)


@pytest.mark.parametrize("order", [1, 2, 4, 6, 8, 10])
def test_all_monomials_up_to_order(order):
    rule = tet_quadrature(order)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            for c in range(order + 1 - a - b):
                val = (
                    rule.weights
                    * rule.points[:, 1] ** a
                    * rule.points[:, 2] ** b
                    * rule.points[:, 3] ** c
                ).sum()
                assert val == pytest.approx(tet_monomial_exact(a, b, c), rel=1e-12)


def test_positive_weights():
    for order in (1, 3, 8, 12):
        assert np.all(tet_quadrature(order).weights > 0)
        assert np.all(tri_quadrature(order).weights > 0)


def test_triangle_rule():
    rule = tri_quadrature(4)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)
    a = rule.points[:, 1]
    b = rule.points[:, 2]
    # int_T a = 1/6, int_T a*b = 1/24 on the unit triangle
    assert (rule.weights * a).sum() == pytest.approx(1 / 6, abs=1e-14)
    assert (rule.weights * a * b).sum() == pytest.approx(1 / 24, abs=1e-14)


def test_line_rule():
    rule = line_quadrature(5)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert (rule.weights * rule.points**3).sum() == pytest.approx(0.25, abs=1e-14)


def test_unsupported_order():
    with pytest.raises(InputError):
        tet_quadrature(-1)
    with pytest.raises(InputError):
        tet_quadrature(10_000)
