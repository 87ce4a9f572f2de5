import numpy as np
import pytest

from beztetopt import simplex
from beztetopt.errors import InputError


def lam_of(xi):
    xi = np.asarray(xi, dtype=float)
    return np.array([1.0 - xi.sum(), xi[0], xi[1], xi[2]])


def central_diff(fn, xi, h=1e-6):
    cols = []
    for d in range(3):
        e = np.zeros(3)
        e[d] = h
        cols.append((fn(xi + e) - fn(xi - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def index_of(p, mi):
    rows = simplex.multi_indices(p)
    hits = np.where((rows == np.asarray(mi)).all(axis=1))[0]
    assert len(hits) == 1
    return int(hits[0])


def test_vertex_interpolation():
    vals = simplex.eval_bernstein(2, [1.0, 0.0, 0.0, 0.0])
    expected = np.zeros(10)
    expected[index_of(2, (2, 0, 0, 0))] = 1.0
    np.testing.assert_allclose(vals, expected, atol=1e-15)


def test_partition_of_unity_all_bases():
    rng = np.random.default_rng(42)
    for p in range(1, 5):
        lams = rng.dirichlet(np.ones(4), size=100)
        assert np.max(np.abs(simplex.eval_bernstein(p, lams).sum(axis=-1) - 1)) < 1e-12
        assert np.max(np.abs(simplex.eval_lagrange(p, lams).sum(axis=-1) - 1)) < 1e-12
        w = rng.uniform(0.5, 2.0, simplex.n_basis(p))
        R, _ = simplex.eval_rational(p, lams, w)
        assert np.max(np.abs(R.sum(axis=-1) - 1)) < 1e-12


def test_edge_midpoint_value():
    # 2! * (1/2) * (1/2) by direct substitution
    vals = simplex.eval_bernstein(2, [0.5, 0.5, 0.0, 0.0])
    assert vals[index_of(2, (1, 1, 0, 0))] == pytest.approx(0.5, abs=1e-15)


def test_nonnegativity_inside():
    rng = np.random.default_rng(3)
    for p in range(1, 5):
        lams = rng.dirichlet(np.ones(4), size=50)
        assert np.min(simplex.eval_bernstein(p, lams)) >= 0.0


def test_grad_columns_sum_to_zero():
    rng = np.random.default_rng(7)
    for p in range(1, 5):
        lam = rng.dirichlet(np.ones(4))
        g = simplex.eval_bernstein_grad(p, lam)
        np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-12)


def test_vertex_grad_value():
    # B_3000 = lambda_1^3, so d/dxi at the vertex is -3
    g = simplex.eval_bernstein_grad(3, [1.0, 0.0, 0.0, 0.0])
    assert g[index_of(3, (3, 0, 0, 0)), 0] == pytest.approx(-3.0, abs=1e-14)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_grads_match_central_differences(p):
    rng = np.random.default_rng(11 + p)
    for _ in range(20):
        lam = rng.dirichlet(np.ones(4) * 4)
        xi = lam[1:]
        g = simplex.eval_bernstein_grad(p, lam)
        fd = central_diff(lambda x: simplex.eval_bernstein(p, lam_of(x)), xi)
        scale = max(1.0, np.abs(fd).max())
        assert np.abs(g - fd).max() / scale < 1e-6


@pytest.mark.parametrize("p", [2, 3, 4])
def test_rational_grads_match_central_differences(p):
    rng = np.random.default_rng(100 + p)
    w = rng.uniform(0.4, 2.5, simplex.n_basis(p))
    for _ in range(10):
        lam = rng.dirichlet(np.ones(4) * 4)
        xi = lam[1:]
        _, dR = simplex.eval_rational(p, lam, w)
        fd = central_diff(lambda x: simplex.eval_rational(p, lam_of(x), w)[0], xi)
        scale = max(1.0, np.abs(fd).max())
        assert np.abs(dR - fd).max() / scale < 1e-6


def test_rational_unit_weights_reduce_to_bernstein():
    lam = np.array([0.1, 0.2, 0.3, 0.4])
    R, dR = simplex.eval_rational(3, lam, np.ones(simplex.n_basis(3)))
    np.testing.assert_allclose(R, simplex.eval_bernstein(3, lam), atol=1e-14)
    np.testing.assert_allclose(dR, simplex.eval_bernstein_grad(3, lam), atol=1e-13)


def test_rational_rejects_nonpositive_weight():
    w = np.ones(simplex.n_basis(2))
    w[3] = 0.0
    with pytest.raises(InputError):
        simplex.eval_rational(2, [0.25, 0.25, 0.25, 0.25], w)


def test_invalid_lambda_rejected():
    with pytest.raises(InputError):
        simplex.eval_bernstein(2, [0.5, 0.5, 0.5, 0.5])


def test_lagrange_nodal_interpolation():
    for p in (1, 2, 3, 4):
        nodes = simplex.lagrange_nodes(p)
        vals = simplex.eval_lagrange(p, nodes)
        np.testing.assert_allclose(vals, np.eye(len(nodes)), atol=1e-12)


def test_lagrange_edge_value():
    # l_1(1/2) * l_1(1/2) with l_1(x) = 2x
    vals = simplex.eval_lagrange(2, [0.5, 0.5, 0.0, 0.0])
    assert vals[index_of(2, (1, 1, 0, 0))] == pytest.approx(1.0, abs=1e-14)


def test_bezier_from_samples_straight_tet():
    p = 2
    verts = np.array([[0.0, 0, 0], [2, 0, 0], [0, 3, 0], [0, 0, 1]])
    samples = simplex.lagrange_nodes(p) @ verts
    net = simplex.bezier_from_samples(p, samples)
    np.testing.assert_allclose(net, samples, atol=1e-12)


def test_bezier_from_samples_round_trip():
    rng = np.random.default_rng(5)
    p = 3
    net = rng.normal(size=(simplex.n_basis(p), 3))
    nodes = simplex.lagrange_nodes(p)
    samples = simplex.eval_bernstein(p, nodes) @ net
    recovered = simplex.bezier_from_samples(p, samples)
    np.testing.assert_allclose(recovered, net, atol=1e-10)


def test_bezier_lagrange_cross_evaluation():
    rng = np.random.default_rng(6)
    p = 3
    samples = rng.normal(size=(simplex.n_basis(p), 3))
    net = simplex.bezier_from_samples(p, samples)
    lam = np.array([0.3, 0.3, 0.2, 0.2])
    bez = simplex.eval_bernstein(p, lam) @ net
    lag = simplex.eval_lagrange(p, lam) @ samples
    np.testing.assert_allclose(bez, lag, atol=1e-12)


def test_enumeration_round_trip():
    for p in (1, 2, 3, 4):
        rows = [tuple(mi) for mi in simplex.multi_indices(p)]
        assert len(set(rows)) == simplex.n_basis(p)
        assert all(sum(mi) == p for mi in rows)
        for f in range(4):
            ids = simplex.face_node_ids(p, f)
            assert len(ids) == simplex.n_face_basis(p)
            assert all(simplex.multi_indices(p)[i][f] == 0 for i in ids)


def test_face_embedding_consistency():
    p = 3
    rng = np.random.default_rng(9)
    mu = rng.dirichlet(np.ones(3))
    for f in range(4):
        lam = simplex.face_lambda(p, f, mu)
        full = simplex.eval_bernstein(p, lam)
        ids = simplex.face_node_ids(p, f)
        tri = simplex.eval_tri_bernstein(p, mu)
        np.testing.assert_allclose(full[ids], tri, atol=1e-13)
        mask = np.ones(len(full), dtype=bool)
        mask[ids] = False
        np.testing.assert_allclose(full[mask], 0.0, atol=1e-13)
