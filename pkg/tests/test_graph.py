import numpy as np
import pytest

from algnet.autodiff import ShapeError, Tensor, backward
from algnet.graph import (build_memory_graph, combine_layers, gcn_propagate, lgc_propagate,
                          normalize_adjacency)

from conftest import check_op_gradient
from oracles import neighbor_aggregate, per_entry_normalize


def random_graph(rng, n, p=0.3):
    a = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return a + a.T



class TestNormalize:
    def test_two_nodes(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(normalize_adjacency(a), a)

    def test_path_graph(self):
        a = np.zeros((3, 3))
        a[0, 1] = a[1, 0] = a[0, 2] = a[2, 0] = 1
        assert normalize_adjacency(a)[0, 1] == pytest.approx(1 / np.sqrt(2), abs=1e-15)

    def test_isolated_node(self, rng):
        a = random_graph(rng, 4, p=1.0)
        a[3, :] = a[:, 3] = 0
        norm = normalize_adjacency(a)
        assert not norm[3].any() and not norm[:, 3].any()
        assert np.isfinite(norm).all()

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_per_entry_formula(self, seed):
        rng = np.random.default_rng(seed)
        a = random_graph(rng, int(rng.integers(1, 21)))
        norm = normalize_adjacency(a)
        np.testing.assert_allclose(norm, per_entry_normalize(a), atol=1e-12)
        np.testing.assert_array_equal(norm, norm.T)

    def test_self_loops(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(normalize_adjacency(a, self_loops=True), np.full((2, 2), 0.5))

    def test_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            normalize_adjacency(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestLgcPropagate:
    def test_identity(self, rng):
        e0 = Tensor(rng.normal(size=(4, 3)))
        for layer in lgc_propagate(np.eye(4), e0):
            np.testing.assert_array_equal(layer.data, e0.data)

    def test_zero(self, rng):
        layers = lgc_propagate(np.zeros((4, 4)), Tensor(rng.normal(size=(4, 3))))
        assert len(layers) == 2 and not any(l.data.any() for l in layers)

    def test_path_graph_neighbor_sum(self):
        a = np.zeros((3, 3))
        a[0, 1] = a[1, 0] = a[1, 2] = a[2, 1] = 1
        (e1,) = lgc_propagate(normalize_adjacency(a), Tensor(np.eye(3)), layers=1)
        np.testing.assert_allclose(e1.data, neighbor_aggregate(a, np.eye(3), 1)[0], atol=1e-15)
        np.testing.assert_allclose(e1.data[0], [0, 1 / np.sqrt(2), 0], atol=1e-15)

    def test_components_do_not_mix(self, rng):
        a = np.zeros((6, 6))
        a[:3, :3] = random_graph(rng, 3, p=1.0)
        a[3:, 3:] = random_graph(rng, 3, p=1.0)
        norm = normalize_adjacency(a)
        e0 = rng.normal(size=(6, 4))
        base = lgc_propagate(norm, Tensor(e0))[-1].data
        e0[3:] = rng.normal(size=(3, 4))
        moved = lgc_propagate(norm, Tensor(e0))[-1].data
        np.testing.assert_array_equal(base[:3], moved[:3])

    def test_linearity(self, rng):
        norm = normalize_adjacency(random_graph(rng, 5, p=0.6))
        e0 = rng.normal(size=(5, 3))
        m = lambda e: build_memory_graph(  # noqa: E731
            combine_layers(lgc_propagate(norm, Tensor(e)), 0.5),
            combine_layers(lgc_propagate(norm, Tensor(e)), 0.5), -0.5).data
        np.testing.assert_allclose(m(3.0 * e0), 3.0 * m(e0), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            lgc_propagate(np.eye(3), Tensor(np.ones((4, 2))))

    def test_memory_gradient_wrt_base_embedding(self, rng):
        ne, nd = normalize_adjacency(random_graph(rng, 5, p=0.5)), normalize_adjacency(random_graph(rng, 5, p=0.5))

        def build(e0):
            e_ehr = combine_layers(lgc_propagate(ne, e0), 0.5)
            e_ddi = combine_layers(lgc_propagate(nd, e0), 0.5)
            return build_memory_graph(e_ehr, e_ddi, 0.5)

        check_op_gradient(build, [rng.uniform(-1, 1, (5, 3))])


class TestCombineAndMemory:
    def test_combine(self, rng):
        x = Tensor(rng.normal(size=(3, 2)))
        assert not combine_layers([x, x], 0.0).data.any()
        np.testing.assert_array_equal(combine_layers([x, x], 0.5).data, x.data)
        np.testing.assert_allclose(combine_layers([x * 2.0, x * 4.0], 0.5).data, 3.0 * x.data)

    def test_combine_with_layer_zero(self, rng):
        x = Tensor(rng.normal(size=(3, 2)))
        np.testing.assert_allclose(combine_layers([x, x], 0.5, e0=x).data, 1.5 * x.data)

    def test_memory_graph(self, rng):
        x, y = Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 2)))
        np.testing.assert_array_equal(build_memory_graph(x, y, 0.0).data, x.data)
        np.testing.assert_array_equal(build_memory_graph(x, Tensor(np.zeros((3, 2))), 1.0).data, x.data)
        np.testing.assert_allclose(build_memory_graph(x, x, -0.5).data, 0.5 * x.data)
        with pytest.raises(ShapeError):
            build_memory_graph(x, Tensor(np.zeros((2, 2))), 1.0)

    def test_gradient_reaches_both_branches(self, rng):
        e0 = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        g = backward(build_memory_graph(e0 * 1.0, e0 * 1.0, 0.5).sum())[id(e0)]
        np.testing.assert_allclose(g, np.full((3, 2), 1.5))


class TestGcn:
    def test_identity(self, rng):
        e = Tensor(rng.uniform(0, 1, (4, 3)))
        out = gcn_propagate(np.eye(4), e, [Tensor(np.eye(3))] * 2)
        np.testing.assert_array_equal(out.data, e.data)

    def test_zero_weight(self, rng):
        out = gcn_propagate(np.eye(4), Tensor(rng.normal(size=(4, 3))), [Tensor(np.zeros((3, 3)))])
        assert not out.data.any()

    def test_single_edge_two_steps(self, rng):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        norm = normalize_adjacency(a, self_loops=True)
        e, w1, w2 = rng.normal(size=(2, 3)), rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        h = np.zeros((2, 3))
        for i in range(2):  # node-wise aggregation over itself and its neighbour
            h[i] = sum(0.5 * (e[j] @ w1) for j in range(2))
        h = np.maximum(h, 0)
        h2 = np.maximum(np.array([sum(0.5 * (h[j] @ w2) for j in range(2))] * 2), 0)
        out = gcn_propagate(norm, Tensor(e), [Tensor(w1), Tensor(w2)])
        np.testing.assert_allclose(out.data, h2, atol=1e-12)
