import numpy as np
import pytest

from relviews.graphs import ViewGraph, num_pairs, pair_index, pair_list
from relviews.hed import ConstantCostHead
from relviews.proxies import (ProxyAnchorConfig, ProxyGraph, SinkhornConfig,
                              classify, init_proxy, proxy_anchor_loss, sinkhorn,
                              update_proxies)
from tests.conftest import rel_error


def scfg(**kw):
    base = dict(entropic_regularizer=0.05, max_iters=1000, marginal_tol=1e-9)
    base.update(kw)
    return SinkhornConfig(**base)


# ------------------------------------------------------------------ sinkhorn

def test_constant_cost_uniform_plan():
    res = sinkhorn(np.full((3, 4), 2.5), np.full(3, 1 / 3), np.full(4, 1 / 4), scfg())
    np.testing.assert_allclose(res.plan, 1.0 / 12.0, atol=1e-12)
    assert res.converged


def test_one_by_one_plan_is_total_mass():
    res = sinkhorn(np.array([[7.0]]), np.array([0.6]), np.array([0.6]), scfg())
    assert res.plan[0, 0] == pytest.approx(0.6, abs=1e-12)


def test_two_by_two_matches_closed_form():
    # oracle: for cost [[0,1],[1,0]] and uniform marginals the symmetric plan
    # [[p, .5-p], [.5-p, p]] must satisfy p/(.5-p) = exp(1/eps)
    eps = 0.1
    res = sinkhorn(np.array([[0.0, 1.0], [1.0, 0.0]]),
                   np.full(2, 0.5), np.full(2, 0.5),
                   scfg(entropic_regularizer=eps, marginal_tol=1e-12))
    ratio = np.exp(1.0 / eps)
    p = 0.5 * ratio / (1.0 + ratio)
    np.testing.assert_allclose(res.plan, [[p, 0.5 - p], [0.5 - p, p]], atol=1e-10)
    assert res.plan[0, 1] < 0.01


def test_marginals_respected_on_random_costs(rng):
    for _ in range(25):
        m, c = rng.integers(2, 12, size=2)
        cost = rng.random((m, c))
        a = rng.random(m)
        b = rng.random(c)
        b *= a.sum() / b.sum()
        res = sinkhorn(cost, a, b, scfg(marginal_tol=1e-8))
        assert res.converged
        np.testing.assert_allclose(res.plan.sum(axis=1), a, atol=1e-7)
        np.testing.assert_allclose(res.plan.sum(axis=0), b, atol=1e-7)
        assert (res.plan >= 0).all()


def test_zero_marginal_row_excluded():
    res = sinkhorn(np.ones((2, 2)), np.array([0.0, 1.0]),
                   np.array([0.5, 0.5]), scfg())
    assert np.all(res.plan[0] == 0.0)
    np.testing.assert_allclose(res.plan[1], 0.5, atol=1e-9)


def test_nonconvergence_warns():
    cfg = scfg(max_iters=1, marginal_tol=1e-15)
    with pytest.warns(RuntimeWarning):
        res = sinkhorn(np.random.default_rng(0).random((6, 6)),
                       np.full(6, 1 / 6), np.full(6, 1 / 6), cfg)
    assert not res.converged
    assert res.residual > 0


def test_sinkhorn_input_validation():
    with pytest.raises(ValueError):
        sinkhorn(np.array([[np.inf]]), np.ones(1), np.ones(1), scfg())
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 2)), np.ones(2), np.ones(2) * 2.0, scfg())
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 2)), -np.ones(2), np.ones(2), scfg())


# ------------------------------------------------------------- proxy update

def separated_proxy(slots=4, dim=8, scale=4.0):
    """Centroids far apart so transport mass is effectively hard."""
    nodes = np.zeros((slots, dim))
    for s in range(slots):
        nodes[s, s] = scale
    edges = np.zeros((num_pairs(slots), dim))
    for r in range(num_pairs(slots)):
        edges[r, -1] = r + 1.0
    return ProxyGraph(0, nodes, edges)


def graph_like(proxy: ProxyGraph, label=0) -> ViewGraph:
    return ViewGraph(proxy.node_centroids.copy(), proxy.edge_centroids.copy(),
                     label=label)


def test_fixed_point_on_identical_batch():
    proxy = separated_proxy()
    batch = [graph_like(proxy)]
    out = update_proxies(proxy, batch, scfg(), momentum=0.0)
    np.testing.assert_allclose(out.node_centroids, proxy.node_centroids, atol=1e-9)
    np.testing.assert_allclose(out.edge_centroids, proxy.edge_centroids, atol=1e-9)


def test_idempotent_after_one_step_on_separated_batch(rng):
    proxy = separated_proxy()
    batch_nodes = proxy.node_centroids + 0.05 * rng.standard_normal((4, 8))
    batch = [ViewGraph(batch_nodes, proxy.edge_centroids.copy(), label=0)]
    once = update_proxies(proxy, batch, scfg(), momentum=0.0)
    twice = update_proxies(once, batch, scfg(), momentum=0.0)
    np.testing.assert_allclose(twice.node_centroids, once.node_centroids, atol=1e-6)


def test_plan_weighted_means_single_instance(rng):
    # oracle: recompute means from the plan that the update used (global row
    # pinned to slot 0, locals transported over the remaining slots)
    proxy = separated_proxy()
    nodes = proxy.node_centroids + 0.1 * rng.standard_normal((4, 8))
    g = ViewGraph(nodes, proxy.edge_centroids.copy(), label=0)
    out = update_proxies(proxy, [g], scfg(), momentum=0.0)

    cost = np.square(nodes[:, None, :] - proxy.node_centroids[None, :, :]).sum(-1) / 8
    plan = np.zeros((4, 4))
    plan[0, 0] = 0.25
    plan[1:, 1:] = sinkhorn(cost[1:, 1:], np.full(3, 0.25), np.full(3, 0.25),
                            scfg()).plan
    expect = (plan.T @ nodes) / plan.sum(axis=0)[:, None]
    np.testing.assert_allclose(out.node_centroids, expect, atol=1e-12)


def test_global_slot_forced(rng):
    proxy = separated_proxy()
    nodes = rng.standard_normal((4, 8))
    nodes[0] = -proxy.node_centroids[2]   # global far from slot 0, near slot 2
    g = ViewGraph(nodes, proxy.edge_centroids.copy(), label=0)
    out = update_proxies(proxy, [g], scfg(), momentum=0.0)
    # slot 0 absorbed the global embedding regardless of distances
    np.testing.assert_allclose(out.node_centroids[0], nodes[0], atol=1e-12)


def test_momentum_blends():
    proxy = separated_proxy()
    shifted = ViewGraph(proxy.node_centroids + 1.0, proxy.edge_centroids.copy(), label=0)
    hard = update_proxies(proxy, [shifted], scfg(), momentum=0.0)
    soft = update_proxies(proxy, [shifted], scfg(), momentum=0.9)
    np.testing.assert_allclose(
        soft.node_centroids,
        0.9 * proxy.node_centroids + 0.1 * hard.node_centroids, atol=1e-9)


def test_edge_keys_follow_node_slots(rng):
    proxy = separated_proxy()
    # nodes match slots exactly; edges shifted so per-key means move
    edges = proxy.edge_centroids + 2.0
    g = ViewGraph(proxy.node_centroids.copy(), edges, label=0)
    out = update_proxies(proxy, [g], scfg(), momentum=0.0)
    np.testing.assert_allclose(out.edge_centroids, edges, atol=1e-9)


def test_update_contract_errors():
    proxy = separated_proxy()
    with pytest.raises(ValueError):
        update_proxies(proxy, [], scfg())
    with pytest.raises(ValueError):
        update_proxies(proxy, [graph_like(proxy, label=0), graph_like(proxy, label=1)],
                       scfg())


# --------------------------------------------------------------- anchor loss

def test_anchor_all_zero_distances_hand_value():
    # two instances of class 0, one of class 1; delta = 0
    h = np.zeros((3, 2))
    labels = [0, 0, 1]
    cfg = ProxyAnchorConfig(margin=0.0, scale=32.0)
    loss, grad = proxy_anchor_loss(h, labels, [0, 1], cfg)
    pos = (np.log(1 + 2) + np.log(1 + 1)) / 2.0
    neg = (np.log(1 + 1) + np.log(1 + 2)) / 2.0
    assert loss == pytest.approx(pos + neg, abs=1e-12)
    assert grad.shape == (3, 2)


def test_anchor_large_scale_limit():
    # one positive pair far inside the margin: positive term vanishes
    h = np.array([[0.0, 5.0]])
    cfg = ProxyAnchorConfig(margin=-0.5, scale=500.0)   # exponent s*(h + delta) < 0
    loss, _ = proxy_anchor_loss(h, [0], [0, 1], cfg)
    neg_term = np.log(1 + np.exp(-500.0 * (5.0 - (-0.5)))) / 2.0
    assert loss == pytest.approx(neg_term, abs=1e-9)


def test_anchor_nonnegative_and_deterministic(rng):
    for _ in range(20):
        h = rng.random((6, 4)) * 3
        labels = rng.integers(0, 4, size=6)
        cfg = ProxyAnchorConfig()
        l1, g1 = proxy_anchor_loss(h, labels, [0, 1, 2, 3], cfg)
        l2, g2 = proxy_anchor_loss(h, labels, [0, 1, 2, 3], cfg)
        assert l1 >= 0.0
        assert l1 == l2
        assert np.array_equal(g1, g2)


def test_anchor_gradient_matches_finite_differences(rng):
    h = rng.random((5, 3)) * 2.0
    labels = [0, 1, 2, 0, 1]
    cfg = ProxyAnchorConfig(margin=0.1, scale=8.0)
    _, grad = proxy_anchor_loss(h, labels, [0, 1, 2], cfg)
    step = 1e-5
    checked = 0
    for r in range(5):
        for c in range(3):
            keep = h[r, c]
            h[r, c] = keep + step
            up, _ = proxy_anchor_loss(h, labels, [0, 1, 2], cfg)
            h[r, c] = keep - step
            down, _ = proxy_anchor_loss(h, labels, [0, 1, 2], cfg)
            h[r, c] = keep
            fd = (up - down) / (2 * step)
            assert rel_error(fd, grad[r, c]) < 1e-4, (r, c)
            checked += 1
    assert checked == 15


def test_anchor_stability_large_exponents():
    h = np.array([[50.0, 0.1]])
    loss, grad = proxy_anchor_loss(h, [0], [0, 1], ProxyAnchorConfig(scale=32.0))
    assert np.isfinite(loss) and np.isfinite(grad).all()
    # positive exponent 32*(50+0.1) dominates: log term approx equals it
    assert loss == pytest.approx(32.0 * 50.1 / 1.0, rel=1e-3)


def test_anchor_domain_errors():
    with pytest.raises(ValueError):
        proxy_anchor_loss(np.zeros((2, 2)), [0, 5], [0, 1], ProxyAnchorConfig())
    with pytest.raises(ValueError):
        proxy_anchor_loss(np.zeros((2, 3)), [0, 1], [0, 1], ProxyAnchorConfig())


# ------------------------------------------------------------------ classify

def test_classify_exact_match_wins(rng):
    dim, slots = 6, 4
    protos = {}
    for cid in range(3):
        nodes = rng.standard_normal((slots, dim)) * (cid + 1)
        edges = rng.standard_normal((num_pairs(slots), dim))
        protos[cid] = ProxyGraph(cid, nodes, edges)
    g = protos[1].as_view_graph()
    assert classify(g, protos, ConstantCostHead(10.0)) == 1


def test_classify_tие_breaks_to_lowest_id():
    nodes = np.zeros((2, 3))
    edges = np.zeros((1, 3))
    protos = {2: ProxyGraph(2, nodes, edges), 5: ProxyGraph(5, nodes, edges)}
    g = ViewGraph(nodes.copy(), edges.copy())
    assert classify(g, protos, ConstantCostHead(1.0)) == 2


def test_classify_argmin_invariance(rng):
    # applying a strictly increasing transform to distances keeps the argmin
    table = rng.random((10, 4))
    assert np.array_equal(np.argmin(table, axis=1),
                          np.argmin(np.exp(3 * table) + 1, axis=1))


def test_classify_requires_proxies():
    g = ViewGraph(np.zeros((2, 3)), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        classify(g, {}, ConstantCostHead(1.0))


def test_init_proxy_copies_graph(rng):
    g = ViewGraph(rng.standard_normal((4, 5)),
                  rng.standard_normal((num_pairs(4), 5)), label=3)
    proxy = init_proxy(3, g)
    assert proxy.class_id == 3
    assert np.array_equal(proxy.node_centroids, g.node_features)
    assert proxy.as_view_graph().label == 3
