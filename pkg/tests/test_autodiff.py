"""Finite-difference checks for every tape primitive."""
import numpy as np
import pytest

from relviews import autodiff as ad
from tests.conftest import central_diff, rel_error


def check_grad(build, shapes, seed=0, coords=6, step=1e-6, tol=1e-5):
    """build(list of Vars) -> scalar Var; compares grads to central FD."""
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) for s in shapes]
    leaves = [ad.leaf(a.copy()) for a in arrays]
    out = build(leaves)
    ad.backward(out)
    for ai, arr in enumerate(arrays):
        flat_idx = rng.integers(0, arr.size, size=min(coords, arr.size))
        for fi in flat_idx:
            idx = np.unravel_index(fi, arr.shape)

            def fn(x, ai=ai, idx=idx):
                vals = [a.copy() for a in arrays]
                vals[ai] = x
                return float(build([ad.constant(v) for v in vals]).value)

            fd = central_diff(fn, arr, idx, step)
            an = leaves[ai].grad[idx]
            assert rel_error(fd, an) < tol, (ai, idx, fd, an)


def test_add_mul_broadcast():
    check_grad(lambda vs: ad.vsum(vs[0] * vs[1] + vs[0]), [(3, 4), (4,)])


def test_sub_div():
    check_grad(lambda vs: ad.vsum(vs[0] / (vs[1] * vs[1] + 2.0) - vs[1]),
               [(5,), (5,)])


def test_matmul():
    check_grad(lambda vs: ad.vsum(ad.matmul(vs[0], vs[1])), [(3, 4), (4, 2)])


def test_reshape_concat_gather():
    def build(vs):
        c = ad.concat([vs[0], vs[1]], axis=1)
        g = ad.gather_rows(c, np.array([2, 0, 1, 2]))
        return ad.vsum(ad.reshape(g, (4 * 5,)))
    check_grad(build, [(3, 2), (3, 3)])


def test_sum_mean_axes():
    check_grad(lambda vs: ad.vsum(ad.vmean(vs[0], axis=0, keepdims=True) * vs[1]),
               [(4, 3), (1, 3)])


def test_elementwise_nonlinearities():
    check_grad(lambda vs: ad.vsum(ad.exp(vs[0]) + ad.tanh(vs[0]) + ad.softplus(vs[0])),
               [(7,)])
    check_grad(lambda vs: ad.vsum(ad.log(ad.square(vs[0]) + 1.5) + ad.sqrt(ad.square(vs[0]) + 1.0)),
               [(6,)])


def test_leaky_relu_slope():
    x = ad.leaf(np.array([-2.0, -0.5, 0.5, 3.0]))
    y = ad.vsum(ad.leaky_relu(x, 0.2))
    ad.backward(y)
    assert np.allclose(x.grad, [0.2, 0.2, 1.0, 1.0])


def test_l2norm_last():
    check_grad(lambda vs: ad.vsum(ad.l2norm_last(vs[0])), [(4, 3)])


def test_l2norm_zero_subgradient():
    x = ad.leaf(np.zeros((2, 3)))
    y = ad.vsum(ad.l2norm_last(x))
    ad.backward(y)
    assert np.all(x.grad == 0.0)


def test_reduce_min_routes_to_argmin():
    vals = np.array([[3.0, 1.0, 2.0], [0.5, 4.0, 0.5]])
    x = ad.leaf(vals.copy())
    y = ad.vsum(ad.reduce_min(x, axis=1))
    ad.backward(y)
    expect = np.zeros_like(vals)
    expect[0, 1] = 1.0
    expect[1, 0] = 1.0  # tie resolved to the lowest index
    assert np.array_equal(x.grad, expect)


def test_where_select_routes_by_mask():
    a = ad.leaf(np.array([1.0, 2.0, 3.0]))
    b = ad.leaf(np.array([10.0, 20.0, 30.0]))
    cond = np.array([True, False, True])
    y = ad.vsum(ad.where_select(cond, a, b))
    ad.backward(y)
    assert np.array_equal(a.grad, [1.0, 0.0, 1.0])
    assert np.array_equal(b.grad, [0.0, 1.0, 0.0])


def test_grad_accumulates_over_reuse():
    x = ad.leaf(np.array([2.0]))
    y = x * x + x * 3.0
    ad.backward(y)
    assert np.allclose(x.grad, [2 * 2.0 + 3.0])


def test_constants_get_no_grad():
    c = ad.constant(np.ones(3))
    x = ad.leaf(np.ones(3))
    y = ad.vsum(c * x)
    ad.backward(y)
    assert c.grad is None
    assert np.allclose(x.grad, 1.0)


def test_backward_from_multiple_roots():
    x = ad.leaf(np.array([1.0, 2.0]))
    y1 = ad.vsum(ad.square(x))
    y2 = ad.vsum(x * 3.0)
    ad.backward_from([(y1, np.asarray(1.0)), (y2, np.asarray(2.0))])
    assert np.allclose(x.grad, 2.0 * x.value + 6.0)


def test_zero_upstream_gives_zero_grads():
    x = ad.leaf(np.ones((2, 2)))
    y = ad.vsum(ad.exp(x))
    ad.backward(y, np.asarray(0.0))
    assert np.all(x.grad == 0.0)
