"""Gradient engine tests. The finite-difference oracle is validated first,
then every primitive is checked against it."""

import numpy as np
import pytest

from songsmith import autodiff as ad
from songsmith.errors import ContractError, DimensionError


def rel_err(a, b):
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-6)
    return np.abs(a - b).max(initial=0.0) / denom


# --- the oracle itself ---

def test_finite_diff_square():
    g = ad.finite_diff_grad(lambda x: float(x ** 2), np.array(3.0), eps=1e-5)
    assert abs(g - 6.0) < 1e-6


def test_finite_diff_constant():
    g = ad.finite_diff_grad(lambda x: 7.0, np.array([1.0, 2.0, 3.0]), eps=1e-5)
    assert np.array_equal(g, np.zeros(3))


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ContractError):
        ad.finite_diff_grad(lambda x: 0.0, np.zeros(2), eps=0.0)


# --- frozen examples ---

def test_matmul_identity():
    a = ad.leaf(np.eye(2))
    b = ad.leaf([[3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(ad.matmul(a, b).value, [[3.0, 4.0], [5.0, 6.0]])


def test_matmul_hand_value():
    out = ad.matmul(ad.leaf([[1.0, 2.0]]), ad.leaf([[3.0], [4.0]]))
    assert np.array_equal(out.value, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError) as exc:
        ad.matmul(ad.leaf(np.zeros((2, 3))), ad.leaf(np.zeros((4, 5))))
    assert "(2, 3)" in str(exc.value) and "(4, 5)" in str(exc.value)


def test_softmax_symmetry_and_stability():
    out = ad.softmax(ad.leaf([0.0, 0.0]), axis=0).value
    assert np.allclose(out, [0.5, 0.5], atol=1e-12)
    big = ad.softmax(ad.leaf([1000.0, 0.0]), axis=0).value
    assert np.isfinite(big).all()
    assert big[0] > 1.0 - 1e-12 and big[1] < 1e-12


def test_softmax_axis_out_of_range():
    with pytest.raises(ContractError):
        ad.softmax(ad.leaf(np.zeros((2, 3))), axis=2)


def test_backward_sum_gives_ones():
    x = ad.leaf([1.0, 2.0, 3.0])
    grads = ad.backward(ad.sum_all(x), [x])
    assert np.array_equal(grads[x.nid], [1.0, 1.0, 1.0])


def test_backward_square_gives_2x():
    x = ad.leaf([1.0, 2.0, 3.0])
    loss = ad.sum_all(ad.mul(x, x))
    grads = ad.backward(loss, [x])
    assert np.allclose(grads[x.nid], [2.0, 4.0, 6.0], atol=1e-12)


def test_backward_rejects_nonscalar_loss():
    x = ad.leaf([1.0, 2.0])
    with pytest.raises(ContractError):
        ad.backward(ad.mul(x, x))


def test_backward_untouched_param_gets_zeros():
    x = ad.leaf([1.0, 2.0])
    unused = ad.leaf(np.ones((2, 2)))
    grads = ad.backward(ad.sum_all(x), [x, unused])
    assert np.array_equal(grads[unused.nid], np.zeros((2, 2)))


# --- finite-difference checks per primitive ---

def check_grad(build, x0, tol=1e-4, eps=1e-5):
    """build(Node) -> scalar Node; compares backward against the FD oracle."""
    x = ad.leaf(x0)
    loss = build(x)
    grads = ad.backward(loss, [x])
    fd = ad.finite_diff_grad(lambda v: float(build(ad.leaf(v)).value), x0, eps=eps)
    err = rel_err(grads[x.nid], fd)
    assert err < tol, f"analytic vs finite differences: rel err {err}"


RNG = np.random.default_rng(1234)


def test_grad_matmul():
    b0 = RNG.normal(size=(3, 3))
    check_grad(lambda x: ad.sum_all(ad.matmul(x, ad.leaf(b0))), RNG.normal(size=(3, 3)))
    a0 = RNG.normal(size=(3, 3))
    check_grad(lambda x: ad.sum_all(ad.matmul(ad.leaf(a0), x)), RNG.normal(size=(3, 3)))


def test_grad_add_broadcast():
    b0 = RNG.normal(size=(4,))
    check_grad(lambda x: ad.sum_all(ad.mul(ad.add(x, ad.leaf(b0)), ad.add(x, ad.leaf(b0)))),
               RNG.normal(size=(2, 4)))
    m0 = RNG.normal(size=(2, 4))
    check_grad(lambda x: ad.sum_all(ad.mul(ad.add(ad.leaf(m0), x), ad.add(ad.leaf(m0), x))),
               RNG.normal(size=(4,)))


def test_grad_mul():
    y0 = RNG.normal(size=(5,))
    check_grad(lambda x: ad.sum_all(ad.mul(x, ad.leaf(y0))), RNG.normal(size=(5,)))


def test_grad_concat_slice():
    other = RNG.normal(size=(2, 3))

    def build(x):
        joined = ad.concat([x, ad.leaf(other)], axis=1)
        piece = ad.slice_(joined, axis=1, start=1, stop=4)
        return ad.sum_all(ad.mul(piece, piece))

    check_grad(build, RNG.normal(size=(2, 3)))


@pytest.mark.parametrize("op", [ad.sigmoid, ad.tanh, ad.exp, ad.softplus])
def test_grad_elementwise(op):
    check_grad(lambda x: ad.sum_all(ad.mul(op(x), op(x))), RNG.normal(size=(6,)))


def test_grad_log():
    check_grad(lambda x: ad.sum_all(ad.log(x)), RNG.uniform(0.5, 2.0, size=(6,)))


def test_grad_softmax_random_5vector():
    w0 = RNG.normal(size=(5,))
    check_grad(lambda x: ad.sum_all(ad.mul(ad.softmax(x, axis=0), ad.leaf(w0))),
               RNG.normal(size=(5,)))


def test_grad_mean():
    check_grad(lambda x: ad.mean_all(ad.mul(x, x)), RNG.normal(size=(3, 4)))


def test_grad_gather():
    ids = np.array([0, 2, 2, 1])
    w0 = RNG.normal(size=(4, 3))
    check_grad(lambda x: ad.sum_all(ad.mul(ad.gather(x, ids), ad.leaf(w0))),
               RNG.normal(size=(3, 3)))


def test_grad_lstm_gates():
    c0 = RNG.normal(size=(2, 3))
    w0 = RNG.normal(size=(2, 6))
    pre0 = RNG.normal(size=(2, 12))
    check_grad(lambda x: ad.sum_all(ad.mul(ad.lstm_gates(x, ad.leaf(c0)), ad.leaf(w0))),
               RNG.normal(size=(2, 12)), tol=2e-4)
    check_grad(lambda x: ad.sum_all(ad.mul(ad.lstm_gates(ad.leaf(pre0), x), ad.leaf(w0))),
               RNG.normal(size=(2, 3)), tol=2e-4)


def test_grad_two_layer_tanh_network():
    """All parameters of a small network match finite differences."""
    rng = np.random.default_rng(7)
    x0 = rng.normal(size=(4, 3))
    w1_0 = rng.normal(size=(3, 5))
    w2_0 = rng.normal(size=(5, 2))
    b1_0 = rng.normal(size=(5,))
    b2_0 = rng.normal(size=(2,))

    def loss_from(w1v, w2v, b1v, b2v):
        w1, w2, b1, b2 = map(ad.leaf, (w1v, w2v, b1v, b2v))
        h = ad.tanh(ad.add(ad.matmul(ad.leaf(x0), w1), b1))
        out = ad.tanh(ad.add(ad.matmul(h, w2), b2))
        return ad.sum_all(ad.mul(out, out)), (w1, w2, b1, b2)

    loss, params = loss_from(w1_0, w2_0, b1_0, b2_0)
    grads = ad.backward(loss, params)
    originals = [w1_0, w2_0, b1_0, b2_0]
    for i, (p, p0) in enumerate(zip(params, originals)):
        def f(v, i=i):
            vals = [x.copy() for x in originals]
            vals[i] = v
            return float(loss_from(*vals)[0].value)
        fd = ad.finite_diff_grad(f, p0)
        assert rel_err(grads[p.nid], fd) < 1e-4


def test_reused_input_accumulates_additively():
    x0 = RNG.normal(size=(3,))

    def build(x):
        y = ad.mul(x, x)
        return ad.sum_all(ad.add(ad.mul(y, x), y))  # x reused three ways

    check_grad(build, x0)


def test_softmax_slices_sum_to_one():
    v = RNG.normal(size=(4, 7)) * 10
    s = ad.softmax(ad.leaf(v), axis=1).value
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-9)
    assert ((s > 0) & (s < 1)).all()


def test_deterministic_forward_backward():
    def run():
        x = ad.leaf(np.linspace(-2, 2, 12).reshape(3, 4))
        w = ad.leaf(np.linspace(-1, 1, 8).reshape(4, 2))
        loss = ad.sum_all(ad.sigmoid(ad.matmul(x, w)))
        grads = ad.backward(loss, [w])
        return loss.value.copy(), grads[w.nid].copy()

    l1, g1 = run()
    l2, g2 = run()
    assert np.array_equal(l1, l2) and np.array_equal(g1, g2)


# --- Adam ---

def reference_adam(p, g, m, v, t, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    mh = m / (1 - b1 ** t)
    vh = v / (1 - b2 ** t)
    return p - lr * mh / (np.sqrt(vh) + eps), m, v


def test_adam_zero_grad_keeps_params():
    p = [np.array([1.0, -2.0])]
    state = ad.AdamState.init(p)
    newp, state2 = ad.adam_step(p, [np.zeros(2)], state, lr=0.1)
    assert np.array_equal(newp[0], p[0])
    assert state2.step_count == 1


def test_adam_first_step_moves_by_lr_sign():
    p = [np.array([1.0, -1.0, 0.5])]
    g = [np.array([0.3, -0.2, 4.0])]
    state = ad.AdamState.init(p)
    newp, _ = ad.adam_step(p, g, state, lr=0.05)
    move = newp[0] - p[0]
    assert np.allclose(move, -0.05 * np.sign(g[0]), atol=1e-6)


def test_adam_matches_reference_and_converges():
    x = np.array([5.0, -5.0])
    state = ad.AdamState.init([x])
    rx, rm, rv = x.copy(), np.zeros(2), np.zeros(2)
    for t in range(1, 201):
        g = 2 * x
        (x,), state = ad.adam_step([x], [g], state, lr=0.1)
        rx, rm, rv = reference_adam(rx, 2 * rx, rm, rv, t, lr=0.1)
        assert np.allclose(x, rx, atol=1e-12)
    assert np.linalg.norm(x) < 0.1


def test_adam_shape_mismatch():
    p = [np.zeros(3)]
    state = ad.AdamState.init(p)
    with pytest.raises(ContractError):
        ad.adam_step(p, [np.zeros(4)], state, lr=0.1)
