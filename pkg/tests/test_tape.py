import numpy as np
import pytest

from dagkit.errors import UnregisteredPrimitive
from dagkit.rng import SplitMix64
from dagkit.tape import Tape, backward, grad_check, register_primitive, replay


def rand(shape, seed):
    rng = SplitMix64(seed)
    return np.array([rng.uniform(-1, 1) for _ in range(int(np.prod(shape)))]).reshape(shape)


def test_linear_map_outer_product_structure():
    # loss = sum(W x): every row of dL/dW is x transposed
    w = rand((4, 3), 1)
    x = rand((3, 1), 2)
    tape = Tape()
    wr = tape.leaf(w)
    loss = tape.sum_all(tape.matmul(wr, tape.leaf(x)))
    grads = backward(tape, loss)
    assert np.allclose(grads.of(wr), np.tile(x.T, (4, 1)))


def test_two_way_softmax_at_equal_logits():
    # picking the first of softmax([0, 0]) has gradient [0.25, -0.25]
    tape = Tape()
    logits = tape.leaf(np.zeros((1, 2)))
    y = tape.masked_softmax_rows(logits, mask=np.zeros((1, 2)), scale=1.0)
    picked = tape.sum_all(tape.mul(y, tape.leaf(np.array([[1.0, 0.0]]))))
    grads = backward(tape, loss=picked)
    assert np.allclose(grads.of(logits), np.array([[0.25, -0.25]]), atol=1e-15)


def test_repeated_input_accumulates():
    tape = Tape()
    a = tape.leaf(np.array([[3.0]]))
    loss = tape.sum_all(tape.mul(a, a))
    grads = backward(tape, loss)
    assert grads.of(a).item() == pytest.approx(6.0)


def test_quadratic_grad_check():
    def f(params):
        (theta,) = params
        tape = Tape()
        t = tape.leaf(theta)
        loss = tape.sum_all(tape.mul(t, t))
        grads = backward(tape, loss)
        return float(tape.value(loss)), [grads.of(t)]

    err = grad_check(f, [rand((5, 3), 7)], h=1e-5)
    assert err < 1e-9


def _fd_check_primitive(build, param_shapes, seed=0, tol=2e-7):
    """Generic adjoint check: loss = sum(out * R) for random fixed R."""

    def f(params):
        tape = Tape()
        refs = [tape.leaf(p) for p in params]
        out = build(tape, refs)
        r = rand(tape.value(out).shape, seed + 99)
        loss = tape.sum_all(tape.mul(out, tape.leaf(r)))
        grads = backward(tape, loss)
        return float(tape.value(loss)), [grads.of(ref) for ref in refs]

    err = grad_check(f, [rand(s, seed + i) for i, s in enumerate(param_shapes)], h=1e-6)
    assert err < tol, err


def test_matmul_adjoint():
    _fd_check_primitive(lambda t, r: t.matmul(r[0], r[1]), [(4, 3), (3, 5)], seed=1)


def test_transpose_adjoint():
    _fd_check_primitive(lambda t, r: t.transpose(r[0]), [(3, 4)], seed=2)


def test_add_sub_broadcast_adjoints():
    _fd_check_primitive(lambda t, r: t.add(r[0], r[1]), [(4, 3), (3,)], seed=3)
    _fd_check_primitive(lambda t, r: t.sub(r[0], r[1]), [(4, 3), (4, 1)], seed=4)


def test_mul_broadcast_adjoint():
    _fd_check_primitive(lambda t, r: t.mul(r[0], r[1]), [(4, 3), (4, 1)], seed=5)


def test_scale_relu_exp_adjoints():
    _fd_check_primitive(lambda t, r: t.scale(r[0], -2.5), [(4, 3)], seed=6)
    _fd_check_primitive(lambda t, r: t.relu(r[0]), [(4, 3)], seed=7)
    _fd_check_primitive(lambda t, r: t.exp(r[0]), [(3, 3)], seed=8)


def test_masked_softmax_adjoint():
    mask = np.zeros((3, 5))
    mask[0, 2] = mask[2, 4] = -1e30
    _fd_check_primitive(
        lambda t, r: t.masked_softmax_rows(r[0], mask=mask, scale=0.7), [(3, 5)], seed=9
    )


def test_segment_softmax_and_sum_adjoints():
    seg = np.array([0, 0, 1, 1, 1, 2])
    starts = np.array([0, 2, 5])
    _fd_check_primitive(
        lambda t, r: t.segment_softmax(r[0], starts=starts, seg=seg), [(6, 1)], seed=10
    )
    _fd_check_primitive(
        lambda t, r: t.segment_sum(r[0], starts=starts, seg=seg), [(6, 4)], seed=11
    )


def test_gather_rows_adjoint():
    idx = np.array([0, 2, 2, 1])
    _fd_check_primitive(lambda t, r: t.gather_rows(r[0], idx=idx), [(3, 4)], seed=12)


def test_rowsum_layer_norm_adjoints():
    _fd_check_primitive(lambda t, r: t.rowsum(r[0]), [(4, 3)], seed=13)
    _fd_check_primitive(lambda t, r: t.layer_norm_rows(r[0], eps=1e-5), [(4, 6)], seed=14)


def test_concat_mean_adjoints():
    _fd_check_primitive(lambda t, r: t.concat_cols([r[0], r[1]]), [(3, 2), (3, 4)], seed=15)
    _fd_check_primitive(lambda t, r: t.mean_rows(r[0]), [(5, 3)], seed=16)


def test_replay_is_bitwise():
    tape = Tape()
    a = tape.leaf(rand((6, 4), 20))
    b = tape.leaf(rand((4, 6), 21))
    y = tape.layer_norm_rows(tape.relu(tape.matmul(a, b)))
    tape.sum_all(tape.mul(y, y))
    assert replay(tape) is True


def test_unregistered_primitive():
    tape = Tape()
    a = tape.leaf(np.ones((2, 2)))
    with pytest.raises(UnregisteredPrimitive):
        tape.apply("no_such_op", a)

    register_primitive("halve_fwd_only", lambda ins, at: ins[0] / 2.0, adjoint=None)
    out = tape.apply("halve_fwd_only", a)
    assert np.allclose(tape.value(out), 0.5)
    with pytest.raises(UnregisteredPrimitive):
        backward(tape, tape.sum_all(out))


def test_softmax_rows_sum_to_one_over_allowed_set():
    rng = SplitMix64(31)
    for trial in range(20):
        n = 2 + rng.randint(8)
        logits = rand((n, n), 100 + trial) * 5.0
        mask = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j and rng.random() < 0.4:
                    mask[i, j] = -1e30
        tape = Tape()
        w = tape.value(tape.masked_softmax_rows(tape.leaf(logits), mask=mask, scale=0.5))
        assert np.all(np.abs(w.sum(axis=1) - 1.0) < 1e-12)
        assert np.all(w[mask == -1e30] < 1e-12)
