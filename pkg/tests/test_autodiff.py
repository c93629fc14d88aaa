import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mra.autodiff import (
    Adam, AdamState, Tape, Tensor, adam_update, backward, gumbel_softmax, log_softmax, softmax,
)
from mra.autodiff import tensor as T
from mra.autodiff.checkpoint import load_checkpoint, pack_records, save_checkpoint, unpack_records
from mra.errors import ContractError, DimensionError, ParameterError

from conftest import central_diff, rel_err


def t64(x):
    return Tensor(np.asarray(x, dtype=np.float64))


def test_matmul_examples():
    eye = Tensor([[1.0, 0.0], [0.0, 1.0]])
    b = Tensor([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal((eye @ b).data, [[3, 4], [5, 6]])
    np.testing.assert_array_equal((Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data, [[11]])


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_matmul_grad_against_finite_differences():
    a = np.array([[1.0, 2.0]])
    b = np.array([[3.0], [4.0]])
    A, B = t64(a), t64(b)
    with Tape() as tape:
        tape.watch(A)
        loss = (A @ B).sum()
    (ga,) = backward(tape, loss, [A])
    (fd,) = central_diff(lambda: (a @ b).sum(), [a])
    np.testing.assert_allclose(fd, [[3.0, 4.0]], atol=1e-8)
    np.testing.assert_allclose(ga, fd, atol=1e-8)


@pytest.mark.parametrize("x, expected", [
    ([0.0, 0.0, 0.0], [1 / 3, 1 / 3, 1 / 3]),
    ([7.5], [1.0]),
    ([np.log(1.0), np.log(3.0)], [0.25, 0.75]),
])
def test_softmax_examples(x, expected):
    np.testing.assert_allclose(softmax(t64(x)).data, expected, atol=1e-12)


def test_softmax_empty_axis():
    with pytest.raises(DimensionError):
        softmax(Tensor(np.zeros((3, 0))), axis=1)


def test_backward_square():
    x = t64(3.0)
    with Tape() as tape:
        tape.watch(x)
        y = x * x
    assert backward(tape, y, [x])[0] == pytest.approx(6.0)


def test_backward_log_softmax_against_finite_differences():
    x0 = np.array([0.0, 0.0])
    x = t64(x0)
    with Tape() as tape:
        tape.watch(x)
        y = log_softmax(x)[0]
    (g,) = backward(tape, y, [x])

    def f():
        z = x0 - x0.max()
        return (z - np.log(np.exp(z).sum()))[0]

    (fd,) = central_diff(f, [x0])
    np.testing.assert_allclose(fd, [0.5, -0.5], atol=1e-8)
    np.testing.assert_allclose(g, fd, atol=1e-8)


def test_unused_leaf_gets_zero():
    x, y = t64(2.0), t64([1.0, 2.0])
    with Tape() as tape:
        tape.watch(x, y)
        out = x * 1.0
    gx, gy = backward(tape, out, [x, y])
    assert gx == 1.0
    np.testing.assert_array_equal(gy, [0.0, 0.0])


def test_non_scalar_loss_rejected():
    x = t64([1.0, 2.0])
    with Tape() as tape:
        tape.watch(x)
        y = x * 2.0
    with pytest.raises(ContractError):
        backward(tape, y, [x])


def test_unwatched_tensor_is_constant():
    w, c = t64([1.0, 2.0]), t64([3.0, 4.0])
    with Tape() as tape:
        tape.watch(w)
        loss = (w * c).sum()
    gw, gc = backward(tape, loss, [w, c])
    np.testing.assert_array_equal(gw, [3.0, 4.0])
    np.testing.assert_array_equal(gc, [0.0, 0.0])


def test_tape_is_topologically_ordered():
    x = t64([1.0, -2.0])
    with Tape() as tape:
        tape.watch(x)
        y = ((x * x).exp() + x).sum()
    for i, node in enumerate(tape.nodes):
        assert all(j is None or j < i for j in node.inputs)
    assert y._node == len(tape) - 1


def test_backward_is_pure():
    rng = np.random.default_rng(0)
    w = t64(rng.normal(size=(3, 4)))
    x = t64(rng.normal(size=(5, 3)))
    with Tape() as tape:
        tape.watch(w)
        loss = softmax((x @ w).tanh(), axis=-1).log().mean()
    g1 = backward(tape, loss, [w])[0]
    g2 = backward(tape, loss, [w])[0]
    np.testing.assert_array_equal(g1, g2)


def test_straight_through_forward_hard_backward_soft():
    s = t64([0.2, 0.8])
    with Tape() as tape:
        tape.watch(s)
        h = T.straight_through(s, np.array([0.0, 1.0]))
        loss = (h * t64([1.0, 3.0])).sum()
    np.testing.assert_array_equal(h.data, [0.0, 1.0])
    np.testing.assert_array_equal(backward(tape, loss, [s])[0], [1.0, 3.0])


# -- Adam -------------------------------------------------------------------
def test_adam_zero_grad_leaves_params():
    p = [np.array([1.0, -2.0]), np.ones((2, 2))]
    state = AdamState.zeros_like(p)
    for _ in range(5):
        p2, state = adam_update(p, [np.zeros_like(a) for a in p], state, lr=0.1)
        for a, b in zip(p, p2):
            np.testing.assert_allclose(a, b, atol=1e-12)
        p = p2
    assert state.step == 5


def test_adam_first_step_moves_by_lr():
    p = [np.array([0.5, 0.5])]
    state = AdamState.zeros_like(p)
    (new,), state = adam_update(p, [np.array([3.0, -0.2])], state, lr=0.01)
    np.testing.assert_allclose(new - p[0], [-0.01, 0.01], rtol=1e-5)


def test_adam_two_steps_on_square_hand_rolled():
    theta = np.array([1.0])
    state = AdamState.zeros_like([theta])
    traj = [theta[0]]
    for _ in range(2):
        (theta,), state = adam_update([theta], [2 * theta], state, lr=0.1)
        traj.append(theta[0])
    # hand evaluation: step 1 moves by exactly lr; step 2 with g=1.8
    m1, v1 = 0.1 * 2.0, 0.001 * 4.0
    t1 = 1.0 - 0.1 * (m1 / 0.1) / (np.sqrt(v1 / 0.001) + 1e-8)
    g2 = 2 * t1
    m2, v2 = 0.9 * m1 + 0.1 * g2, 0.999 * v1 + 0.001 * g2 ** 2
    t2 = t1 - 0.1 * (m2 / (1 - 0.9 ** 2)) / (np.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(traj[1:], [t1, t2], rtol=1e-12)
    assert traj[0] > traj[1] > traj[2]


def test_adam_state_step_increments_and_shapes():
    w = Tensor(np.ones((3, 2)))
    opt = Adam([w], lr=0.1)
    for k in range(1, 4):
        opt.step([np.ones((3, 2))])
        assert opt.state.step == k
        assert opt.state.m[0].shape == w.shape


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        adam_update([np.ones(2)], [np.ones(3)], AdamState.zeros_like([np.ones(2)]), 0.1)


# -- Gumbel-softmax ----------------------------------------------------------
def test_gumbel_hard_is_one_hot():
    rng = np.random.default_rng(5)
    y = gumbel_softmax(Tensor(rng.normal(size=(20, 6))), 1.0, True, rng)
    assert np.all(y.data.sum(axis=-1) == 1.0)
    assert set(np.unique(y.data)) <= {0.0, 1.0}


def test_gumbel_soft_sums_to_one():
    y = gumbel_softmax(Tensor(np.zeros((7, 4))), 0.5, False, np.random.default_rng(1))
    np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-6)


def test_gumbel_low_temperature_concentrates_on_perturbed_argmax():
    from mra.autodiff.gumbel import sample_gumbel
    logits = np.array([0.3, -1.0, 0.9, 0.1])
    for seed in range(20):
        noise = sample_gumbel(logits.shape, np.random.default_rng(seed), np.float64)
        tops = []
        for tau in (1e-1, 1e-2, 1e-4, 1e-6):
            y = gumbel_softmax(Tensor(logits, dtype=np.float64), tau, False, np.random.default_rng(seed))
            assert y.data.argmax() == np.argmax(logits + noise)
            tops.append(y.data.max())
        assert np.all(np.diff(tops) >= 0)
        assert tops[-1] > 0.999


def test_gumbel_uniform_frequencies():
    k = 4
    y = gumbel_softmax(Tensor(np.zeros((10_000, k))), 1.0, True, np.random.default_rng(11))
    freq = y.data.mean(axis=0)
    assert np.all(np.abs(freq - 1 / k) <= 0.05 / k)


def test_gumbel_straight_through_gradient():
    logits = Tensor(np.array([0.1, 0.2, 0.3]), dtype=np.float64)
    w = np.array([1.0, -1.0, 2.0])
    with Tape() as tape:
        tape.watch(logits)
        y = gumbel_softmax(logits, 1.0, True, np.random.default_rng(3))
        loss = (y * Tensor(w)).sum()
    (g,) = backward(tape, loss, [logits])
    soft = gumbel_softmax(logits, 1.0, False, np.random.default_rng(3)).data
    np.testing.assert_allclose(g, soft * (w - (w * soft).sum()), atol=1e-12)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_gumbel_rejects_nonpositive_temperature(tau):
    with pytest.raises(ParameterError):
        gumbel_softmax(Tensor(np.zeros(3)), tau, False, np.random.default_rng(0))


# -- property tests ----------------------------------------------------------
floats = st.floats(-1.0, 1.0, allow_nan=False)


@settings(deadline=None, max_examples=40)
@given(arrays(np.float64, (3, 4), elements=floats), st.integers(0, 1))
def test_softmax_is_a_distribution(x, axis):
    y = softmax(Tensor(x), axis=axis).data
    assert np.all(y >= 0)
    np.testing.assert_allclose(y.sum(axis=axis), 1.0, atol=1e-6)


UNARY = {
    "exp": (T.exp, np.exp),
    "tanh": (T.tanh, np.tanh),
    "sigmoid": (T.sigmoid, lambda a: 1 / (1 + np.exp(-a))),
    "square": (lambda t: t ** 2, lambda a: a ** 2),
    "softmax": (lambda t: softmax(t, axis=-1),
                lambda a: np.exp(a - a.max(-1, keepdims=True)) / np.exp(a - a.max(-1, keepdims=True)).sum(-1, keepdims=True)),
    "log_softmax": (lambda t: log_softmax(t, axis=0),
                    lambda a: (a - a.max(0, keepdims=True)) - np.log(np.exp(a - a.max(0, keepdims=True)).sum(0, keepdims=True))),
    "log_shifted": (lambda t: (t + 2.0).log(), lambda a: np.log(a + 2.0)),
    "transpose": (lambda t: t.transpose(), lambda a: a.T),
    "reshape": (lambda t: t.reshape(-1), lambda a: a.reshape(-1)),
    "mean_axis": (lambda t: t.mean(axis=1, keepdims=True), lambda a: a.mean(axis=1, keepdims=True)),
    "index": (lambda t: t[1:, ::2], lambda a: a[1:, ::2]),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@settings(deadline=None, max_examples=15)
@given(x=arrays(np.float64, (3, 4), elements=floats), w=arrays(np.float64, (3, 4), elements=floats))
def test_unary_ops_match_finite_differences(name, x, w):
    op, ref = UNARY[name]
    X = Tensor(x)
    with Tape() as tape:
        tape.watch(X)
        out = op(X)
        loss = (out * Tensor(w.reshape(-1)[:out.size].reshape(out.shape))).sum()
    (g,) = backward(tape, loss, [X])
    wv = w.reshape(-1)
    (fd,) = central_diff(lambda: (ref(x).reshape(-1) * wv[:ref(x).size]).sum(), [x])
    assert rel_err(g, fd) < 1e-3


@settings(deadline=None, max_examples=25)
@given(a=arrays(np.float64, (2, 3, 4), elements=floats), b=arrays(np.float64, (4, 2), elements=floats),
       c=arrays(np.float64, (1, 2), elements=floats))
def test_binary_broadcast_ops_match_finite_differences(a, b, c):
    A, B, C = Tensor(a), Tensor(b), Tensor(c)

    def ref():
        y = a @ b
        return ((y * c - y / (c + 3.0) + c).sum())

    with Tape() as tape:
        tape.watch(A, B, C)
        y = A @ B
        loss = (y * C - y / (C + 3.0) + C).sum()
    grads = backward(tape, loss, [A, B, C])
    for g, fd in zip(grads, central_diff(ref, [a, b, c])):
        assert rel_err(g, fd) < 1e-3


def test_concat_stack_take_along_grads():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(3, 2)), rng.normal(size=(3, 3))
    idx = np.array([[0], [4], [2]])
    A, B = Tensor(a), Tensor(b)
    with Tape() as tape:
        tape.watch(A, B)
        c = T.concat([A, B], axis=1)
        s = T.stack([c, c * 2.0], axis=0).sum(axis=0)
        loss = (T.take_along(s, idx, axis=1) ** 2).sum()

    def ref():
        c = np.concatenate([a, b], axis=1) * 3.0
        return (np.take_along_axis(c, idx, axis=1) ** 2).sum()

    for g, fd in zip(backward(tape, loss, [A, B]), central_diff(ref, [a, b])):
        assert rel_err(g, fd) < 1e-3


def test_relu_grad():
    x = Tensor(np.array([-1.0, 0.5, 2.0]))
    with Tape() as tape:
        tape.watch(x)
        loss = x.relu().sum()
    np.testing.assert_array_equal(backward(tape, loss, [x])[0], [0.0, 1.0, 1.0])


# -- checkpoint blobs ---------------------------------------------------------
@settings(deadline=None, max_examples=30)
@given(st.lists(arrays(np.float32, st.tuples(st.integers(0, 3), st.integers(1, 4)),
                       elements=st.floats(-1e6, 1e6, width=32)), min_size=1, max_size=4))
def test_blob_round_trip_bit_exact(arrs):
    tensors = {f"t/{i}/π": a for i, a in enumerate(arrs)}
    back = unpack_records(pack_records(tensors))
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert back[k].tobytes() == tensors[k].astype("<f4").tobytes()


def test_checkpoint_files(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b/c": np.float32([1.5]),
               "scalar": np.array(2.0, dtype=np.float32)}
    save_checkpoint(tmp_path / "ck", tensors, {"note": "x"})
    back, meta = load_checkpoint(tmp_path / "ck")
    assert meta == {"note": "x"}
    for k, v in tensors.items():
        assert back[k].tobytes() == v.tobytes() and back[k].shape == v.shape
