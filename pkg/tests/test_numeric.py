import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdrnilm import numeric as F
from bdrnilm._validation import NonFiniteError
from oracles import conv1d_direct

SEEDS = range(20)


def _as3d(v):
    return np.asarray(v, dtype=np.float64)[None, None, :]


# -- conv1d ----------------------------------------------------------------
@pytest.mark.parametrize(
    "dilation, expected",
    [(1, [-2, -2, -2, -2, 4]), (2, [-3, -4, -4, 2, 3])],
)
def test_conv1d_examples(dilation, expected):
    x = _as3d([1, 2, 3, 4, 5])
    w = np.array([[[1.0, 0.0, -1.0]]])
    out, _ = F.conv1d_forward(x, w, np.zeros(1), dilation)
    np.testing.assert_array_equal(out[0, 0], expected)
    np.testing.assert_array_equal(out, conv1d_direct(x, w, None, dilation))


def test_conv1d_identity_kernel(rng):
    x = rng.standard_normal((2, 1, 17))
    out, _ = F.conv1d_forward(x, np.array([[[0.0, 1.0, 0.0]]]), np.zeros(1), 1)
    np.testing.assert_array_equal(out, x)


@pytest.mark.parametrize("padding", ["same", "valid"])
@pytest.mark.parametrize("dilation", [1, 2, 3])
def test_conv1d_matches_direct_sum(rng, padding, dilation):
    x = rng.standard_normal((2, 3, 12))
    w = rng.standard_normal((4, 3, 3))
    b = rng.standard_normal(4)
    out, _ = F.conv1d_forward(x, w, b, dilation, padding)
    np.testing.assert_allclose(out, conv1d_direct(x, w, b, dilation, padding), rtol=1e-12, atol=1e-12)


def test_conv1d_errors():
    x = np.zeros((1, 2, 8))
    with pytest.raises(ValueError, match="channel mismatch"):
        F.conv1d_forward(x, np.zeros((1, 3, 3)))
    with pytest.raises(ValueError, match="odd"):
        F.conv1d_forward(x, np.zeros((1, 2, 2)))
    with pytest.raises(ValueError, match="not positive"):
        F.conv1d_forward(x, np.zeros((1, 2, 3)), dilation=4, padding="valid")


@given(
    length=st.integers(1, 40),
    k=st.sampled_from([1, 3, 5]),
    d=st.integers(1, 6),
)
@settings(max_examples=40, deadline=None)
def test_same_padding_preserves_length(length, k, d):
    out, _ = F.conv1d_forward(np.ones((1, 1, length)), np.ones((2, 1, k)), None, d)
    assert out.shape == (1, 2, length)


@pytest.mark.parametrize("seed", range(5))
def test_conv1d_linearity(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 2, 3, 20))
    w = rng.standard_normal((4, 3, 3))
    a, b = rng.standard_normal(2)
    lhs, _ = F.conv1d_forward(a * x + b * y, w, None, 2)
    cx, _ = F.conv1d_forward(x, w, None, 2)
    cy, _ = F.conv1d_forward(y, w, None, 2)
    np.testing.assert_allclose(lhs, a * cx + b * cy, rtol=1e-5, atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("padding", ["same", "valid"])
def test_conv1d_gradients(seed, padding):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, 8))
    w = rng.standard_normal((3, 2, 3))
    b = rng.standard_normal(3)

    def op(x, w, b):
        out, cache = F.conv1d_forward(x, w, b, 2 if padding == "same" else 1, padding)
        return out, lambda d: F.conv1d_backward(d, cache)

    assert F.grad_check(op, [x, w, b], 1e-5, seed) < 1e-4


# -- dense -----------------------------------------------------------------
def test_dense_examples():
    out, _ = F.dense_forward(np.array([[1.0, 2.0]]), np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(out, [[1, 2]])
    out, _ = F.dense_forward(np.array([[1.0, 2.0]]), np.array([[1.0], [3.0]]), np.array([0.5]))
    np.testing.assert_array_equal(out, [[7.5]])
    out, _ = F.dense_forward(np.zeros((1, 2)), np.random.default_rng(0).standard_normal((2, 1)), np.array([4.0]))
    np.testing.assert_array_equal(out, [[4.0]])
    with pytest.raises(ValueError, match="mismatch"):
        F.dense_forward(np.zeros((1, 3)), np.zeros((2, 1)), np.zeros(1))


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_gradients(seed):
    rng = np.random.default_rng(seed)

    def op(x, w, b):
        out, cache = F.dense_forward(x, w, b)
        return out, lambda d: F.dense_backward(d, cache)

    args = [rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal(2)]
    assert F.grad_check(op, args, 1e-5, seed) < 1e-4


# -- relu ------------------------------------------------------------------
def test_relu_examples():
    out, mask = F.relu_forward(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out, [0, 0, 2])
    np.testing.assert_array_equal(F.relu_backward(np.ones(3), mask), [0, 0, 1])
    pos = np.abs(np.random.default_rng(0).standard_normal(10))
    np.testing.assert_array_equal(F.relu_forward(pos)[0], pos)
    np.testing.assert_array_equal(F.relu_forward(-pos - 1)[0], np.zeros(10))


def test_relu_gradient_away_from_kink(rng):
    x = rng.uniform(0.1, 1.0, 12) * rng.choice([-1, 1], 12)

    def op(x):
        out, mask = F.relu_forward(x)
        return out, lambda d: (F.relu_backward(d, mask),)

    assert F.grad_check(op, [x]) < 1e-6


# -- batch norm ------------------------------------------------------------
def test_batch_norm_train_example():
    out, _ = F.batch_norm_forward(_as3d([1, 2, 3]), np.ones(1), np.zeros(1), None, "train", eps=0.0)
    np.testing.assert_allclose(out[0, 0], [-1.2247, 0.0, 1.2247], atol=1e-3)


def test_batch_norm_gamma_zero_collapses_to_beta(rng):
    x = rng.standard_normal((4, 2, 6))
    beta = np.array([0.3, -2.0])
    out, _ = F.batch_norm_forward(x, np.zeros(2), beta, None, "train")
    np.testing.assert_array_equal(out, np.broadcast_to(beta[None, :, None], x.shape))


def test_batch_norm_infer_identity_stats(rng):
    x = rng.standard_normal((3, 2, 5))
    running = F.RunningStats(np.zeros(2), np.ones(2))
    out, _ = F.batch_norm_forward(x, np.ones(2), np.zeros(2), running, "infer", eps=0.0)
    np.testing.assert_array_equal(out, x)
    np.testing.assert_array_equal(running.mean, 0)
    np.testing.assert_array_equal(running.var, 1)


def test_batch_norm_running_update():
    x = _as3d([1, 2, 3])
    running = F.RunningStats(np.zeros(1), np.ones(1))
    F.batch_norm_forward(x, np.ones(1), np.zeros(1), running, "train", momentum=0.01)
    np.testing.assert_allclose(running.mean, [0.02])
    np.testing.assert_allclose(running.var, [0.99 + 0.01 * 2 / 3])


@pytest.mark.parametrize("seed", range(5))
def test_batch_norm_output_is_standardized(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(5.0, 3.0, (8, 3, 20))
    out, _ = F.batch_norm_forward(x, np.ones(3), np.zeros(3), None, "train", eps=1e-5)
    mean = out.mean(axis=(0, 2))
    var = out.var(axis=(0, 2))
    assert np.all(np.abs(mean) < 1e-5)
    batch_var = x.var(axis=(0, 2))
    np.testing.assert_allclose(var, batch_var / (batch_var + 1e-5), atol=1e-4)


def test_batch_norm_errors():
    x = np.zeros((1, 1, 4))
    with pytest.raises(ValueError, match="nonnegative"):
        F.batch_norm_forward(x, np.ones(1), np.zeros(1), None, "train", eps=-1)
    with pytest.raises(ValueError, match="running"):
        F.batch_norm_forward(x, np.ones(1), np.zeros(1), None, "infer")
    with pytest.raises(ValueError, match="at least 2"):
        F.batch_norm_forward(np.zeros((1, 1, 1)), np.ones(1), np.zeros(1), None, "train")


@pytest.mark.parametrize("seed", SEEDS)
def test_batch_norm_gradients(seed):
    rng = np.random.default_rng(seed)

    def op(x, gamma, beta):
        out, cache = F.batch_norm_forward(x, gamma, beta, None, "train")
        return out, lambda d: F.batch_norm_backward(d, cache)

    args = [rng.standard_normal((3, 2, 5)), rng.uniform(0.5, 1.5, 2), rng.standard_normal(2)]
    assert F.grad_check(op, args, 1e-5, seed) < 1e-4


# -- dropout ---------------------------------------------------------------
def test_dropout_passthrough_cases(rng):
    x = rng.standard_normal((2, 3, 4))
    assert F.dropout_forward(x, 0.0, "train", 1)[0] is x
    assert F.dropout_forward(x, 0.7, "infer", 1)[0] is x


def test_dropout_expectation():
    out, _ = F.dropout_forward(np.ones(100_000), 0.5, "train", seed=42)
    assert 0.98 <= out.mean() <= 1.02
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_dropout_mask_is_pure_function_of_seed(rng):
    x = rng.standard_normal(50)
    a, mask_a = F.dropout_forward(x, 0.3, "train", seed=7)
    b, _ = F.dropout_forward(x, 0.3, "train", seed=7)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(F.dropout_backward(np.ones(50), mask_a), mask_a)


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_rate_errors(rate):
    with pytest.raises(ValueError):
        F.dropout_forward(np.ones(3), rate, "train")


# -- mse -------------------------------------------------------------------
def test_mse_examples(rng):
    x = rng.standard_normal(5)
    assert F.mse_loss(x, x)[0] == 0
    assert F.mse_loss(np.zeros(2), np.ones(2))[0] == 1.0
    assert F.mse_loss(np.array([3.0]), np.array([1.0]))[0] == 4.0
    with pytest.raises(ValueError, match="shape"):
        F.mse_loss(np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError, match="empty"):
        F.mse_loss(np.zeros(0), np.zeros(0))


@pytest.mark.parametrize("seed", SEEDS)
def test_mse_gradients(seed):
    rng = np.random.default_rng(seed)
    target = rng.standard_normal((4, 1))

    def op(pred):
        loss, d = F.mse_loss(pred, target)
        return loss, lambda g: (g * d,)

    assert F.grad_check(op, [rng.standard_normal((4, 1))], 1e-5, seed) < 1e-4


# -- adam ------------------------------------------------------------------
def test_adam_first_step():
    p = np.zeros(1)
    state = F.AdamState.zeros_like(p)
    F.adam_step(p, np.ones(1), state, 1e-3, 0.9, 0.999, 1e-8)
    assert abs(p[0] + 0.001) < 1e-6
    assert state.t == 1


def test_adam_zero_gradient_leaves_param(rng):
    p = rng.standard_normal(4)
    before = p.copy()
    F.adam_step(p, np.zeros(4), F.AdamState.zeros_like(p))
    np.testing.assert_array_equal(p, before)


def test_adam_constant_gradient_decreases():
    p = np.array([1.0])
    state = F.AdamState.zeros_like(p)
    values = [p[0]]
    for _ in range(2):
        F.adam_step(p, np.array([0.5]), state)
        values.append(p[0])
    assert values[0] > values[1] > values[2]
    assert np.all(state.v >= 0)


def test_adam_deterministic(rng):
    p, g = rng.standard_normal((2, 6))
    runs = []
    for _ in range(2):
        q = p.copy()
        state = F.AdamState.zeros_like(q)
        for _ in range(3):
            F.adam_step(q, g, state)
        runs.append(q.tobytes())
    assert runs[0] == runs[1]


def test_adam_errors():
    p = np.zeros(2)
    with pytest.raises(ValueError, match="shape"):
        F.adam_step(p, np.zeros(3), F.AdamState.zeros_like(p))
    with pytest.raises(ValueError, match="learning rate"):
        F.adam_step(p, np.zeros(2), F.AdamState.zeros_like(p), lr=-1)


# -- grad_check --------------------------------------------------------------
def test_grad_check_detects_wrong_gradient():
    def op(x):
        return x**2, lambda d: (d * 3 * x,)

    assert F.grad_check(op, [np.array([1.0, 2.0])]) > 0.1


def test_grad_check_rejects_non_finite_and_bad_eps():
    with pytest.raises(NonFiniteError), np.errstate(divide="ignore"):
        F.grad_check(lambda x: (x / 0.0, lambda d: (d,)), [np.array([1.0])])
    with pytest.raises(ValueError, match="fd_eps"):
        F.grad_check(lambda x: (x, lambda d: (d,)), [np.array([1.0])], fd_eps=1e-2)
