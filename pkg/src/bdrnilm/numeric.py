"""Layer primitives with explicit forward/backward passes.

Every ``*_forward`` function returns ``(out, cache)`` and the matching
``*_backward`` takes the upstream gradient plus that cache. Arrays are plain
numpy arrays laid out as ``(batch, channels, length)`` for sequence data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import NonFiniteError, check_finite

SAME = "same"
VALID = "valid"
TRAIN = "train"
INFER = "infer"


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------
def conv1d_forward(x, w, b=None, dilation=1, padding=SAME):
    """Dilated 1-D cross-correlation.

    y[n, f, i] = b[f] + sum_{c, j} w[f, c, j] * x_pad[n, c, i + j * dilation]

    With ``padding="same"`` the taps are centered, i.e. the kernel sees the
    same number of past and future samples, and the output length equals
    the input length.

    Parameters
    ----------
    x : ndarray of shape (B, C, L)
    w : ndarray of shape (F, C, K)
    b : ndarray of shape (F,) or None
    dilation : int >= 1
    padding : {"same", "valid"}
    """
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError(f"conv1d expects 3-d input and weights, got {x.shape} and {w.shape}")
    n_filters, in_channels, k = w.shape
    if x.shape[1] != in_channels:
        raise ValueError(f"channel mismatch: input has {x.shape[1]} channels, weights expect {in_channels}")
    if dilation < 1 or k < 1:
        raise ValueError("kernel length and dilation must be >= 1")
    if b is not None and b.shape != (n_filters,):
        raise ValueError(f"bias shape {b.shape} does not match {n_filters} filters")

    length = x.shape[2]
    span = (k - 1) * dilation
    if padding == SAME:
        if k % 2 == 0:
            raise ValueError(f"same padding needs an odd kernel length, got {k}")
        pad = span // 2
        x_pad = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
        out_len = length
    elif padding == VALID:
        x_pad = x
        out_len = length - span
        if out_len <= 0:
            raise ValueError(f"valid convolution output length {out_len} is not positive")
    else:
        raise ValueError(f"unknown padding mode {padding!r}")

    # im2col: one (F, C*K) x (C*K, B*L) product instead of B small ones
    cols = np.stack(
        [x_pad[:, :, j * dilation:j * dilation + out_len] for j in range(k)], axis=2
    )  # (B, C, K, L)
    cols = cols.transpose(1, 2, 0, 3).reshape(in_channels * k, -1)
    out = (w.reshape(n_filters, -1) @ cols).reshape(n_filters, x.shape[0], out_len)
    out = out.transpose(1, 0, 2)
    if b is not None:
        out = out + b[None, :, None]
    out = np.ascontiguousarray(out)
    cache = (cols, x_pad.shape, w, b is not None, dilation, padding, length)
    return out, cache


def conv1d_backward(dout, cache):
    """Return ``(dx, dw, db)``; ``db`` is None when the layer has no bias."""
    cols, pad_shape, w, has_bias, dilation, padding, length = cache
    n_filters, in_channels, k = w.shape
    batch, out_len = dout.shape[0], dout.shape[2]
    dflat = dout.transpose(1, 0, 2).reshape(n_filters, -1)
    dw = (dflat @ cols.T).reshape(w.shape)
    dcols = (w.reshape(n_filters, -1).T @ dflat).reshape(in_channels, k, batch, out_len)
    dx_pad = np.zeros(pad_shape, dtype=dout.dtype)
    for j in range(k):
        dx_pad[:, :, j * dilation:j * dilation + out_len] += dcols[:, j].transpose(1, 0, 2)
    if padding == SAME:
        pad = (pad_shape[2] - length) // 2
        dx = dx_pad[:, :, pad:pad + length]
    else:
        dx = dx_pad
    db = dout.sum(axis=(0, 2)) if has_bias else None
    return dx, dw, db


# ---------------------------------------------------------------------------
# dense / relu
# ---------------------------------------------------------------------------
def dense_forward(x, w, b):
    """y = x @ w + b for x of shape (B, N), w (N, M), b (M,)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"dense dimension mismatch: {x.shape} @ {w.shape}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"dense bias shape {b.shape} does not match output width {w.shape[1]}")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(x):
    mask = x > 0
    return np.maximum(x, 0), mask


def relu_backward(dout, mask):
    # subgradient at exactly zero is 0
    return dout * mask


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------
@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def identity(cls, channels, dtype=np.float32):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batch_norm_forward(x, gamma, beta, running, mode=TRAIN, momentum=0.01, eps=1e-5):
    """Per-channel normalization of a (B, C, L) tensor.

    In train mode the batch mean and population variance over the B x L
    axes are used and ``running`` is updated in place as
    ``running = (1 - momentum) * running + momentum * batch``. In infer mode
    only the running statistics are read.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if x.ndim != 3 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ValueError(f"batch_norm shape mismatch: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    g = gamma[None, :, None]
    if mode == INFER:
        if running is None:
            raise ValueError("infer mode needs running statistics")
        inv_std = 1.0 / np.sqrt(running.var + eps)
        xhat = (x - running.mean[None, :, None]) * inv_std[None, :, None]
        return (g * xhat + beta[None, :, None]).astype(x.dtype, copy=False), None
    if mode != TRAIN:
        raise ValueError(f"unknown mode {mode!r}")

    count = x.shape[0] * x.shape[2]
    if count < 2:
        raise ValueError("train-mode batch_norm needs at least 2 values per channel")
    mean = x.mean(axis=(0, 2))
    centered = x - mean[None, :, None]
    var = np.mean(centered * centered, axis=(0, 2))
    denom = var + eps
    if np.any(denom <= 0):
        raise NonFiniteError("zero variance channel with eps=0")
    inv_std = 1.0 / np.sqrt(denom)
    xhat = centered * inv_std[None, :, None]
    out = g * xhat + beta[None, :, None]
    if running is not None:
        running.mean *= 1 - momentum
        running.mean += momentum * mean.astype(running.mean.dtype)
        running.var *= 1 - momentum
        running.var += momentum * var.astype(running.var.dtype)
    return out, (xhat, gamma, inv_std)


def batch_norm_backward(dout, cache):
    """Return ``(dx, dgamma, dbeta)`` for a train-mode forward."""
    xhat, gamma, inv_std = cache
    count = xhat.shape[0] * xhat.shape[2]
    dbeta = dout.sum(axis=(0, 2))
    dgamma = np.sum(dout * xhat, axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    dx = (inv_std / count)[None, :, None] * (
        count * dxhat
        - dxhat.sum(axis=(0, 2))[None, :, None]
        - xhat * np.sum(dxhat * xhat, axis=(0, 2))[None, :, None]
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------
def dropout_forward(x, rate, mode=TRAIN, seed=0):
    """Inverted dropout; the mask depends only on ``seed`` and element position."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == INFER or rate == 0:
        return x, None
    keep = np.random.default_rng(seed).random(x.shape) >= rate
    scale = x.dtype.type(1.0 / (1.0 - rate))
    mask = keep.astype(x.dtype) * scale
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------
def mse_loss(pred, target):
    """Return ``(loss, dpred)`` for the mean squared error."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ValueError("mse of empty tensors is undefined")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / pred.size) * diff


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------
@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param):
        return cls(np.zeros_like(param), np.zeros_like(param), 0)


def adam_step(param, grad, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update, applied to ``param`` and ``state`` in place."""
    if param.shape != grad.shape or state.m.shape != param.shape or state.v.shape != param.shape:
        raise ValueError(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    if lr < 0:
        raise ValueError(f"learning rate must be nonnegative, got {lr}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("beta1 and beta2 must lie in [0, 1)")
    state.t += 1
    state.m *= beta1
    state.m += (1 - beta1) * grad
    state.v *= beta2
    state.v += (1 - beta2) * grad * grad
    m_hat = state.m / (1 - beta1 ** state.t)
    v_hat = state.v / (1 - beta2 ** state.t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)
    return param, state


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------
def grad_check(func, inputs, fd_eps=1e-5, seed=0, fd_dtype=np.longdouble):
    """Compare analytic and central finite-difference gradients.

    ``func(*inputs)`` must return ``(out, backward)`` where ``backward(dout)``
    yields one gradient per input (None for inputs it does not differentiate).
    Non-scalar outputs are reduced with a fixed random projection so a
    single upstream gradient covers every output coordinate.

    The analytic gradients are taken in double precision. The finite
    differences are evaluated in ``fd_dtype`` (extended precision where the
    platform has it) so that roundoff in the reference stays well below the
    tolerance even for coordinates whose gradient is close to zero.

    Returns the maximum over all coordinates of
    ``|a - f| / max(|a|, |f|, 1e-8)``.
    """
    if not 1e-7 <= fd_eps <= 1e-3:
        raise ValueError(f"fd_eps must lie in [1e-7, 1e-3], got {fd_eps}")
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out, backward = func(*inputs)
    out = np.asarray(out, dtype=np.float64)
    check_finite(out, "grad_check output")
    proj = np.random.default_rng(seed).standard_normal(out.shape)
    analytic = backward(proj if out.ndim else float(proj))

    wide = [x.astype(fd_dtype) for x in inputs]
    wide_proj = proj.astype(fd_dtype)
    step = fd_dtype(fd_eps)

    def scalar():
        value, _ = func(*wide)
        value = np.asarray(value)
        check_finite(value, "grad_check output")
        return np.sum(wide_proj * value.astype(fd_dtype))

    worst = 0.0
    for idx, x in enumerate(wide):
        a_grad = analytic[idx]
        if a_grad is None:
            continue
        a_grad = np.asarray(a_grad, dtype=np.float64)
        if a_grad.shape != x.shape:
            raise ValueError(f"gradient for input {idx} has shape {a_grad.shape}, expected {x.shape}")
        flat = x.reshape(-1)
        for pos in range(flat.size):
            saved = flat[pos]
            flat[pos] = saved + step
            up = scalar()
            flat[pos] = saved - step
            down = scalar()
            flat[pos] = saved
            f = float((up - down) / (2 * step))
            a = a_grad.reshape(-1)[pos]
            worst = max(worst, abs(a - f) / max(abs(a), abs(f), 1e-8))
    return worst
