"""Slow, obviously-correct reference implementations used only by the tests."""
import math

import numpy as np


def conv1d_direct(x, w, b, dilation, padding="same"):
    """Nested-loop dilated cross-correlation on (B, C, L) input."""
    B, C, L = x.shape
    F, _, K = w.shape
    pad = (K - 1) * dilation // 2 if padding == "same" else 0
    out_len = L if padding == "same" else L - (K - 1) * dilation
    y = np.zeros((B, F, out_len))
    for n in range(B):
        for f in range(F):
            for i in range(out_len):
                acc = 0.0 if b is None else float(b[f])
                for c in range(C):
                    for j in range(K):
                        pos = i + j * dilation - pad
                        if 0 <= pos < L:
                            acc += w[f, c, j] * x[n, c, pos]
                y[n, f, i] = acc
    return y


def mae_loop(pred, truth):
    total = 0.0
    for p, t in zip(pred, truth):
        total += abs(p - t)
    return total / len(pred)


def sae_loop(pred, truth):
    r_hat = math.fsum(pred)
    r = math.fsum(truth)
    return abs(r_hat - r) / r


def param_accounting(first_filters, filters, kernel, first_kernel, n_blocks, head_in):
    """Hand accounting: (learnable, learnable + BN running statistics)."""
    first = first_filters * 1 * first_kernel + first_filters
    learnable = first
    stats = 0
    channels = first_filters
    for _ in range(n_blocks):
        learnable += filters * channels * kernel  # unit 0 conv, no bias (feeds BN)
        learnable += filters * filters * kernel  # unit 1 conv
        learnable += 2 * (2 * filters)  # gamma + beta per BN
        stats += 2 * (2 * filters)  # running mean + var per BN
        if channels != filters:
            learnable += filters * channels + filters
        channels = filters
    learnable += head_in * 1 + 1
    return learnable, learnable + stats
