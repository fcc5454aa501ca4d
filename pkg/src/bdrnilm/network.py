"""Bidirectional dilated residual network for sequence-to-point regression.

Topology: a standard convolution lifts the single-channel window to
``filters`` channels, then ``n_blocks`` residual blocks with dilations
1, 2, 4, ... follow. Every block emits two results: its residual output,
which feeds the next block, and its branch output, which is summed with the
branch outputs of all other blocks. The summed features go through a ReLU,
the center time step is picked, and a dense layer maps it to one value.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import numeric as F
from ._validation import check_finite, check_odd, check_positive_int

CONV_STANDARD = "conv-standard"
CONV_BIDIRECTIONAL = "conv-dilated-bidirectional"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int
    kernel: int
    dilation: int = 1

    def __post_init__(self):
        if self.kind not in (CONV_STANDARD, CONV_BIDIRECTIONAL):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        check_positive_int(self.filters, "filters")
        check_positive_int(self.dilation, "dilation")
        if self.kind == CONV_BIDIRECTIONAL:
            check_odd(self.kernel, "kernel")
        else:
            check_positive_int(self.kernel, "kernel")


@dataclass(frozen=True)
class ResidualBlockSpec:
    in_channels: int
    filters: int
    kernel: int
    dilation: int

    @property
    def units(self):
        unit = LayerSpec(CONV_BIDIRECTIONAL, self.filters, self.kernel, self.dilation)
        return (unit, unit)

    @property
    def projects_shortcut(self):
        return self.in_channels != self.filters


@dataclass
class NetworkConfig:
    """Declarative architecture description.

    The defaults reproduce the published layout: a kernel-3 input
    convolution with 128 filters, eight residual blocks of 128 kernel-3
    filters with dilations 1..128, and a 128 -> 1 dense head.
    """

    window_length: int = 599
    input_channels: int = 1
    first_filters: int = 128
    first_kernel: int = 3
    filters: int = 128
    kernel_size: int = 3
    n_blocks: int = 8
    dilations: list | None = None
    allow_custom_dilations: bool = False
    dropout_rate: float = 0.1
    bn_momentum: float = 0.01
    bn_eps: float = 1e-5

    def validate(self):
        check_odd(self.window_length, "window_length")
        if self.input_channels != 1:
            raise ValueError("only single-channel aggregate input is supported")
        check_positive_int(self.first_filters, "first_filters")
        check_odd(self.first_kernel, "first_kernel")
        check_positive_int(self.filters, "filters")
        check_odd(self.kernel_size, "kernel_size")
        check_positive_int(self.n_blocks, "n_blocks")
        dil = self.block_dilations()
        if len(dil) != self.n_blocks:
            raise ValueError(f"{len(dil)} dilations given for {self.n_blocks} blocks")
        for d in dil:
            check_positive_int(d, "dilation")
        if not self.allow_custom_dilations:
            expected = [2**b for b in range(self.n_blocks)]
            if list(dil) != expected:
                raise ValueError(f"dilations must double per block ({expected}), got {list(dil)}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0 <= self.bn_momentum <= 1:
            raise ValueError("bn_momentum must be in [0, 1]")
        if self.bn_eps <= 0:
            raise ValueError("bn_eps must be positive")
        return self

    def block_dilations(self):
        if self.dilations is None:
            return [2**b for b in range(self.n_blocks)]
        return [int(d) for d in self.dilations]

    @property
    def first_conv(self):
        return LayerSpec(CONV_STANDARD, self.first_filters, self.first_kernel, 1)

    @property
    def blocks(self):
        specs = []
        channels = self.first_filters
        for d in self.block_dilations():
            specs.append(ResidualBlockSpec(channels, self.filters, self.kernel_size, d))
            channels = self.filters
        return specs

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# receptive field arithmetic
# ---------------------------------------------------------------------------
class ReceptiveField(NamedTuple):
    length: int
    left_extent: int
    right_extent: int


def receptive_field(layers):
    """Receptive field of a stack of ``(kernel, dilation, causal)`` layers.

    A causal layer looks ``(k - 1) * d`` samples into the past only; a
    bidirectional layer looks ``(k - 1) / 2 * d`` samples each way.
    """
    layers = list(layers)
    if not layers:
        raise ValueError("receptive field of an empty stack is undefined")
    left = right = 0
    for kernel, dilation, causal in layers:
        if kernel < 2 or dilation < 1:
            raise ValueError(f"need kernel >= 2 and dilation >= 1, got k={kernel}, d={dilation}")
        span = (kernel - 1) * dilation
        if causal:
            left += span
        else:
            if kernel % 2 == 0:
                raise ValueError(f"bidirectional layers need an odd kernel, got {kernel}")
            left += span // 2
            right += span // 2
    return ReceptiveField(left + right + 1, left, right)


def network_layers(config):
    """The ``(kernel, dilation, causal)`` stack seen by the center output."""
    stack = [(config.first_kernel, 1, False)] if config.first_kernel > 1 else []
    for block in config.blocks:
        stack += [(block.kernel, block.dilation, False)] * 2
    return stack


def network_receptive_field(config):
    return receptive_field(network_layers(config))


# ---------------------------------------------------------------------------
# the network
# ---------------------------------------------------------------------------
def _uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _unit_prefix(b, u):
    return f"block{b}.unit{u}"


@dataclass
class Network:
    """A realized network: configuration, named parameters and BN state.

    Convolutions that feed a batch normalization carry no bias, because the
    normalization removes any per-channel offset.
    """

    config: NetworkConfig
    params: OrderedDict = field(default_factory=OrderedDict)
    running: OrderedDict = field(default_factory=OrderedDict)
    _cache: dict | None = field(default=None, repr=False)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    # -- construction -----------------------------------------------------
    @classmethod
    def build(cls, config, seed=0, dtype=np.float32):
        config.validate()
        rng = np.random.default_rng(seed)
        params = OrderedDict()
        running = OrderedDict()
        c_in = config.input_channels
        first = config.first_conv
        params["input.conv.weight"] = _uniform(
            rng, (first.filters, c_in, first.kernel), c_in * first.kernel, dtype
        )
        params["input.conv.bias"] = np.zeros(first.filters, dtype=dtype)
        for b, block in enumerate(config.blocks):
            channels = block.in_channels
            for u in range(2):
                p = _unit_prefix(b, u)
                params[f"{p}.conv.weight"] = _uniform(
                    rng, (block.filters, channels, block.kernel), channels * block.kernel, dtype
                )
                params[f"{p}.bn.gamma"] = np.ones(block.filters, dtype=dtype)
                params[f"{p}.bn.beta"] = np.zeros(block.filters, dtype=dtype)
                running[f"{p}.bn"] = F.RunningStats.identity(block.filters, dtype)
                channels = block.filters
            if block.projects_shortcut:
                params[f"block{b}.shortcut.weight"] = _uniform(
                    rng, (block.filters, block.in_channels, 1), block.in_channels, dtype
                )
                params[f"block{b}.shortcut.bias"] = np.zeros(block.filters, dtype=dtype)
        width = config.filters
        params["head.weight"] = _uniform(rng, (width, 1), width, dtype)
        params["head.bias"] = np.zeros(1, dtype=dtype)
        return cls(config, params, running)

    def astype(self, dtype):
        """Copy of the network with parameters and statistics cast to ``dtype``."""
        params = OrderedDict((k, v.astype(dtype)) for k, v in self.params.items())
        running = OrderedDict(
            (k, F.RunningStats(s.mean.astype(dtype), s.var.astype(dtype)))
            for k, s in self.running.items()
        )
        return Network(self.config, params, running)

    def copy(self):
        return self.astype(self.dtype)

    def state_arrays(self):
        """Every stored array in a fixed order: parameters, then BN statistics."""
        arrays = OrderedDict(self.params)
        for name, stats in self.running.items():
            arrays[f"{name}.running_mean"] = stats.mean
            arrays[f"{name}.running_var"] = stats.var
        return arrays

    def load_state_arrays(self, arrays):
        own = self.state_arrays()
        missing = [k for k in own if k not in arrays]
        extra = [k for k in arrays if k not in own]
        wrong = [
            f"{k}: expected {own[k].shape}, found {np.shape(arrays[k])}"
            for k in own
            if k in arrays and np.shape(arrays[k]) != own[k].shape
        ]
        if missing or extra or wrong:
            problems = []
            if missing:
                problems.append("missing " + ", ".join(missing))
            if extra:
                problems.append("unexpected " + ", ".join(extra))
            problems += wrong
            raise ValueError("weights incompatible with config: " + "; ".join(problems))
        for k in self.params:
            self.params[k] = np.array(arrays[k], dtype=self.dtype)
        for k, stats in self.running.items():
            stats.mean = np.array(arrays[f"{k}.running_mean"], dtype=self.dtype)
            stats.var = np.array(arrays[f"{k}.running_var"], dtype=self.dtype)
        return self

    # -- forward / backward ---------------------------------------------------
    def forward(self, batch, mode=F.INFER, seed=0):
        """Map windows of shape (B, 1, W) to midpoint predictions (B, 1).

        Train mode uses batch statistics, updates the running statistics,
        applies dropout with masks derived from ``seed`` and keeps the
        intermediates needed by :meth:`backward`. Infer mode leaves the
        network untouched.
        """
        cfg = self.config
        p = self.params
        x = np.asarray(batch, dtype=self.dtype)
        if x.ndim == 2:
            x = x[:, None, :]
        if x.ndim != 3 or x.shape[1] != cfg.input_channels:
            raise ValueError(f"expected a (B, {cfg.input_channels}, W) batch, got {x.shape}")
        if x.shape[2] != cfg.window_length:
            raise ValueError(f"window length {x.shape[2]} does not match config {cfg.window_length}")
        train = mode == F.TRAIN
        if not train and mode != F.INFER:
            raise ValueError(f"unknown mode {mode!r}")

        h, conv0 = F.conv1d_forward(x, p["input.conv.weight"], p["input.conv.bias"], 1)
        skip_sum = np.zeros((x.shape[0], cfg.filters, x.shape[2]), dtype=self.dtype)
        block_caches = []
        seed_key = [int(v) for v in np.atleast_1d(seed)]
        site = 0
        for b, block in enumerate(cfg.blocks):
            block_in = h
            u_out = block_in
            unit_caches = []
            for u in range(2):
                pre = _unit_prefix(b, u)
                z, c_conv = F.conv1d_forward(u_out, p[f"{pre}.conv.weight"], None, block.dilation)
                n, c_bn = F.batch_norm_forward(
                    z, p[f"{pre}.bn.gamma"], p[f"{pre}.bn.beta"], self.running[f"{pre}.bn"],
                    mode, cfg.bn_momentum, cfg.bn_eps,
                )
                r, m_relu = F.relu_forward(n)
                u_out, m_drop = F.dropout_forward(r, cfg.dropout_rate, mode, seed=[*seed_key, site])
                site += 1
                unit_caches.append((c_conv, c_bn, m_relu, m_drop))
            branch = u_out
            if block.projects_shortcut:
                shortcut, c_short = F.conv1d_forward(
                    block_in, p[f"block{b}.shortcut.weight"], p[f"block{b}.shortcut.bias"], 1
                )
            else:
                shortcut, c_short = block_in, None
            h, m_out = F.relu_forward(branch + shortcut)
            skip_sum += branch
            block_caches.append((unit_caches, c_short, m_out))

        feats, m_feats = F.relu_forward(skip_sum)
        mid = cfg.window_length // 2
        out, c_head = F.dense_forward(feats[:, :, mid], p["head.weight"], p["head.bias"])
        check_finite(out, "network output")
        self._cache = (
            {"conv0": conv0, "blocks": block_caches, "m_feats": m_feats, "head": c_head, "shape": x.shape}
            if train
            else None
        )
        return out

    def backward(self, dout):
        """Parameter gradients for the most recent train-mode forward pass.

        Returns an ordered mapping with one gradient per parameter. The
        gradient with respect to the input batch is stored under ``"input"``.
        """
        if self._cache is None:
            raise RuntimeError("backward needs a preceding train-mode forward pass")
        cache = self._cache
        cfg = self.config
        p = self.params
        grads = OrderedDict()
        dout = np.asarray(dout, dtype=self.dtype).reshape(cache["shape"][0], 1)

        dcenter, grads["head.weight"], grads["head.bias"] = F.dense_backward(dout, cache["head"])
        dfeats = np.zeros(cache["m_feats"].shape, dtype=self.dtype)
        dfeats[:, :, cfg.window_length // 2] = dcenter
        dskip = F.relu_backward(dfeats, cache["m_feats"])

        dh = np.zeros_like(dskip)
        blocks = cfg.blocks
        for b in reversed(range(len(blocks))):
            unit_caches, c_short, m_out = cache["blocks"][b]
            dsum = F.relu_backward(dh, m_out)
            dbranch = dsum + dskip
            if c_short is not None:
                dblock_in, grads[f"block{b}.shortcut.weight"], grads[f"block{b}.shortcut.bias"] = (
                    F.conv1d_backward(dsum, c_short)
                )
            else:
                dblock_in = dsum
            du = dbranch
            for u in reversed(range(2)):
                pre = _unit_prefix(b, u)
                c_conv, c_bn, m_relu, m_drop = unit_caches[u]
                du = F.dropout_backward(du, m_drop)
                du = F.relu_backward(du, m_relu)
                du, grads[f"{pre}.bn.gamma"], grads[f"{pre}.bn.beta"] = F.batch_norm_backward(du, c_bn)
                du, grads[f"{pre}.conv.weight"], _ = F.conv1d_backward(du, c_conv)
            dh = dblock_in + du

        dx, grads["input.conv.weight"], grads["input.conv.bias"] = F.conv1d_backward(dh, cache["conv0"])
        ordered = OrderedDict((k, grads[k]) for k in p)
        ordered["input"] = dx
        return ordered


def build_network(config=None, seed=0, dtype=np.float32):
    """Build a network with parameters drawn deterministically from ``seed``."""
    return Network.build(config if config is not None else NetworkConfig(), seed, dtype)


# ---------------------------------------------------------------------------
# parameter accounting
# ---------------------------------------------------------------------------
class ParamCount(NamedTuple):
    learnable: int
    total: int


def param_count(model):
    """Learnable parameter count, and the count including BN running statistics."""
    learnable = int(sum(v.size for v in model.params.values()))
    stats = int(sum(s.mean.size + s.var.size for s in model.running.values()))
    return ParamCount(learnable, learnable + stats)


def layer_table(config):
    """Per-layer rows ``(name, output_shape, learnable, stored_stats)``.

    Computed from the configuration alone, so it doubles as an accounting
    that does not depend on a built model.
    """
    w = config.window_length
    rows = []
    first = config.first_conv
    rows.append((
        f"input conv k={first.kernel} d=1",
        (first.filters, w),
        first.filters * config.input_channels * first.kernel + first.filters,
        0,
    ))
    for b, block in enumerate(config.blocks):
        channels = block.in_channels
        for u in range(2):
            rows.append((
                f"block{b}.unit{u} conv k={block.kernel} d={block.dilation}",
                (block.filters, w),
                block.filters * channels * block.kernel,
                0,
            ))
            rows.append((f"block{b}.unit{u} batchnorm", (block.filters, w), 2 * block.filters, 2 * block.filters))
            channels = block.filters
        if block.projects_shortcut:
            rows.append((
                f"block{b}.shortcut conv 1x1",
                (block.filters, w),
                block.filters * block.in_channels + block.filters,
                0,
            ))
    rows.append((f"head dense {config.filters}->1", (1,), config.filters + 1, 0))
    return rows
