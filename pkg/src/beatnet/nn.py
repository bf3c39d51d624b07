"""A small 1-D CNN for beat detection, with hand-written backprop.

Architecture: four convolutional blocks, each BatchNorm -> Conv1d
(same padding, stride 1) -> ReLU -> MaxPool (kernel 2, stride 2), then
flatten, Dropout, and three fully connected layers with ReLU between
them; the final layer emits two logits. SoftMax exists as a standalone
op for inference and is folded into the loss during training.

Everything is functional: parameters live in a plain dict of float32
arrays keyed by layer name, and no forward or backward call mutates
them. BatchNorm's train-mode forward returns candidate running-stat
updates; committing them is the trainer's job.

Unconventional but deliberate: BatchNorm comes before the convolution
inside each block, and there is no ReLU after the final FC layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateBatch, InvalidProbability, ShapeMismatch

BN_EPS = 1e-5
BN_MOMENTUM = 0.1  # running <- 0.9 * running + 0.1 * batch


@dataclass(frozen=True)
class ConvBlockSpec:
    """Channel/kernel geometry of one convolutional block."""

    in_channels: int
    out_channels: int
    kernel_size: int

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeMismatch(f"channel counts must be >= 1, got "
                                f"{self.in_channels}->{self.out_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ShapeMismatch(f"kernel size must be odd and >= 1, got "
                                f"{self.kernel_size}")


@dataclass(frozen=True)
class NetworkConfig:
    """Complete network geometry; the sole source of parameter shapes."""

    conv_blocks: tuple = (ConvBlockSpec(1, 8, 7), ConvBlockSpec(8, 16, 5),
                          ConvBlockSpec(16, 32, 5), ConvBlockSpec(32, 64, 3))
    fc_sizes: tuple = (128, 32, 2)
    dropout_p: float = 0.5
    pool_kernel: int = 2
    input_length: int = 250
    bn_eps: float = BN_EPS
    bn_momentum: float = BN_MOMENTUM

    def __post_init__(self):
        if len(self.conv_blocks) != 4:
            raise ShapeMismatch(f"expected exactly 4 conv blocks, got "
                                f"{len(self.conv_blocks)}")
        if self.conv_blocks[0].in_channels != 1:
            raise ShapeMismatch("first conv block must take 1 input channel")
        for a, b in zip(self.conv_blocks, self.conv_blocks[1:]):
            if b.in_channels != a.out_channels:
                raise ShapeMismatch(
                    f"conv chain broken: {a.out_channels} out feeds "
                    f"{b.in_channels} in")
        if len(self.fc_sizes) != 3 or self.fc_sizes[-1] != 2:
            raise ShapeMismatch(f"fc_sizes must be 3 widths ending in 2, "
                                f"got {self.fc_sizes}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidProbability(f"dropout_p must be in [0, 1), got "
                                     f"{self.dropout_p}")
        if self.pool_kernel != 2:
            raise ShapeMismatch("only pool kernel 2 (stride 2) is supported")
        if self.conv_output_length < 1:
            raise ShapeMismatch(f"input length {self.input_length} pools "
                                f"away to nothing")

    @property
    def conv_output_length(self) -> int:
        length = self.input_length
        for _ in self.conv_blocks:
            length //= 2
        return length

    @property
    def flatten_width(self) -> int:
        return self.conv_blocks[-1].out_channels * self.conv_output_length

    def to_dict(self) -> dict:
        return {
            "conv_blocks": [[b.in_channels, b.out_channels, b.kernel_size]
                            for b in self.conv_blocks],
            "fc_sizes": list(self.fc_sizes),
            "dropout_p": self.dropout_p,
            "pool_kernel": self.pool_kernel,
            "input_length": self.input_length,
            "bn_eps": self.bn_eps,
            "bn_momentum": self.bn_momentum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            conv_blocks=tuple(ConvBlockSpec(*b) for b in d["conv_blocks"]),
            fc_sizes=tuple(d["fc_sizes"]),
            dropout_p=d["dropout_p"],
            pool_kernel=d["pool_kernel"],
            input_length=d["input_length"],
            bn_eps=d["bn_eps"],
            bn_momentum=d["bn_momentum"],
        )


DEFAULT_CONFIG = NetworkConfig()

_BN_FIELDS = ("gamma", "beta", "running_mean", "running_var")


def param_layout(config: NetworkConfig) -> list[tuple[str, tuple]]:
    """Deterministic (name, shape) list defining parameter storage order."""
    layout = []
    for b, spec in enumerate(config.conv_blocks):
        for f in _BN_FIELDS:
            layout.append((f"conv{b}.bn.{f}", (spec.in_channels,)))
        layout.append((f"conv{b}.weight",
                       (spec.out_channels, spec.in_channels, spec.kernel_size)))
        layout.append((f"conv{b}.bias", (spec.out_channels,)))
    in_width = config.flatten_width
    for i, out_width in enumerate(config.fc_sizes):
        layout.append((f"fc{i}.weight", (out_width, in_width)))
        layout.append((f"fc{i}.bias", (out_width,)))
        in_width = out_width
    return layout


def trainable_keys(config: NetworkConfig) -> list[str]:
    """Parameter names the optimizer updates (running stats excluded)."""
    return [name for name, _ in param_layout(config)
            if "running_" not in name]


def conv_part_keys(config: NetworkConfig) -> list[str]:
    """All conv-block entries, BN running stats included."""
    return [name for name, _ in param_layout(config)
            if name.startswith("conv")]


def fc_part_keys(config: NetworkConfig) -> list[str]:
    return [name for name, _ in param_layout(config)
            if name.startswith("fc")]


def init_params(config: NetworkConfig,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Seeded initialization: weights uniform in +-sqrt(1/fan_in), biases 0,
    BN gamma 1 / beta 0, running mean 0 / var 1.

    Weight tensors are drawn in layout order, so a seed fixes every value.
    """
    params: dict[str, np.ndarray] = {}
    for name, shape in param_layout(config):
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            bound = math.sqrt(1.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, shape).astype(np.float32)
        elif name.endswith(("gamma", "running_var")):
            params[name] = np.ones(shape, dtype=np.float32)
        else:  # biases, beta, running_mean
            params[name] = np.zeros(shape, dtype=np.float32)
    return params


# ---------------------------------------------------------------------------
# layer kernels (dtype-preserving, pure)

def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 cross-correlation: (n,Cin,L) -> (n,Cout,L)."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv1d input {x.shape} vs weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeMismatch(f"conv1d bias {b.shape} vs {w.shape[0]} channels")
    n, c_in, length = x.shape
    c_out, _, k = w.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = sliding_window_view(xp, k, axis=2)        # (n, Cin, L, k)
    cols = cols.transpose(0, 2, 1, 3).reshape(n * length, c_in * k)
    y = cols @ w.reshape(c_out, c_in * k).T
    y = y.reshape(n, length, c_out).transpose(0, 2, 1)
    return y + b[None, :, None]


def conv1d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) for conv1d_forward."""
    n, c_in, length = x.shape
    c_out, _, k = w.shape
    if dy.shape != (n, c_out, length):
        raise ShapeMismatch(f"conv1d gradient {dy.shape}, expected "
                            f"{(n, c_out, length)}")
    pad = (k - 1) // 2

    db = dy.sum(axis=(0, 2))

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = sliding_window_view(xp, k, axis=2)        # (n, Cin, L, k)
    cols = cols.transpose(0, 2, 1, 3).reshape(n * length, c_in * k)
    dy_flat = dy.transpose(0, 2, 1).reshape(n * length, c_out)
    dw = (dy_flat.T @ cols).reshape(c_out, c_in, k)

    # dx is dy correlated with the flipped kernels, transposed over channels
    dyp = np.pad(dy, ((0, 0), (0, 0), (pad, pad)))
    dcols = sliding_window_view(dyp, k, axis=2)      # (n, Cout, L, k)
    dcols = dcols.transpose(0, 2, 1, 3).reshape(n * length, c_out * k)
    wflip = w[:, :, ::-1].transpose(1, 0, 2).reshape(c_in, c_out * k)
    dx = (dcols @ wflip.T).reshape(n, length, c_in).transpose(0, 2, 1)
    return dx, dw, db


def batchnorm1d_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                        running_mean: np.ndarray, running_var: np.ndarray,
                        train: bool, eps: float = BN_EPS,
                        momentum: float = BN_MOMENTUM):
    """Per-channel normalization over (batch, length).

    Returns (y, cache, new_running_mean, new_running_var). In train mode
    batch statistics normalize and the returned running stats are the
    momentum blend (with the unbiased batch variance); callers decide
    whether to commit them. Eval mode normalizes by the running stats
    and returns them unchanged.
    """
    if x.ndim != 3 or x.shape[1] != gamma.shape[0]:
        raise ShapeMismatch(f"batchnorm input {x.shape} vs "
                            f"{gamma.shape[0]} channels")
    n, c, length = x.shape
    if train:
        count = n * length
        if count < 2:
            raise DegenerateBatch(
                f"batch statistics need >= 2 values per channel, got {count}")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        unbiased = var * (count / (count - 1))
        new_mean = ((1.0 - momentum) * running_mean
                    + momentum * mean).astype(x.dtype)
        new_var = ((1.0 - momentum) * running_var
                   + momentum * unbiased).astype(x.dtype)
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
    y = gamma[None, :, None] * xhat + beta[None, :, None]
    cache = (xhat, inv_std.astype(x.dtype), gamma, train)
    return y.astype(x.dtype), cache, new_mean, new_var


def batchnorm1d_backward(dy: np.ndarray, cache,
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dgamma, dbeta) for batchnorm1d_forward."""
    xhat, inv_std, gamma, train = cache
    if dy.shape != xhat.shape:
        raise ShapeMismatch(f"batchnorm gradient {dy.shape}, expected "
                            f"{xhat.shape}")
    dgamma = (dy * xhat).sum(axis=(0, 2))
    dbeta = dy.sum(axis=(0, 2))
    dxhat = dy * gamma[None, :, None]
    if not train:
        # running stats are constants, so the chain is elementwise
        return dxhat * inv_std[None, :, None], dgamma, dbeta
    n, _, length = dy.shape
    count = n * length
    sum_dxhat = dxhat.sum(axis=(0, 2))[None, :, None]
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    dx = (inv_std[None, :, None] / count
          * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat))
    return dx.astype(dy.dtype), dgamma, dbeta


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient passes only where the input was strictly positive."""
    return dy * (x > 0)


def maxpool1d_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kernel-2 stride-2 max pooling; a trailing odd element is dropped.

    Returns (y, argmax) where argmax holds each window's winning offset
    (0 or 1, first index on ties) for the backward pass.
    """
    if x.ndim != 3:
        raise ShapeMismatch(f"maxpool expects (n, c, length), got {x.shape}")
    n, c, length = x.shape
    half = length // 2
    v = x[:, :, :2 * half].reshape(n, c, half, 2)
    idx = v.argmax(axis=3)
    y = np.take_along_axis(v, idx[..., None], axis=3)[..., 0]
    return y, idx


def maxpool1d_backward(dy: np.ndarray, idx: np.ndarray,
                       input_length: int) -> np.ndarray:
    """Routes each output gradient to its window's argmax position."""
    n, c, half = dy.shape
    dv = np.zeros((n, c, half, 2), dtype=dy.dtype)
    np.put_along_axis(dv, idx[..., None], dy[..., None], axis=3)
    dx = np.zeros((n, c, input_length), dtype=dy.dtype)
    dx[:, :, :2 * half] = dv.reshape(n, c, 2 * half)
    return dx


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x W^T + b over (n, in) inputs."""
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"linear input {x.shape} vs weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeMismatch(f"linear bias {b.shape} vs {w.shape[0]} outputs")
    return x @ w.T + b


def linear_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if dy.shape != (x.shape[0], w.shape[0]):
        raise ShapeMismatch(f"linear gradient {dy.shape}, expected "
                            f"{(x.shape[0], w.shape[0])}")
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def dropout_forward(x: np.ndarray, p: float, train: bool,
                    rng: np.random.Generator | None = None,
                    ) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: zero with probability p, scale survivors by
    1/(1-p). Identity in eval mode or at p = 0 (no random draw)."""
    if not 0.0 <= p < 1.0:
        raise InvalidProbability(f"dropout probability must be in [0, 1), "
                                 f"got {p}")
    if not train or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout with p > 0 needs an rng")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / np.asarray(
        1.0 - p, dtype=x.dtype)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise probabilities, computed with max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# whole-network forward / backward

@dataclass
class ForwardCache:
    """Intermediates a backward pass needs, one entry per layer."""

    layers: list = field(default_factory=list)
    bn_updates: dict = field(default_factory=dict)


def forward(config: NetworkConfig, params: dict, batch: np.ndarray,
            train: bool, rng: np.random.Generator | None = None,
            freeze_conv: bool = False,
            ) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on (n, 1, input_length) inputs; returns logits.

    In train mode the cache carries every intermediate needed by
    :func:`backward` plus candidate BN running-stat updates (empty when
    ``freeze_conv`` keeps the trunk in eval mode). No parameter is
    mutated here.
    """
    if batch.ndim != 3 or batch.shape[1] != 1 \
            or batch.shape[2] != config.input_length:
        raise ShapeMismatch(
            f"expected (n, 1, {config.input_length}) input, got "
            f"{batch.shape}")
    cache = ForwardCache()
    conv_train = train and not freeze_conv
    h = batch
    for b in range(len(config.conv_blocks)):
        prefix = f"conv{b}"
        y, bn_cache, new_mean, new_var = batchnorm1d_forward(
            h, params[f"{prefix}.bn.gamma"], params[f"{prefix}.bn.beta"],
            params[f"{prefix}.bn.running_mean"],
            params[f"{prefix}.bn.running_var"],
            train=conv_train, eps=config.bn_eps, momentum=config.bn_momentum)
        if conv_train:
            cache.bn_updates[f"{prefix}.bn.running_mean"] = new_mean
            cache.bn_updates[f"{prefix}.bn.running_var"] = new_var
        cache.layers.append(("bn", prefix, bn_cache))
        h_conv_in = y
        h = conv1d_forward(h_conv_in, params[f"{prefix}.weight"],
                           params[f"{prefix}.bias"])
        cache.layers.append(("conv", prefix, h_conv_in))
        cache.layers.append(("relu", prefix, h))
        h = relu_forward(h)
        pre_pool_length = h.shape[2]
        h, idx = maxpool1d_forward(h)
        cache.layers.append(("pool", prefix, (idx, pre_pool_length)))
    return _forward_head(config, params, h, train, rng, cache)


def _forward_head(config, params, h, train, rng, cache):
    n = h.shape[0]
    flat_shape = h.shape
    h = h.reshape(n, -1)
    if h.shape[1] != config.flatten_width:
        raise ShapeMismatch(f"flatten width {h.shape[1]} != configured "
                            f"{config.flatten_width}")
    cache.layers.append(("flatten", "", flat_shape))
    h, mask = dropout_forward(h, config.dropout_p, train, rng)
    cache.layers.append(("dropout", "", mask))
    last = len(config.fc_sizes) - 1
    for i in range(len(config.fc_sizes)):
        x_in = h
        h = linear_forward(x_in, params[f"fc{i}.weight"], params[f"fc{i}.bias"])
        cache.layers.append(("fc", f"fc{i}", x_in))
        if i != last:
            cache.layers.append(("relu", f"fc{i}", h))
            h = relu_forward(h)
    return h, cache


def backward(config: NetworkConfig, params: dict, cache: ForwardCache,
             dlogits: np.ndarray, fc_only: bool = False) -> dict:
    """Gradients of the loss w.r.t. every trainable parameter.

    Walks the cached layers in reverse. With ``fc_only`` (frozen trunk)
    the walk stops at the flatten step and only FC gradients are
    returned.
    """
    grads: dict[str, np.ndarray] = {}
    dy = dlogits
    for kind, name, stored in reversed(cache.layers):
        if kind == "fc":
            dy, dw, db = linear_backward(stored, params[f"{name}.weight"], dy)
            grads[f"{name}.weight"] = dw
            grads[f"{name}.bias"] = db
        elif kind == "relu":
            dy = relu_backward(dy, stored)
        elif kind == "dropout":
            dy = dropout_backward(dy, stored)
        elif kind == "flatten":
            if fc_only:
                return grads
            dy = dy.reshape(stored)
        elif kind == "pool":
            idx, input_length = stored
            dy = maxpool1d_backward(dy, idx, input_length)
        elif kind == "conv":
            dy, dw, db = conv1d_backward(stored, params[f"{name}.weight"], dy)
            grads[f"{name}.weight"] = dw
            grads[f"{name}.bias"] = db
        elif kind == "bn":
            dy, dgamma, dbeta = batchnorm1d_backward(dy, stored)
            grads[f"{name}.bn.gamma"] = dgamma
            grads[f"{name}.bn.beta"] = dbeta
        else:  # pragma: no cover - layer kinds are fixed above
            raise ShapeMismatch(f"unknown cached layer kind {kind!r}")
    return grads


def predict_logits(config: NetworkConfig, params: dict, X: np.ndarray,
                   batch_size: int = 1024) -> np.ndarray:
    """Eval-mode logits for (n, input_length) or (n, 1, input_length) data."""
    if X.ndim == 2:
        X = X[:, None, :]
    outs = []
    for start in range(0, X.shape[0], batch_size):
        logits, _ = forward(config, params, X[start:start + batch_size],
                            train=False)
        outs.append(logits)
    if not outs:
        return np.empty((0, config.fc_sizes[-1]), dtype=np.float32)
    return np.concatenate(outs)


def predict_labels(config: NetworkConfig, params: dict, X: np.ndarray,
                   batch_size: int = 1024) -> np.ndarray:
    """Hard class decisions (argmax of the logits)."""
    return predict_logits(config, params, X, batch_size).argmax(axis=1)
