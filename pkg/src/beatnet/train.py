"""Training loop, transfer learning and checkpoint files.

One run owns its parameter dict exclusively: the loop shuffles segment
order each epoch with the seeded generator (NumPy PCG64 via
``default_rng``; seeds therefore reproduce across machines), walks the
batches (final short batch included), backpropagates the weighted
cross-entropy and applies AdaDelta updates. With ``freeze_conv`` the
convolutional trunk runs in eval mode: its weights, BN parameters and
BN running statistics all stay exactly as loaded, and only the FC head
trains. That is the transfer-learning mode; the head fine-tunes from
the loaded values rather than being re-initialized.

Checkpoints: magic "HBDL", version, a JSON architecture header, then
raw little-endian float32 parameter blocks in declared order, and an
8-byte keyed-hash checksum over everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptCheckpoint,
    EmptyDataset,
    IncompatibleCheckpoint,
    NumericError,
    ShapeMismatch,
    VersionMismatch,
)
from .loss import ClassWeights, weighted_cross_entropy
from .metrics import mcc_from_labels
from .nn import (
    NetworkConfig,
    backward,
    forward,
    init_params,
    param_layout,
    predict_labels,
)
from .optim import EPS, RHO, AdaDeltaState, adadelta_step
from .segments import LabeledDataset

_CKPT_MAGIC = b"HBDL"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on besides the data itself.

    ``epochs`` may be 0, which runs no updates and returns the initial
    parameters (useful for checkpoint validation); normal training uses
    the default 10.
    """

    epochs: int = 10
    batch_size: int = 64
    weights: ClassWeights = ClassWeights()
    lr: float = 0.01
    seed: int = 0
    freeze_conv: bool = False
    network: NetworkConfig = NetworkConfig()
    rho: float = RHO
    eps: float = EPS
    reduction: str = "mean"

    def __post_init__(self):
        if self.epochs < 0:
            raise ShapeMismatch(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ShapeMismatch(f"batch_size must be >= 1, got "
                                f"{self.batch_size}")
        if self.reduction not in ("mean", "sum"):
            raise ShapeMismatch(f"unknown reduction {self.reduction!r}")


@dataclass
class TrainHistory:
    """Per-epoch summaries: mean loss (sample-weighted over batches),
    MCC of an eval pass over the training data, and wall-clock seconds."""

    mean_loss: list[float] = field(default_factory=list)
    train_mcc: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.mean_loss)

    def to_csv(self) -> str:
        lines = ["epoch,mean_loss,train_mcc,seconds"]
        for i in range(len(self)):
            lines.append(f"{i + 1},{self.mean_loss[i]:.6f},"
                         f"{self.train_mcc[i]:.6f},{self.seconds[i]:.3f}")
        return "\n".join(lines) + "\n"


def _copy_params(init: dict, config: NetworkConfig) -> dict:
    """Validate an initial parameter dict against the config and copy it."""
    layout = param_layout(config)
    missing = [name for name, _ in layout if name not in init]
    if missing:
        raise ShapeMismatch(f"initial parameters missing {missing}")
    extra = set(init) - {name for name, _ in layout}
    if extra:
        raise ShapeMismatch(f"initial parameters have unknown keys "
                            f"{sorted(extra)}")
    out = {}
    for name, shape in layout:
        arr = np.asarray(init[name], dtype=np.float32)
        if arr.shape != shape:
            raise ShapeMismatch(f"{name}: shape {arr.shape}, config wants "
                                f"{shape}")
        out[name] = arr.copy()
    return out


def train(dataset: LabeledDataset, config: TrainConfig,
          init: dict | None = None) -> tuple[dict, TrainHistory]:
    """Train (or fine-tune, when ``init`` is given) on one dataset.

    Returns the final parameters and the per-epoch history. The same
    (dataset, config, init) always produces bitwise-identical results.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    if init is None:
        params = init_params(config.network, rng)
    else:
        params = _copy_params(init, config.network)

    X = dataset.X[:, None, :]
    y = dataset.y.astype(np.int64)
    state = AdaDeltaState(rho=config.rho, eps=config.eps, lr=config.lr)
    history = TrainHistory()

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            xb = X[batch_idx]
            yb = y[batch_idx]
            logits, cache = forward(config.network, params, xb, train=True,
                                    rng=rng, freeze_conv=config.freeze_conv)
            loss, dlogits = weighted_cross_entropy(
                logits, yb, config.weights, config.reduction)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss} in epoch {epoch + 1}, batch "
                    f"starting at segment {start}")
            grads = backward(config.network, params, cache, dlogits,
                             fc_only=config.freeze_conv)
            adadelta_step(params, grads, state)
            for name, value in cache.bn_updates.items():
                params[name] = value
            loss_sum += loss * (len(batch_idx)
                                if config.reduction == "mean" else 1.0)
        preds = predict_labels(config.network, params, X)
        history.mean_loss.append(loss_sum / n)
        history.train_mcc.append(mcc_from_labels(preds, y))
        history.seconds.append(time.perf_counter() - started)
    return params, history


def transfer(checkpoint_path, dataset: LabeledDataset,
             config: TrainConfig) -> tuple[dict, TrainHistory]:
    """Fine-tune a saved model's FC head on a new dataset.

    The checkpoint's architecture must equal ``config.network``; the
    conv trunk is frozen regardless of ``config.freeze_conv``.
    """
    params, net_config = load_checkpoint(checkpoint_path)
    if net_config != config.network:
        raise IncompatibleCheckpoint(
            f"checkpoint architecture {net_config.to_dict()} differs from "
            f"configured {config.network.to_dict()}")
    if not config.freeze_conv:
        config = TrainConfig(
            epochs=config.epochs, batch_size=config.batch_size,
            weights=config.weights, lr=config.lr, seed=config.seed,
            freeze_conv=True, network=config.network, rho=config.rho,
            eps=config.eps, reduction=config.reduction)
    return train(dataset, config, init=params)


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def save_checkpoint(params: dict, config: NetworkConfig, path) -> None:
    """Write parameters and architecture to a checkpoint file."""
    layout = param_layout(config)
    header = {
        "network": config.to_dict(),
        "params": [[name, list(shape)] for name, shape in layout],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_CKPT_MAGIC,
             struct.pack("<HI", _CKPT_VERSION, len(header_bytes)),
             header_bytes]
    for name, shape in layout:
        arr = np.asarray(params[name], dtype=np.float32)
        if arr.shape != shape:
            raise ShapeMismatch(f"{name}: shape {arr.shape} does not match "
                                f"layout {shape}")
        parts.append(arr.astype("<f4").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(_checksum(payload))


def load_checkpoint(path) -> tuple[dict, NetworkConfig]:
    """Read a checkpoint back; returns (params, architecture)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    min_len = len(_CKPT_MAGIC) + struct.calcsize("<HI") + 8
    if len(data) < min_len:
        raise CorruptCheckpoint("checkpoint file too small")
    payload, stored = data[:-8], data[-8:]
    if _checksum(payload) != stored:
        raise CorruptCheckpoint("checkpoint checksum mismatch")
    if payload[:4] != _CKPT_MAGIC:
        raise CorruptCheckpoint("bad checkpoint magic")
    version, header_len = struct.unpack("<HI", payload[4:10])
    if version != _CKPT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected "
                              f"{_CKPT_VERSION}")
    if 10 + header_len > len(payload):
        raise CorruptCheckpoint("checkpoint header truncated")
    try:
        header = json.loads(payload[10:10 + header_len].decode("utf-8"))
        config = NetworkConfig.from_dict(header["network"])
        declared = [(name, tuple(shape)) for name, shape in header["params"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint header: {exc}") from exc
    if declared != param_layout(config):
        raise CorruptCheckpoint("checkpoint layout does not match its own "
                                "architecture header")
    params = {}
    pos = 10 + header_len
    for name, shape in declared:
        count = int(np.prod(shape))
        nbytes = 4 * count
        if pos + nbytes > len(payload):
            raise CorruptCheckpoint(f"checkpoint data truncated at {name}")
        params[name] = np.frombuffer(
            payload[pos:pos + nbytes], dtype="<f4").reshape(shape).copy()
        pos += nbytes
    if pos != len(payload):
        raise CorruptCheckpoint(f"{len(payload) - pos} trailing bytes in "
                                f"checkpoint")
    return params, config
