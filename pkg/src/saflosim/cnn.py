"""From-scratch 1D CNN for burst time-series classification.

Architecture (both the attack-detector classifiers and the adversary's models
share it, differing only in widths and head): per-sample min-max input
normalization to [0, 1]; two blocks of [same-padded conv -> batch norm ->
LeakyReLU(0.01) -> dropout(0.4) -> average-pool(4)]; flatten; a stack of dense
layers (each LeakyReLU + dropout); a final dense head with sigmoid (binary
score) or softmax (multi-class).  Everything is float64 numpy driven by the
kernels backend; training is plain mini-batch SGD on cross-entropy, fully
deterministic given the caller's generator.

Model files are a flat binary container:

    bytes 0..7    magic ``SFLOCNN\\x01``
    u32 LE        header length
    header        UTF-8 JSON: {"topology": {...}, "tensors": [[name, shape], ...]}
    payload       per tensor, in header order: float32 little-endian C-order data

so trained detectors can be reused across runs and platforms.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import _kernels as kernels

MAGIC = b"SFLOCNN\x01"

SIGMOID = "sigmoid"
SOFTMAX = "softmax"


@dataclass(frozen=True)
class CnnTopology:
    input_len: int = 1000
    in_channels: int = 1
    conv_filters: int = 150
    kernel_size: int = 40
    n_conv_blocks: int = 2
    pool_size: int = 4
    dense_widths: tuple[int, ...] = (512, 256, 128)
    head: str = SIGMOID
    head_size: int = 1
    leaky_slope: float = 0.01
    dropout_rate: float = 0.4
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        if self.head not in (SIGMOID, SOFTMAX):
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == SIGMOID and self.head_size != 1:
            raise ValueError("sigmoid head has size 1")

    def conv_out_len(self) -> int:
        length = self.input_len
        for _ in range(self.n_conv_blocks):
            length //= self.pool_size
        return length

    def flat_dim(self) -> int:
        return self.conv_out_len() * self.conv_filters

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Expected per-layer output shapes (without the batch axis)."""

        shapes: list[tuple[str, tuple[int, ...]]] = [
            ("input", (self.input_len, self.in_channels))
        ]
        length = self.input_len
        for i in range(self.n_conv_blocks):
            shapes.append((f"conv{i}", (length, self.conv_filters)))
            length //= self.pool_size
            shapes.append((f"pool{i}", (length, self.conv_filters)))
        shapes.append(("flatten", (length * self.conv_filters,)))
        for j, width in enumerate(self.dense_widths):
            shapes.append((f"dense{j}", (width,)))
        shapes.append(("head", (self.head_size,)))
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dense_widths"] = list(self.dense_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CnnTopology":
        d = dict(d)
        d["dense_widths"] = tuple(d["dense_widths"])
        return cls(**d)


def full_topology(head: str = SIGMOID, head_size: int = 1) -> CnnTopology:
    return CnnTopology(head=head, head_size=head_size)


def desk_topology(head: str = SIGMOID, head_size: int = 1) -> CnnTopology:
    """Reduced widths for desk-scale runs; same layer chain as the full model."""

    return CnnTopology(conv_filters=16, kernel_size=8, dense_widths=(64, 32),
                       head=head, head_size=head_size)


def _pad_lr(kernel_size: int) -> tuple[int, int]:
    left = (kernel_size - 1) // 2
    return left, kernel_size - 1 - left


class CnnModel:
    """Topology plus parameter tensors (running batch-norm stats included)."""

    def __init__(self, topology: CnnTopology, params: dict[str, np.ndarray]):
        self.topology = topology
        self.params = params

    def tensor_names(self) -> list[str]:
        return list(self.params)

    def copy(self) -> "CnnModel":
        return CnnModel(self.topology, {k: v.copy() for k, v in self.params.items()})

    def trainable_names(self) -> list[str]:
        return [k for k in self.params if not (k.endswith("_mean") or k.endswith("_var"))]

    def check_finite(self) -> None:
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise FloatingPointError(f"non-finite values in tensor {name}")

    def save(self, path: str) -> None:
        save_model(self, path)


def init_model(topology: CnnTopology, rng: np.random.Generator) -> CnnModel:
    """He-normal weights, zero biases, unit batch-norm scale."""

    t = topology
    params: dict[str, np.ndarray] = {}
    c_in = t.in_channels
    for i in range(t.n_conv_blocks):
        fan_in = t.kernel_size * c_in
        params[f"conv{i}_w"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), size=(t.kernel_size, c_in, t.conv_filters)
        )
        params[f"conv{i}_b"] = np.zeros(t.conv_filters)
        params[f"bn{i}_gamma"] = np.ones(t.conv_filters)
        params[f"bn{i}_beta"] = np.zeros(t.conv_filters)
        params[f"bn{i}_mean"] = np.zeros(t.conv_filters)
        params[f"bn{i}_var"] = np.ones(t.conv_filters)
        c_in = t.conv_filters
    dim = t.flat_dim()
    for j, width in enumerate(t.dense_widths):
        params[f"dense{j}_w"] = rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, width))
        params[f"dense{j}_b"] = np.zeros(width)
        dim = width
    params["head_w"] = rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, t.head_size))
    params["head_b"] = np.zeros(t.head_size)
    return CnnModel(topology, params)


def normalize_input(x: np.ndarray) -> np.ndarray:
    """Per-trace min-max scaling to [0, 1]; all-equal traces map to all zeros."""

    mn = x.min(axis=(1, 2), keepdims=True)
    mx = x.max(axis=(1, 2), keepdims=True)
    span = mx - mn
    scale = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
    return (x - mn) * scale


def _as_batch(x: np.ndarray, topology: CnnTopology) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :, None]
    elif x.ndim == 2:
        x = x[:, :, None]
    if x.shape[1] != topology.input_len or x.shape[2] != topology.in_channels:
        raise ValueError(
            f"input shape {x.shape[1:]} does not match topology "
            f"({topology.input_len}, {topology.in_channels})"
        )
    return x


def _forward(
    model: CnnModel,
    x: np.ndarray,
    training: bool,
    rng: Optional[np.random.Generator],
) -> tuple[np.ndarray, list]:
    """Runs the net; returns (logits, layer caches for backward)."""

    t = model.topology
    p = model.params
    cache: list = []
    h = normalize_input(x)
    left, right = _pad_lr(t.kernel_size)
    for i in range(t.n_conv_blocks):
        n, length, c = h.shape
        xp = np.zeros((n, length + t.kernel_size - 1, c))
        xp[:, left:left + length, :] = h
        z = kernels.conv1d_forward(xp, p[f"conv{i}_w"]) + p[f"conv{i}_b"]
        cache.append(("conv", i, xp))
        h, bn_cache = _bn_forward(model, i, z, training)
        cache.append(("bn", i, bn_cache))
        h, leaky_cache = _leaky_forward(h, t.leaky_slope)
        cache.append(("leaky", leaky_cache))
        h, drop_cache = _dropout_forward(h, t.dropout_rate, training, rng)
        cache.append(("drop", drop_cache))
        h, pool_cache = _avgpool_forward(h, t.pool_size)
        cache.append(("pool", pool_cache))
    n = h.shape[0]
    cache.append(("flatten", h.shape))
    h = h.reshape(n, -1)
    for j in range(len(t.dense_widths)):
        cache.append(("dense", j, h))
        h = h @ p[f"dense{j}_w"] + p[f"dense{j}_b"]
        h, leaky_cache = _leaky_forward(h, t.leaky_slope)
        cache.append(("leaky", leaky_cache))
        h, drop_cache = _dropout_forward(h, t.dropout_rate, training, rng)
        cache.append(("drop", drop_cache))
    cache.append(("head", h))
    logits = h @ p["head_w"] + p["head_b"]
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite activation in forward pass")
    return logits, cache


def _bn_forward(model: CnnModel, i: int, z: np.ndarray, training: bool):
    t = model.topology
    p = model.params
    gamma = p[f"bn{i}_gamma"]
    beta = p[f"bn{i}_beta"]
    if training:
        mu = z.mean(axis=(0, 1))
        var = z.var(axis=(0, 1))
        m = t.bn_momentum
        p[f"bn{i}_mean"] = m * p[f"bn{i}_mean"] + (1 - m) * mu
        p[f"bn{i}_var"] = m * p[f"bn{i}_var"] + (1 - m) * var
    else:
        mu = p[f"bn{i}_mean"]
        var = p[f"bn{i}_var"]
    inv = 1.0 / np.sqrt(var + t.bn_eps)
    xhat = (z - mu) * inv
    out = gamma * xhat + beta
    return out, (xhat, inv, gamma, training)


def _bn_backward(dy: np.ndarray, bn_cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, gamma, training = bn_cache
    dgamma = (dy * xhat).sum(axis=(0, 1))
    dbeta = dy.sum(axis=(0, 1))
    if not training:
        return dy * gamma * inv, dgamma, dbeta
    m = dy.shape[0] * dy.shape[1]
    s1 = dbeta
    s2 = dgamma
    dx = (gamma * inv / m) * (m * dy - s1 - xhat * s2)
    return dx, dgamma, dbeta


def _leaky_forward(z: np.ndarray, slope: float):
    neg = z < 0
    out = np.where(neg, z * slope, z)
    return out, (neg, slope)


def _leaky_backward(dy: np.ndarray, cache) -> np.ndarray:
    neg, slope = cache
    return np.where(neg, dy * slope, dy)


def _dropout_forward(z: np.ndarray, rate: float, training: bool,
                     rng: Optional[np.random.Generator]):
    if not training or rate <= 0:
        return z, None
    if rng is None:
        raise ValueError("training with dropout requires an rng")
    mask = (rng.random(z.shape) >= rate) / (1.0 - rate)
    return z * mask, mask


def _dropout_backward(dy: np.ndarray, mask) -> np.ndarray:
    return dy if mask is None else dy * mask


def _avgpool_forward(z: np.ndarray, pool: int):
    n, length, c = z.shape
    trunc = length - length % pool
    out = z[:, :trunc, :].reshape(n, trunc // pool, pool, c).mean(axis=2)
    return out, (length, pool)


def _avgpool_backward(dy: np.ndarray, cache) -> np.ndarray:
    length, pool = cache
    n, lo, c = dy.shape
    dx = np.zeros((n, length, c))
    dx[:, :lo * pool, :] = np.repeat(dy / pool, pool, axis=1)
    return dx


def _backward(model: CnnModel, cache: list, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    p = model.params
    grads: dict[str, np.ndarray] = {}
    h_head = cache[-1][1]
    grads["head_w"] = h_head.T @ dlogits
    grads["head_b"] = dlogits.sum(axis=0)
    dy = dlogits @ p["head_w"].T
    for kind, *data in reversed(cache[:-1]):
        if kind == "drop":
            dy = _dropout_backward(dy, data[0])
        elif kind == "leaky":
            dy = _leaky_backward(dy, data[0])
        elif kind == "dense":
            j, h_in = data
            grads[f"dense{j}_w"] = h_in.T @ dy
            grads[f"dense{j}_b"] = dy.sum(axis=0)
            dy = dy @ p[f"dense{j}_w"].T
        elif kind == "flatten":
            dy = dy.reshape(data[0])
        elif kind == "pool":
            dy = _avgpool_backward(dy, data[0])
        elif kind == "bn":
            i, bn_cache = data
            dy, dgamma, dbeta = _bn_backward(dy, bn_cache)
            grads[f"bn{i}_gamma"] = dgamma
            grads[f"bn{i}_beta"] = dbeta
        elif kind == "conv":
            i, xp = data
            grads[f"conv{i}_w"] = kernels.conv1d_backward_weights(xp, dy)
            grads[f"conv{i}_b"] = dy.sum(axis=(0, 1))
            left, _ = _pad_lr(model.topology.kernel_size)
            length = xp.shape[1] - model.topology.kernel_size + 1
            dxp = kernels.conv1d_backward_input(dy, p[f"conv{i}_w"], xp.shape[1])
            dy = dxp[:, left:left + length, :]
    return grads


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    model: CnnModel,
    x: np.ndarray,
    y: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Training-mode cross-entropy loss and analytic gradients for one batch."""

    t = model.topology
    x = _as_batch(x, t)
    n = x.shape[0]
    logits, cache = _forward(model, x, True, rng)
    if t.head == SIGMOID:
        z = logits[:, 0]
        yf = np.asarray(y, dtype=np.float64)
        loss = float(np.mean(np.maximum(z, 0) - z * yf + np.log1p(np.exp(-np.abs(z)))))
        dlogits = ((_sigmoid(z) - yf) / n)[:, None]
    else:
        yi = np.asarray(y, dtype=np.int64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        loss = float(np.mean(logsum - logits[np.arange(n), yi]))
        probs = _softmax(logits)
        probs[np.arange(n), yi] -= 1.0
        dlogits = probs / n
    return loss, _backward(model, cache, dlogits)


def predict(model: CnnModel, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Inference scores: (N,) sigmoid probabilities or (N, V) softmax rows."""

    t = model.topology
    x = _as_batch(x, t)
    outs = []
    for start in range(0, x.shape[0], batch_size):
        logits, _ = _forward(model, x[start:start + batch_size], False, None)
        if t.head == SIGMOID:
            outs.append(_sigmoid(logits[:, 0]))
        else:
            outs.append(_softmax(logits))
    return np.concatenate(outs) if outs else np.zeros((0,))


def cnn_forward(model: CnnModel, trace: np.ndarray) -> float:
    """Deterministic single-trace score in [0, 1] (sigmoid head)."""

    return float(predict(model, np.asarray(trace, dtype=np.float64)[None, :])[0])


@dataclass
class TrainConfig:
    epochs: int = 15
    learning_rate: float = 0.001
    batch_size: int = 32
    optimizer: str = "adam"  # adam | momentum | sgd
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("adam", "momentum", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def cnn_train(
    model_or_topology,
    x: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    hyper: TrainConfig = TrainConfig(),
) -> CnnModel:
    """Mini-batch gradient descent on cross-entropy; deterministic given the rng.

    Accepts an initialized model or a topology (then weights are drawn from
    the same rng).  The dataset must contain at least two classes.  The
    default optimizer is Adam at the framework-default settings the stated
    lr belongs to; plain SGD and classical momentum are selectable.
    """

    if isinstance(model_or_topology, CnnTopology):
        model = init_model(model_or_topology, rng)
    else:
        model = model_or_topology
    x = _as_batch(np.asarray(x, dtype=np.float64), model.topology)
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain at least two classes")
    n = x.shape[0]
    lr = hyper.learning_rate
    trainable = model.trainable_names()
    velocity = {k: np.zeros_like(model.params[k]) for k in trainable}
    second = {k: np.zeros_like(model.params[k]) for k in trainable}
    step = 0
    for _epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            _loss, grads = loss_and_grads(model, x[idx], y[idx], rng)
            step += 1
            for name in trainable:
                g = grads[name]
                if hyper.optimizer == "adam":
                    b1, b2 = hyper.adam_beta1, hyper.adam_beta2
                    velocity[name] = b1 * velocity[name] + (1 - b1) * g
                    second[name] = b2 * second[name] + (1 - b2) * g * g
                    m_hat = velocity[name] / (1 - b1 ** step)
                    v_hat = second[name] / (1 - b2 ** step)
                    model.params[name] -= lr * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
                elif hyper.optimizer == "momentum":
                    velocity[name] = hyper.momentum * velocity[name] + g
                    model.params[name] -= lr * velocity[name]
                else:
                    model.params[name] -= lr * g
    model.check_finite()
    return model


def accuracy(model: CnnModel, x: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
    scores = predict(model, x)
    if model.topology.head == SIGMOID:
        pred = (scores > threshold).astype(int)
    else:
        pred = scores.argmax(axis=1)
    return float(np.mean(pred == np.asarray(y)))


def save_model(model: CnnModel, path: str) -> None:
    names = model.tensor_names()
    header = {
        "topology": model.topology.to_dict(),
        "tensors": [[name, list(model.params[name].shape)] for name in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())


def load_model(path: str) -> CnnModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        topology = CnnTopology.from_dict(header["topology"])
        params = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * count)
            arr = np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(shape)
            params[name] = arr
    model = CnnModel(topology, params)
    model.check_finite()
    return model
