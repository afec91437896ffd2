"""Small dense ReLU/softmax classifier whose matmuls run under any GemmMode.

Only the matrix products change with the mode.  Bias adds, activations and
softmax stay in fp32, and the loss is evaluated in fp64.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import matrix as spmx
from .asgd import Objective
from .emugemm import GemmMode, matmul


class NonFiniteActivation(FloatingPointError):
    def __init__(self, layer: int):
        super().__init__(f"non-finite activation in layer {layer}")
        self.layer = layer


@dataclass
class Batch:
    inputs: np.ndarray  # (batch, input_dim) fp32
    labels: np.ndarray  # (batch,) int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(f"inputs {self.inputs.shape} and labels {self.labels.shape} disagree")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> Batch:
        return Batch(self.inputs[idx], self.labels[idx])


@dataclass
class DenseNet:
    sizes: list[int]
    weights: list[np.ndarray]  # layer l: (sizes[l], sizes[l+1])
    biases: list[np.ndarray]
    gemm_mode: GemmMode = GemmMode.EXACT32

    def __post_init__(self):
        self.gemm_mode = GemmMode.parse(self.gemm_mode)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[l], self.sizes[l + 1]) or b.shape != (self.sizes[l + 1],):
                raise ValueError(f"layer {l}: weight {w.shape} / bias {b.shape} do not match sizes {self.sizes}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l} has non-finite parameters")

    @classmethod
    def init(cls, sizes, seed: int = 0, gemm_mode: GemmMode | str = GemmMode.EXACT32) -> DenseNet:
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)).astype(np.float32))
            biases.append(np.zeros(fan_out, dtype=np.float32))
        return cls(list(sizes), weights, biases, gemm_mode)

    @classmethod
    def zeros(cls, sizes, gemm_mode: GemmMode | str = GemmMode.EXACT32) -> DenseNet:
        return cls(
            list(sizes),
            [np.zeros((a, b), dtype=np.float32) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b, dtype=np.float32) for b in sizes[1:]],
            gemm_mode,
        )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def with_mode(self, mode: GemmMode | str) -> DenseNet:
        return replace(self, gemm_mode=GemmMode.parse(mode))

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb]).astype(np.float32)

    def with_params(self, flat) -> DenseNet:
        flat = np.asarray(flat, dtype=np.float32)
        if flat.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {flat.shape}")
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(flat[pos:pos + b.size].copy())
            pos += b.size
        return replace(self, weights=weights, biases=biases)


@dataclass
class Activations:
    pre: list[np.ndarray]  # affine outputs per layer; pre[-1] are the logits
    post: list[np.ndarray]  # post[0] is the input, post[-1] the softmax output

    @property
    def logits(self) -> np.ndarray:
        return self.pre[-1]

    @property
    def probs(self) -> np.ndarray:
        return self.post[-1]


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float32)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return (e / e.sum(axis=1, keepdims=True)).astype(np.float32)


def forward(net: DenseNet, x) -> Activations:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2 or x.shape[1] != net.sizes[0]:
        raise ValueError(f"input shape {x.shape} does not match input dim {net.sizes[0]}")
    pre, post = [], [x]
    a = x
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = matmul(a, w, net.gemm_mode) + b
        if not np.isfinite(z).all():
            raise NonFiniteActivation(l)
        pre.append(z)
        a = softmax(z) if l == net.n_layers - 1 else np.maximum(z, np.float32(0))
        post.append(a)
    return Activations(pre, post)


def _check_batch(net: DenseNet, batch: Batch) -> None:
    if len(batch) == 0:
        raise ValueError("empty batch")
    k = net.sizes[-1]
    if batch.labels.min() < 0 or batch.labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")


def loss(net: DenseNet, batch: Batch) -> float:
    """Mean softmax cross-entropy, in fp64 from the fp32 logits."""
    _check_batch(net, batch)
    z = forward(net, batch.inputs).logits.astype(np.float64)
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(logsumexp - z[np.arange(len(batch)), batch.labels]))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])


def backward(net: DenseNet, batch: Batch) -> Gradients:
    _check_batch(net, batch)
    acts = forward(net, batch.inputs)
    n = len(batch)
    delta = acts.probs.copy()
    delta[np.arange(n), batch.labels] -= np.float32(1)
    delta /= np.float32(n)
    gw: list[np.ndarray] = [None] * net.n_layers
    gb: list[np.ndarray] = [None] * net.n_layers
    for l in range(net.n_layers - 1, -1, -1):
        gw[l] = matmul(acts.post[l].T, delta, net.gemm_mode)
        gb[l] = delta.sum(axis=0, dtype=np.float32)
        if l > 0:
            delta = matmul(delta, net.weights[l].T, net.gemm_mode) * (acts.pre[l - 1] > 0)
    return Gradients(gw, gb)


def predict(net: DenseNet, x) -> np.ndarray:
    return forward(net, x).logits.argmax(axis=1)


def accuracy(net: DenseNet, batch: Batch) -> float:
    return float(np.mean(predict(net, batch.inputs) == batch.labels))


def net_objective(net: DenseNet, train: Batch) -> Objective:
    """Wrap a network as a flat-parameter objective for the SGD engines."""

    def gradient(w, idx):
        return backward(net.with_params(w), train.subset(idx)).flatten().astype(np.float64)

    def full_loss(w):
        return loss(net.with_params(w), train)

    return Objective(len(train), net.param_count, gradient, full_loss, net.flatten())


def make_blobs(n: int, classes: int, dim: int, separation: float, seed: int = 0) -> tuple[Batch, Batch]:
    """Gaussian clusters (unit variance) with adjacent class means ``separation`` apart.

    Means sit on a circle in the first two coordinates (on a line when
    ``dim == 1``).  Returns ``n`` training and ``n`` test samples with
    balanced labels.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if dim < 1 or n < 1:
        raise ValueError("n and dim must be positive")
    means = np.zeros((classes, dim))
    if dim == 1:
        means[:, 0] = separation * (np.arange(classes) - (classes - 1) / 2)
    else:
        radius = separation / (2 * math.sin(math.pi / classes))
        angle = 2 * math.pi * np.arange(classes) / classes
        means[:, 0] = radius * np.cos(angle)
        means[:, 1] = radius * np.sin(angle)
    rng = np.random.default_rng(seed)

    def draw() -> Batch:
        labels = rng.permutation(np.arange(n) % classes)
        x = means[labels] + rng.standard_normal((n, dim))
        return Batch(x.astype(np.float32), labels)

    return draw(), draw()


_COUNT = struct.Struct("<Q")


def dumps_checkpoint(net: DenseNet) -> bytes:
    """Layer-size header (u64 count, u64 per size), then per layer the SPMX weight matrix and 1 x out bias."""
    buf = io.BytesIO()
    buf.write(_COUNT.pack(len(net.sizes)))
    for s in net.sizes:
        buf.write(_COUNT.pack(s))
    for w, b in zip(net.weights, net.biases):
        spmx.write_spmx(buf, w.astype(np.float32))
        spmx.write_spmx(buf, b.reshape(1, -1).astype(np.float32))
    return buf.getvalue()


def loads_checkpoint(data: bytes, gemm_mode: GemmMode | str = GemmMode.EXACT32) -> DenseNet:
    buf = io.BytesIO(data)

    def u64() -> int:
        raw = buf.read(_COUNT.size)
        if len(raw) != _COUNT.size:
            raise spmx.SpmxError("truncated checkpoint header")
        return _COUNT.unpack(raw)[0]

    count = u64()
    if count < 2 or count > 1 << 16:
        raise spmx.SpmxError(f"implausible layer count {count}")
    sizes = [u64() for _ in range(count)]
    weights, biases = [], []
    for _ in range(count - 1):
        weights.append(spmx.read_spmx(buf).astype(np.float32))
        biases.append(spmx.read_spmx(buf).astype(np.float32).reshape(-1))
    if buf.read(1):
        raise spmx.SpmxError("trailing bytes after checkpoint")
    return DenseNet(sizes, weights, biases, gemm_mode)


def save_checkpoint(path, net: DenseNet) -> None:
    spmx.atomic_write_bytes(path, dumps_checkpoint(net))


def load_checkpoint(path, gemm_mode: GemmMode | str = GemmMode.EXACT32) -> DenseNet:
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read(), gemm_mode)
