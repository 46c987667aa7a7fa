"""Minimal fully-connected network with explicit backpropagation.

Small enough to audit end to end: ReLU hidden layers, identity output,
mean-squared-error-style training driven by caller-supplied output gradients,
plain SGD updates.  Weights are float32 by default (that is also the storage
format); a dtype parameter exists so numerical checks can run in float64.

Serialized form (little-endian):
    magic b"RLSQ", version u8, layer-size count u8, sizes u32 each,
    then per weight layer: weight matrix row-major float32, bias vector float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MLP_MAGIC = b"RLSQ"
MLP_VERSION = 1


class MlpError(ValueError):
    pass


@dataclass
class MlpGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


class Mlp:
    """Feed-forward net; weights[l] has shape (fan_out, fan_in)."""

    def __init__(self, layer_sizes, weights, biases, dtype=np.float32):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.weights = weights
        self.biases = biases
        self.dtype = dtype

    @property
    def depth(self) -> int:
        """Number of weight layers."""
        return len(self.layer_sizes) - 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = np.asarray(x, dtype=self.dtype)
        last = self.depth - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = w @ a + b
            if l != last:
                np.maximum(a, 0.0, out=a)
        return a

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        a = np.asarray(xs, dtype=self.dtype)
        last = self.depth - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w.T + b
            if l != last:
                np.maximum(a, 0.0, out=a)
        return a


def mlp_new(layer_sizes, seed, dtype=np.float32) -> Mlp:
    """Glorot-uniform weights U(+-sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise MlpError("at least input and output layers required")
    if any(s < 1 for s in sizes):
        raise MlpError("layer sizes must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return Mlp(sizes, weights, biases, dtype)


def backward(mlp: Mlp, x: np.ndarray, output_gradient: np.ndarray) -> MlpGradients:
    """Gradients of the scalar loss whose dL/dy is output_gradient."""
    x = np.asarray(x, dtype=mlp.dtype)
    activations = [x]
    pre = []
    a = x
    last = mlp.depth - 1
    for l, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = w @ a + b
        pre.append(z)
        a = np.maximum(z, 0.0) if l != last else z
        activations.append(a)
    delta = np.asarray(output_gradient, dtype=mlp.dtype)
    grad_w = [None] * mlp.depth
    grad_b = [None] * mlp.depth
    for l in range(last, -1, -1):
        grad_w[l] = np.outer(delta, activations[l])
        grad_b[l] = delta.copy()
        if l > 0:
            delta = (mlp.weights[l].T @ delta) * (pre[l - 1] > 0)
    return MlpGradients(grad_w, grad_b)


def backward_batch(mlp: Mlp, xs: np.ndarray, output_gradients: np.ndarray) -> MlpGradients:
    """Summed gradients over a batch; rows of xs are inputs."""
    xs = np.asarray(xs, dtype=mlp.dtype)
    activations = [xs]
    pre = []
    a = xs
    last = mlp.depth - 1
    for l, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if l != last else z
        activations.append(a)
    delta = np.asarray(output_gradients, dtype=mlp.dtype)
    grad_w = [None] * mlp.depth
    grad_b = [None] * mlp.depth
    for l in range(last, -1, -1):
        grad_w[l] = delta.T @ activations[l]
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ mlp.weights[l]) * (pre[l - 1] > 0)
    return MlpGradients(grad_w, grad_b)


def sgd_step(mlp: Mlp, grads: MlpGradients, learning_rate: float):
    for w, gw in zip(mlp.weights, grads.weights):
        w -= mlp.dtype(learning_rate) * gw
    for b, gb in zip(mlp.biases, grads.biases):
        b -= mlp.dtype(learning_rate) * gb


def clone(mlp: Mlp) -> Mlp:
    return Mlp(
        mlp.layer_sizes,
        [w.copy() for w in mlp.weights],
        [b.copy() for b in mlp.biases],
        mlp.dtype,
    )


def copy_parameters(src: Mlp, dst: Mlp):
    if src.layer_sizes != dst.layer_sizes:
        raise MlpError("parameter copy requires identical layer sizes")
    for d, s in zip(dst.weights, src.weights):
        d[...] = s
    for d, s in zip(dst.biases, src.biases):
        d[...] = s


def param_count(mlp: Mlp) -> int:
    return sum(w.size + b.size for w, b in zip(mlp.weights, mlp.biases))


def complexity(mlp: Mlp) -> int:
    """Depth times fan-in times fan-out; the coarse inference-cost index
    reported alongside ablations (not the multiply-accumulate count)."""
    return mlp.depth * mlp.layer_sizes[0] * mlp.layer_sizes[-1]


def mlp_to_bytes(mlp: Mlp) -> bytes:
    if len(mlp.layer_sizes) > 255:
        raise MlpError("too many layers to serialize")
    out = bytearray()
    out += MLP_MAGIC
    out += struct.pack("<BB", MLP_VERSION, len(mlp.layer_sizes))
    out += struct.pack(f"<{len(mlp.layer_sizes)}I", *mlp.layer_sizes)
    for w, b in zip(mlp.weights, mlp.biases):
        out += np.ascontiguousarray(w, dtype="<f4").tobytes()
        out += np.ascontiguousarray(b, dtype="<f4").tobytes()
    return bytes(out)


def mlp_from_bytes(data: bytes) -> Mlp:
    if len(data) < 6 or data[:4] != MLP_MAGIC:
        raise MlpError("bad magic; not a serialized network")
    version, n_sizes = struct.unpack_from("<BB", data, 4)
    if version != MLP_VERSION:
        raise MlpError(f"unsupported version {version}")
    if n_sizes < 2:
        raise MlpError("at least input and output layers required")
    off = 6
    need = n_sizes * 4
    if len(data) < off + need:
        raise MlpError("truncated layer size table")
    sizes = struct.unpack_from(f"<{n_sizes}I", data, off)
    off += need
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        wn = fan_out * fan_in * 4
        bn = fan_out * 4
        if len(data) < off + wn + bn:
            raise MlpError("truncated parameter data")
        w = np.frombuffer(data, dtype="<f4", count=fan_out * fan_in, offset=off)
        off += wn
        b = np.frombuffer(data, dtype="<f4", count=fan_out, offset=off)
        off += bn
        weights.append(w.reshape(fan_out, fan_in).copy())
        biases.append(b.copy())
    if off != len(data):
        raise MlpError(f"{len(data) - off} trailing bytes after parameters")
    return Mlp(sizes, weights, biases, np.float32)
