"""Minimal CNN engine with hand-written forward/backward pairs.

Single-sample semantics: activations are [C,H,W] or [D] float32 arrays
with no batch axis; training loops accumulate gradients across samples.
There is no autodiff graph — each layer kind implements its own exact
reverse-mode rule, which keeps the engine small and auditable.

All parameters and activations are 32-bit floats; desk-scale networks
make 32-bit accumulation safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

F32 = np.float32
NORM_EPS = 1e-12


class NeuralError(Exception):
    pass


class ShapeMismatch(NeuralError):
    pass


class NonFiniteValue(NeuralError):
    pass


class BadMagic(NeuralError):
    pass


class ShapeTableMismatch(NeuralError):
    pass


class TruncatedPayload(NeuralError):
    pass


@dataclass(frozen=True)
class Conv2d:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class MaxPool2d:
    window: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_features: int


@dataclass(frozen=True)
class L2Normalize:
    pass


LayerSpec = Union[Conv2d, Relu, MaxPool2d, Flatten, Dense, L2Normalize]

_KIND_TAGS = {Conv2d: 1, Relu: 2, MaxPool2d: 3, Flatten: 4, Dense: 5, L2Normalize: 6}


@dataclass(frozen=True)
class Network:
    spec: tuple[LayerSpec, ...]
    params: tuple[dict[str, np.ndarray] | None, ...]
    rng_seed: int


def _conv_out(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def layer_output_shape(layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    if isinstance(layer, Conv2d):
        if len(shape) != 3:
            raise ShapeMismatch(f"conv2d needs [C,H,W], got {shape}")
        c, h, w = shape
        oh = _conv_out(h, layer.kernel, layer.stride, layer.padding)
        ow = _conv_out(w, layer.kernel, layer.stride, layer.padding)
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"conv2d output collapses on input {shape}")
        return (layer.out_channels, oh, ow)
    if isinstance(layer, MaxPool2d):
        if len(shape) != 3:
            raise ShapeMismatch(f"maxpool2d needs [C,H,W], got {shape}")
        c, h, w = shape
        oh = _conv_out(h, layer.window, layer.stride, 0)
        ow = _conv_out(w, layer.window, layer.stride, 0)
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"maxpool2d output collapses on input {shape}")
        return (c, oh, ow)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise ShapeMismatch(f"dense needs a flat input, got {shape}")
        return (layer.out_features,)
    if isinstance(layer, (Relu, L2Normalize)):
        return shape
    raise ShapeMismatch(f"unknown layer {layer!r}")


def output_shape(spec: tuple[LayerSpec, ...], input_shape: tuple[int, ...]) -> tuple[int, ...]:
    shape = tuple(input_shape)
    for layer in spec:
        shape = layer_output_shape(layer, shape)
    return shape


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(F32)


def init_network(
    spec, input_shape, seed: int
) -> Network:
    """Glorot-uniform weights from a seeded generator, zero biases.

    The same (spec, input_shape, seed) triple always yields bit-identical
    parameters.
    """
    spec = tuple(spec)
    input_shape = tuple(int(d) for d in input_shape)
    output_shape(spec, input_shape)  # raises ShapeMismatch early
    rng = np.random.default_rng(seed)
    params: list[dict[str, np.ndarray] | None] = []
    shape = input_shape
    for layer in spec:
        if isinstance(layer, Conv2d):
            in_c = shape[0]
            k = layer.kernel
            fan_in = in_c * k * k
            fan_out = layer.out_channels * k * k
            params.append(
                {
                    "w": _glorot(rng, (layer.out_channels, in_c, k, k), fan_in, fan_out),
                    "b": np.zeros(layer.out_channels, dtype=F32),
                }
            )
        elif isinstance(layer, Dense):
            fan_in = shape[0]
            fan_out = layer.out_features
            params.append(
                {
                    "w": _glorot(rng, (layer.out_features, fan_in), fan_in, fan_out),
                    "b": np.zeros(layer.out_features, dtype=F32),
                }
            )
        else:
            params.append(None)
        shape = layer_output_shape(layer, shape)
    return Network(spec=spec, params=tuple(params), rng_seed=seed)


# --- per-layer forward/backward ----------------------------------------------


def _im2col(x: np.ndarray, k: int, s: int, p: int) -> tuple[np.ndarray, tuple[int, int]]:
    c, h, w = x.shape
    if p:
        xp = np.zeros((c, h + 2 * p, w + 2 * p), dtype=x.dtype)
        xp[:, p : p + h, p : p + w] = x
    else:
        xp = x
    oh = _conv_out(h, k, s, p)
    ow = _conv_out(w, k, s, p)
    cols = np.empty((c, k, k, oh, ow), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, ki, kj] = xp[:, ki : ki + oh * s : s, kj : kj + ow * s : s]
    return cols.reshape(c * k * k, oh * ow), (oh, ow)


def _col2im(dcols: np.ndarray, in_shape: tuple[int, int, int], k: int, s: int, p: int) -> np.ndarray:
    c, h, w = in_shape
    oh = _conv_out(h, k, s, p)
    ow = _conv_out(w, k, s, p)
    dxp = np.zeros((c, h + 2 * p, w + 2 * p), dtype=F32)
    d = dcols.reshape(c, k, k, oh, ow)
    for ki in range(k):
        for kj in range(k):
            dxp[:, ki : ki + oh * s : s, kj : kj + ow * s : s] += d[:, ki, kj]
    return dxp[:, p : p + h, p : p + w] if p else dxp


def _conv_forward(layer: Conv2d, p: dict, x: np.ndarray):
    cols, (oh, ow) = _im2col(x, layer.kernel, layer.stride, layer.padding)
    w2d = p["w"].reshape(layer.out_channels, -1)
    out = (w2d @ cols + p["b"][:, None]).reshape(layer.out_channels, oh, ow)
    return out, (x.shape, cols)


def _conv_backward(layer: Conv2d, p: dict, cache, dout: np.ndarray):
    in_shape, cols = cache
    o = layer.out_channels
    d2d = dout.reshape(o, -1)
    dw = (d2d @ cols.T).reshape(p["w"].shape)
    db = d2d.sum(axis=1)
    dcols = p["w"].reshape(o, -1).T @ d2d
    dx = _col2im(dcols, in_shape, layer.kernel, layer.stride, layer.padding)
    return {"w": dw, "b": db}, dx


def _pool_forward(layer: MaxPool2d, x: np.ndarray):
    c, h, w = x.shape
    k, s = layer.window, layer.stride
    oh = _conv_out(h, k, s, 0)
    ow = _conv_out(w, k, s, 0)
    stacked = np.empty((c, k * k, oh, ow), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            stacked[:, ki * k + kj] = x[:, ki : ki + oh * s : s, kj : kj + ow * s : s]
    # argmax over the window axis takes the first (row-major) max on ties
    arg = stacked.argmax(axis=1)
    out = np.take_along_axis(stacked, arg[:, None], axis=1)[:, 0]
    return out, (x.shape, arg)


def _pool_backward(layer: MaxPool2d, cache, dout: np.ndarray):
    in_shape, arg = cache
    c, h, w = in_shape
    k, s = layer.window, layer.stride
    _, oh, ow = dout.shape
    dx = np.zeros(in_shape, dtype=F32)
    ci, oi, oj = np.indices((c, oh, ow))
    ki, kj = arg // k, arg % k
    np.add.at(dx, (ci, oi * s + ki, oj * s + kj), dout)
    return dx


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the network; the cache holds what each layer's backward needs."""
    x = np.asarray(x, dtype=F32)
    if not np.isfinite(x).all():
        raise NonFiniteValue("non-finite network input")
    cache: list = []
    for layer, p in zip(net.spec, net.params):
        layer_output_shape(layer, tuple(x.shape))  # structural check
        if isinstance(layer, Conv2d):
            if x.shape[0] != p["w"].shape[1]:
                raise ShapeMismatch(
                    f"conv2d expects {p['w'].shape[1]} channels, got {x.shape[0]}"
                )
            x, c = _conv_forward(layer, p, x)
            cache.append(c)
        elif isinstance(layer, Relu):
            cache.append(x)
            x = np.maximum(x, 0)
        elif isinstance(layer, MaxPool2d):
            x, c = _pool_forward(layer, x)
            cache.append(c)
        elif isinstance(layer, Flatten):
            cache.append(x.shape)
            x = x.reshape(-1)
        elif isinstance(layer, Dense):
            if x.shape != (p["w"].shape[1],):
                raise ShapeMismatch(
                    f"dense expects {p['w'].shape[1]} features, got {x.shape}"
                )
            cache.append(x)
            x = p["w"] @ x + p["b"]
        elif isinstance(layer, L2Normalize):
            n = max(float(np.sqrt(np.sum(x.astype(np.float64) ** 2))), NORM_EPS)
            n = F32(n)
            cache.append((x, n))
            x = x / n
    if not np.isfinite(x).all():
        raise NonFiniteValue("non-finite network output")
    return x, cache


def backward(
    net: Network, cache: list, grad_out: np.ndarray
) -> tuple[list[dict[str, np.ndarray] | None], np.ndarray]:
    """Exact reverse-mode gradients for every parameter and the input."""
    g = np.asarray(grad_out, dtype=F32)
    grads: list[dict[str, np.ndarray] | None] = [None] * len(net.spec)
    for i in range(len(net.spec) - 1, -1, -1):
        layer, p, c = net.spec[i], net.params[i], cache[i]
        if isinstance(layer, Conv2d):
            grads[i], g = _conv_backward(layer, p, c, g)
        elif isinstance(layer, Relu):
            g = g * (c > 0)
        elif isinstance(layer, MaxPool2d):
            g = _pool_backward(layer, c, g)
        elif isinstance(layer, Flatten):
            g = g.reshape(c)
        elif isinstance(layer, Dense):
            if g.shape != (layer.out_features,):
                raise ShapeMismatch(f"dense grad {g.shape} != {(layer.out_features,)}")
            grads[i] = {"w": np.outer(g, c), "b": g.copy()}
            g = p["w"].T @ g
        elif isinstance(layer, L2Normalize):
            x, n = c
            xhat = x / n
            g = (g - xhat * np.dot(xhat, g)) / n
    return grads, g


def sgd_step(net: Network, param_grads, lr: float) -> Network:
    """p <- p - lr * g for every parameter; returns a new Network value."""
    lr = F32(lr)
    new_params = []
    for p, g in zip(net.params, param_grads):
        if p is None:
            if g is not None:
                raise ShapeMismatch("gradient supplied for a parameter-less layer")
            new_params.append(None)
            continue
        if g is None:
            raise ShapeMismatch("missing gradient for a parameterized layer")
        if p["w"].shape != g["w"].shape or p["b"].shape != g["b"].shape:
            raise ShapeMismatch("gradient shape does not match parameters")
        new_params.append(
            {"w": p["w"] - lr * g["w"].astype(F32), "b": p["b"] - lr * g["b"].astype(F32)}
        )
    return Network(spec=net.spec, params=tuple(new_params), rng_seed=net.rng_seed)


def add_grads(acc, grads):
    """Accumulate per-layer gradient dicts (in place on acc, which may be None)."""
    if acc is None:
        return [None if g is None else {k: v.copy() for k, v in g.items()} for g in grads]
    for a, g in zip(acc, grads):
        if g is not None:
            a["w"] += g["w"]
            a["b"] += g["b"]
    return acc


def scale_grads(grads, factor: float):
    f = F32(factor)
    return [None if g is None else {k: v * f for k, v in g.items()} for g in grads]


# --- weight serialization ------------------------------------------------------

_MAGIC = b"PRSN"
_VERSION = 1


def save_weights(net: Network) -> bytes:
    """Binary weight file: magic, version u16, layer count u16, then one
    record per layer (kind u8, rank u8, dims u32le, f32le payload).
    Payload is the weight tensor followed by the bias vector."""
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<HH", _VERSION, len(net.spec))
    for layer, p in zip(net.spec, net.params):
        tag = _KIND_TAGS[type(layer)]
        if p is None:
            out += struct.pack("<BB", tag, 0)
            continue
        w = p["w"]
        out += struct.pack("<BB", tag, w.ndim)
        out += struct.pack(f"<{w.ndim}I", *w.shape)
        out += w.astype("<f4").tobytes()
        out += p["b"].astype("<f4").tobytes()
    return bytes(out)


def load_weights(data: bytes, spec) -> Network:
    """Parse a weight file and validate its shape table against `spec`."""
    spec = tuple(spec)
    if data[:4] != _MAGIC:
        raise BadMagic(f"magic {data[:4]!r}")
    try:
        version, n_layers = struct.unpack_from("<HH", data, 4)
    except struct.error as exc:
        raise TruncatedPayload("header cut short") from exc
    if version != _VERSION:
        raise BadMagic(f"unsupported version {version}")
    if n_layers != len(spec):
        raise ShapeTableMismatch(f"{n_layers} layers in file, spec has {len(spec)}")
    pos = 8
    params: list[dict[str, np.ndarray] | None] = []
    for layer in spec:
        try:
            tag, rank = struct.unpack_from("<BB", data, pos)
        except struct.error as exc:
            raise TruncatedPayload("layer header cut short") from exc
        pos += 2
        if tag != _KIND_TAGS[type(layer)]:
            raise ShapeTableMismatch(f"kind tag {tag} does not match {layer!r}")
        if rank == 0:
            if isinstance(layer, (Conv2d, Dense)):
                raise ShapeTableMismatch(f"{layer!r} needs parameters")
            params.append(None)
            continue
        try:
            dims = struct.unpack_from(f"<{rank}I", data, pos)
        except struct.error as exc:
            raise TruncatedPayload("shape table cut short") from exc
        pos += 4 * rank
        if isinstance(layer, Conv2d):
            if rank != 4 or dims[0] != layer.out_channels or dims[2] != layer.kernel or dims[3] != layer.kernel:
                raise ShapeTableMismatch(f"conv shape {dims} does not match {layer!r}")
        elif isinstance(layer, Dense):
            if rank != 2 or dims[0] != layer.out_features:
                raise ShapeTableMismatch(f"dense shape {dims} does not match {layer!r}")
        else:
            raise ShapeTableMismatch(f"parameters for parameter-less layer {layer!r}")
        w_count = int(np.prod(dims))
        b_count = dims[0]
        need = 4 * (w_count + b_count)
        if pos + need > len(data):
            raise TruncatedPayload(f"need {need} payload bytes at offset {pos}")
        w = np.frombuffer(data, dtype="<f4", count=w_count, offset=pos).reshape(dims).copy()
        pos += 4 * w_count
        b = np.frombuffer(data, dtype="<f4", count=b_count, offset=pos).copy()
        pos += 4 * b_count
        params.append({"w": w, "b": b})

    net = Network(spec=spec, params=tuple(params), rng_seed=-1)
    _validate_chain(net)
    return net


def _validate_chain(net: Network) -> None:
    # cross-check stored conv fan-ins against the upstream channel count
    in_c = None
    for layer, p in zip(net.spec, net.params):
        if isinstance(layer, Conv2d):
            if in_c is not None and p["w"].shape[1] != in_c:
                raise ShapeTableMismatch(
                    f"conv in_channels {p['w'].shape[1]} != upstream {in_c}"
                )
            in_c = layer.out_channels
        elif isinstance(layer, (Flatten, Dense)):
            break
