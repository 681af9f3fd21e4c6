"""Dense-tensor reverse-mode autodiff sized for small GRU seq2seq models.

Tensors wrap numpy arrays (float64 by default, float32 selectable). Ops
record nodes on the active Tape only while one is entered and an input
requires gradients, so inference runs record nothing. A Tape is one-shot:
forward, backward, discard.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("inputs", "output", "grad_fn")

    def __init__(self, inputs, output, grad_fn):
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


_TAPE_STACK = []


class Tape:
    """Execution-order record of differentiable ops."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor):
        """Accumulate gradients of loss into every contributing tensor."""
        if loss.data.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is None:
                continue
            for tensor, grad in zip(node.inputs, node.grad_fn(g)):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = grad
                else:
                    tensor.grad = tensor.grad + grad


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(inputs, out_data, grad_fn) -> Tensor:
    out = Tensor(out_data, dtype=out_data.dtype)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(tuple(inputs), out, grad_fn))
    return out


def _unbroadcast(grad, shape):
    """Sum grad back down to the broadcast input's shape."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.array(grad.sum(), dtype=grad.dtype)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} incompatible") from None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shapes {a.shape} x {b.shape} incompatible")
    a_data, b_data = a.data, b.data

    def grad_fn(g):
        return g @ b_data.T, a_data.T @ g

    return _record([a, b], a_data @ b_data, grad_fn)


def transpose(a: Tensor) -> Tensor:
    def grad_fn(g):
        return (g.T.copy(),)

    return _record([a], a.data.T.copy(), grad_fn)


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        const = float(b)

        def grad_const(g):
            return (g,)

        return _record([a], a.data + const, grad_const)
    _check_broadcast("add", a, b)
    a_shape, b_shape = a.shape, b.shape

    def grad_fn(g):
        return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

    return _record([a, b], a.data + b.data, grad_fn)


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    _check_broadcast("sub", a, b)
    a_shape, b_shape = a.shape, b.shape

    def grad_fn(g):
        return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

    return _record([a, b], a.data - b.data, grad_fn)


def rsub(const, a: Tensor) -> Tensor:
    """const - a for a python scalar const."""
    c = float(const)

    def grad_fn(g):
        return (-g,)

    return _record([a], c - a.data, grad_fn)


def neg(a: Tensor) -> Tensor:
    def grad_fn(g):
        return (-g,)

    return _record([a], -a.data, grad_fn)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        const = float(b)

        def grad_const(g):
            return (g * const,)

        return _record([a], a.data * const, grad_const)
    _check_broadcast("mul", a, b)
    a_data, b_data = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * b_data, a_data.shape), _unbroadcast(g * a_data, b_data.shape)

    return _record([a, b], a_data * b_data, grad_fn)


def div(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return mul(a, 1.0 / float(b))
    _check_broadcast("div", a, b)
    a_data, b_data = a.data, b.data

    def grad_fn(g):
        return (
            _unbroadcast(g / b_data, a_data.shape),
            _unbroadcast(-g * a_data / (b_data * b_data), b_data.shape),
        )

    return _record([a, b], a_data / b_data, grad_fn)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _record(tensors, np.concatenate([t.data for t in tensors], axis=axis), grad_fn)


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Row slice a[start:stop] of a 2D tensor."""
    if a.data.ndim != 2:
        raise ValueError(f"rows: expected 2D tensor, got shape {a.shape}")
    a_shape = a.shape

    def grad_fn(g):
        out = np.zeros(a_shape, dtype=g.dtype)
        out[start:stop] = g
        return (out,)

    return _record([a], a.data[start:stop].copy(), grad_fn)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return _record([a], out, grad_fn)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _record([a], out, grad_fn)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    mask = a.data > 0

    def grad_fn(g):
        return (g * mask,)

    return _record([a], out, grad_fn)


def softmax(a: Tensor) -> Tensor:
    """Row softmax over the last axis of a 2D tensor."""
    if a.data.ndim != 2:
        raise ValueError(f"softmax: expected 2D tensor, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _record([a], out, grad_fn)


def log(a: Tensor) -> Tensor:
    a_data = a.data

    def grad_fn(g):
        return (g / a_data,)

    return _record([a], np.log(a_data), grad_fn)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    mask = (a.data > lo) & (a.data < hi)

    def grad_fn(g):
        return (g * mask,)

    return _record([a], out, grad_fn)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a_shape = a.shape

    def grad_fn(g):
        if axis is None:
            return (np.full(a_shape, float(g), dtype=g.dtype),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a_shape).copy(),)

    return _record([a], np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), grad_fn)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a_shape = a.shape
    if axis is None:
        count = a.data.size
    else:
        count = a_shape[axis]

    def grad_fn(g):
        if axis is None:
            return (np.full(a_shape, float(g) / count, dtype=g.dtype),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a_shape).copy(),)

    return _record([a], np.asarray(a.data.mean(axis=axis, keepdims=keepdims)), grad_fn)


def embed(table: Tensor, ids) -> Tensor:
    """Row lookup: (len(ids), d) slice of the embedding table."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError(f"embed: ids must be 1D, got shape {ids.shape}")
    table_shape = table.shape

    def grad_fn(g):
        out = np.zeros(table_shape, dtype=g.dtype)
        np.add.at(out, ids, g)
        return (out,)

    return _record([table], table.data[ids], grad_fn)


def scatter_sum(weights: Tensor, ids, size: int) -> Tensor:
    """Sum columns of (B, L) weights into (B, size) slots given by ids."""
    ids = np.asarray(ids, dtype=np.int64)
    b, l = weights.shape
    if ids.shape != (l,):
        raise ValueError(f"scatter_sum: ids shape {ids.shape} != ({l},)")
    out_data = np.zeros((b, size), dtype=weights.data.dtype)
    np.add.at(out_data.T, ids, weights.data.T)

    def grad_fn(g):
        return (np.ascontiguousarray(g[:, ids]),)

    return _record([weights], out_data, grad_fn)


def pick(a: Tensor, i: int, j: int) -> Tensor:
    """Scalar element a[i, j]."""
    a_shape = a.shape

    def grad_fn(g):
        out = np.zeros(a_shape, dtype=g.dtype)
        out[i, j] = g
        return (out,)

    return _record([a], np.asarray(a.data[i, j]), grad_fn)


def dropout(a: Tensor, p: float, rng) -> Tensor:
    """Inverted dropout; call only during training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0,1), got {p}")
    if p == 0.0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def grad_fn(g):
        return (g * mask,)

    return _record([a], a.data * mask, grad_fn)


def gru_cell(x_t: Tensor, h_prev: Tensor, weights: dict) -> Tensor:
    """Standard GRU step over row vectors.

    weights: W_z, W_r, W_h of shape (d_in + d_h, d_h) and b_z, b_r, b_h
    of shape (1, d_h).
    """
    xh = concat([x_t, h_prev], axis=1)
    z = sigmoid(add(matmul(xh, weights["W_z"]), weights["b_z"]))
    r = sigmoid(add(matmul(xh, weights["W_r"]), weights["b_r"]))
    xrh = concat([x_t, mul(r, h_prev)], axis=1)
    h_cand = tanh(add(matmul(xrh, weights["W_h"]), weights["b_h"]))
    return add(mul(rsub(1.0, z), h_prev), mul(z, h_cand))


class GRUCell:
    """Parameter bundle for gru_cell with named registration."""

    def __init__(self, d_in: int, d_hidden: int, rng, prefix: str, params: dict):
        self.d_in = d_in
        self.d_hidden = d_hidden
        self.weights = {}
        for gate in ("z", "r", "h"):
            w = init_uniform(rng, (d_in + d_hidden, d_hidden))
            b = init_uniform(rng, (1, d_hidden))
            self.weights[f"W_{gate}"] = w
            self.weights[f"b_{gate}"] = b
            params[f"{prefix}.W_{gate}"] = w
            params[f"{prefix}.b_{gate}"] = b

    def __call__(self, x_t: Tensor, h_prev: Tensor) -> Tensor:
        return gru_cell(x_t, h_prev, self.weights)


def init_uniform(rng, shape, scale: float = 0.1) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE))


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One Adam update with bias correction; mutates params and state."""
    state.t += 1
    t = state.t
    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"adam_step: non-finite gradient for {name}")
        if g.shape != param.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} != param shape {param.data.shape} for {name}"
            )
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        param.data = param.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def clip_global_norm(grads: dict, max_norm: float = 1.0) -> dict:
    """Scale all grads by max_norm/norm when the global L2 norm exceeds it."""
    total = 0.0
    for g in grads.values():
        if g is not None:
            total += float((g * g).sum())
    norm = total**0.5
    if norm > max_norm:
        scale = max_norm / norm
        for name, g in grads.items():
            if g is not None:
                grads[name] = g * scale
    return grads


CHECKPOINT_FORMAT = "kpgen-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, tensors: dict, meta: dict | None = None):
    """Single-file container: one JSON header line, then raw tensor bytes.

    Byte-deterministic for identical inputs (no timestamps, fixed key order).
    """
    names = sorted(tensors)
    entries = []
    blobs = []
    for name in names:
        data = tensors[name].data if isinstance(tensors[name], Tensor) else np.asarray(tensors[name])
        data = np.ascontiguousarray(data)
        dtype = data.dtype.newbyteorder("<")
        entries.append({"name": name, "shape": list(data.shape), "dtype": dtype.str})
        blobs.append(data.astype(dtype, copy=False).tobytes())
    header = json.dumps(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "meta": meta or {},
            "tensors": entries,
        },
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (dict name -> np.ndarray, meta dict)."""
    with open(path, "rb") as fh:
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a checkpoint file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
        tensors = {}
        for entry in header["tensors"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ValueError(f"{path}: truncated tensor data for {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"]).copy()
    return tensors, header.get("meta", {})
