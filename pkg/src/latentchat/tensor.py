"""Minimal dense tensor engine with reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays (row-major). Every differentiable
operation records its parents and a backward closure; ``backward`` walks
the recorded graph in reverse topological order. The engine is sized for
desk-scale training: no views beyond what numpy broadcasting provides,
no GPU, no mixed precision.

Randomness everywhere in this package comes from numpy's PCG64
(``numpy.random.default_rng``), seeded from the run config.
"""

from __future__ import annotations

import json
import struct

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class DomainError(ValueError):
    """An input lies outside the operation's numeric domain."""


RECIPROCAL_FLOOR = 1e-12


class Tensor:
    """A float64 array participating in a reverse-mode differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.grad = np.zeros_like(self.data) if (requires_grad and not _parents) else None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def item(self):
        return float(self.data)

    # -- arithmetic sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(_lift(other), mul(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (undo numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise ops ------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += _unbroadcast(out.grad, a.data.shape)
        if b.requires_grad:
            b._ensure_grad()
            b.grad += _unbroadcast(out.grad, b.data.shape)

    return Tensor(data, _parents=(a, b), _backward=backward)


def mul(a: Tensor, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += _unbroadcast(out.grad * b.data, a.data.shape)
        if b.requires_grad:
            b._ensure_grad()
            b.grad += _unbroadcast(out.grad * a.data, b.data.shape)

    return Tensor(data, _parents=(a, b), _backward=backward)


def tanh(a: Tensor) -> Tensor:
    a = _lift(a)
    data = np.tanh(a.data)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad * (1.0 - data * data)

    return Tensor(data, _parents=(a,), _backward=backward)


def exp(a: Tensor) -> Tensor:
    a = _lift(a)
    data = np.exp(a.data)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad * data

    return Tensor(data, _parents=(a,), _backward=backward)


def log(a: Tensor) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0):
        raise DomainError("log: input must be strictly positive")
    data = np.log(a.data)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad / a.data

    return Tensor(data, _parents=(a,), _backward=backward)


def reciprocal(a: Tensor) -> Tensor:
    a = _lift(a)
    if np.any(np.abs(a.data) < RECIPROCAL_FLOOR):
        raise DomainError(
            f"reciprocal: input magnitude below {RECIPROCAL_FLOOR}; clamp first"
        )
    data = 1.0 / a.data

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad * (-data * data)

    return Tensor(data, _parents=(a,), _backward=backward)


def sqrt(a: Tensor) -> Tensor:
    a = _lift(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: input must be non-negative")
    data = np.sqrt(a.data)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad * 0.5 / np.maximum(data, 1e-150)

    return Tensor(data, _parents=(a,), _backward=backward)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient is zero where the clip is active."""
    a = _lift(a)
    data = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad * inside

    return Tensor(data, _parents=(a,), _backward=backward)


def signed_clamp_min(a: Tensor, floor: float) -> Tensor:
    """Raise |x| to at least ``floor``, preserving sign (0 maps to +floor).

    Gradient passes through only where the magnitude was already >= floor.
    """
    a = _lift(a)
    sign = np.where(a.data < 0, -1.0, 1.0)
    data = sign * np.maximum(np.abs(a.data), floor)
    inside = np.abs(a.data) >= floor

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad * inside

    return Tensor(data, _parents=(a,), _backward=backward)


# -- shape ops ------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = _lift(a)
    data = a.data.reshape(shape)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += out.grad.reshape(a.data.shape)

    return Tensor(data, _parents=(a,), _backward=backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = _lift(a)
    data = np.swapaxes(a.data, ax1, ax2)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad += np.swapaxes(out.grad, ax1, ax2)

    return Tensor(data, _parents=(a,), _backward=backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t._ensure_grad()
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(lo, hi)
                t.grad += out.grad[tuple(idx)]

    return Tensor(data, _parents=tuple(tensors), _backward=backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = _lift(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx]

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            a.grad[idx] += out.grad

    return Tensor(data, _parents=(a,), _backward=backward)


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows of ``table`` indexed by an integer array."""
    table = _lift(table)
    ids = np.asarray(ids, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= table.data.shape[0]):
        raise IndexError("take_rows: index out of range")
    data = table.data[ids]

    def backward(out):
        if table.requires_grad:
            table._ensure_grad()
            np.add.at(table.grad, ids.reshape(-1), out.grad.reshape(-1, table.data.shape[1]))

    return Tensor(data, _parents=(table,), _backward=backward)


# -- reductions -----------------------------------------------------------


def tensor_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.grad += np.broadcast_to(g, a.data.shape)

    return Tensor(data, _parents=(a,), _backward=backward)


def tensor_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- linear algebra -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            g = np.matmul(out.grad, np.swapaxes(b.data, -1, -2))
            a.grad += _unbroadcast(g, a.data.shape)
        if b.requires_grad:
            b._ensure_grad()
            g = np.matmul(np.swapaxes(a.data, -1, -2), out.grad)
            b.grad += _unbroadcast(g, b.data.shape)

    return Tensor(data, _parents=(a, b), _backward=backward)


# -- fused neural-net ops -------------------------------------------------


def softmax(a: Tensor, additive_mask=None) -> Tensor:
    """Numerically stable softmax over the last axis.

    ``additive_mask``, when given, is a constant array added to the inputs
    before normalization (use large negative values to mask positions).
    """
    a = _lift(a)
    x = a.data if additive_mask is None else a.data + additive_mask
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            dot = (out.grad * data).sum(axis=-1, keepdims=True)
            a.grad += data * (out.grad - dot)

    return Tensor(data, _parents=(a,), _backward=backward)


def log_softmax(a: Tensor) -> Tensor:
    """Stable log-softmax over the last axis."""
    a = _lift(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = shifted - lse

    def backward(out):
        if a.requires_grad:
            a._ensure_grad()
            probs = np.exp(data)
            a.grad += out.grad - probs * out.grad.sum(axis=-1, keepdims=True)

    return Tensor(data, _parents=(a,), _backward=backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with learned gain and bias."""
    a, gain, bias = _lift(a), _lift(gain), _lift(bias)
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    data = xhat * gain.data + bias.data
    n = a.data.shape[-1]

    def backward(out):
        if gain.requires_grad:
            gain._ensure_grad()
            gain.grad += _unbroadcast(out.grad * xhat, gain.data.shape)
        if bias.requires_grad:
            bias._ensure_grad()
            bias.grad += _unbroadcast(out.grad, bias.data.shape)
        if a.requires_grad:
            a._ensure_grad()
            dxhat = out.grad * gain.data
            a.grad += inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / n
            )

    return Tensor(data, _parents=(a, gain, bias), _backward=backward)


def log_softmax_nll(logits: Tensor, targets) -> Tensor:
    """Mean over rows of -log softmax(logits)[target], max-subtraction stabilized."""
    logits = _lift(logits)
    if logits.data.ndim != 2:
        raise ContractError(f"log_softmax_nll: expected 2-D logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    T, V = logits.data.shape
    if targets.shape != (T,):
        raise ContractError(f"log_softmax_nll: {T} rows but {targets.shape} targets")
    if np.any(targets < 0) or np.any(targets >= V):
        raise IndexError("log_softmax_nll: target index out of range")
    return masked_cross_entropy(logits, targets, np.ones(T))


def masked_cross_entropy(logits: Tensor, targets, mask) -> Tensor:
    """Token-level NLL averaged over positions where ``mask`` is nonzero.

    ``logits`` is [..., V]; ``targets`` and ``mask`` match the leading shape.
    """
    logits = _lift(logits)
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    V = logits.data.shape[-1]
    if np.any((targets < 0) | (targets >= V)):
        raise IndexError("masked_cross_entropy: target index out of range")
    count = mask.sum()
    if count == 0:
        raise ContractError("masked_cross_entropy: empty mask")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    data = -(picked * mask).sum() / count

    def backward(out):
        if logits.requires_grad:
            logits._ensure_grad()
            probs = np.exp(logp)
            onehot = np.zeros_like(probs)
            np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
            logits.grad += out.grad * (probs - onehot) * mask[..., None] / count

    return Tensor(data, _parents=(logits,), _backward=backward)


# -- backward pass --------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))

    loss._ensure_grad()
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.requires_grad:
            node._backward(node)


# -- gradient checking ----------------------------------------------------


def grad_check(f, params, eps=1e-4, max_coords=25, rng=None):
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a deterministic scalar-valued function of ``params`` (a list of
    leaf Tensors). Up to ``max_coords`` coordinates per parameter are probed.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ag in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().data)
            flat[i] = orig - eps
            lo = float(f().data)
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            a = ag.reshape(-1)[i]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst


# -- Adam optimizer -------------------------------------------------------


class AdamState:
    """First/second-moment accumulators and the shared step counter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0


def adam_step(params, state: AdamState, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with bias correction; grads read from .grad."""
    if len(state.m) != len(params):
        raise ContractError("adam_step: state does not match params")
    state.t += 1
    t = state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ContractError(
                f"adam_step: grad shape {g.shape} != param shape {p.data.shape}"
            )
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        p.data -= lr * mhat / (np.sqrt(vhat) + eps)


def clip_grad_norm(params, max_norm: float):
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = total**0.5
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# -- checkpoint format ----------------------------------------------------

_CKPT_MAGIC = b"LATENTCHAT-CKPT-1\n"


def save_checkpoint(path, tensors: dict, config: dict, seed: int) -> None:
    """Write (name -> array) pairs plus a config echo and seed.

    Layout: magic line, a JSON header (sorted keys, fixed separators) with
    seed/config and per-tensor name+shape in write order, a newline, then
    the concatenated little-endian float64 payload. Identical inputs
    produce identical bytes.
    """
    names = sorted(tensors)
    header = {
        "seed": seed,
        "config": config,
        "tensors": [{"name": n, "shape": list(np.shape(tensors[n].data if isinstance(tensors[n], Tensor) else tensors[n]))} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for n in names:
            arr = tensors[n].data if isinstance(tensors[n], Tensor) else np.asarray(tensors[n])
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (name -> float64 array, config, seed)."""
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise IOError(f"{path}: not a latentchat checkpoint")
        (blen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(blen).decode("utf-8"))
        out = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n)
            out[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return out, header["config"], header["seed"]
