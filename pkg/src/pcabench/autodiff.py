"""Minimal reverse-mode autodiff over float64 numpy arrays.

A Tensor wraps a value, an optional gradient, and a closure that pushes the
output gradient to its parents. The op set is exactly what the forecaster
needs: matmul, add/sub/mul/scale, relu, masked softmax, layer norm, permute,
reshape, row slicing, sum, and MSE loss. Gradients follow the
reset-then-accumulate rule: every backward() call first zeroes the gradient
of each reachable node, so repeated calls are idempotent rather than
compounding.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import linalg
from .errors import ContractError, ShapeError


class Tensor:
    """Node in the computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)


def param(value) -> Tensor:
    """Leaf tensor that accumulates gradient."""
    return Tensor(value, requires_grad=True)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(value, parents: Sequence[Tensor], backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(value)
    return Tensor(value, requires_grad=True, _parents=tuple(parents), _backward=backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_val = a.value + b.value

    def push(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.value.shape)

    return _make(out_val, (a, b), push)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_val = a.value - b.value

    def push(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.value.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(g, b.value.shape)

    return _make(out_val, (a, b), push)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_val = a.value * b.value

    def push(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.value, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.value, b.value.shape)

    return _make(out_val, (a, b), push)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def push(g):
        if a.requires_grad:
            a.grad += g * c

    return _make(a.value * c, (a,), push)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_val = linalg.matmul(a.value, b.value)

    def push(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
            a.grad += _unbroadcast(ga, a.value.shape)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
            b.grad += _unbroadcast(gb, b.value.shape)

    return _make(out_val, (a, b), push)


def relu(a: Tensor) -> Tensor:
    keep = a.value > 0

    def push(g):
        if a.requires_grad:
            a.grad += g * keep

    return _make(np.maximum(a.value, 0.0), (a,), push)


def softmax(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis; mask positions (False) get exactly 0."""
    out_val = linalg.softmax_rows(a.value, mask)

    def push(g):
        if a.requires_grad:
            # dL/dx = s * (g - sum(g * s)); masked entries have s == 0
            inner = np.sum(g * out_val, axis=-1, keepdims=True)
            a.grad += out_val * (g - inner)

    return _make(out_val, (a,), push)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    # forward value comes from the linalg kernel so both routes agree bitwise
    out_val = linalg.layer_norm(x.value, gain.value, bias.value, eps)
    width = x.value.shape[-1]
    mu = np.mean(x.value, axis=-1, keepdims=True)
    var = np.mean((x.value - mu) ** 2, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv_std

    def push(g):
        if bias.requires_grad:
            bias.grad += g.reshape(-1, width).sum(axis=0)
        if gain.requires_grad:
            gain.grad += (g * xhat).reshape(-1, width).sum(axis=0)
        if x.requires_grad:
            gxh = g * gain.value
            m1 = np.mean(gxh, axis=-1, keepdims=True)
            m2 = np.mean(gxh * xhat, axis=-1, keepdims=True)
            x.grad += inv_std * (gxh - m1 - xhat * m2)

    return _make(out_val, (x, gain, bias), push)


def permute(a: Tensor, axes: tuple) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def push(g):
        if a.requires_grad:
            a.grad += g.transpose(inverse)

    return _make(a.value.transpose(axes), (a,), push)


def transpose_last(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    nd = a.value.ndim
    axes = tuple(range(nd - 2)) + (nd - 1, nd - 2)
    return permute(a, axes)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    orig = a.value.shape

    def push(g):
        if a.requires_grad:
            a.grad += g.reshape(orig)

    return _make(a.value.reshape(shape), (a,), push)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice along the second-to-last axis (the sequence axis)."""
    n = a.value.shape[-2]
    if not (0 <= start < stop <= n):
        raise ShapeError(f"row slice [{start}:{stop}) invalid for axis length {n}")
    out_val = a.value[..., start:stop, :]

    def push(g):
        if a.requires_grad:
            z = np.zeros_like(a.value)
            z[..., start:stop, :] = g
            a.grad += z

    return _make(out_val, (a,), push)


def total(a: Tensor) -> Tensor:
    def push(g):
        if a.requires_grad:
            a.grad += np.broadcast_to(g, a.value.shape)

    return _make(np.sum(a.value), (a,), push)


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.value.shape:
        raise ShapeError(f"pred/target shapes differ: {pred.value.shape} vs {target.shape}")
    if target.size == 0:
        raise ContractError("mse_loss on empty arrays")
    diff = pred.value - target

    def push(g):
        if pred.requires_grad:
            pred.grad += g * (2.0 / diff.size) * diff

    return _make(np.mean(diff * diff), (pred,), push)


def _topo_order(root: Tensor) -> list:
    """Parents-before-children ordering, iterative to spare the stack."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad with d(loss)/d(node) for every reachable node.

    Gradients of all reachable nodes are reset to zero first, so calling
    backward twice on the same graph yields the same gradients.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    for node in order:
        if node.requires_grad:
            node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None and node.requires_grad:
            node._backward(node.grad)
