"""Dense float64 tensors with a gradient tape.

The graph is recorded explicitly: while a ``Tape`` is active, every operation
appends its output node in execution order, which is already a topological
order. ``backward`` walks that list in reverse from the loss node, so one pass
fills the gradients of everything the loss can reach. Without an active tape
the ops are plain numpy computations (inference mode).

Tapes are thread-local: distinct model/tape instances may run on distinct
threads, a single tape is single-threaded.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np


class EngineError(Exception):
    """Base class for tensor-engine failures."""


class ShapeError(EngineError):
    """Operand shapes are incompatible."""


class NotOnTapeError(EngineError):
    """A node was expected on the recording tape but is not there."""


class Tensor:
    """N-dimensional float64 array, optionally participating in a tape."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Optional[Callable] = None
        self._tape: Optional["Tape"] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Convenience arithmetic; heavy lifting lives in ops.py.
    def __add__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, float(other))

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.mul_scalar(self, -1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Tensor) else -float(other))


_LOCAL = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Execution-ordered record of op outputs plus the leaves they touched."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._positions: dict[int, int] = {}
        self._leaf_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        assert stack and stack[-1] is self, "tape exited out of order"
        stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        out._tape = self
        self._positions[id(out)] = len(self._nodes)
        self._nodes.append(out)
        for p in parents:
            if p._tape is None:
                self._leaf_ids.add(id(p))
        return out

    def contains(self, t: Tensor) -> bool:
        return t._tape is self or id(t) in self._leaf_ids

    def release(self) -> None:
        """Break node<->tape reference cycles and drop saved buffers.

        Call after the last backward on this tape; recorded tensors keep
        their data and accumulated grads but can no longer be backpropped.
        """
        for node in self._nodes:
            node._backward_fn = None
            node._parents = ()
            node._tape = None
        self._nodes.clear()
        self._positions.clear()
        self._leaf_ids.clear()

    def run_backward(self, root: Tensor) -> dict[int, np.ndarray]:
        """Reverse pass seeded at ``root``; returns grads keyed by ``id``."""
        if root._tape is not self:
            raise NotOnTapeError("backward root was not recorded on this tape")
        grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        start = self._positions[id(root)]
        for node in reversed(self._nodes[: start + 1]):
            g = grads.get(id(node))
            if g is None or node._backward_fn is None:
                continue
            node._backward_fn(g, grads)
        # Accumulate onto requires_grad tensors; repeated calls add up until
        # the caller resets with zero_grad. Interior-node gradients stay in
        # the returned table (grad_wrt_activation reads them from there).
        seen: set[int] = set()
        for node in self._nodes[: start + 1]:
            if node.requires_grad and id(node) not in seen:
                seen.add(id(node))
                self._apply(node, grads)
            for p in node._parents:
                if p._tape is None and p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    self._apply(p, grads)
        return grads

    @staticmethod
    def _apply(t: Tensor, grads: dict[int, np.ndarray]) -> None:
        g = grads.get(id(t))
        if g is None:
            return
        if t.grad is None:
            t.grad = g.copy()
        else:
            t.grad = t.grad + g


def accumulate(grads: dict[int, np.ndarray], t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into the transient gradient table for ``t``."""
    key = id(t)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from the scalar ``loss``."""
    if loss.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise NotOnTapeError("loss is not connected to a recording tape")
    loss._tape.run_backward(loss)


def grad_wrt_activation(scalar_node: Tensor, activation: Tensor) -> Tensor:
    """Gradient of a scalar score w.r.t. an activation recorded on its tape.

    The activation must have participated in the forward pass that produced
    the score; if the score does not depend on it the gradient is zero.
    """
    if scalar_node.size != 1:
        raise ShapeError("score node must be scalar")
    tape = scalar_node._tape
    if tape is None:
        raise NotOnTapeError("score node is not connected to a recording tape")
    if not tape.contains(activation):
        raise NotOnTapeError("activation was not recorded on the score's tape")
    grads = tape.run_backward(scalar_node)
    g = grads.get(id(activation))
    if g is None:
        g = np.zeros_like(activation.data)
    return Tensor(g)
