"""Dense real tensors with tape-based reverse-mode differentiation.

A Tensor wraps a contiguous numpy buffer (float64 by default, float32 as an
opt-in training dtype) plus an optional gradient buffer of identical shape.
Operations in :mod:`wavemix.ops` record a dynamic graph; calling
``backward()`` on a scalar loss walks it in reverse topological order and
accumulates ``d loss / d leaf`` into every leaf that requires gradients.

Repeated ``backward()`` calls accumulate into leaf gradients until
``zero_grad()`` is called; gradients of interior nodes are reset at the start
of each backward pass.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A shaped real array plus its gradient buffer.

    ``data`` is always a contiguous row-major numpy array of float32/float64.
    ``grad`` has the same shape and dtype once allocated. Leaves created with
    ``requires_grad=True`` allocate their gradient buffer eagerly so the
    invariant ``grad.shape == data.shape`` holds from construction onward.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        arr = np.asarray(data)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        if self.requires_grad and _backward is None:
            self.grad = np.zeros_like(self.data)
        self._parents = _parents
        self._backward = _backward

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- gradient machinery ---------------------------------------------------

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def _toposort(self) -> list[Tensor]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

    def backward(self) -> None:
        """Populate ``grad`` on every requires-grad leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar, got shape {self.shape}"
            )
        order = self._toposort()
        # Interior gradients are per-pass scratch; leaves keep accumulating.
        for node in order:
            if node._backward is not None:
                node.grad = None
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """A named trainable leaf.

    ``decay`` marks whether decoupled weight decay applies (False for norm
    gains/biases, plain biases, and position embeddings).
    """

    __slots__ = ("name", "decay")

    def __init__(self, data, name: str = "", decay: bool = True):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.decay = decay

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, decay={self.decay})"


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float64)
    return Tensor(arr)
