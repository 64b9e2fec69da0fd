"""Dense n-dimensional tensors with reverse-mode automatic differentiation.

The graph is dynamic (tape-based): every op records its inputs and a
backward closure on the output tensor. ``backward()`` on a scalar loss
walks the tape once in reverse topological order, accumulates gradients
into leaf tensors, and frees the tape. Precision is a constructor-level
choice: float32 for training throughput, float64 for gradient checks.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np

DEFAULT_DTYPE = np.float32

_node_ids = itertools.count()


class _GradMode(threading.local):
    # per-thread so concurrent no_grad() inference cannot disable
    # recording for a training thread
    enabled = True


_grad_mode = _GradMode()


class ShapeError(ValueError):
    """Raised when operand shapes are invalid for an op; names the op and dims."""


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (pure inference)."""
    prev = _grad_mode.enabled
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


def grad_enabled() -> bool:
    return _grad_mode.enabled


class Tensor:
    """A dense real array plus optional gradient buffer and tape linkage.

    Attributes:
        data: row-major numpy array (float32 or float64).
        grad: same-shape numpy array, or None until backward populates it.
        requires_grad: whether gradients flow through / into this tensor.
        node_id: unique identifier of this node in the computation graph.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward_fn")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(DEFAULT_DTYPE)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id = next(_node_ids)
        self._parents: Tuple["Tensor", ...] = ()
        self._backward_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
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

    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, grad={'yes' if self.grad is not None else 'no'})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    # -- operator sugar (thin wrappers over cloudvol.tensor.ops) --------------

    def __add__(self, other):
        from . import ops

        return ops.add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return self.__add__(other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __sub__(self, other):
        from . import ops

        other = _as_tensor(other, self.dtype)
        return ops.add(self, ops.mul(other, _as_tensor(-1.0, self.dtype)))

    def __neg__(self):
        from . import ops

        return ops.mul(self, _as_tensor(-1.0, self.dtype))

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def reshape(self, shape):
        from . import ops

        return ops.reshape(self, shape)

    def transpose(self, axes):
        from . import ops

        return ops.transpose(self, axes)

    def sum(self, axis=None):
        from . import ops

        return ops.sum_(self, axis=axis)

    def mean(self, axis=None):
        from . import ops

        return ops.mean(self, axis=axis)

    def relu(self):
        from . import ops

        return ops.relu(self)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def make_output(
    op_name: str,
    out_data: np.ndarray,
    parents: Tuple[Tensor, ...],
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap an op result, recording tape linkage when grads are enabled."""
    out = Tensor(out_data)
    if _grad_mode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def check_same_dtype(op_name: str, *tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"{op_name}: mixed dtypes {sorted(d.name for d in dtypes)}; precision is a constructor-level choice")


def backward(loss: Tensor) -> None:
    """Populate ``grad`` of every reachable leaf with d(loss)/d(leaf).

    The loss must be scalar. The tape is traversed exactly once per node
    and freed afterwards; repeated forward/backward cycles without
    ``zero_grad`` accumulate into leaf gradients.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")

    # Iterative postorder DFS: parents land before consumers in `topo`.
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
            if id(p) not in visited:
                stack.append((p, False))

    if loss.grad is None:
        loss.grad = np.ones_like(loss.data)
    else:
        loss.grad = loss.grad + np.ones_like(loss.data)

    for node in reversed(topo):
        if node._backward_fn is None:
            continue
        upstream = node.grad
        if upstream is None:
            continue
        grads = node._backward_fn(upstream)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if g.dtype != parent.data.dtype:
                g = g.astype(parent.data.dtype)
            if parent.grad is None:
                parent.grad = g.reshape(parent.shape)
            else:
                parent.grad = parent.grad + g.reshape(parent.shape)
        # Free the tape behind us; intermediate grads are fully consumed.
        node._parents = ()
        node._backward_fn = None
        node.grad = None
