"""Dense float32 tensors with reverse-mode differentiation.

Values are stored as 32-bit floats; reductions (matmuls, sums, statistics)
accumulate in 64-bit and round the result back to storage precision.
Gradients are recorded on an explicit :class:`Tape` so inference-mode
forward passes carry zero bookkeeping cost.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_ACTIVE_TAPE = None
_STORAGE_DTYPE = np.float32


def storage_dtype():
    """dtype newly created tensors and op outputs are stored with."""
    return _STORAGE_DTYPE


@contextmanager
def precision(dtype):
    """Temporarily switch the storage dtype (float64 for validation runs).

    Finite-difference checks evaluate forward passes under float64 so the
    difference quotient measures the gradient rather than float32 output
    quantization; production code never enters this context.
    """
    global _STORAGE_DTYPE
    prev = _STORAGE_DTYPE
    _STORAGE_DTYPE = dtype
    try:
        yield
    finally:
        _STORAGE_DTYPE = prev


class Tensor:
    """N-dimensional float32 array, optionally holding a gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name", "produced")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_STORAGE_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.produced = False  # set when an op on the active tape created this

    @property
    def needs_grad(self) -> bool:
        """Whether backward must deliver a gradient to this tensor."""
        return self.requires_grad or self.produced

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape})"


class _Node:
    __slots__ = ("output", "inputs", "backward")

    def __init__(self, output, inputs, backward):
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of executed ops, replayed in reverse for gradients.

    Recording order is execution order, so walking the list backwards is a
    valid reverse topological order; every node is visited exactly once
    (`visited` counts the visits so callers can assert this).
    """

    def __init__(self):
        self._nodes = []
        self.visited = 0
        self._consumed = False

    def __len__(self) -> int:
        return len(self._nodes)

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def record(self, output: Tensor, inputs: tuple, backward) -> None:
        output.produced = True
        self._nodes.append(_Node(output, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into `.grad` of every reachable tensor."""
        if self._consumed:
            raise RuntimeError("tape already consumed by a backward pass")
        self._consumed = True
        if loss.data.ndim != 0:
            raise ValueError("backward expects a scalar loss")
        loss.grad = np.ones((), dtype=np.float32)
        for node in reversed(self._nodes):
            self.visited += 1
            g = node.output.grad
            if g is None:
                continue
            input_grads = node.backward(g)
            for tensor, grad in zip(node.inputs, input_grads):
                if tensor is None or grad is None:
                    continue
                if tensor.grad is None:
                    tensor.grad = grad.astype(np.float32, copy=False)
                else:
                    tensor.grad = tensor.grad + grad.astype(np.float32, copy=False)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE


def record(output: Tensor, inputs: tuple, backward) -> None:
    """Record one op on the active tape, if recording is on."""
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.record(output, inputs, backward)
