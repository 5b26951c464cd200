"""Execution-thread control and an observable probe for the compute core.

BLAS backends spawn worker threads on their own; `thread_limit` clamps them
for a scope (the sequential benchmark contract requires exactly one thread).
Heavy ops call `note_op` so a test or benchmark harness can observe which
thread limit every op actually ran under.
"""

from __future__ import annotations

import ctypes
from contextlib import contextmanager

from threadpoolctl import threadpool_limits

_current_limit: int | None = None
_observers: list = []


def _tune_allocator() -> None:
    """Keep large freed buffers in the process heap instead of returning
    them to the OS; layer-sized arrays churn every step and repeated page
    faults dominate otherwise. Best effort, glibc only."""
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):
        pass


_tune_allocator()


def current_thread_limit() -> int | None:
    """Thread cap currently applied to the compute core (None = library default)."""
    return _current_limit


@contextmanager
def thread_limit(n: int):
    """Clamp BLAS worker threads to `n` for the duration of the scope."""
    global _current_limit
    if n < 1:
        raise ValueError("thread limit must be >= 1")
    prev = _current_limit
    _current_limit = n
    try:
        with threadpool_limits(limits=n):
            yield
    finally:
        _current_limit = prev


def add_observer(fn) -> None:
    _observers.append(fn)


def remove_observer(fn) -> None:
    _observers.remove(fn)


def note_op(name: str) -> None:
    """Report an op execution to registered observers (no-op when unused)."""
    if _observers:
        for fn in _observers:
            fn(name, _current_limit)
