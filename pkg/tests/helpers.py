"""Shared test utilities: finite-difference gradient checking and brute-force
reference implementations kept deliberately independent of the library code."""

import numpy as np

from simpfu.nn import Tape
from simpfu.nn.tensor import precision


def finite_diff_check(forward_fn, tensors, h=1e-3, rel_tol=1e-3, abs_floor=1e-6, max_entries=None, rng=None):
    """Compare tape gradients of `forward_fn() -> scalar Tensor` against
    central finite differences for every element of each tensor in `tensors`.

    Analytic gradients come from the production float32 backward pass.
    Perturbations are applied to the float32-stored values (the divisor uses
    the actually representable step); the difference quotient itself is
    evaluated under the float64 validation mode so it measures the gradient
    rather than float32 output quantization. Passes if |fd - grad| <
    abs_floor or the relative error is below rel_tol.
    """
    for tensor in tensors:
        tensor.grad = None
    with Tape() as tape:
        loss = forward_fn()
    tape.backward(loss)
    assert tape.visited == len(tape), "backward must visit every node exactly once"
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    worst = 0.0
    with precision(np.float64):
        for tensor, grad in zip(tensors, grads):
            flat = tensor.data.reshape(-1)
            gflat = grad.reshape(-1)
            indices = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                indices = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
            for i in indices:
                orig = flat[i]
                hi = np.float32(orig + h)
                lo = np.float32(orig - h)
                flat[i] = hi
                f_hi = float(forward_fn().data)
                flat[i] = lo
                f_lo = float(forward_fn().data)
                flat[i] = orig
                fd = (f_hi - f_lo) / (float(hi) - float(lo))
                err = abs(fd - gflat[i])
                if err >= abs_floor:
                    rel = err / max(abs(fd), abs(gflat[i]))
                    worst = max(worst, rel)
                    assert rel < rel_tol, (
                        f"{tensor.name or 'tensor'}[{i}]: fd={fd:.6g} grad={gflat[i]:.6g} rel={rel:.3g}"
                    )
    return worst


def conv2d_loops(x, kernel, bias=None):
    """Direct nested-loop same-padded stride-1 cross-correlation, (T,F,Cin)."""
    t, f, cin = x.shape
    kt, kf, _, cout = kernel.shape
    pt, pf = (kt - 1) // 2, (kf - 1) // 2
    out = np.zeros((t, f, cout), dtype=np.float64)
    for i in range(t):
        for j in range(f):
            for a in range(kt):
                for b in range(kf):
                    ii, jj = i + a - pt, j + b - pf
                    if 0 <= ii < t and 0 <= jj < f:
                        for ci in range(cin):
                            out[i, j, :] += x[ii, jj, ci] * kernel[a, b, ci, :]
    if bias is not None:
        out += bias
    return out


def maxpool2d_loops(x, pt, pf):
    t, f, c = x.shape
    out = np.zeros((t // pt, f // pf, c), dtype=x.dtype)
    for i in range(t // pt):
        for j in range(f // pf):
            out[i, j, :] = x[i * pt : (i + 1) * pt, j * pf : (j + 1) * pf, :].max(axis=(0, 1))
    return out
