"""Differentiable ops for frequency-unwrapping CNNs.

Layout is channels-last throughout: 2D activations are (T, F, C) or
(B, T, F, C), 1D activations are (T, C) or (B, T, C). Unbatched inputs are
accepted everywhere and produce unbatched outputs.

Convolutions are stride-1 with symmetric zero padding ('same'), computed
as one BLAS matmul per kernel tap over strided slices of the padded input.
Conv matmuls run at the storage precision (float32 in production, float64
under the validation mode); statistical reductions (sums, means, variances,
losses, bias gradients) always accumulate in float64. All shapes and loop
orders are data-independent, so results are bit-reproducible per install.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import blas as _blas

from . import runtime
from .tensor import Tensor, record, storage_dtype

_CHUNK_ELEMS = 33_554_432  # cap im2col scratch at ~128 MB of float32


def _batch_chunks(b: int, per_sample: int):
    step = max(1, _CHUNK_ELEMS // max(1, per_sample))
    for i in range(0, b, step):
        yield i, min(i + step, b)


def _gemm_acc(a2: np.ndarray, b2: np.ndarray, c2: np.ndarray) -> None:
    """c2 += a2 @ b2 in place; all C-contiguous, float32 or float64.

    Runs as one accumulating BLAS call (column-major via the transposed
    views) so the output is touched once per tap instead of per temporary.
    """
    fn = _blas.sgemm if c2.dtype == np.float32 else _blas.dgemm
    res = fn(1.0, b2.T, a2.T, beta=1.0, c=c2.T, overwrite_c=True)
    if res.__array_interface__["data"][0] != c2.T.__array_interface__["data"][0]:
        c2 += a2 @ b2  # layout made BLAS copy: fall back


def _gemm_acc_at(a2: np.ndarray, g2: np.ndarray, c2: np.ndarray) -> None:
    """c2 += a2.T @ g2 in place; a2 (M,K), g2 (M,N), c2 (K,N) C-contiguous."""
    fn = _blas.sgemm if c2.dtype == np.float32 else _blas.dgemm
    res = fn(1.0, g2.T, a2.T, beta=1.0, c=c2.T, trans_b=1, overwrite_c=True)
    if res.__array_interface__["data"][0] != c2.T.__array_interface__["data"][0]:
        c2 += a2.T @ g2


def _freq_im2col(x4: np.ndarray, kf: int, pf: int, dt) -> np.ndarray:
    """(B,T,F,C) -> (B,T,F,C*kf) rows of frequency taps, zero-padded edges."""
    xf = np.pad(x4.astype(dt, copy=False), ((0, 0), (0, 0), (pf, pf), (0, 0)))
    windows = sliding_window_view(xf, kf, axis=2)  # (B,T,F,C,kf)
    b, t, f, c = x4.shape
    return np.ascontiguousarray(windows).reshape(b, t, f, c * kf)


def _tap_kernel(kernel: np.ndarray, dt) -> np.ndarray:
    """(kt,kf,Cin,Cout) -> (kt, Cin*kf, Cout) matching the im2col row order."""
    kt, kf, cin, cout = kernel.shape
    return np.ascontiguousarray(kernel.astype(dt, copy=False).transpose(0, 2, 1, 3)).reshape(
        kt, cin * kf, cout
    )


def _time_tap_ranges(kt: int, t: int):
    pt = (kt - 1) // 2
    for a in range(kt):
        shift = a - pt
        t0, t1 = max(0, -shift), t - max(0, shift)
        if t1 > t0:
            yield a, shift, t0, t1


def _conv_same(x4: np.ndarray, kernel: np.ndarray, dt) -> np.ndarray:
    """(B,T,F,Cin) x (kt,kf,Cin,Cout) -> (B,T,F,Cout), 'same' zero padding."""
    b, t, f, cin = x4.shape
    kt, kf, _, cout = kernel.shape
    pf = (kf - 1) // 2
    kmat = _tap_kernel(kernel, dt)
    out = np.zeros((b, t, f, cout), dtype=dt)
    for i0, i1 in _batch_chunks(b, t * f * cin * kf):
        patches = _freq_im2col(x4[i0:i1], kf, pf, dt)
        for a, shift, t0, t1 in _time_tap_ranges(kt, t):
            for bi in range(i0, i1):
                _gemm_acc(
                    patches[bi - i0, t0 + shift : t1 + shift].reshape(-1, cin * kf),
                    kmat[a],
                    out[bi, t0:t1].reshape(-1, cout),
                )
    return out


def _conv_kernel_grad(x4: np.ndarray, g4: np.ndarray, kt: int, kf: int) -> np.ndarray:
    """Gradient of a same-padded conv wrt its kernel: (kt,kf,Cin,Cout) f32."""
    b, t, f, cin = x4.shape
    cout = g4.shape[-1]
    pf = (kf - 1) // 2
    dk_taps = np.zeros((kt, cin * kf, cout), dtype=np.float32)
    for i0, i1 in _batch_chunks(b, t * f * cin * kf):
        patches = _freq_im2col(x4[i0:i1], kf, pf, np.float32)
        for a, shift, t0, t1 in _time_tap_ranges(kt, t):
            for bi in range(i0, i1):
                _gemm_acc_at(
                    patches[bi - i0, t0 + shift : t1 + shift].reshape(-1, cin * kf),
                    np.ascontiguousarray(g4[bi, t0:t1]).reshape(-1, cout),
                    dk_taps[a],
                )
    return np.ascontiguousarray(dk_taps.reshape(kt, cin, kf, cout).transpose(0, 2, 1, 3))


def _with_batch(data: np.ndarray, batched_ndim: int):
    if data.ndim == batched_ndim:
        return data, False
    if data.ndim == batched_ndim - 1:
        return data[None], True
    raise ValueError(f"expected rank {batched_ndim - 1} or {batched_ndim}, got rank {data.ndim}")


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-padded stride-1 2D cross-correlation.

    x: (T,F,Cin) or (B,T,F,Cin); kernel: (kt,kf,Cin,Cout) with odd kt,kf;
    bias: (Cout,) or None. Output spatial dims equal input dims.
    """
    if kernel.ndim != 4:
        raise ValueError("conv2d kernel must be (kt, kf, Cin, Cout)")
    kt, kf, cin, cout = kernel.shape
    if kt % 2 == 0 or kf % 2 == 0:
        raise ValueError("conv2d requires odd kernel sizes")
    xb, squeezed = _with_batch(x.data, 4)
    if xb.shape[-1] != cin:
        raise ValueError(f"conv2d channel mismatch: input {xb.shape[-1]}, kernel {cin}")

    out_b = _conv_same(xb, kernel.data, storage_dtype())
    if bias is not None:
        out_b += bias.data
    runtime.note_op("conv2d")
    out = Tensor(out_b[0] if squeezed else out_b)

    want_dx = x.needs_grad

    def backward(g):
        gb = g[None] if squeezed else g
        dkernel = _conv_kernel_grad(xb, gb, kt, kf)
        dbias = None
        if bias is not None:
            dbias = gb.sum(axis=(0, 1, 2), dtype=np.float64).astype(np.float32)
        dx = None
        if want_dx:
            # grad wrt input = same-padded correlation of g with the kernel
            # rotated 180 degrees spatially and transposed in channels
            kflip = np.ascontiguousarray(kernel.data[::-1, ::-1].transpose(0, 1, 3, 2))
            dxb = _conv_same(gb, kflip, np.float32)
            dx = dxb[0] if squeezed else dxb
        return dx, dkernel, dbias

    record(out, (x, kernel, bias), backward)
    return out


def conv1d_k1(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Kernel-size-1 1D convolution: a per-time-step affine map.

    x: (T,Cin) or (B,T,Cin); kernel: (Cin,Cout); bias: (Cout,) or None.
    """
    if kernel.ndim != 2:
        raise ValueError("conv1d_k1 kernel must be (Cin, Cout)")
    cin, cout = kernel.shape
    if x.data.shape[-1] != cin:
        raise ValueError(f"conv1d_k1 channel mismatch: input {x.data.shape[-1]}, kernel {cin}")
    dt = storage_dtype()
    flat = np.ascontiguousarray(x.data).reshape(-1, cin)
    out_data = (flat.astype(dt, copy=False) @ kernel.data.astype(dt, copy=False)).reshape(
        x.shape[:-1] + (cout,)
    )
    if bias is not None:
        out_data += bias.data
    runtime.note_op("conv1d_k1")
    out = Tensor(out_data)

    want_dx = x.needs_grad

    def backward(g):
        gflat = np.ascontiguousarray(g).reshape(-1, cout)
        dkernel = flat.T @ gflat
        dbias = None
        if bias is not None:
            dbias = gflat.sum(axis=0, dtype=np.float64).astype(np.float32)
        dx = (gflat @ kernel.data.T).reshape(x.shape) if want_dx else None
        return dx, dkernel, dbias

    record(out, (x, kernel, bias), backward)
    return out


def maxpool2d(x: Tensor, window: tuple[int, int]) -> Tensor:
    """Block-wise max over non-overlapping pt x pf windows (stride == window).

    Ties route the subgradient to the first maximum in (t-major, f-minor)
    scan order within the window.
    """
    pt, pf = window
    xb, squeezed = _with_batch(x.data, 4)
    b, t, f, c = xb.shape
    if t % pt or f % pf:
        raise ValueError(f"pool window {window} does not divide dims ({t}, {f})")
    tb, fb = t // pt, f // pf
    win = xb.reshape(b, tb, pt, fb, pf, c).transpose(0, 1, 3, 2, 4, 5).reshape(b, tb, fb, pt * pf, c)
    idx = win.argmax(axis=3)
    out_b = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    runtime.note_op("maxpool2d")
    out = Tensor(out_b[0] if squeezed else out_b)

    def backward(g):
        gb = g[None] if squeezed else g
        dwin = np.zeros((b, tb, fb, pt * pf, c), dtype=np.float32)
        np.put_along_axis(dwin, idx[:, :, :, None, :], gb[:, :, :, None, :], axis=3)
        dxb = dwin.reshape(b, tb, fb, pt, pf, c).transpose(0, 1, 3, 2, 4, 5).reshape(b, t, f, c)
        return (dxb[0] if squeezed else np.ascontiguousarray(dxb),)

    record(out, (x,), backward)
    return out


class BatchNormState:
    """Running per-channel statistics, updated in train mode."""

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-3):
        self.mean = np.zeros(channels, dtype=np.float32)
        self.var = np.ones(channels, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray) -> None:
        m = self.momentum
        self.mean = (m * self.mean + (1.0 - m) * batch_mean).astype(np.float32)
        self.var = (m * self.var + (1.0 - m) * batch_var).astype(np.float32)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Per-channel (last axis) batch normalization.

    Train mode normalizes by batch statistics over all leading axes and
    updates `state`; inference mode normalizes by the running statistics.
    """
    axes = tuple(range(x.ndim - 1))
    dt = storage_dtype()
    if training:
        mu64 = x.data.mean(axis=axes, dtype=np.float64)
        var64 = x.data.var(axis=axes, dtype=np.float64)
        state.update(mu64, var64)
        inv = (1.0 / np.sqrt(var64 + state.eps)).astype(dt)
        xhat = (x.data - mu64.astype(dt)) * inv
    else:
        inv = (1.0 / np.sqrt(state.var.astype(np.float64) + state.eps)).astype(dt)
        xhat = (x.data - state.mean) * inv
    out = Tensor(gamma.data * xhat + beta.data)
    runtime.note_op("batchnorm")

    n = x.size // x.shape[-1]

    def backward(g):
        # full-size temporaries stay float32; only the reductions run in f64
        dbeta = g.sum(axis=axes, dtype=np.float64).astype(np.float32)
        dgamma = (g * xhat).sum(axis=axes, dtype=np.float64).astype(np.float32)
        dxhat = g * gamma.data
        if training:
            mean_dxhat = dxhat.mean(axis=axes, keepdims=True, dtype=np.float64).astype(np.float32)
            mean_dxhat_xhat = (dxhat * xhat).mean(axis=axes, keepdims=True, dtype=np.float64).astype(np.float32)
            dxhat -= mean_dxhat
            dxhat -= xhat * mean_dxhat_xhat
        dxhat *= inv
        return dxhat, dgamma, dbeta

    record(out, (x, gamma, beta), backward)
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    runtime.note_op("relu")

    def backward(g):
        return (g * (x.data > 0.0),)

    record(out, (x,), backward)
    return out


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        s = (1.0 / (1.0 + np.exp(-x.data.astype(np.float64)))).astype(storage_dtype())
    out = Tensor(s)
    runtime.note_op("sigmoid")

    def backward(g):
        return (g * s * (1.0 - s),)

    record(out, (x,), backward)
    return out


def frequency_unwrap(x: Tensor) -> Tensor:
    """Reshape (..., T, F, C) -> (..., T, F*C) with out[t, f*C + c] = x[t, f, c].

    The time axis is conserved; frequency is folded into channels so every
    later per-time-step unit sees all frequencies.
    """
    if x.ndim < 3:
        raise ValueError("frequency_unwrap expects (..., T, F, C)")
    f, c = x.shape[-2], x.shape[-1]
    out = Tensor(np.ascontiguousarray(x.data).reshape(x.shape[:-2] + (f * c,)))
    runtime.note_op("frequency_unwrap")

    def backward(g):
        return (np.ascontiguousarray(g).reshape(x.shape),)

    record(out, (x,), backward)
    return out


def avgpool_time(x: Tensor) -> Tensor:
    """Mean over the time axis: (..., T, C) -> (..., 1, C)."""
    t = x.shape[-2]
    out = Tensor(x.data.mean(axis=-2, keepdims=True, dtype=np.float64))
    runtime.note_op("avgpool_time")

    def backward(g):
        return (np.broadcast_to(g / np.float32(t), x.shape).astype(np.float32),)

    record(out, (x,), backward)
    return out


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar (float64 accumulation)."""
    out = Tensor(x.data.sum(dtype=np.float64))
    runtime.note_op("sum_all")

    def backward(g):
        return (np.broadcast_to(g, x.shape).astype(np.float32),)

    record(out, (x,), backward)
    return out


_BCE_LO = 1e-7
_BCE_HI = 1.0 - 1e-7


def bce_loss(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1 - 1e-7].

    `target` is a constant array of 0/1 values with pred's shape.
    """
    y = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if y.shape != pred.data.shape:
        raise ValueError(f"bce_loss shape mismatch: pred {pred.data.shape}, target {y.shape}")
    p = np.clip(pred.data.astype(np.float64), _BCE_LO, _BCE_HI)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean()
    out = Tensor(loss)
    runtime.note_op("bce_loss")

    n = p.size
    inside = (pred.data.astype(np.float64) > _BCE_LO) & (pred.data.astype(np.float64) < _BCE_HI)

    def backward(g):
        dp = (p - y) / (p * (1.0 - p) * n) * inside
        return (np.float64(g) * dp).astype(np.float32),

    record(out, (pred,), backward)
    return out
