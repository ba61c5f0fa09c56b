"""Convolution and pooling primitives over ``[batch, channels, time]`` tensors."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor


def conv_output_length(length: int, width: int, stride: int = 1, padding: int = 0, dilation: int = 1) -> int:
    span = dilation * (width - 1) + 1
    return (length + 2 * padding - span) // stride + 1


def _windows(xp: np.ndarray, width: int, stride: int, dilation: int, t_out: int) -> np.ndarray:
    span = dilation * (width - 1) + 1
    win = sliding_window_view(xp, span, axis=2)[:, :, ::stride, ::dilation]
    return win[:, :, :t_out, :]


def _conv_forward(xp: np.ndarray, w: np.ndarray, stride: int, dilation: int, t_out: int) -> np.ndarray:
    win = _windows(xp, w.shape[2], stride, dilation, t_out)  # [B, Cin, T', W]
    out = np.tensordot(win, w, axes=([1, 3], [1, 2]))  # [B, T', Cout]
    return np.ascontiguousarray(out.transpose(0, 2, 1))


def _conv_input_adjoint(g: np.ndarray, w: np.ndarray, stride: int, dilation: int, padded_len: int) -> np.ndarray:
    """Scatter ``g`` [B, Cout, T'] back onto the padded input grid [B, Cin, Tp]."""
    b, _, t_out = g.shape
    cin, width = w.shape[1], w.shape[2]
    if stride == 1:
        # full correlation with the flipped kernel reuses the fast forward path
        edge = dilation * (width - 1)
        gp = np.pad(g, ((0, 0), (0, 0), (edge, edge)))
        return _conv_forward(gp, w[:, :, ::-1].transpose(1, 0, 2), 1, dilation, padded_len)
    gx = np.zeros((b, cin, padded_len))
    cols = np.tensordot(g, w, axes=([1], [0]))  # [B, T', Cin, W]
    last = stride * (t_out - 1) + 1
    for k in range(width):
        off = k * dilation
        gx[:, :, off : off + last : stride] += cols[:, :, :, k].transpose(0, 2, 1)
    return gx


def _conv_kernel_grad(g: np.ndarray, xp: np.ndarray, width: int, stride: int, dilation: int) -> np.ndarray:
    win = _windows(xp, width, stride, dilation, g.shape[2])
    return np.tensordot(g, win, axes=([0, 2], [0, 2]))  # [Cout, Cin, W]


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """Cross-correlation of ``x`` [B, Cin, T] with ``weight`` [Cout, Cin, W]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects input [B,Cin,T] and kernel [Cout,Cin,W], got {x.shape} and {weight.shape}")
    b, cin, t = x.shape
    cout, kcin, width = weight.shape
    if kcin != cin:
        raise ShapeError(f"conv1d channel mismatch: input axis 1 has {cin}, kernel axis 1 has {kcin}")
    if stride < 1:
        raise ShapeError(f"conv1d stride must be >= 1, got {stride}")
    span = dilation * (width - 1) + 1
    if span > t + 2 * padding:
        raise ShapeError(f"conv1d kernel span {span} (axis 2) exceeds padded input length {t + 2 * padding} (axis 2)")
    t_out = conv_output_length(t, width, stride, padding, dilation)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    out = _conv_forward(xp, weight.data, stride, dilation, t_out)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def bw(g):
        gx = gw = gb = None
        if x.requires_grad:
            gxp = _conv_input_adjoint(g, weight.data, stride, dilation, xp.shape[2])
            gx = gxp[:, :, padding : padding + t] if padding else gxp
        if weight.requires_grad:
            gw = _conv_kernel_grad(g, xp, width, stride, dilation)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, bw)


def conv_transpose1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """Adjoint of :func:`conv1d`.

    ``weight`` has the conv1d layout [Cx, Cout, W]: it is the kernel of the forward
    convolution that maps Cout channels to the Cx channels of ``x``. The output
    length is ``(T - 1) * stride + span - 2 * padding + output_padding``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv_transpose1d expects input [B,C,T] and kernel [C,Cout,W], got {x.shape} and {weight.shape}")
    b, cx, t = x.shape
    kcx, cout, width = weight.shape
    if kcx != cx:
        raise ShapeError(f"conv_transpose1d channel mismatch: input axis 1 has {cx}, kernel axis 0 has {kcx}")
    if stride < 1 or not 0 <= output_padding < max(stride, dilation):
        raise ShapeError(f"conv_transpose1d needs stride >= 1 and 0 <= output_padding < stride, got {stride}, {output_padding}")
    span = dilation * (width - 1) + 1
    t_out = (t - 1) * stride + span - 2 * padding + output_padding
    if t_out <= 0:
        raise ShapeError(f"conv_transpose1d output length {t_out} is not positive (axis 2)")
    padded_len = t_out + 2 * padding
    full = _conv_input_adjoint(x.data, weight.data, stride, dilation, padded_len)
    out = full[:, :, padding : padding + t_out]
    if bias is not None:
        out = out + bias.data[None, :, None]

    def bw(g):
        gx = gw = gb = None
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding))) if padding else g
        if x.requires_grad:
            gx = _conv_forward(gp, weight.data, stride, dilation, t)
        if weight.requires_grad:
            gw = _conv_kernel_grad(x.data, gp, width, stride, dilation)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(np.ascontiguousarray(out), parents, bw)


def avg_pool1d(x: Tensor, size: int) -> Tensor:
    b, c, t = x.shape
    if t % size:
        raise ShapeError(f"avg_pool1d: length {t} (axis 2) not divisible by {size}")
    return x.reshape(b, c, t // size, size).mean(axis=3)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    b, c, t = x.shape
    return (x.reshape(b, c, t, 1) * np.ones((1, 1, 1, factor))).reshape(b, c, t * factor)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` laid out [out, in]."""
    out = x @ weight.T
    return out if bias is None else out + bias


def binary_cross_entropy_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean elementwise BCE, written with log-sigmoid for stability."""
    targets = np.asarray(targets, dtype=np.float64)
    ll = logits.log_sigmoid() * targets + (-logits).log_sigmoid() * (1.0 - targets)
    return -ll.mean()
