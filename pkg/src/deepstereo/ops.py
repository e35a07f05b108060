"""Differentiable operations for the stereo network.

Convolutions are dimension-agnostic: one windowed-correlation core serves
conv2d and conv3d, and one scatter-add core serves the transposed variant
and the convolution input-gradient (they are adjoint maps of each other).

Output extent for a correlation is ``floor((n + 2*pad - k) / stride) + 1``;
when the division is not exact the trailing input rows simply fall outside
every window and receive zero gradient.  A transposed convolution produces
exactly ``stride * (n - 1) + k - 2*pad`` along each axis.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .tensor import DimensionError, Tensor


def _tuplize(value, n: int, name: str) -> Tuple[int, ...]:
    if isinstance(value, (tuple, list)):
        if len(value) != n:
            raise DimensionError(f"{name} must have {n} entries, got {value}")
        return tuple(int(v) for v in value)
    return (int(value),) * n


def _out_extent(n: int, k: int, stride: int, pad: int) -> int:
    out = (n + 2 * pad - k) // stride + 1
    if out < 1:
        raise DimensionError(
            f"kernel {k} with pad {pad} does not fit extent {n}")
    return out


def _windows(x: np.ndarray, kernel: Tuple[int, ...],
             stride: Tuple[int, ...], pad: Tuple[int, ...]) -> np.ndarray:
    """Strided sliding windows of ``x`` (C, *spatial) -> (C, *out, *kernel)."""
    nd = len(kernel)
    if any(p for p in pad):
        width = ((0, 0),) + tuple((p, p) for p in pad)
        x = np.pad(x, width)
    axes = tuple(range(1, 1 + nd))
    win = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=axes)
    index = (slice(None),) + tuple(slice(None, None, s) for s in stride)
    return win[index]


def _correlate(x: np.ndarray, w: np.ndarray, stride: Tuple[int, ...],
               pad: Tuple[int, ...]) -> np.ndarray:
    """Cross-correlation core: (C, *n) x (K, C, *k) -> (K, *out)."""
    nd = x.ndim - 1
    win = _windows(x, w.shape[2:], stride, pad)
    # contract channel + kernel axes; result (*out, K) -> (K, *out)
    x_axes = [0] + list(range(1 + nd, 1 + 2 * nd))
    w_axes = list(range(1, 2 + nd))
    out = np.tensordot(win, w, axes=(x_axes, w_axes))
    return np.ascontiguousarray(np.moveaxis(out, -1, 0))


def _correlate_weight_grad(x: np.ndarray, gout: np.ndarray,
                           kernel: Tuple[int, ...], stride: Tuple[int, ...],
                           pad: Tuple[int, ...]) -> np.ndarray:
    """Gradient of a correlation w.r.t. its weight: -> (K, C, *k)."""
    nd = x.ndim - 1
    win = _windows(x, kernel, stride, pad)  # (C, *out, *k)
    out_axes = list(range(1, 1 + nd))
    g_axes = list(range(1, 1 + nd))
    # contract over output positions: (K, *out) x (C, *out, *k) -> (K, C, *k)
    return np.tensordot(gout, win, axes=(g_axes, out_axes))


def _scatter(y: np.ndarray, w: np.ndarray, stride: Tuple[int, ...],
             pad: Tuple[int, ...], out_spatial: Tuple[int, ...]) -> np.ndarray:
    """Adjoint of :func:`_correlate`.

    ``out[co, stride*i + a - pad] += y[ci, i] * w[ci, co, a]`` for every
    kernel offset ``a``; positions falling outside ``out_spatial`` are
    dropped (they correspond to the correlation's zero padding).
    """
    nd = y.ndim - 1
    kernel = w.shape[2:]
    m = y.shape[1:]
    out = np.zeros((w.shape[1],) + tuple(out_spatial), dtype=y.dtype)
    contrib = np.tensordot(w, y, axes=([0], [0]))  # (Co, *k, *m)
    for offset in np.ndindex(*kernel):
        src = contrib[(slice(None), *offset)]  # (Co, *m)
        out_slices = []
        in_slices = []
        empty = False
        for j in range(nd):
            base = offset[j] - pad[j]
            s = stride[j]
            # smallest i with base + s*i >= 0, largest with position in range
            i0 = max(0, (-base + s - 1) // s)
            i1 = min(m[j] - 1, (out_spatial[j] - 1 - base) // s)
            if i1 < i0:
                empty = True
                break
            in_slices.append(slice(i0, i1 + 1))
            out_slices.append(slice(base + s * i0, base + s * i1 + 1, s))
        if not empty:
            out[(slice(None), *out_slices)] += src[(slice(None), *in_slices)]
    return out


def _check_conv_shapes(x: Tensor, w: Tensor, b: Tensor, nd: int,
                       transposed: bool) -> None:
    if x.ndim != nd + 1:
        raise DimensionError(
            f"input must be {nd + 1}-d (channels + {nd} spatial axes), "
            f"got shape {x.shape}")
    if w.ndim != nd + 2:
        raise DimensionError(
            f"weight must be {nd + 2}-d, got shape {w.shape}")
    if x.shape[0] != w.shape[0 if transposed else 1]:
        axis = "weight axis 0" if transposed else "weight axis 1"
        raise DimensionError(
            f"input has {x.shape[0]} channels but {axis} is "
            f"{w.shape[0 if transposed else 1]}")
    out_ch = w.shape[1] if transposed else w.shape[0]
    if b.shape != (out_ch,):
        raise DimensionError(
            f"bias shape {b.shape} does not match {out_ch} output channels")


def _conv_nd(x: Tensor, w: Tensor, b: Tensor, stride, pad, nd: int,
             odd_kernel: bool) -> Tensor:
    _check_conv_shapes(x, w, b, nd, transposed=False)
    kernel = w.shape[2:]
    if odd_kernel and any(k % 2 == 0 for k in kernel):
        raise DimensionError(f"kernel extents must be odd, got {kernel}")
    stride = _tuplize(stride, nd, "stride")
    pad = _tuplize(pad, nd, "pad")
    if any(s < 1 for s in stride) or any(p < 0 for p in pad):
        raise DimensionError(f"invalid stride {stride} or pad {pad}")

    in_spatial = x.shape[1:]
    for n, k, s, p in zip(in_spatial, kernel, stride, pad):
        _out_extent(n, k, s, p)

    y = _correlate(x.data, w.data, stride, pad)
    y += b.data.reshape((-1,) + (1,) * nd)
    out = Tensor._from_op(y, (x, w, b), f"conv{nd}d")
    if out.requires_grad:
        def _backward(g):
            if b.requires_grad:
                b._accumulate(g.sum(axis=tuple(range(1, nd + 1))))
            if w.requires_grad:
                w._accumulate(
                    _correlate_weight_grad(x.data, g, kernel, stride, pad))
            if x.requires_grad:
                gx = _scatter(g, w.data, stride, pad, in_spatial)
                x._accumulate(gx)
        out._backward = _backward
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=1, pad=0) -> Tensor:
    """Cross-correlate (C,H,W) with (K,C,kh,kw) -> (K,H',W')."""
    return _conv_nd(x, w, b, stride, pad, nd=2, odd_kernel=True)


def conv3d(x: Tensor, w: Tensor, b: Tensor, stride=1, pad=0) -> Tensor:
    """Cross-correlate (C,D,H,W) with (K,C,kd,kh,kw) -> (K,D',H',W')."""
    return _conv_nd(x, w, b, stride, pad, nd=3, odd_kernel=True)


def transposed_conv3d(x: Tensor, w: Tensor, b: Tensor, stride=1,
                      pad=0) -> Tensor:
    """Adjoint of conv3d: (C,D,H,W) x (C,K,kd,kh,kw) -> (K,D'',H'',W'').

    Output extent is ``stride*(n-1) + k - 2*pad`` per axis.  With weight
    ``w`` of shape (K,C,*k), ``<conv3d(x, w), y> == <x, transposed_conv3d(y, w)>``.
    """
    nd = 3
    _check_conv_shapes(x, w, b, nd, transposed=True)
    stride = _tuplize(stride, nd, "stride")
    pad = _tuplize(pad, nd, "pad")
    if any(s not in (1, 2) for s in stride):
        raise DimensionError(f"transposed conv stride must be 1 or 2, got {stride}")
    kernel = w.shape[2:]
    out_spatial = tuple(s * (n - 1) + k - 2 * p for n, k, s, p in
                        zip(x.shape[1:], kernel, stride, pad))
    if any(e < 1 for e in out_spatial):
        raise DimensionError(
            f"transposed conv geometry yields empty output {out_spatial}")

    y = _scatter(x.data, w.data, stride, pad, out_spatial)
    y += b.data.reshape((-1,) + (1,) * nd)
    out = Tensor._from_op(y, (x, w, b), "tconv3d")
    if out.requires_grad:
        def _backward(g):
            if b.requires_grad:
                b._accumulate(g.sum(axis=tuple(range(1, nd + 1))))
            if w.requires_grad:
                # dW[ci, co, a] = sum_i x[ci, i] * g[co, stride*i + a - pad]
                w._accumulate(
                    _correlate_weight_grad(g, x.data, kernel, stride, pad))
            if x.requires_grad:
                x._accumulate(_correlate(g, np.ascontiguousarray(w.data),
                                         stride, pad))
        out._backward = _backward
    return out


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor,
                  eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over all spatial axes.

    ``y[c] = (x[c] - mean(x[c])) / sqrt(var(x[c]) + eps) * gamma[c] + beta[c]``
    with population variance.
    """
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"gamma/beta must have shape ({c},), got {gamma.shape}/{beta.shape}")
    if x.size // c < 1:
        raise DimensionError("instance norm needs at least one spatial element")
    spatial = tuple(range(1, x.ndim))
    mu = x.data.mean(axis=spatial, keepdims=True)
    var = x.data.var(axis=spatial, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    gshape = (c,) + (1,) * (x.ndim - 1)
    y = xhat * gamma.data.reshape(gshape) + beta.data.reshape(gshape)
    out = Tensor._from_op(y, (x, gamma, beta), "instance_norm")
    if out.requires_grad:
        def _backward(g):
            if beta.requires_grad:
                beta._accumulate(g.sum(axis=spatial))
            if gamma.requires_grad:
                gamma._accumulate((g * xhat).sum(axis=spatial))
            if x.requires_grad:
                gx_hat = g * gamma.data.reshape(gshape)
                m1 = gx_hat.mean(axis=spatial, keepdims=True)
                m2 = (gx_hat * xhat).mean(axis=spatial, keepdims=True)
                x._accumulate(inv_std * (gx_hat - m1 - xhat * m2))
        out._backward = _backward
    return out


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    mask = x.data >= 0
    y = np.where(mask, x.data, slope * x.data)
    out = Tensor._from_op(y.astype(x.dtype), (x,), "leaky_relu")
    if out.requires_grad:
        def _backward(g):
            x._accumulate(np.where(mask, g, slope * g).astype(x.dtype))
        out._backward = _backward
    return out


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def log_softmax(x: Tensor, axis: int = 0) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - log_z
    out = Tensor._from_op(y, (x,), "log_softmax")
    if out.requires_grad:
        softmax_y = np.exp(y)

        def _backward(g):
            x._accumulate(g - softmax_y * g.sum(axis=axis, keepdims=True))
        out._backward = _backward
    return out


def softmax(x: Tensor, axis: int = 0) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._from_op(y, (x,), "softmax")
    if out.requires_grad:
        def _backward(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (g - dot))
        out._backward = _backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    axis = _check_axis(tensors[0], axis)
    y = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._from_op(y, tensors, "concat")
    if out.requires_grad:
        extents = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + extents)

        def _backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    index = (slice(None),) * axis + (slice(lo, hi),)
                    t._accumulate(np.ascontiguousarray(g[index]))
        out._backward = _backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along a fresh axis inserted at ``axis``."""
    expanded = [t.reshape(t.shape[:axis] + (1,) + t.shape[axis:])
                for t in tensors]
    return concat(expanded, axis=axis)


def pad_zeros(x: Tensor, width: Sequence[Tuple[int, int]]) -> Tensor:
    """Zero-pad; ``width`` is one (before, after) pair per axis."""
    if len(width) != x.ndim:
        raise DimensionError(
            f"pad needs {x.ndim} width pairs, got {len(width)}")
    y = np.pad(x.data, tuple(width))
    out = Tensor._from_op(y, (x,), "pad")
    if out.requires_grad:
        index = tuple(slice(lo, lo + n) for (lo, _), n in zip(width, x.shape))

        def _backward(g):
            x._accumulate(np.ascontiguousarray(g[index]))
        out._backward = _backward
    return out


def shift_right(x: Tensor, offset: int) -> Tensor:
    """Shift content along the last axis toward larger indices, zero fill.

    ``out[..., i] = x[..., i - offset]`` for ``i >= offset``, else 0.
    """
    if offset < 0 or offset > x.shape[-1]:
        raise DimensionError(
            f"shift offset {offset} out of range for width {x.shape[-1]}")
    if offset == 0:
        return x
    width = [(0, 0)] * (x.ndim - 1) + [(offset, 0)]
    padded = pad_zeros(x, width)
    index = (slice(None),) * (x.ndim - 1) + (slice(0, x.shape[-1]),)
    return padded[index]


def crop_to(x: Tensor, spatial: Tuple[int, ...]) -> Tensor:
    """Crop trailing entries of the spatial axes (all but axis 0) to ``spatial``."""
    if x.shape[1:] == tuple(spatial):
        return x
    index = (slice(None),) + tuple(slice(0, e) for e in spatial)
    return x[index]
