"""Circular cross-correlation kernels for channelized field stacks.

Layout is (batch, channel, *spatial) with weights (out_ch, in_ch, *kernel).
Spatial indices wrap modulo N on every axis, which keeps the operator an
exact circulant: the adjoint used for input gradients is just the forward
kernel with spatially flipped, channel-transposed weights.

The 3-tap kernels are JIT-compiled with numba when available (the
architecture default); any other kernel size, and environments without
numba, fall back to a windows+tensordot path. Both paths are checked against
a naive triple-loop oracle in the tests.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco


def pad_wrap(x: np.ndarray, spatial_dims: int, pad: int) -> np.ndarray:
    width = [(0, 0)] * (x.ndim - spatial_dims) + [(pad, pad)] * spatial_dims
    return np.pad(x, width, mode="wrap")


@njit(cache=True)
def _fwd2d_k3(xp, w, bias, out):
    B, C, Hp, Wp = xp.shape
    O = w.shape[0]
    H = Hp - 2
    Wd = Wp - 2
    for b in range(B):
        for o in range(O):
            for i in range(H):
                row = out[b, o, i]
                for j in range(Wd):
                    row[j] = bias[o]
                for c in range(C):
                    for u in range(3):
                        xr = xp[b, c, i + u]
                        w0 = w[o, c, u, 0]
                        w1 = w[o, c, u, 1]
                        w2 = w[o, c, u, 2]
                        for j in range(Wd):
                            row[j] += w0 * xr[j] + w1 * xr[j + 1] + w2 * xr[j + 2]


@njit(cache=True)
def _grad2d_k3(xp, dy, gw, gb):
    B, C, Hp, Wp = xp.shape
    O = dy.shape[1]
    H = Hp - 2
    Wd = Wp - 2
    for b in range(B):
        for o in range(O):
            s = 0.0
            for i in range(H):
                dyr = dy[b, o, i]
                for j in range(Wd):
                    s += dyr[j]
            gb[o] += s
            for c in range(C):
                for u in range(3):
                    s0 = 0.0
                    s1 = 0.0
                    s2 = 0.0
                    for i in range(H):
                        xr = xp[b, c, i + u]
                        dyr = dy[b, o, i]
                        for j in range(Wd):
                            s0 += dyr[j] * xr[j]
                            s1 += dyr[j] * xr[j + 1]
                            s2 += dyr[j] * xr[j + 2]
                    gw[o, c, u, 0] += s0
                    gw[o, c, u, 1] += s1
                    gw[o, c, u, 2] += s2


@njit(cache=True)
def _fwd3d_k3(xp, w, bias, out):
    B, C, Dp, Hp, Wp = xp.shape
    O = w.shape[0]
    D = Dp - 2
    H = Hp - 2
    Wd = Wp - 2
    for b in range(B):
        for o in range(O):
            for z in range(D):
                for i in range(H):
                    row = out[b, o, z, i]
                    for j in range(Wd):
                        row[j] = bias[o]
                    for c in range(C):
                        for t in range(3):
                            for u in range(3):
                                xr = xp[b, c, z + t, i + u]
                                w0 = w[o, c, t, u, 0]
                                w1 = w[o, c, t, u, 1]
                                w2 = w[o, c, t, u, 2]
                                for j in range(Wd):
                                    row[j] += w0 * xr[j] + w1 * xr[j + 1] + w2 * xr[j + 2]


@njit(cache=True)
def _grad3d_k3(xp, dy, gw, gb):
    B, C, Dp, Hp, Wp = xp.shape
    O = dy.shape[1]
    D = Dp - 2
    H = Hp - 2
    Wd = Wp - 2
    for b in range(B):
        for o in range(O):
            s = 0.0
            for z in range(D):
                for i in range(H):
                    dyr = dy[b, o, z, i]
                    for j in range(Wd):
                        s += dyr[j]
            gb[o] += s
            for c in range(C):
                for t in range(3):
                    for u in range(3):
                        s0 = 0.0
                        s1 = 0.0
                        s2 = 0.0
                        for z in range(D):
                            for i in range(H):
                                xr = xp[b, c, z + t, i + u]
                                dyr = dy[b, o, z, i]
                                for j in range(Wd):
                                    s0 += dyr[j] * xr[j]
                                    s1 += dyr[j] * xr[j + 1]
                                    s2 += dyr[j] * xr[j + 2]
                        gw[o, c, t, u, 0] += s0
                        gw[o, c, t, u, 1] += s1
                        gw[o, c, t, u, 2] += s2


def _fwd_tensordot(xp: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    sd = w.ndim - 2
    win = sliding_window_view(xp, w.shape[2:], axis=tuple(range(2, 2 + sd)))
    # contract in_ch + kernel axes: win (B, C, *sp, *k) x w (O, C, *k)
    axes_win = [1] + list(range(2 + sd, 2 + 2 * sd))
    axes_w = [1] + list(range(2, 2 + sd))
    y = np.tensordot(win, w, axes=(axes_win, axes_w))
    y = np.moveaxis(y, -1, 1)
    return y + bias.reshape((1, -1) + (1,) * sd)


def conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Circular same-size cross-correlation; x is (B, C_in, *spatial)."""
    sd = w.ndim - 2
    k = w.shape[2]
    if x.ndim != 2 + sd:
        raise ValueError(f"input rank {x.ndim} does not match kernel rank {w.ndim}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input channels {x.shape[1]} != kernel in-channels {w.shape[1]}")
    if k % 2 == 0:
        raise ValueError(f"kernel extent must be odd, got {k}")
    xp = pad_wrap(np.ascontiguousarray(x, dtype=np.float64), sd, k // 2)
    return conv_forward_padded(xp, w, bias)


def conv_forward_padded(xp: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Forward pass on an already wrap-padded input (hot-path entry)."""
    sd = w.ndim - 2
    k = w.shape[2]
    w = np.ascontiguousarray(w, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    if HAVE_NUMBA and k == 3 and all(s == 3 for s in w.shape[2:]):
        out_shape = (xp.shape[0], w.shape[0]) + tuple(s - 2 for s in xp.shape[2:])
        out = np.empty(out_shape)
        (_fwd2d_k3 if sd == 2 else _fwd3d_k3)(xp, w, bias, out)
        return out
    return _fwd_tensordot(xp, w, bias)


def conv_backward_input(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the conv input: correlate dy with the flipped,
    channel-transposed kernel (exact adjoint on the torus)."""
    sd = w.ndim - 2
    flip = w[(slice(None), slice(None)) + (slice(None, None, -1),) * sd]
    w_adj = np.ascontiguousarray(np.swapaxes(flip, 0, 1))
    zero = np.zeros(w_adj.shape[0])
    return conv_forward(dy, w_adj, zero)


def conv_backward_params(
    xp: np.ndarray, dy: np.ndarray, kernel_shape: tuple[int, ...]
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. weights and bias from the padded input and dy."""
    sd = len(kernel_shape)
    O = dy.shape[1]
    C = xp.shape[1]
    gb = np.zeros(O)
    gw = np.zeros((O, C) + kernel_shape)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    if HAVE_NUMBA and all(s == 3 for s in kernel_shape):
        (_grad2d_k3 if sd == 2 else _grad3d_k3)(xp, dy, gw, gb)
        return gw, gb
    win = sliding_window_view(xp, kernel_shape, axis=tuple(range(2, 2 + sd)))
    # sum over batch + spatial: win (B, C, *sp, *k) x dy (B, O, *sp)
    axes_win = [0] + list(range(2, 2 + sd))
    axes_dy = [0] + list(range(2, 2 + sd))
    gw_t = np.tensordot(win, dy, axes=(axes_win, axes_dy))  # (C, *k, O)
    gw[:] = np.moveaxis(gw_t, -1, 0)
    gb[:] = dy.sum(axis=tuple(axes_dy))
    return gw, gb
