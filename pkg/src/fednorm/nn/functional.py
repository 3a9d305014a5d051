"""Forward/backward pairs for the layers used by the 2D U-Net.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes ``(dout, cache)``.  Activations are channels-last, ``(N, H, W, C)``,
which keeps the im2col GEMMs contiguous.  Weights use the usual layouts:
``(Cout, Cin, k, k)`` for convolutions and ``(Cin, Cout, 2, 2)`` for the
transposed convolution.  All functions keep the dtype of their inputs, so
float64 arrays can be pushed through for gradient checking.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col3(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (N, H, W, C, 3, 3)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, 9 * c)


def conv2d_forward(x, w, b, need_dx=True):
    """Stride-1 cross-correlation, 'same' zero padding (a 3x3 kernel pads by 1).

    ``need_dx=False`` lets the first layer skip the input gradient.
    """
    n, h, wd, c = x.shape
    cout, cin, k, k2 = w.shape
    if cin != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, weight expects {cin}")
    if k != k2 or k not in (1, 3):
        raise ValueError(f"conv2d supports 1x1 and 3x3 kernels, got {k}x{k2}")
    cols = x.reshape(-1, c) if k == 1 else _im2col3(x)
    wm = w.transpose(2, 3, 1, 0).reshape(k * k * c, cout)
    y = cols @ wm
    y += b
    return y.reshape(n, h, wd, cout), (cols, x.shape, w, need_dx)


def conv2d_backward(dout, cache):
    cols, (n, h, wd, c), w, need_dx = cache
    cout, _, k, _ = w.shape
    dy = dout.reshape(-1, cout)
    dw = (dy.T @ cols).reshape(cout, k, k, c).transpose(0, 3, 1, 2)
    db = dy.sum(axis=0)
    if not need_dx:
        return None, dw, db
    if k == 1:
        dx = (dy @ w.reshape(cout, c)).reshape(n, h, wd, c)
    else:
        # Input gradient is a 'same' correlation of dout with the flipped kernel.
        wflip = w[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(9 * cout, c)
        dx = (_im2col3(dout) @ wflip).reshape(n, h, wd, c)
    return dx, dw, db


def default_groups(channels: int) -> int:
    return min(8, channels)


def _group_mean(x3, groups):
    """Per-(sample, group) mean of a (N, HW, C) array, broadcast back to (N, 1, C).

    Reductions go through a ones-vector GEMM; numpy's strided reduce over
    (HW, C/G) is an order of magnitude slower for small C.
    """
    n, hw, c = x3.shape
    csum = np.ones(hw, dtype=x3.dtype) @ x3  # (N, C)
    gmean = csum.reshape(n, groups, c // groups).sum(axis=2) / (hw * (c // groups))
    return np.repeat(gmean, c // groups, axis=1)[:, None, :]


def groupnorm_forward(x, gamma, beta, groups, eps=1e-5):
    n, h, w, c = x.shape
    if c % groups:
        raise ValueError(f"groupnorm: {c} channels not divisible by {groups} groups")
    x3 = x.reshape(n, h * w, c)
    centered = x3 - _group_mean(x3, groups)
    var = _group_mean(centered * centered, groups)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
    xhat = (centered * inv_std).reshape(x.shape)
    out = xhat * gamma + beta
    return out, (xhat, inv_std, gamma, groups)


def groupnorm_backward(dout, cache):
    xhat, inv_std, gamma, groups = cache
    n, h, w, c = xhat.shape
    d2 = dout.reshape(-1, c)
    ones = np.ones(d2.shape[0], dtype=dout.dtype)
    dgamma = ones @ (d2 * xhat.reshape(-1, c))
    dbeta = ones @ d2
    dxhat = (dout * gamma).reshape(n, h * w, c)
    xh = xhat.reshape(n, h * w, c)
    dx = inv_std * (dxhat - _group_mean(dxhat, groups) - xh * _group_mean(dxhat * xh, groups))
    return dx.reshape(xhat.shape), dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def sigmoid_forward(x):
    # exp of a non-positive argument only, so no overflow for large |x|
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    # saturated values are pulled back inside the open interval (0, 1)
    fi = np.finfo(out.dtype)
    np.clip(out, fi.tiny, 1.0 - fi.epsneg, out=out)
    return out, out


def sigmoid_backward(dout, out):
    return dout * out * (1.0 - out)


def maxpool2_forward(x):
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(n, h // 2, w // 2, c, 4)
    # argmax returns the first maximum: row-major first-wins on ties
    idx = win.argmax(axis=4)
    out = np.take_along_axis(win, idx[..., None], axis=4)[..., 0]
    return out, (x.shape, idx)


def maxpool2_backward(dout, cache):
    (n, h, w, c), idx = cache
    dwin = (idx[..., None] == np.arange(4)) * dout[..., None]
    dx = dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return dx.reshape(n, h, w, c).astype(dout.dtype, copy=False)


def upconv2_forward(x, w, b):
    """2x2 stride-2 transposed convolution; ``w`` has shape (Cin, Cout, 2, 2)."""
    n, h, wd, c = x.shape
    cin, cout, kh, kw = w.shape
    if cin != c or (kh, kw) != (2, 2):
        raise ValueError(f"upconv2 shape mismatch: input {x.shape}, weight {w.shape}")
    xm = x.reshape(-1, c)
    wm = w.transpose(0, 2, 3, 1).reshape(cin, 4 * cout)
    y = (xm @ wm).reshape(n, h, wd, 2, 2, cout)
    out = y.transpose(0, 1, 3, 2, 4, 5).reshape(n, 2 * h, 2 * wd, cout)
    out += b
    return out, (xm, x.shape, w)


def upconv2_backward(dout, cache):
    xm, (n, h, wd, c), w = cache
    cin, cout = w.shape[:2]
    dy = dout.reshape(n, h, 2, wd, 2, cout).transpose(0, 1, 3, 2, 4, 5).reshape(-1, 4 * cout)
    wm = w.transpose(0, 2, 3, 1).reshape(cin, 4 * cout)
    dw = (xm.T @ dy).reshape(cin, 2, 2, cout).transpose(0, 3, 1, 2)
    db = dout.sum(axis=(0, 1, 2))
    dx = (dy @ wm.T).reshape(n, h, wd, c)
    return dx, dw, db


def dropout_forward(x, p, rng, training):
    """Inverted dropout: survivors are scaled by 1/(1-p) so inference is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    mask = keep * x.dtype.type(1.0 / (1.0 - p))
    return x * mask, mask


def dropout_backward(dout, mask):
    if mask is None:
        return dout
    return dout * mask
