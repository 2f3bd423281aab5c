"""Pure-NumPy fallback for the hot kernels.

All functions operate on single rank-3 feature maps (channels, height,
width).  im2col/col2im are the workhorses behind every convolution and
transposed convolution; bilinear resampling uses the corner-aligned
convention throughout.
"""

import numpy as np

NAME = "numpy"


def conv_out_size(size, kernel, stride, pad):
    return (size + 2 * pad - kernel) // stride + 1


def im2col(x, kh, kw, stride, pad):
    """Unfold x (C,H,W) into columns of shape (C*kh*kw, oh*ow)."""
    c, h, w = x.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    if pad > 0:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    s0, s1, s2 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(c, kh, kw, oh, ow),
        strides=(s0, s1, s2, s1 * stride, s2 * stride),
        writeable=False,
    )
    return np.ascontiguousarray(windows).reshape(c * kh * kw, oh * ow)


def col2im(cols, c, h, w, kh, kw, stride, pad):
    """Scatter-add columns back onto a (C,H,W) map; exact adjoint of im2col."""
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    out = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, oh, ow)
    for ky in range(kh):
        y_hi = ky + stride * oh
        for kx in range(kw):
            x_hi = kx + stride * ow
            out[:, ky:y_hi:stride, kx:x_hi:stride] += cols[:, ky, kx]
    if pad > 0:
        out = out[:, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(out)


def _interp_matrix(n_out, n_in, dtype):
    # corner-aligned weights; rows sum to 1 exactly for constant preservation
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1 or n_out == 1:
        m[:, 0] = 1.0
        return m
    scale = (n_in - 1) / (n_out - 1)
    for i in range(n_out):
        src = i * scale
        lo = min(int(np.floor(src)), n_in - 2)
        frac = src - lo
        m[i, lo] = 1.0 - frac
        m[i, lo + 1] += frac
    return m


def bilinear_resize(x, out_h, out_w):
    """Corner-aligned bilinear resampling of x (C,H,W) to (C,out_h,out_w)."""
    _, h, w = x.shape
    my = _interp_matrix(out_h, h, x.dtype)
    mx = _interp_matrix(out_w, w, x.dtype)
    # separable: rows first, then columns, both via BLAS
    t = np.einsum("oh,chw->cow", my, x, optimize=True)
    return np.ascontiguousarray(np.einsum("pw,cow->cop", mx, t, optimize=True))


def bilinear_resize_grad(dy, in_h, in_w):
    """Adjoint of bilinear_resize: maps dy (C,oh,ow) back to (C,in_h,in_w)."""
    _, oh, ow = dy.shape
    my = _interp_matrix(oh, in_h, dy.dtype)
    mx = _interp_matrix(ow, in_w, dy.dtype)
    t = np.einsum("oh,cop->chp", my, dy, optimize=True)
    return np.ascontiguousarray(np.einsum("pw,chp->chw", mx, t, optimize=True))
