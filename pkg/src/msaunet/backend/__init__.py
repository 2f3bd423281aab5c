"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
pure-NumPy fallback is used.  Set MSAUNET_BACKEND=python or =compiled to
force one (forcing "compiled" raises if the extension is not built).
"""

import os

from . import numpy_kernels

_requested = os.environ.get("MSAUNET_BACKEND", "").strip().lower()
if _requested not in ("", "python", "compiled"):
    raise ImportError(f"MSAUNET_BACKEND must be 'python' or 'compiled', got {_requested!r}")

_impl = None
if _requested != "python":
    try:
        from . import _kernels as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = None
if _impl is None:
    _impl = numpy_kernels

conv_out_size = numpy_kernels.conv_out_size


def backend_name():
    return _impl.NAME


def im2col(x, kh, kw, stride, pad):
    return _impl.im2col(x, kh, kw, stride, pad)


def col2im(cols, c, h, w, kh, kw, stride, pad):
    return _impl.col2im(cols, c, h, w, kh, kw, stride, pad)


def bilinear_resize(x, out_h, out_w):
    """Corner-aligned bilinear resize of a (C,H,W) map; identity is exact."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"invalid bilinear target size {out_h}x{out_w}")
    if (out_h, out_w) == x.shape[1:]:
        return x.copy()
    return _impl.bilinear_resize(x, out_h, out_w)


def bilinear_resize_grad(dy, in_h, in_w):
    if (in_h, in_w) == dy.shape[1:]:
        return dy.copy()
    return _impl.bilinear_resize_grad(dy, in_h, in_w)


def get_impl(name):
    """Return a kernel module by name ('numpy' or 'compiled'), for benchmarks."""
    if name == "numpy":
        return numpy_kernels
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(name)
