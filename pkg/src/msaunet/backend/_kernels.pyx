# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: im2col / col2im and corner-aligned bilinear resampling.

Mirrors msaunet.backend.numpy_kernels; col2im accumulates in the same
(ky, kx) order so the two backends agree bit-for-bit on float64 inputs.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double

NAME = "compiled"


def conv_out_size(size, kernel, stride, pad):
    return (size + 2 * pad - kernel) // stride + 1


def im2col(x, int kh, int kw, int stride, int pad):
    x = np.ascontiguousarray(x)
    if x.dtype == np.float64:
        return _im2col[double](x, kh, kw, stride, pad)
    if x.dtype == np.float32:
        return _im2col[float](x, kh, kw, stride, pad)
    raise TypeError(f"unsupported dtype {x.dtype}")


def _im2col(real[:, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((c * kh * kw, oh * ow), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t ci, ky, kx, oy, ox, iy, ix, row
    with nogil:
        for ci in range(c):
            for ky in range(kh):
                for kx in range(kw):
                    row = (ci * kh + ky) * kw + kx
                    for oy in range(oh):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(ow):
                            ix = ox * stride + kx - pad
                            if ix < 0 or ix >= w:
                                continue
                            out[row, oy * ow + ox] = x[ci, iy, ix]
    return out_arr


def col2im(cols, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           int kh, int kw, int stride, int pad):
    cols = np.ascontiguousarray(cols)
    if cols.dtype == np.float64:
        return _col2im[double](cols, c, h, w, kh, kw, stride, pad)
    if cols.dtype == np.float32:
        return _col2im[float](cols, c, h, w, kh, kw, stride, pad)
    raise TypeError(f"unsupported dtype {cols.dtype}")


def _col2im(real[:, ::1] cols, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
            int kh, int kw, int stride, int pad):
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((c, h, w), dtype=np.asarray(cols).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, ky, kx, oy, ox, iy, ix, row
    with nogil:
        for ci in range(c):
            for ky in range(kh):
                for kx in range(kw):
                    row = (ci * kh + ky) * kw + kx
                    for oy in range(oh):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(ow):
                            ix = ox * stride + kx - pad
                            if ix < 0 or ix >= w:
                                continue
                            out[ci, iy, ix] += cols[row, oy * ow + ox]
    return out_arr


def bilinear_resize(x, Py_ssize_t out_h, Py_ssize_t out_w):
    x = np.ascontiguousarray(x)
    if x.dtype == np.float64:
        return _bilinear[double](x, out_h, out_w)
    if x.dtype == np.float32:
        return _bilinear[float](x, out_h, out_w)
    raise TypeError(f"unsupported dtype {x.dtype}")


def _bilinear(real[:, :, ::1] x, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    out_arr = np.zeros((c, out_h, out_w), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef double sy = 0.0, sx = 0.0, src, fy, fx
    cdef Py_ssize_t ci, oy, ox, y0, x0
    if out_h > 1 and h > 1:
        sy = (h - 1.0) / (out_h - 1.0)
    if out_w > 1 and w > 1:
        sx = (w - 1.0) / (out_w - 1.0)
    with nogil:
        for oy in range(out_h):
            src = oy * sy
            y0 = <Py_ssize_t> src
            if y0 > h - 2:
                y0 = h - 2 if h > 1 else 0
            fy = src - y0
            for ox in range(out_w):
                src = ox * sx
                x0 = <Py_ssize_t> src
                if x0 > w - 2:
                    x0 = w - 2 if w > 1 else 0
                fx = src - x0
                for ci in range(c):
                    if h == 1 and w == 1:
                        out[ci, oy, ox] = x[ci, 0, 0]
                    elif h == 1:
                        out[ci, oy, ox] = <real> ((1.0 - fx) * x[ci, 0, x0]
                                                  + fx * x[ci, 0, x0 + 1])
                    elif w == 1:
                        out[ci, oy, ox] = <real> ((1.0 - fy) * x[ci, y0, 0]
                                                  + fy * x[ci, y0 + 1, 0])
                    else:
                        out[ci, oy, ox] = <real> (
                            (1.0 - fy) * ((1.0 - fx) * x[ci, y0, x0]
                                          + fx * x[ci, y0, x0 + 1])
                            + fy * ((1.0 - fx) * x[ci, y0 + 1, x0]
                                    + fx * x[ci, y0 + 1, x0 + 1]))
    return out_arr


def bilinear_resize_grad(dy, Py_ssize_t in_h, Py_ssize_t in_w):
    dy = np.ascontiguousarray(dy)
    if dy.dtype == np.float64:
        return _bilinear_grad[double](dy, in_h, in_w)
    if dy.dtype == np.float32:
        return _bilinear_grad[float](dy, in_h, in_w)
    raise TypeError(f"unsupported dtype {dy.dtype}")


def _bilinear_grad(real[:, :, ::1] dy, Py_ssize_t in_h, Py_ssize_t in_w):
    cdef Py_ssize_t c = dy.shape[0], oh = dy.shape[1], ow = dy.shape[2]
    out_arr = np.zeros((c, in_h, in_w), dtype=np.asarray(dy).dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef double sy = 0.0, sx = 0.0, src, fy, fx
    cdef real g
    cdef Py_ssize_t ci, oy, ox, y0, x0
    if oh > 1 and in_h > 1:
        sy = (in_h - 1.0) / (oh - 1.0)
    if ow > 1 and in_w > 1:
        sx = (in_w - 1.0) / (ow - 1.0)
    with nogil:
        for oy in range(oh):
            src = oy * sy
            y0 = <Py_ssize_t> src
            if y0 > in_h - 2:
                y0 = in_h - 2 if in_h > 1 else 0
            fy = src - y0
            for ox in range(ow):
                src = ox * sx
                x0 = <Py_ssize_t> src
                if x0 > in_w - 2:
                    x0 = in_w - 2 if in_w > 1 else 0
                fx = src - x0
                for ci in range(c):
                    g = dy[ci, oy, ox]
                    if in_h == 1 and in_w == 1:
                        out[ci, 0, 0] += g
                    elif in_h == 1:
                        out[ci, 0, x0] += <real> ((1.0 - fx) * g)
                        out[ci, 0, x0 + 1] += <real> (fx * g)
                    elif in_w == 1:
                        out[ci, y0, 0] += <real> ((1.0 - fy) * g)
                        out[ci, y0 + 1, 0] += <real> (fy * g)
                    else:
                        out[ci, y0, x0] += <real> ((1.0 - fy) * (1.0 - fx) * g)
                        out[ci, y0, x0 + 1] += <real> ((1.0 - fy) * fx * g)
                        out[ci, y0 + 1, x0] += <real> (fy * (1.0 - fx) * g)
                        out[ci, y0 + 1, x0 + 1] += <real> (fy * fx * g)
    return out_arr
