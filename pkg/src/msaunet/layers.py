"""Minimal layer zoo with hand-written backprop over rank-3 feature maps.

Every layer follows the same protocol: forward(x) caches what backward
needs, backward(dy) returns dx and accumulates parameter gradients into
Param.grad.  Maps are (channels, height, width); there is no batch axis.
"""

import numpy as np

from . import backend
from .exceptions import ShapeError


class Param:
    """A learnable array plus its accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = data
        self.grad = np.zeros_like(data)


class Module:
    """Base class: tracks Params, submodules and buffers by attribute order."""

    def __init__(self):
        self.training = True
        self._buffers = {}

    # -- introspection ----------------------------------------------------

    def _children(self):
        for name, value in self.__dict__.items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in self.__dict__.items():
            if isinstance(value, Param):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def named_buffers(self, prefix=""):
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    # -- state ------------------------------------------------------------

    def train(self):
        self.training = True
        for _, child in self._children():
            child.train()
        return self

    def eval(self):
        self.training = False
        for _, child in self._children():
            child.eval()
        return self

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad[...] = 0.0

    def state_dict(self):
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: buf for name, buf in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        own = self.state_dict()
        for name, arr in own.items():
            if name not in state:
                raise ShapeError(f"missing tensor {name!r} in state")
            src = state[name]
            if src.shape != arr.shape:
                raise ShapeError(
                    f"shape mismatch for {name!r}: expected {arr.shape}, got {src.shape}"
                )
            arr[...] = src.astype(arr.dtype, copy=False)
        extra = sorted(set(state) - set(own))
        if extra:
            raise ShapeError(f"unexpected tensor {extra[0]!r} in state")

    def num_parameters(self):
        return sum(p.data.size for _, p in self.named_parameters())


def fan_in_uniform(rng, shape, fan_in, dtype):
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype, copy=False)


class Conv2d(Module):
    """2D convolution on a (C,H,W) map via im2col + GEMM."""

    def __init__(self, c_in, c_out, kernel, rng, stride=1, pad=0, bias=True,
                 dtype=np.float64):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.pad = kernel, stride, pad
        fan_in = c_in * kernel * kernel
        self.weight = Param(fan_in_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, dtype))
        self.bias = Param(fan_in_uniform(rng, (c_out,), fan_in, dtype)) if bias else None

    def forward(self, x):
        if x.shape[0] != self.c_in:
            raise ShapeError(f"conv expects {self.c_in} channels, got {x.shape[0]}")
        k, s, p = self.kernel, self.stride, self.pad
        oh = backend.conv_out_size(x.shape[1], k, s, p)
        ow = backend.conv_out_size(x.shape[2], k, s, p)
        cols = backend.im2col(x, k, k, s, p)
        y = (self.weight.data.reshape(self.c_out, -1) @ cols).reshape(self.c_out, oh, ow)
        if self.bias is not None:
            y += self.bias.data[:, None, None]
        self._cols = cols
        self._x_hw = x.shape[1:]
        return y

    def backward(self, dy):
        c_out = self.c_out
        dy_flat = dy.reshape(c_out, -1)
        self.weight.grad += (dy_flat @ self._cols.T).reshape(self.weight.data.shape)
        if self.bias is not None:
            self.bias.grad += dy_flat.sum(axis=1)
        dcols = self.weight.data.reshape(c_out, -1).T @ dy_flat
        h, w = self._x_hw
        return backend.col2im(dcols, self.c_in, h, w, self.kernel, self.kernel,
                              self.stride, self.pad)


class ConvTranspose2d(Module):
    """Transposed 2D convolution (stride-s upsampling); weight is (C_in, C_out, k, k)."""

    def __init__(self, c_in, c_out, kernel, rng, stride=2, pad=0, bias=True,
                 dtype=np.float64):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.pad = kernel, stride, pad
        fan_in = c_in * kernel * kernel
        self.weight = Param(fan_in_uniform(rng, (c_in, c_out, kernel, kernel), fan_in, dtype))
        self.bias = Param(fan_in_uniform(rng, (c_out,), fan_in, dtype)) if bias else None

    def out_size(self, size):
        return (size - 1) * self.stride - 2 * self.pad + self.kernel

    def forward(self, x):
        if x.shape[0] != self.c_in:
            raise ShapeError(f"deconv expects {self.c_in} channels, got {x.shape[0]}")
        k, s, p = self.kernel, self.stride, self.pad
        oh, ow = self.out_size(x.shape[1]), self.out_size(x.shape[2])
        cols = self.weight.data.reshape(self.c_in, -1).T @ x.reshape(self.c_in, -1)
        y = backend.col2im(cols, self.c_out, oh, ow, k, k, s, p)
        if self.bias is not None:
            y += self.bias.data[:, None, None]
        self._x = x
        return y

    def backward(self, dy):
        k, s, p = self.kernel, self.stride, self.pad
        dcols = backend.im2col(dy, k, k, s, p)  # (c_out*k*k, H*W of input)
        x_flat = self._x.reshape(self.c_in, -1)
        self.weight.grad += (x_flat @ dcols.T).reshape(self.weight.data.shape)
        if self.bias is not None:
            self.bias.grad += dy.sum(axis=(1, 2))
        dx = self.weight.data.reshape(self.c_in, -1) @ dcols
        return dx.reshape(self._x.shape)


class BatchNorm2d(Module):
    """Per-channel normalization over the spatial axes of a single map."""

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float64):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param(np.ones(channels, dtype=dtype))
        self.beta = Param(np.zeros(channels, dtype=dtype))
        self._buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self._buffers["running_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x):
        if x.shape[0] != self.channels:
            raise ShapeError(f"batchnorm expects {self.channels} channels, got {x.shape[0]}")
        if self.training:
            mean = x.mean(axis=(1, 2))
            var = x.var(axis=(1, 2))
            n = x.shape[1] * x.shape[2]
            m = self.momentum
            rm, rv = self._buffers["running_mean"], self._buffers["running_var"]
            rm *= 1.0 - m
            rm += m * mean
            rv *= 1.0 - m
            rv += m * (var * (n / max(n - 1, 1)))
        else:
            mean = self._buffers["running_mean"]
            var = self._buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
        self._xhat = xhat
        self._inv_std = inv_std
        return self.gamma.data[:, None, None] * xhat + self.beta.data[:, None, None]

    def backward(self, dy):
        xhat, inv_std = self._xhat, self._inv_std
        self.gamma.grad += (dy * xhat).sum(axis=(1, 2))
        self.beta.grad += dy.sum(axis=(1, 2))
        g = self.gamma.data[:, None, None] * inv_std[:, None, None]
        if not self.training:
            return dy * g
        n = dy.shape[1] * dy.shape[2]
        mean_dy = dy.mean(axis=(1, 2))[:, None, None]
        mean_dy_xhat = (dy * xhat).mean(axis=(1, 2))[:, None, None]
        return g * (dy - mean_dy - xhat * mean_dy_xhat)  # n-normalized form


class LeakyReLU(Module):
    def __init__(self, slope=0.01):
        super().__init__()
        self.slope = slope

    def forward(self, x):
        self._pos = x > 0
        return np.where(self._pos, x, self.slope * x)

    def backward(self, dy):
        return np.where(self._pos, dy, self.slope * dy)


class ReLU(Module):
    def forward(self, x):
        self._pos = x > 0
        return np.where(self._pos, x, 0.0)

    def backward(self, dy):
        return np.where(self._pos, dy, 0.0)


class Sigmoid(Module):
    def forward(self, x):
        y = 1.0 / (1.0 + np.exp(-x))
        self._y = y
        return y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class ConvBnAct(Module):
    """Convolution (or transposed convolution) + batch norm + leaky rectifier."""

    def __init__(self, conv, slope=0.01, dtype=np.float64):
        super().__init__()
        self.conv = conv
        self.bn = BatchNorm2d(conv.c_out, dtype=dtype)
        self.act = LeakyReLU(slope)

    def forward(self, x):
        return self.act.forward(self.bn.forward(self.conv.forward(x)))

    def backward(self, dy):
        return self.conv.backward(self.bn.backward(self.act.backward(dy)))


def bilinear_resample(x, out_h, out_w):
    """Corner-aligned bilinear resampling; resampling to the own size is the identity."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"invalid resample target {out_h}x{out_w}")
    return backend.bilinear_resize(x, out_h, out_w)


def bilinear_resample_grad(dy, in_h, in_w):
    return backend.bilinear_resize_grad(dy, in_h, in_w)


def softmax_channels(logits):
    """Softmax over the class axis (axis 0), numerically shifted."""
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def softmax_channels_vjp(probs, dprobs):
    """Backprop dL/dprobs through softmax to dL/dlogits."""
    inner = (dprobs * probs).sum(axis=0, keepdims=True)
    return probs * (dprobs - inner)
