"""Decoder blocks, each doubling spatial resolution.

MultiScaleUpBlock runs three transposed-convolution branches (kernels
2/4/6) in parallel, concatenates each with the attention-gated skip,
projects every branch back to the output width, and fuses the three with
a 1x1 convolution.  AttentionUpBlock is the single-scale variant with a
4x4 kernel and an optional gated skip.
"""

import numpy as np

from .attention import AttentionGate
from .exceptions import ShapeError
from .layers import (Conv2d, ConvBnAct, ConvTranspose2d, Module,
                     bilinear_resample, bilinear_resample_grad)

# the unique symmetric padding making out = 2*in at stride 2 for each kernel
PAD_FOR_KERNEL = {2: 0, 4: 1, 6: 2}


def deconv2x(c_in, c_out, kernel, rng, dtype=np.float64):
    """Stride-2 transposed convolution that exactly doubles spatial size."""
    if kernel not in PAD_FOR_KERNEL:
        raise ShapeError(f"unsupported upsampling kernel {kernel}, expected one of 2/4/6")
    return ConvTranspose2d(c_in, c_out, kernel, rng, stride=2,
                           pad=PAD_FOR_KERNEL[kernel], dtype=dtype)


def _check_skip(x, skip):
    h, w = x.shape[1:]
    if skip.shape[1:] != (2 * h, 2 * w):
        raise ShapeError(
            f"skip size {skip.shape[1]}x{skip.shape[2]} must be twice the input {h}x{w}")


class MultiScaleUpBlock(Module):
    def __init__(self, c_in, c_out, c_skip, rng, inter_channels=None, dtype=np.float64):
        super().__init__()
        self.c_in, self.c_out, self.c_skip = c_in, c_out, c_skip
        self.gate = AttentionGate(c_in, c_skip, rng, inter_channels, dtype=dtype)
        self.ups = [ConvBnAct(deconv2x(c_in, c_out, k, rng, dtype), dtype=dtype)
                    for k in (2, 4, 6)]
        self.projs = [ConvBnAct(Conv2d(c_out + c_skip, c_out, 1, rng, dtype=dtype),
                                dtype=dtype) for _ in range(3)]
        self.fuse = ConvBnAct(Conv2d(3 * c_out, c_out, 1, rng, dtype=dtype), dtype=dtype)

    def forward(self, x, skip):
        _check_skip(x, skip)
        th, tw = skip.shape[1:]
        gated, coeff = self.gate.forward(x, skip)
        branches = []
        up_hw = []
        for up, proj in zip(self.ups, self.projs):
            u = up.forward(x)
            up_hw.append(u.shape[1:])
            u = bilinear_resample(u, th, tw)
            branches.append(proj.forward(np.concatenate([u, gated], axis=0)))
        # side branches re-aligned to the middle one (identity under this padding)
        mid_hw = branches[1].shape[1:]
        branch_hw = [b.shape[1:] for b in branches]
        branches[0] = bilinear_resample(branches[0], *mid_hw)
        branches[2] = bilinear_resample(branches[2], *mid_hw)
        out = self.fuse.forward(np.concatenate(branches, axis=0))
        self._coeff = coeff
        self._up_hw = up_hw
        self._branch_hw = branch_hw
        return out

    def backward(self, dout):
        """Returns (dx, d_skip)."""
        c_out = self.c_out
        dcat = self.fuse.backward(dout)
        dbranches = [dcat[i * c_out:(i + 1) * c_out] for i in range(3)]
        dbranches[0] = bilinear_resample_grad(dbranches[0], *self._branch_hw[0])
        dbranches[2] = bilinear_resample_grad(dbranches[2], *self._branch_hw[2])
        dx = None
        d_gated = None
        for i, (up, proj) in enumerate(zip(self.ups, self.projs)):
            dc = proj.backward(dbranches[i])
            du, dg = dc[:c_out], dc[c_out:]
            d_gated = dg if d_gated is None else d_gated + dg
            du = bilinear_resample_grad(du, *self._up_hw[i])
            dxi = up.backward(du)
            dx = dxi if dx is None else dx + dxi
        d_gate_in, d_skip = self.gate.backward(d_gated)
        return dx + d_gate_in, d_skip

    @property
    def attention_coefficients(self):
        """Coefficient map from the latest forward pass."""
        return self._coeff


class AttentionUpBlock(Module):
    """Single 4x4 transposed-convolution upsampler with an optional gated skip."""

    def __init__(self, c_in, c_out, c_skip, rng, inter_channels=None, dtype=np.float64):
        super().__init__()
        self.c_in, self.c_out, self.c_skip = c_in, c_out, c_skip
        self.up = ConvBnAct(deconv2x(c_in, c_out, 4, rng, dtype), dtype=dtype)
        if c_skip is not None:
            self.gate = AttentionGate(c_in, c_skip, rng, inter_channels, dtype=dtype)
            fuse_in = c_out + c_skip
        else:
            self.gate = None
            fuse_in = c_out
        self.fuse = ConvBnAct(Conv2d(fuse_in, c_out, 1, rng, dtype=dtype), dtype=dtype)

    def forward(self, x, skip=None):
        if (skip is None) != (self.gate is None):
            raise ShapeError("block was built " +
                             ("without" if self.gate is None else "with") +
                             " a skip connection")
        u = self.up.forward(x)
        if skip is None:
            self._coeff = None
            return self.fuse.forward(u)
        _check_skip(x, skip)
        gated, coeff = self.gate.forward(x, skip)
        self._coeff = coeff
        return self.fuse.forward(np.concatenate([u, gated], axis=0))

    def backward(self, dout):
        """Returns (dx, d_skip); d_skip is None for the skipless variant."""
        dfused = self.fuse.backward(dout)
        if self.gate is None:
            return self.up.backward(dfused), None
        du, d_gated = dfused[:self.c_out], dfused[self.c_out:]
        d_gate_in, d_skip = self.gate.backward(d_gated)
        return self.up.backward(du) + d_gate_in, d_skip

    @property
    def attention_coefficients(self):
        return self._coeff
