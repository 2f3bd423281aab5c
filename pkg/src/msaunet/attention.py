"""Additive attention gate.

Projects the coarse gating map and the skip map into a shared channel
space, adds them on the skip's grid (the gating projection is upsampled
2x first), and squashes a 1-channel score through a sigmoid into a
per-pixel coefficient in (0,1) that scales the skip features.
"""

import numpy as np

from .exceptions import ShapeError
from .layers import (Conv2d, Module, ReLU, Sigmoid, bilinear_resample,
                     bilinear_resample_grad)


class AttentionGate(Module):
    def __init__(self, gate_channels, skip_channels, rng, inter_channels=None,
                 dtype=np.float64):
        super().__init__()
        if inter_channels is None:
            inter_channels = max(1, skip_channels // 2)
        self.gate_channels = gate_channels
        self.skip_channels = skip_channels
        self.inter_channels = inter_channels
        # shared bias lives on the gating projection; the score conv has its own
        self.proj_gate = Conv2d(gate_channels, inter_channels, 1, rng, bias=True, dtype=dtype)
        self.proj_skip = Conv2d(skip_channels, inter_channels, 1, rng, bias=False, dtype=dtype)
        self.score = Conv2d(inter_channels, 1, 1, rng, bias=True, dtype=dtype)
        self.relu = ReLU()
        self.sigmoid = Sigmoid()

    def _check(self, gate, skip):
        if gate.shape[0] != self.gate_channels:
            raise ShapeError(
                f"gate map has {gate.shape[0]} channels, expected {self.gate_channels}")
        if skip.shape[0] != self.skip_channels:
            raise ShapeError(
                f"skip map has {skip.shape[0]} channels, expected {self.skip_channels}")
        gh, gw = gate.shape[1:]
        sh, sw = skip.shape[1:]
        if (sh, sw) != (2 * gh, 2 * gw):
            raise ShapeError(
                f"skip size {sh}x{sw} must be exactly twice the gate size {gh}x{gw}")

    def forward(self, gate, skip):
        """Return (skip * coeff, coeff); coeff is (1, H, W) with values in (0,1)."""
        self._check(gate, skip)
        sh, sw = skip.shape[1:]
        g = self.proj_gate.forward(gate)
        g_up = bilinear_resample(g, sh, sw)
        pre = self.relu.forward(g_up + self.proj_skip.forward(skip))
        coeff = self.sigmoid.forward(self.score.forward(pre))
        gated = skip * coeff
        self._g_hw = g.shape[1:]
        self._skip = skip
        self._coeff = coeff
        return gated, coeff

    def backward(self, d_gated, d_coeff=None):
        """Backprop through the gate; returns (d_gate, d_skip)."""
        skip, coeff = self._skip, self._coeff
        d_skip = d_gated * coeff
        d_c = (d_gated * skip).sum(axis=0, keepdims=True)
        if d_coeff is not None:
            d_c = d_c + d_coeff
        d_pre = self.score.backward(self.sigmoid.backward(d_c))
        d_add = self.relu.backward(d_pre)
        d_skip += self.proj_skip.backward(d_add)
        d_g = bilinear_resample_grad(d_add, *self._g_hw)
        d_gate = self.proj_gate.backward(d_g)
        return d_gate, d_skip
