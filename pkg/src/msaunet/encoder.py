"""Contracting path: a configurable conv stack emitting a feature pyramid.

The stage geometry is declarative so a densenet169-shaped encoder (for the
channel/stride schedule the decoder expects) and a tiny desk-scale encoder
are interchangeable behind the same contract.  Pretrained weights are out
of scope; only the geometry matters to the decoder.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .layers import Conv2d, ConvBnAct, Module

# stem stride 1, then five stride-2 stages; skips tap stages 1..4
CANONICAL_STRIDES = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True)
class EncoderSpec:
    """Channel/stride geometry of a 6-stage encoder (stem + 4 skip stages + bottleneck)."""

    name: str
    stage_channels: tuple
    stage_strides: tuple = CANONICAL_STRIDES

    def validate(self):
        if len(self.stage_channels) != 6:
            raise ConfigError(
                f"encoder spec needs 6 stage channels, got {len(self.stage_channels)}"
            )
        if any(c < 1 for c in self.stage_channels):
            raise ConfigError(f"stage channels must be >= 1, got {self.stage_channels}")
        if len(self.stage_strides) != 6:
            raise ConfigError(
                f"encoder spec needs 6 cumulative strides, got {len(self.stage_strides)}"
            )
        if any(b <= a for a, b in zip(self.stage_strides, self.stage_strides[1:])):
            raise ConfigError(f"stage strides must be strictly increasing: {self.stage_strides}")
        if self.stage_strides[-1] != 32:
            raise ConfigError(
                f"final encoder stride must be 32, got {self.stage_strides[-1]}"
            )
        if tuple(self.stage_strides) != CANONICAL_STRIDES:
            # the decoder needs skips at exactly 2/4/8/16 x downsampling
            raise ConfigError(
                f"skip stages must sit at strides {CANONICAL_STRIDES}, got {self.stage_strides}"
            )
        return self

    @property
    def bottleneck_channels(self):
        return self.stage_channels[-1]

    @property
    def skip_channels(self):
        """Channels of skips[0..4]; deepest first, shallowest slot absent."""
        return (self.stage_channels[4], self.stage_channels[3],
                self.stage_channels[2], self.stage_channels[1], None)


TINY_SPEC = EncoderSpec("tiny", (16, 16, 32, 64, 128, 256))
# bottleneck channel count follows the source architecture's stated 2208
DENSENET169_SPEC = EncoderSpec("densenet169", (64, 64, 256, 512, 1280, 2208))

PRESET_SPECS = {"tiny": TINY_SPEC, "densenet169": DENSENET169_SPEC}


@dataclass
class FeaturePyramid:
    """Bottleneck plus 5 skip slots; skips[0] is the deepest, skips[4] is absent."""

    bottleneck: np.ndarray
    skips: list = field(default_factory=list)


class Encoder(Module):
    """Stack of conv+bn+leaky stages: stride-1 stem then five stride-2 stages."""

    def __init__(self, spec, rng, dtype=np.float64):
        super().__init__()
        spec.validate()
        self.spec = spec
        chans = (3,) + tuple(spec.stage_channels)
        strides = [1] + [b // a for a, b in zip(spec.stage_strides, spec.stage_strides[1:])]
        self.stages = [
            ConvBnAct(
                Conv2d(chans[i], chans[i + 1], 3, rng, stride=strides[i], pad=1, dtype=dtype),
                dtype=dtype,
            )
            for i in range(6)
        ]

    def forward(self, image):
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"encoder expects a 3xHxW image, got shape {image.shape}")
        h, w = image.shape[1:]
        stride = self.spec.stage_strides[-1]
        if h % stride or w % stride:
            raise ShapeError(f"input size {h}x{w} must be a multiple of {stride}")
        outs = []
        x = image
        for stage in self.stages:
            x = stage.forward(x)
            outs.append(x)
        # skips: deepest (stride 16) first; the shallowest slot is absent
        return FeaturePyramid(bottleneck=outs[5],
                              skips=[outs[4], outs[3], outs[2], outs[1], None])

    def backward(self, d_bottleneck, d_skips):
        """d_skips follows the pyramid layout (index 0 deepest, index 4 ignored)."""
        grad = d_bottleneck
        for i in range(5, 0, -1):
            grad = self.stages[i].backward(grad)
            j = 5 - i  # stage i-1 output feeds skips[5-i]
            if j < 4 and d_skips[j] is not None:
                grad = grad + d_skips[j]
        return self.stages[0].backward(grad)


def build_encoder(spec, seed, dtype=np.float64):
    """Deterministically initialized encoder; same seed and spec give identical weights."""
    return Encoder(spec, np.random.default_rng(seed), dtype=dtype)


def encode(image, encoder):
    """Run the contracting path; pure function of (weights, input)."""
    return encoder.forward(image)
