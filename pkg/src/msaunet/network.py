"""Full segmentation network: encoder + 3 multi-scale blocks + 2 single-scale
blocks + 1x1 classification head.

The decoder walks the channel schedule (default 256/128/64/32/16) while
doubling the spatial size at every block; the head emits raw logits, one
channel per class.
"""

from dataclasses import dataclass

import numpy as np

from .encoder import PRESET_SPECS, Encoder, EncoderSpec
from .exceptions import ConfigError, ShapeError
from .layers import Conv2d, Module

DEFAULT_DECODER_CHANNELS = (256, 128, 64, 32, 16)


@dataclass
class MsauNetConfig:
    encoder_spec: EncoderSpec
    num_classes: int
    input_size: tuple = (224, 224)
    decoder_channels: tuple = DEFAULT_DECODER_CHANNELS

    def validate(self):
        self.encoder_spec.validate()
        if len(self.decoder_channels) != 5:
            raise ConfigError(
                f"decoder needs exactly 5 channel entries, got {len(self.decoder_channels)}")
        if any(b >= a for a, b in zip(self.decoder_channels, self.decoder_channels[1:])):
            raise ConfigError(
                f"decoder channels must be strictly decreasing: {self.decoder_channels}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        h, w = self.input_size
        if h % 32 or w % 32:
            raise ConfigError(f"input size {h}x{w} must be a multiple of 32")
        return self


class MsAUNet(Module):
    def __init__(self, config, rng, dtype=np.float64):
        super().__init__()
        config.validate()
        self.config = config
        spec = config.encoder_spec
        dc = config.decoder_channels
        skip_ch = spec.skip_channels
        self.encoder = Encoder(spec, rng, dtype=dtype)
        # imported here to avoid a cycle at module load
        from .blocks import AttentionUpBlock, MultiScaleUpBlock

        self.msab = [
            MultiScaleUpBlock(spec.bottleneck_channels, dc[0], skip_ch[0], rng, dtype=dtype),
            MultiScaleUpBlock(dc[0], dc[1], skip_ch[1], rng, dtype=dtype),
            MultiScaleUpBlock(dc[1], dc[2], skip_ch[2], rng, dtype=dtype),
        ]
        self.ab = [
            AttentionUpBlock(dc[2], dc[3], skip_ch[3], rng, dtype=dtype),
            AttentionUpBlock(dc[3], dc[4], None, rng, dtype=dtype),
        ]
        self.head = Conv2d(dc[4], config.num_classes, 1, rng, dtype=dtype)

    def forward(self, image):
        h, w = self.config.input_size
        if image.shape != (3, h, w):
            raise ShapeError(f"expected a 3x{h}x{w} image, got shape {image.shape}")
        pyramid = self.encoder.forward(image)
        x = pyramid.bottleneck
        for i, block in enumerate(self.msab):
            x = block.forward(x, pyramid.skips[i])
        x = self.ab[0].forward(x, pyramid.skips[3])
        x = self.ab[1].forward(x)
        return self.head.forward(x)

    def backward(self, dlogits):
        """Accumulate parameter gradients; returns the input-image gradient."""
        g = self.head.backward(dlogits)
        g, _ = self.ab[1].backward(g)
        g, d_skip3 = self.ab[0].backward(g)
        d_skips = [None, None, None, d_skip3, None]
        for i in (2, 1, 0):
            g, d_skip = self.msab[i].backward(g)
            d_skips[i] = d_skip
        return self.encoder.backward(g, d_skips)


def build_msaunet(config, seed, dtype=np.float64):
    """Deterministic construction: same config and seed give identical weights."""
    return MsAUNet(config, np.random.default_rng(seed), dtype=dtype)


def predict_mask(logits):
    """Per-pixel argmax over the class axis; ties go to the lowest class index."""
    if logits.ndim != 3 or logits.shape[0] < 2:
        raise ShapeError(f"logits must be (N>=2, H, W), got shape {logits.shape}")
    return np.argmax(logits, axis=0).astype(np.int64)


def tiny_config(num_classes=3, input_size=(64, 64)):
    """Desk-scale configuration used throughout the tests."""
    return MsauNetConfig(encoder_spec=PRESET_SPECS["tiny"], num_classes=num_classes,
                         input_size=input_size)


def densenet_config(num_classes=21, input_size=(224, 224)):
    return MsauNetConfig(encoder_spec=PRESET_SPECS["densenet169"],
                         num_classes=num_classes, input_size=input_size)
