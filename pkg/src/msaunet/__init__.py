"""Multi-scale attention upsampling segmentation toolkit."""

from .attention import AttentionGate
from .backend import backend_name
from .blocks import AttentionUpBlock, MultiScaleUpBlock, deconv2x
from .encoder import (DENSENET169_SPEC, TINY_SPEC, EncoderSpec, FeaturePyramid,
                      build_encoder, encode)
from .losses import (CompoundLossConfig, boundary_weights, compound_loss,
                     compound_loss_and_grad, dice_loss, iou_loss,
                     iou_loss_grad, iou_loss_grad_quotient,
                     weighted_cross_entropy)
from .metrics import ConfusionMatrix, MetricsReport
from .network import (MsAUNet, MsauNetConfig, build_msaunet, densenet_config,
                      predict_mask, tiny_config)
from .training import (TrainConfig, evaluate, load_checkpoint,
                       load_model_from_checkpoint, optimizer_step,
                       save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "AttentionGate", "AttentionUpBlock", "MultiScaleUpBlock", "deconv2x",
    "EncoderSpec", "FeaturePyramid", "TINY_SPEC", "DENSENET169_SPEC",
    "build_encoder", "encode", "CompoundLossConfig", "boundary_weights",
    "compound_loss", "compound_loss_and_grad", "dice_loss", "iou_loss",
    "iou_loss_grad", "iou_loss_grad_quotient", "weighted_cross_entropy",
    "ConfusionMatrix", "MetricsReport", "MsAUNet", "MsauNetConfig",
    "build_msaunet", "densenet_config", "predict_mask", "tiny_config",
    "TrainConfig", "evaluate", "train", "optimizer_step",
    "save_checkpoint", "load_checkpoint", "load_model_from_checkpoint",
    "backend_name",
]
