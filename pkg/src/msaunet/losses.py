"""Compound segmentation loss and its pieces.

total = w_iou * soft_iou + w_dice * smoothed_dice + w_wce * boundary-weighted
cross-entropy, with default weights 1.0 / 0.01 / 0.8.  The soft-IoU term
carries a hand-derived analytic gradient: the piecewise form (-1/U on
foreground pixels, I/U^2 elsewhere) is the production path and the raw
quotient form is kept as a cross-check; both must agree on binary targets.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .layers import softmax_channels, softmax_channels_vjp

LOG_CLIP = 1e-12
UNION_EPS = 1e-12


@dataclass
class CompoundLossConfig:
    w_iou: float = 1.0
    w_dice: float = 0.01
    w_wce: float = 0.8
    dice_alpha: float = 1.0
    eps1: float = 1.0
    eps2: float = 1.0
    background_class: int = 0
    wce_reduction: str = "mean"  # training default; the op itself defaults to sum
    void_label: int | None = None

    def validate(self):
        if min(self.w_iou, self.w_dice, self.w_wce) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.dice_alpha <= 0:
            raise ValueError("dice smoothing constant must be > 0")
        if self.wce_reduction not in ("sum", "mean"):
            raise ValueError(f"unknown wce reduction {self.wce_reduction!r}")
        return self


def one_hot(mask, num_classes, void_label=None):
    """ClassMask (H,W) -> one-hot (N,H,W); void pixels get an all-zero column."""
    out = np.zeros((num_classes,) + mask.shape)
    valid = np.ones(mask.shape, dtype=bool)
    if void_label is not None:
        valid = mask != void_label
    labels = np.where(valid, mask, 0)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ShapeError(
            f"mask labels must lie in [0, {num_classes}) apart from the void label")
    np.put_along_axis(out, labels[None], 1.0, axis=0)
    if void_label is not None:
        out *= valid[None]
    return out


def boundary_weights(mask, eps1=1.0, eps2=1.0, background_class=0):
    """Per-pixel cross-entropy weights, raised on class boundaries and background.

    A pixel counts as boundary when any in-bounds 4-neighbor carries a
    different label.  weight = 1 + eps1*[boundary] + eps2*[label == background].
    """
    boundary = np.zeros(mask.shape, dtype=bool)
    boundary[1:, :] |= mask[1:, :] != mask[:-1, :]
    boundary[:-1, :] |= mask[:-1, :] != mask[1:, :]
    boundary[:, 1:] |= mask[:, 1:] != mask[:, :-1]
    boundary[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    return 1.0 + eps1 * boundary + eps2 * (mask == background_class)


def weighted_cross_entropy(probs, target, weights, reduction="sum"):
    """Pixel-weighted cross-entropy on softmax probabilities.

    probs/target are (N,...) with target one-hot; weights broadcasts over
    the class axis.  The log is clamped below at log(1e-12).
    """
    if probs.shape != target.shape:
        raise ShapeError(f"probs shape {probs.shape} != target shape {target.shape}")
    losses = -(weights * target * np.log(np.clip(probs, LOG_CLIP, None))).sum()
    if reduction == "sum":
        return losses
    if reduction == "mean":
        return losses / probs[0].size
    raise ValueError(f"unknown reduction {reduction!r}")


def dice_loss(logits, target, alpha=1.0):
    """Smoothed overlap loss; applies softmax internally and sums per-class terms."""
    if logits.shape != target.shape:
        raise ShapeError(f"logits shape {logits.shape} != target shape {target.shape}")
    probs = softmax_channels(logits)
    axes = tuple(range(1, probs.ndim))
    num = 2.0 * (target * probs).sum(axis=axes) + alpha
    den = (target * target + probs * probs).sum(axis=axes) + alpha
    return float((1.0 - num / den).sum())


def _iou_terms(probs, target):
    axes = tuple(range(1, probs.ndim))
    inter = (probs * target).sum(axis=axes)
    union = (probs + target - probs * target).sum(axis=axes)
    return inter, union


def iou_loss(probs, target):
    """Soft intersection-over-union loss, averaged over classes.

    Per class: 1 - sum(p*g) / sum(p + g - p*g).  Classes with an empty
    union contribute zero.
    """
    if probs.shape != target.shape:
        raise ShapeError(f"probs shape {probs.shape} != target shape {target.shape}")
    inter, union = _iou_terms(probs, target)
    valid = union >= UNION_EPS
    terms = np.where(valid, 1.0 - inter / np.where(valid, union, 1.0), 0.0)
    return float(terms.sum() / probs.shape[0])


def iou_loss_grad(probs, target):
    """Analytic gradient of iou_loss w.r.t. probs (piecewise production form).

    d/dp = -1/U on pixels where the target is 1, I/U^2 elsewhere; each class
    is scaled by 1/N for the multi-class mean.  Empty-union classes get 0.
    """
    if probs.shape != target.shape:
        raise ShapeError(f"probs shape {probs.shape} != target shape {target.shape}")
    inter, union = _iou_terms(probs, target)
    n = probs.shape[0]
    shape = (n,) + (1,) * (probs.ndim - 1)
    valid = (union >= UNION_EPS).reshape(shape)
    inter = inter.reshape(shape)
    union = np.where(valid, union.reshape(shape), 1.0)
    grad = np.where(target == 1.0, -1.0 / union, inter / (union * union))
    return np.where(valid, grad, 0.0) / n


def iou_loss_grad_quotient(probs, target):
    """Quotient-rule form of the same gradient: (-U*g + I*(1-g)) / U^2.

    Kept as an independent cross-check of the piecewise form; the two agree
    to machine precision on binary targets.
    """
    if probs.shape != target.shape:
        raise ShapeError(f"probs shape {probs.shape} != target shape {target.shape}")
    inter, union = _iou_terms(probs, target)
    n = probs.shape[0]
    shape = (n,) + (1,) * (probs.ndim - 1)
    valid = (union >= UNION_EPS).reshape(shape)
    inter = inter.reshape(shape)
    union = np.where(valid, union.reshape(shape), 1.0)
    grad = (-union * target + inter * (1.0 - target)) / (union * union)
    return np.where(valid, grad, 0.0) / n


def _dice_grad_wrt_probs(probs, target, alpha):
    axes = tuple(range(1, probs.ndim))
    shape = (probs.shape[0],) + (1,) * (probs.ndim - 1)
    num = (2.0 * (target * probs).sum(axis=axes) + alpha).reshape(shape)
    den = ((target * target + probs * probs).sum(axis=axes) + alpha).reshape(shape)
    return (2.0 * num * probs - 2.0 * target * den) / (den * den)


def compound_loss(logits, mask, config):
    """Weighted sum of the three components on a (N,H,W) logit map.

    Returns (total, components) where components holds the unweighted
    iou/dice/wce values for logging.
    """
    total, components, _ = _compound(logits, mask, config, need_grad=False)
    return total, components


def compound_loss_and_grad(logits, mask, config):
    """Same as compound_loss but also returns d(total)/d(logits)."""
    return _compound(logits, mask, config, need_grad=True)


def _compound(logits, mask, config, need_grad):
    config.validate()
    if logits.ndim != 3 or logits.shape[1:] != mask.shape:
        raise ShapeError(
            f"logits shape {logits.shape} incompatible with mask shape {mask.shape}")
    n = logits.shape[0]
    target = one_hot(mask, n, config.void_label)
    valid = target.sum(axis=0) > 0  # false only at void pixels
    probs = softmax_channels(logits)
    theta = boundary_weights(mask, config.eps1, config.eps2, config.background_class)
    theta = theta * valid

    masked_probs = probs * valid[None]
    l_wce = weighted_cross_entropy(probs, target, theta, config.wce_reduction)
    l_iou = iou_loss(masked_probs, target)

    axes = (1, 2)
    num = 2.0 * (target * probs).sum(axis=axes) + config.dice_alpha
    den = (target * target + (masked_probs * masked_probs)).sum(axis=axes) + config.dice_alpha
    l_dice = float((1.0 - num / den).sum())

    components = {"iou": l_iou, "dice": l_dice, "wce": l_wce}
    total = (config.w_iou * l_iou + config.w_dice * l_dice + config.w_wce * l_wce)
    if not need_grad:
        return total, components, None

    # gradients in probability space, then one chain through the softmax
    g_probs = config.w_iou * iou_loss_grad(masked_probs, target) * valid[None]
    dice_g = (2.0 * num.reshape(n, 1, 1) * masked_probs - 2.0 * target * den.reshape(n, 1, 1))
    g_probs += config.w_dice * (dice_g / (den * den).reshape(n, 1, 1)) * valid[None]
    dlogits = softmax_channels_vjp(probs, g_probs)
    scale = 1.0 if config.wce_reduction == "sum" else 1.0 / mask.size
    dlogits += config.w_wce * scale * theta[None] * (probs - target)
    return total, components, dlogits
