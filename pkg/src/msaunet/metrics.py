"""Confusion-matrix evaluation: pixel accuracy, mean IoU, frequency-weighted
IoU and Dice coefficient (F1).

counts[n][m] is the number of pixels of true class n predicted as class m;
matrices from different workers/shards merge by elementwise addition.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, ShapeError

VOID_LABEL = 255  # conventional void index, excluded from accumulation by default


class ConfusionMatrix:
    def __init__(self, num_classes, ignore_index=VOID_LABEL):
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, pred, gt):
        """Tally one prediction/ground-truth mask pair; returns self."""
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
        n = self.num_classes
        keep = np.ones(gt.shape, dtype=bool)
        if self.ignore_index is not None:
            # void pixels never enter the tally, on either side of the pair
            keep &= (gt != self.ignore_index) & (pred != self.ignore_index)
        g = gt[keep]
        p = pred[keep]
        if g.size and (g.min() < 0 or g.max() >= n):
            bad = int(g[(g < 0) | (g >= n)][0])
            raise DataError(f"ground-truth label {bad} out of range [0, {n})")
        if p.size and (p.min() < 0 or p.max() >= n):
            bad = int(p[(p < 0) | (p >= n)][0])
            raise DataError(f"predicted label {bad} out of range [0, {n})")
        self.counts += np.bincount(
            (g.astype(np.int64) * n + p.astype(np.int64)), minlength=n * n
        ).reshape(n, n)
        return self

    def merge(self, other):
        """Elementwise-add another matrix (associative and commutative)."""
        if other.num_classes != self.num_classes:
            raise ShapeError("cannot merge confusion matrices of different sizes")
        self.counts += other.counts
        return self

    def copy(self):
        out = ConfusionMatrix(self.num_classes, self.ignore_index)
        out.counts = self.counts.copy()
        return out

    # -- derived quantities -------------------------------------------------

    def _check_nonempty(self):
        if self.counts.sum() == 0:
            raise DataError("empty confusion matrix: no pixels accumulated")

    def _per_class(self):
        diag = np.diag(self.counts).astype(np.float64)
        row = self.counts.sum(axis=1).astype(np.float64)  # ground-truth pixels per class
        col = self.counts.sum(axis=0).astype(np.float64)  # predicted pixels per class
        return diag, row, col

    def pixel_accuracy(self):
        self._check_nonempty()
        diag, row, _ = self._per_class()
        return float(diag.sum() / row.sum())

    def per_class_iou(self):
        """IoU per class; nan for classes absent from both gt and prediction."""
        self._check_nonempty()
        diag, row, col = self._per_class()
        denom = row + col - diag
        valid = denom > 0
        out = np.full(self.num_classes, np.nan)
        out[valid] = diag[valid] / denom[valid]
        return out

    def mean_iou(self, strict=False):
        """Mean per-class IoU over classes present in gt or prediction.

        strict=True divides by the full class count instead (absent classes
        count as zeros), matching the literal formula.
        """
        iou = self.per_class_iou()
        valid = ~np.isnan(iou)
        if strict:
            return float(np.nansum(iou) / self.num_classes)
        return float(iou[valid].mean())

    def fw_iou(self):
        self._check_nonempty()
        diag, row, col = self._per_class()
        denom = row + col - diag
        valid = denom > 0
        total = row.sum()
        return float((row[valid] * diag[valid] / denom[valid]).sum() / total)

    def dice(self):
        """Mean per-class 2*overlap / (gt area + predicted area) over valid classes."""
        self._check_nonempty()
        diag, row, col = self._per_class()
        denom = row + col
        valid = denom > 0
        return float((2.0 * diag[valid] / denom[valid]).mean())

    def valid_classes(self):
        _, row, col = self._per_class()
        return int(((row + col) > 0).sum())

    def report(self, strict_mean=False):
        return MetricsReport(
            pixel_accuracy=self.pixel_accuracy(),
            mean_iou=self.mean_iou(strict=strict_mean),
            fw_iou=self.fw_iou(),
            dice=self.dice(),
            per_class_iou=self.per_class_iou().tolist(),
            valid_classes=self.valid_classes(),
        )


@dataclass
class MetricsReport:
    pixel_accuracy: float
    mean_iou: float
    fw_iou: float
    dice: float
    per_class_iou: list
    valid_classes: int

    SCALAR_FIELDS = ("pixel_accuracy", "mean_iou", "fw_iou", "dice")

    def as_text(self):
        lines = [f"{name}={getattr(self, name):.6f}" for name in self.SCALAR_FIELDS]
        lines.append(f"valid_classes={self.valid_classes}")
        per_class = ";".join(
            "nan" if np.isnan(v) else f"{v:.6f}" for v in self.per_class_iou)
        lines.append(f"per_class_iou={per_class}")
        return "\n".join(lines) + "\n"

    def as_csv(self):
        header = ",".join(self.SCALAR_FIELDS + ("valid_classes",))
        row = ",".join(f"{getattr(self, name):.6f}" for name in self.SCALAR_FIELDS)
        return f"{header}\n{row},{self.valid_classes}\n"
