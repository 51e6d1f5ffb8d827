"""Per-class precision, recall and IoU plus overall accuracy and mean IoU."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cloud import LEAF, STEM, UNLABELED

ROW_NAMES = (
    "Precision - Stem", "Recall - Stem", "IoU - Stem",
    "Precision - Leaf", "Recall - Leaf", "IoU - Leaf",
    "Acc", "MIoU",
)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Two-class counts; ``counts[t, p]`` is the number with truth t, prediction p."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (2, 2) or (c < 0).any():
            raise ValueError("confusion counts must be a non-negative 2x2 array")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_labels(cls, pred, truth):
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        counts = np.zeros((2, 2), dtype=np.int64)
        np.add.at(counts, (truth.astype(np.int64), pred.astype(np.int64)), 1)
        return cls(counts)

    def tp(self, c):
        return int(self.counts[c, c])

    def fp(self, c):
        return int(self.counts[:, c].sum() - self.counts[c, c])

    def fn(self, c):
        return int(self.counts[c, :].sum() - self.counts[c, c])

    def tn(self, c):
        return int(self.counts.sum() - self.tp(c) - self.fp(c) - self.fn(c))

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)


def _ratio(num, den):
    return num / den if den > 0 else None


@dataclass(frozen=True)
class SegmentationReport:
    """Measures in [0, 1]; ``None`` where the denominator is zero."""

    precision: dict
    recall: dict
    iou: dict
    accuracy: float | None
    miou: float | None
    confusion: ConfusionMatrix

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix):
        precision, recall, iou = {}, {}, {}
        for c in (STEM, LEAF):
            tp, fp, fn = cm.tp(c), cm.fp(c), cm.fn(c)
            precision[c] = _ratio(tp, tp + fp)
            recall[c] = _ratio(tp, tp + fn)
            iou[c] = _ratio(tp, tp + fp + fn)
        total = int(cm.counts.sum())
        acc = _ratio(int(np.trace(cm.counts)), total)
        # the mean is undefined when either class IoU is
        miou = None if None in iou.values() else (iou[STEM] + iou[LEAF]) / 2.0
        return cls(precision, recall, iou, acc, miou, cm)

    def as_dict(self):
        """Values keyed by the table row names."""
        return {
            "Precision - Stem": self.precision[STEM],
            "Recall - Stem": self.recall[STEM],
            "IoU - Stem": self.iou[STEM],
            "Precision - Leaf": self.precision[LEAF],
            "Recall - Leaf": self.recall[LEAF],
            "IoU - Leaf": self.iou[LEAF],
            "Acc": self.accuracy,
            "MIoU": self.miou,
        }

    def to_text(self):
        lines = []
        for name, value in self.as_dict().items():
            lines.append(f"{name}: {'n/a' if value is None else f'{value:.4f}'}")
        return "\n".join(lines) + "\n"

    def to_json(self, **extra):
        payload = {
            "measures": self.as_dict(),
            "confusion": {"truth_stem": self.confusion.counts[0].tolist(),
                          "truth_leaf": self.confusion.counts[1].tolist()},
            **extra,
        }
        return json.dumps(payload, indent=2)


def evaluate(pred, truth, ignore_unlabeled=False) -> SegmentationReport:
    """Score predicted against true Stem/Leaf labels.

    Unlabeled points raise unless ``ignore_unlabeled`` is set, in which case
    any point unlabeled in either array is dropped.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    unlabeled = (pred == UNLABELED) | (truth == UNLABELED)
    if unlabeled.any():
        if not ignore_unlabeled:
            raise ValueError(f"{int(unlabeled.sum())} unlabeled points present")
        pred, truth = pred[~unlabeled], truth[~unlabeled]
    valid = np.isin(pred, (STEM, LEAF)) & np.isin(truth, (STEM, LEAF))
    if not valid.all():
        raise ValueError("labels must be Stem (0) or Leaf (1)")
    return SegmentationReport.from_confusion(ConfusionMatrix.from_labels(pred, truth))


def aggregate(reports, mode="micro") -> SegmentationReport | dict:
    """Combine per-plant reports.

    ``micro`` sums the confusion matrices and recomputes every measure.
    ``macro`` returns a dict of per-measure means over the plants where the
    measure is defined.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    if mode == "micro":
        total = reports[0].confusion
        for r in reports[1:]:
            total = total + r.confusion
        return SegmentationReport.from_confusion(total)
    if mode == "macro":
        out = {}
        for name in ROW_NAMES:
            vals = [r.as_dict()[name] for r in reports if r.as_dict()[name] is not None]
            out[name] = float(np.mean(vals)) if vals else None
        return out
    raise ValueError(f"unknown aggregation mode {mode!r}")
