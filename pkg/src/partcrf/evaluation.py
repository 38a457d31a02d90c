"""Intersection-over-union scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .grid import InvalidParameterError, LabelSet, check_labels


@dataclass(frozen=True)
class IoUReport:
    labels: LabelSet
    intersection: np.ndarray
    union: np.ndarray

    @property
    def iou(self) -> np.ndarray:
        """Per-label IoU; NaN where the label is absent from both maps."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.union > 0, self.intersection / np.maximum(self.union, 1), np.nan)

    @property
    def counted(self) -> np.ndarray:
        return self.union > 0

    @property
    def mean_iou(self) -> float:
        if not self.counted.any():
            return float("nan")
        return float(self.iou[self.counted].mean())

    def __add__(self, other: "IoUReport") -> "IoUReport":
        if other.labels != self.labels:
            raise InvalidParameterError("cannot merge reports over different label sets")
        return IoUReport(self.labels, self.intersection + other.intersection, self.union + other.union)

    def rows(self) -> list[tuple[str, int, int, float]]:
        return [(name, int(i), int(u), float(v))
                for name, i, u, v in zip(self.labels.names, self.intersection, self.union, self.iou)]

    def to_text(self, sep: str = "\t") -> str:
        lines = [sep.join(("label", "intersection", "union", "iou"))]
        for name, i, u, v in self.rows():
            lines.append(sep.join((name, str(i), str(u), "nan" if np.isnan(v) else f"{v:.6f}")))
        lines.append(sep.join(("mean", "", "", f"{self.mean_iou:.6f}")))
        return "\n".join(lines) + "\n"


def evaluate_iou(pred: np.ndarray, gt: np.ndarray, labels: LabelSet) -> IoUReport:
    """Per-label ``|pred & gt| / |pred | gt|``; the mean skips labels absent from both maps."""
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    if pred.shape != gt.shape:
        raise InvalidParameterError(f"shape mismatch: prediction {pred.shape} vs ground truth {gt.shape}")
    L = labels.count
    pred = check_labels(pred, L)
    gt = check_labels(gt, L)
    inter = np.bincount(gt[pred == gt], minlength=L)
    area_p = np.bincount(pred, minlength=L)
    area_g = np.bincount(gt, minlength=L)
    return IoUReport(labels, inter, area_p + area_g - inter)


def evaluate_dataset(pairs: Iterable[tuple[np.ndarray, np.ndarray]], labels: LabelSet) -> IoUReport:
    """Global-count IoU: intersections and unions are summed over images before dividing."""
    total = None
    for pred, gt in pairs:
        r = evaluate_iou(pred, gt, labels)
        total = r if total is None else total + r
    if total is None:
        raise InvalidParameterError("no images to evaluate")
    return total
