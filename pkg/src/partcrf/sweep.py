"""Weight selection by exhaustive grid search on a validation set."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evaluation import IoUReport, evaluate_dataset
from .grid import ImageGrid, InvalidParameterError, LabelSet
from .inference import InferenceConfig, run_inference
from .relations import RelationTable
from .superpixels import SuperpixelMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidationItem:
    name: str
    unary: np.ndarray
    image: ImageGrid
    gt: np.ndarray
    superpixels: SuperpixelMap | None = None


@dataclass(frozen=True)
class SweepPoint:
    overrides: dict
    config: InferenceConfig
    report: IoUReport

    @property
    def mean_iou(self) -> float:
        return self.report.mean_iou


@dataclass(frozen=True)
class SweepResult:
    points: list[SweepPoint]
    best_index: int

    @property
    def best(self) -> SweepPoint:
        return self.points[self.best_index]

    def to_text(self, sep: str = "\t") -> str:
        keys = list(self.points[0].overrides)
        lines = [sep.join(["index", *keys, "mean_iou", "best"])]
        for k, p in enumerate(self.points):
            vals = [repr(p.overrides[key]) for key in keys]
            lines.append(sep.join([str(k), *vals, f"{p.mean_iou:.6f}", "*" if k == self.best_index else ""]))
        return "\n".join(lines) + "\n"


def _score(cfg: InferenceConfig, items: Sequence[ValidationItem], labels: LabelSet,
           table: RelationTable | None) -> IoUReport:
    pairs = []
    for it in items:
        _, pred, _ = run_inference(it.unary, it.image, it.superpixels, table, cfg)
        pairs.append((pred, it.gt))
    return evaluate_dataset(pairs, labels)


def _candidate_configs(candidates: Sequence[dict], base: InferenceConfig) -> list[InferenceConfig]:
    out = []
    for c in candidates:
        try:
            out.append(InferenceConfig.from_flat(dict(c), base))
        except KeyError as exc:
            raise InvalidParameterError(str(exc.args[0])) from None
    return out


def sweep(
    candidates: Sequence[dict],
    validation_set: Sequence[ValidationItem],
    labels: LabelSet,
    cfg: InferenceConfig | None = None,
    table: RelationTable | None = None,
    workers: int = 1,
) -> SweepResult:
    """Score every grid point; the best is the first one reaching the maximal mean IoU.

    With ``workers > 1`` grid points run in separate processes. Scores do not
    depend on the worker count.
    """
    if not candidates:
        raise InvalidParameterError("empty weight grid")
    if not validation_set:
        raise InvalidParameterError("empty validation set")
    configs = _candidate_configs(candidates, cfg or InferenceConfig())
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_score, configs, [validation_set] * len(configs),
                                    [labels] * len(configs), [table] * len(configs)))
    else:
        reports = [_score(c, validation_set, labels, table) for c in configs]
    points = [SweepPoint(dict(o), c, r) for o, c, r in zip(candidates, configs, reports)]
    scores = np.array([p.mean_iou for p in points])
    if np.all(np.isnan(scores)):
        raise InvalidParameterError("no grid point produced a finite mean IoU")
    best = int(np.nanargmax(scores))  # first maximum wins ties
    for k, p in enumerate(points):
        log.info("grid point %d %s: mean IoU %.6f", k, p.overrides, p.mean_iou)
    return SweepResult(points, best)


def grid_search_weights(
    candidates: Sequence[dict],
    validation_set: Sequence[ValidationItem],
    cfg: InferenceConfig | None = None,
    labels: LabelSet | None = None,
    table: RelationTable | None = None,
    workers: int = 1,
) -> InferenceConfig:
    """Return the candidate configuration with the highest mean IoU on ``validation_set``."""
    if labels is None:
        if not validation_set:
            raise InvalidParameterError("empty validation set")
        n = validation_set[0].unary.shape[1]
        labels = LabelSet(tuple(f"label{k}" for k in range(n)))
    return sweep(candidates, validation_set, labels, cfg, table, workers).best.config
