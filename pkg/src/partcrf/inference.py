"""Synchronous mean-field inference over the full five-term energy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Iterator

import numpy as np

from .grid import ImageGrid, InvalidParameterError, argmax_labeling, check_labels, check_unary, softmax_neg
from .potentials import (
    CliqueBuilder,
    CliqueSet,
    PairwiseOperator,
    PairwiseParams,
    attachment_message_field,
    containment_message_field,
    superpixel_message_field,
)
from .relations import RelationTable, lookup_attachment, lookup_containment
from .superpixels import (
    DEFAULT_COMPACTNESS,
    SuperpixelMap,
    attachment_threshold,
    generate_superpixels,
)

log = logging.getLogger(__name__)

TERMS = ("unary", "pairwise", "superpixel", "containment", "attachment")


@dataclass(frozen=True)
class InferenceConfig:
    max_iterations: int = 10
    convergence_tol: float = 1e-4
    weight_unary: float = 1.0
    weight_pairwise: float = 1.0
    weight_superpixel: float = 1.0
    weight_containment: float = 1.0
    weight_attachment: float = 1.0
    pairwise: PairwiseParams = field(default_factory=PairwiseParams)
    rebuild_cliques_each_iter: bool = True
    superpixel_w_low: float = 0.0
    superpixel_w_high: float = 1.0
    # superpixel generation when the caller does not supply a map
    superpixel_count: int | None = None
    superpixel_compactness: float = DEFAULT_COMPACTNESS
    # None: mean superpixel width
    attachment_d: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise InvalidParameterError("convergence_tol must be positive")
        if any(w < 0 for w in self.term_weights.values()):
            raise InvalidParameterError("term weights must be non-negative")
        if self.superpixel_w_low > self.superpixel_w_high:
            raise InvalidParameterError("superpixel_w_low must not exceed superpixel_w_high")
        if self.attachment_d is not None and not self.attachment_d > 0:
            raise InvalidParameterError("attachment_d must be positive")

    @property
    def term_weights(self) -> dict[str, float]:
        return {t: getattr(self, f"weight_{t}") for t in TERMS}

    def with_weights(self, **weights: float) -> "InferenceConfig":
        return replace(self, **{f"weight_{k}": v for k, v in weights.items()})

    def unary_only(self) -> "InferenceConfig":
        return self.with_weights(pairwise=0.0, superpixel=0.0, containment=0.0, attachment=0.0)

    def flat(self) -> dict[str, object]:
        """Every setting as a flat ``key -> value`` mapping (pairwise fields prefixed)."""
        out: dict[str, object] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "pairwise":
                for pf in fields(PairwiseParams):
                    out[f"pairwise_{pf.name}"] = getattr(v, pf.name)
            else:
                out[f.name] = v
        return out

    @classmethod
    def from_flat(cls, values: dict[str, object], base: "InferenceConfig | None" = None) -> "InferenceConfig":
        base = base or cls()
        top = {f.name for f in fields(cls)} - {"pairwise"}
        pw = {f.name for f in fields(PairwiseParams)}
        kw, pkw = {}, {}
        for k, v in values.items():
            if k in top:
                kw[k] = v
            elif k.startswith("pairwise_") and k[len("pairwise_"):] in pw:
                pkw[k[len("pairwise_"):]] = v
            else:
                raise KeyError(f"unknown configuration key {k!r}")
        return replace(base, pairwise=replace(base.pairwise, **pkw), **kw)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    max_delta: float
    energy: float
    n_superpixel: int
    n_containment: int
    n_attachment: int


@dataclass
class InferenceTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[IterationRecord]:
        return iter(self.records)

    @property
    def converged_delta(self) -> float:
        return self.records[-1].max_delta if self.records else float("nan")

    HEADER = ("iteration", "max_delta", "energy", "superpixel_cliques", "containment_cliques", "attachment_cliques")

    def to_text(self) -> str:
        lines = ["\t".join(self.HEADER)]
        for r in self.records:
            lines.append(f"{r.iteration}\t{r.max_delta!r}\t{r.energy!r}\t{r.n_superpixel}\t{r.n_containment}\t{r.n_attachment}")
        return "\n".join(lines) + "\n"


class CRFModel:
    """Everything the energy depends on besides the labelling.

    Cliques are either fixed up front (``fixed_cliques``) or derived from a
    labelling through the superpixel map and relation table.
    """

    def __init__(
        self,
        unary: np.ndarray,
        image: ImageGrid,
        cfg: InferenceConfig,
        superpixels: SuperpixelMap | None = None,
        table: RelationTable | None = None,
        fixed_cliques: CliqueSet | None = None,
    ):
        self.unary = check_unary(unary)
        self.image = image
        self.cfg = cfg
        self.table = table
        self.n_pixels, self.n_labels = self.unary.shape
        if image.n_pixels != self.n_pixels:
            raise InvalidParameterError(f"unary has {self.n_pixels} pixels, image has {image.n_pixels}")
        needs_sp = fixed_cliques is None and any(
            cfg.term_weights[t] > 0 for t in ("superpixel", "containment", "attachment"))
        if superpixels is None and needs_sp:
            superpixels = generate_superpixels(image, cfg.superpixel_count, cfg.superpixel_compactness)
        if superpixels is not None and superpixels.n_pixels != self.n_pixels:
            raise InvalidParameterError("superpixel map does not match the image")
        self.superpixels = superpixels
        if fixed_cliques is not None:
            fixed_cliques.validate(self.n_pixels, self.n_labels)
        self.fixed_cliques = fixed_cliques
        self.d = None
        self._builder = None
        if superpixels is not None and fixed_cliques is None:
            self.d = cfg.attachment_d if cfg.attachment_d is not None else attachment_threshold(superpixels)
            self._builder = CliqueBuilder(superpixels, table, self.n_labels, self.d)
        self._pairwise = None
        self._sp_w_low = np.full(self.n_labels, cfg.superpixel_w_low)

    @property
    def pairwise(self) -> PairwiseOperator:
        if self._pairwise is None:
            self._pairwise = PairwiseOperator(self.image, self.cfg.pairwise)
        return self._pairwise

    def cliques_for(self, labels: np.ndarray) -> CliqueSet:
        if self.fixed_cliques is not None:
            return self.fixed_cliques
        if self._builder is None:
            return CliqueSet()
        return self._builder(labels)

    def messages(self, q: np.ndarray, cliques: CliqueSet) -> dict[str, np.ndarray]:
        """Weighted message field of every enabled non-unary term."""
        cfg = self.cfg
        w = cfg.term_weights
        out = {}
        if w["pairwise"] > 0:
            out["pairwise"] = w["pairwise"] * self.pairwise(q)
        if w["superpixel"] > 0 and cliques.superpixel_cliques:
            out["superpixel"] = w["superpixel"] * superpixel_message_field(
                q, cliques.superpixel_cliques, self._sp_w_low, cfg.superpixel_w_high)
        if self.table is not None:
            if w["containment"] > 0 and cliques.containment_cliques:
                out["containment"] = w["containment"] * containment_message_field(
                    q, cliques.containment_cliques, self.table)
            if w["attachment"] > 0 and cliques.attachment_cliques:
                out["attachment"] = w["attachment"] * attachment_message_field(
                    q, cliques.attachment_cliques, self.table)
        return out


def init_marginals(unary: np.ndarray, weight: float = 1.0) -> np.ndarray:
    """``q[i] = softmax(-weight * unary[i])``."""
    return softmax_neg(weight * check_unary(unary))


def mean_field_step(q_prev: np.ndarray, model: CRFModel, cliques: CliqueSet) -> np.ndarray:
    """One synchronous update of every pixel from the frozen ``q_prev``."""
    energy = model.cfg.weight_unary * model.unary
    for m in model.messages(q_prev, cliques).values():
        energy = energy + m
    return softmax_neg(energy)


def total_energy(labels: np.ndarray, model: CRFModel, cliques: CliqueSet | None = None) -> float:
    """Energy of a hard labelling; cliques default to those derived from ``labels`` itself."""
    x = check_labels(labels, model.n_labels, model.n_pixels)
    cfg = model.cfg
    w = cfg.term_weights
    if cliques is None:
        cliques = model.cliques_for(x)
    e = w["unary"] * float(model.unary[np.arange(model.n_pixels), x].sum())
    if w["pairwise"] > 0:
        onehot = np.eye(model.n_labels)[x]
        m = model.pairwise(onehot)
        e += w["pairwise"] * 0.5 * float(m[np.arange(model.n_pixels), x].sum())
    if w["superpixel"] > 0:
        for c in cliques.superpixel_cliques:
            vals = x[list(c)]
            low = np.all(vals == vals[0])
            e += w["superpixel"] * (cfg.superpixel_w_low if low else cfg.superpixel_w_high)
    if model.table is not None:
        table = model.table
        if w["containment"] > 0:
            for c in cliques.containment_cliques:
                e += w["containment"] * containment_energy(x[list(c.pixels)], c.l_prime, table)
        if w["attachment"] > 0:
            for c in cliques.attachment_cliques:
                e += w["attachment"] * attachment_energy(x[list(c.c1)], x[list(c.c2)], c.l1, c.l2, table)
    return e


def containment_energy(values: np.ndarray, l_prime: int, table: RelationTable) -> float:
    """Containment pattern at a hard labelling of a boundary clique.

    Low when the clique uses at most one label besides the container
    ``l_prime`` (the weight is looked up for that label, or for ``l_prime``
    when the clique is uniform), ``w_high`` otherwise.
    """
    others = set(np.unique(values).tolist()) - {l_prime}
    if len(others) == 0:
        return lookup_containment(table, l_prime, l_prime)
    if len(others) == 1:
        return lookup_containment(table, others.pop(), l_prime)
    return table.w_high


def attachment_energy(v1: np.ndarray, v2: np.ndarray, l1: int, l2: int, table: RelationTable) -> float:
    if np.all(v1 == l1) and np.all(v2 == l2):
        return lookup_attachment(table, l1, l2)
    return table.w_high


def mean_field(model: CRFModel, q0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, InferenceTrace]:
    cfg = model.cfg
    q = init_marginals(model.unary, cfg.weight_unary) if q0 is None else np.array(q0, dtype=np.float64)
    trace = InferenceTrace()
    cliques = model.cliques_for(argmax_labeling(q))
    for it in range(1, cfg.max_iterations + 1):
        if cfg.rebuild_cliques_each_iter and it > 1:
            cliques = model.cliques_for(argmax_labeling(q))
        q_next = mean_field_step(q, model, cliques)
        delta = float(np.max(np.abs(q_next - q)))
        q = q_next
        labels = argmax_labeling(q)
        energy = total_energy(labels, model)
        trace.records.append(IterationRecord(it, delta, energy, *cliques.counts()))
        log.debug("iteration %d: max|dQ|=%.3g energy=%.6g cliques=%s", it, delta, energy, cliques.counts())
        if delta < cfg.convergence_tol:
            break
    return q, argmax_labeling(q), trace


def run_inference(
    unary: np.ndarray,
    image: ImageGrid,
    sp: SuperpixelMap | None = None,
    table: RelationTable | None = None,
    cfg: InferenceConfig | None = None,
) -> tuple[np.ndarray, np.ndarray, InferenceTrace]:
    """Iterate synchronous mean-field updates until ``max|dQ| < tol`` or the iteration budget runs out.

    Returns the final marginals, their argmax labelling and the per-iteration trace.
    """
    cfg = cfg or InferenceConfig()
    model = CRFModel(unary, image, cfg, superpixels=sp, table=table)
    return mean_field(model)
