"""Containment / attachment look-up tables and how to learn them from ground truth."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .grid import FormatError, InvalidParameterError, LabelSet, check_labels
from .superpixels import (
    SuperpixelMap,
    attachment_threshold,
    boundary_pixel_mask,
    centroid_distances,
    majority_labels,
    outer_ring,
)

DEFAULT_PROPORTION_THRESHOLD = 0.5
DEFAULT_W_HIGH = 1.0


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class RelationTable:
    """Related label pairs and the pattern weights used by the relation terms.

    ``containment`` holds ordered ``(inner, outer)`` pairs, ``attachment``
    unordered pairs stored as sorted tuples. Containment low weights are per
    label, attachment low weights per pair; ``w_high`` is shared.
    """

    containment: frozenset = frozenset()
    attachment: frozenset = frozenset()
    w_low_containment: Mapping[int, float] = field(default_factory=dict)
    w_low_attachment: Mapping[tuple[int, int], float] = field(default_factory=dict)
    w_high: float = DEFAULT_W_HIGH

    def __post_init__(self):
        cont = frozenset((int(a), int(b)) for a, b in self.containment)
        att = frozenset(_pair(int(a), int(b)) for a, b in self.attachment)
        if any(a == b for a, b in cont):
            raise InvalidParameterError("containment pair relates a label to itself")
        if any(a == b for a, b in att):
            raise InvalidParameterError("attachment pair relates a label to itself")
        wc = {int(k): float(v) for k, v in self.w_low_containment.items()}
        wa = {_pair(*map(int, k)): float(v) for k, v in self.w_low_attachment.items()}
        w_high = float(self.w_high)
        if any(v > w_high for v in itertools.chain(wc.values(), wa.values())):
            raise InvalidParameterError("every w_low must be <= w_high")
        object.__setattr__(self, "containment", cont)
        object.__setattr__(self, "attachment", att)
        object.__setattr__(self, "w_low_containment", wc)
        object.__setattr__(self, "w_low_attachment", wa)
        object.__setattr__(self, "w_high", w_high)

    def w_low_for(self, label: int) -> float:
        return self.w_low_containment.get(int(label), 0.0)

    def attached(self, l1: int, l2: int) -> bool:
        return l1 != l2 and _pair(int(l1), int(l2)) in self.attachment

    def validate(self, labels: LabelSet) -> "RelationTable":
        ids = set(itertools.chain.from_iterable(self.containment | self.attachment))
        ids |= set(self.w_low_containment)
        if any(not 0 <= i < labels.count for i in ids):
            raise InvalidParameterError("relation table references labels outside the label set")
        return self


def lookup_containment(table: RelationTable, l: int, l_prime: int) -> float:
    """Weight of the containment pattern for pixel label ``l`` on a clique whose container label is ``l_prime``.

    Low when the two labels are related in either direction (the container
    may be the majority label of an inner part's superpixel or the reverse),
    or when ``l == l_prime``; ``w_high`` otherwise.
    """
    l, l_prime = int(l), int(l_prime)
    if l == l_prime or (l, l_prime) in table.containment or (l_prime, l) in table.containment:
        return table.w_low_for(l)
    return table.w_high


def lookup_attachment(table: RelationTable, l1: int, l2: int) -> float:
    if table.attached(l1, l2):
        return table.w_low_attachment.get(_pair(int(l1), int(l2)), 0.0)
    return table.w_high


@dataclass(frozen=True)
class RelationStats:
    images_with_both: int = 0
    images_satisfying_relation: int = 0

    @property
    def proportion(self) -> float:
        if self.images_with_both == 0:
            return 0.0
        return self.images_satisfying_relation / self.images_with_both


def measure_containment(gt: np.ndarray, sp: SuperpixelMap, inner: int, outer: int) -> bool:
    """Does some ``inner``-majority superpixel sit inside ``outer``?

    The band examined is the superpixel's boundary clique together with the
    pixels just outside it; every pixel there must be ``inner`` or ``outer``
    and at least one must be ``outer``.
    """
    gt = np.asarray(gt, dtype=np.int64)
    if inner == outer or not np.any(gt == inner):
        return False
    n_labels = int(max(gt.max(), inner, outer)) + 1
    major = majority_labels(sp, gt, n_labels)
    bmask = boundary_pixel_mask(sp)
    for s in np.flatnonzero(major == inner):
        members = sp.members(s)
        band = np.concatenate([members[bmask[members]], outer_ring(sp, s)])
        vals = gt[band]
        if np.all((vals == inner) | (vals == outer)) and np.any(vals == outer):
            return True
    return False


def measure_attachment(gt: np.ndarray, sp: SuperpixelMap, d: float, l1: int, l2: int) -> bool:
    """Two pure superpixels labelled ``l1`` and ``l2`` with centroids closer than ``d``."""
    if not d > 0:
        raise InvalidParameterError("d must be positive")
    if l1 == l2:
        return False
    gt = np.asarray(gt, dtype=np.int64)
    n_labels = int(max(gt.max(), l1, l2)) + 1
    major = majority_labels(sp, gt, n_labels)
    pure = np.array([np.all(gt[sp.members(s)] == major[s]) for s in range(sp.count)])
    a = np.flatnonzero(pure & (major == l1))
    b = np.flatnonzero(pure & (major == l2))
    if a.size == 0 or b.size == 0:
        return False
    dist = centroid_distances(sp)[np.ix_(a, b)]
    return bool(np.any(dist < d))


def relation_stats(
    dataset: Sequence[tuple[np.ndarray, SuperpixelMap]],
    labels: LabelSet,
    d: float | None = None,
) -> tuple[dict[tuple[int, int], RelationStats], dict[tuple[int, int], RelationStats]]:
    """Per-pair image counts for containment (ordered pairs) and attachment (unordered)."""
    L = labels.count
    cont = {(a, b): [0, 0] for a in range(L) for b in range(L) if a != b}
    att = {(a, b): [0, 0] for a in range(L) for b in range(a + 1, L)}
    for gt, sp in dataset:
        gt = check_labels(gt, L, sp.n_pixels)
        present = set(np.unique(gt).tolist())
        d_img = attachment_threshold(sp) if d is None else d
        for (a, b), c in cont.items():
            if a in present and b in present:
                c[0] += 1
                c[1] += measure_containment(gt, sp, a, b)
        for (a, b), c in att.items():
            if a in present and b in present:
                c[0] += 1
                c[1] += measure_attachment(gt, sp, d_img, a, b)
    as_stats = lambda m: {k: RelationStats(*v) for k, v in m.items()}  # noqa: E731
    return as_stats(cont), as_stats(att)


def learn_relations(
    dataset: Sequence[tuple[np.ndarray, SuperpixelMap]],
    labels: LabelSet,
    proportion_threshold: float = DEFAULT_PROPORTION_THRESHOLD,
    d: float | None = None,
    w_high: float = DEFAULT_W_HIGH,
) -> RelationTable:
    """Keep every pair whose relation holds in at least ``proportion_threshold`` of the
    images where both labels occur.

    ``d`` defaults to each image's own attachment threshold. Low weights start at 0.
    """
    if len(dataset) == 0:
        raise InvalidParameterError("dataset is empty")
    if not 0 < proportion_threshold <= 1:
        raise InvalidParameterError("proportion_threshold must be in (0, 1]")
    cont_stats, att_stats = relation_stats(dataset, labels, d)
    cont = {k for k, s in cont_stats.items() if s.images_with_both and s.proportion >= proportion_threshold}
    att = {k for k, s in att_stats.items() if s.images_with_both and s.proportion >= proportion_threshold}
    return RelationTable(
        containment=frozenset(cont),
        attachment=frozenset(att),
        w_low_containment={a: 0.0 for a, _ in cont},
        w_low_attachment={k: 0.0 for k in att},
        w_high=w_high,
    )


def format_relations(table: RelationTable, labels: LabelSet) -> str:
    table.validate(labels)
    names = labels.names
    lines = []
    for a, b in sorted(table.containment):
        lines.append(f"C {names[a]} {names[b]} {table.w_low_for(a)!r}")
    for a, b in sorted(table.attachment):
        lines.append(f"A {names[a]} {names[b]} {table.w_low_attachment.get((a, b), 0.0)!r}")
    lines.append(f"H {table.w_high!r}")
    return "\n".join(lines) + "\n"


def parse_relations(text: str, labels: LabelSet, source: str = "<relations>") -> RelationTable:
    cont, att, wc, wa = set(), set(), {}, {}
    w_high = None
    offset = 0
    for lineno, raw in enumerate(text.splitlines(keepends=True), 1):
        line = raw.split("#", 1)[0].strip()
        here = offset
        offset += len(raw.encode())
        if not line:
            continue
        parts = line.split()

        def fail(msg):
            return FormatError(f"{source}:{lineno}: {msg}", here)

        try:
            if parts[0] == "H" and len(parts) == 2:
                if w_high is not None:
                    raise fail("H record given more than once")
                w_high = float(parts[1])
                continue
            if parts[0] not in ("C", "A") or len(parts) != 4:
                raise fail(f"unrecognised record {line!r}")
            a, b = labels.index(parts[1]), labels.index(parts[2])
            w = float(parts[3])
        except KeyError as exc:
            raise fail(exc.args[0]) from None
        except ValueError:
            raise fail(f"bad number in {line!r}") from None
        if parts[0] == "C":
            if a in wc and wc[a] != w:
                raise fail(f"conflicting w_low for label {parts[1]}")
            cont.add((a, b))
            wc[a] = w
        else:
            att.add(_pair(a, b))
            wa[_pair(a, b)] = w
    if w_high is None:
        raise FormatError(f"{source}: missing H record", offset)
    try:
        return RelationTable(frozenset(cont), frozenset(att), wc, wa, w_high)
    except InvalidParameterError as exc:
        raise FormatError(f"{source}: {exc}", 0) from None


def save_relations(table: RelationTable, labels: LabelSet, path) -> None:
    Path(path).write_text(format_relations(table, labels))


def load_relations(path, labels: LabelSet) -> RelationTable:
    return parse_relations(Path(path).read_text(), labels, str(path))


def relations_from_names(
    labels: LabelSet,
    containment: Iterable[tuple[str, str]] = (),
    attachment: Iterable[tuple[str, str]] = (),
    w_high: float = DEFAULT_W_HIGH,
    w_low: float = 0.0,
) -> RelationTable:
    """Hand-authored table with a single low weight for every pair."""
    cont = {(labels.index(a), labels.index(b)) for a, b in containment}
    att = {_pair(labels.index(a), labels.index(b)) for a, b in attachment}
    return RelationTable(
        frozenset(cont), frozenset(att),
        {a: w_low for a, _ in cont}, {k: w_low for k in att}, w_high,
    )
