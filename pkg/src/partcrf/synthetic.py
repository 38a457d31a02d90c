"""Deterministic synthetic part-segmentation scenes with corrupted unary fields.

Used by the behavioural tests and ``partcrf demo``. Every scene bundles an
image, a ground-truth label map, a unary field, superpixels and a relation
table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import IoUReport, evaluate_dataset
from .grid import ImageGrid, LabelSet
from .inference import InferenceConfig, run_inference
from .potentials import PairwiseParams
from .relations import RelationTable, relations_from_names
from .superpixels import SuperpixelMap, generate_superpixels

CLEAN_MARGIN = 5.0

# Settings the behavioural suites were built with. The pairwise term is kept
# weak so that it alone does not repair the planted errors.
SUITE_PAIRWISE = PairwiseParams(w_app=0.02, w_sm=0.02, theta_alpha=3.0, theta_beta=13.0, theta_gamma=1.0,
                                truncate_radius=9.0)
SUITE_CONTAINMENT_WEIGHT = 4.0
SUITE_ATTACHMENT_WEIGHT = 10.0
SUITE_SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class Scene:
    name: str
    image: ImageGrid
    labels: LabelSet
    gt: np.ndarray
    unary: np.ndarray
    superpixels: SuperpixelMap
    table: RelationTable
    corrupted: np.ndarray  # flat indices of pixels whose unary was corrupted

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.height, self.image.width


def unary_from_labels(labels: np.ndarray, n_labels: int, margin: float, rng: np.random.Generator,
                      jitter: float = 0.25) -> np.ndarray:
    """Energy 0 on the given label and ``margin`` (plus a little jitter) elsewhere."""
    n = labels.shape[0]
    u = margin + jitter * rng.standard_normal((n, n_labels))
    u[np.arange(n), labels] = 0.0
    return u


def _disk(h: int, w: int, center: tuple[float, float], radius: float) -> np.ndarray:
    rr, cc = np.mgrid[:h, :w]
    return (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= radius ** 2


def _render(gt: np.ndarray, colors: np.ndarray, rng: np.random.Generator, noise: float = 4.0) -> ImageGrid:
    img = colors[gt].astype(np.float64) + noise * rng.standard_normal(gt.shape + (3,))
    return ImageGrid(np.clip(img, 0, 255))


def _over_segment(unary: np.ndarray, socket: np.ndarray, inner: int, true: int, rng: np.random.Generator,
                  rate: float, margin: float) -> np.ndarray:
    """Make a fraction of the ``socket`` pixels prefer ``inner`` over their true label by ``margin``."""
    cand = np.flatnonzero(socket.ravel())
    chosen = cand[rng.random(cand.size) < rate]
    unary[chosen] = CLEAN_MARGIN
    unary[chosen, inner] = 0.0
    unary[chosen, true] = margin
    return chosen


def multipart_scene(n_parts: int, seed: int = 0, size: int = 96, part_radius: float = 5.0,
                    socket_width: float = 2.0, corruption_rate: float = 0.8, corruption_margin: float = 1.0,
                    superpixel_count: int | None = None) -> Scene:
    """A body holding ``n_parts - 1`` small round parts on a background.

    ``n_parts`` counts the body and the inner parts, not the background. Each
    part sits in a socket that belongs to the body but is coloured like the
    part, and the unary field over-segments the part into it.
    """
    if n_parts < 2:
        raise ValueError("need a body and at least one inner part")
    rng = np.random.default_rng(seed)
    n_inner = n_parts - 1
    names = ["background", "body"] + [f"part{k}" for k in range(1, n_inner + 1)]
    labels = LabelSet(tuple(names))
    gt = np.zeros((size, size), dtype=np.int64)
    edge = 4
    gt[edge:size - edge, edge:size - edge] = 1
    n_cols = int(np.ceil(np.sqrt(n_inner)))
    n_rows = int(np.ceil(n_inner / n_cols))
    reach = part_radius + socket_width + 3
    inner_lo, inner_hi = edge + reach, size - edge - reach
    ys = np.linspace(inner_lo, inner_hi, n_rows) if n_rows > 1 else [size / 2]
    xs = np.linspace(inner_lo, inner_hi, n_cols) if n_cols > 1 else [size / 2]
    palette = rng.uniform(0, 255, size=(labels.count, 3))
    palette[0] = (30, 60, 30)
    palette[1] = (210, 170, 140)
    look = gt.copy()
    sockets = []
    for k in range(n_inner):
        cy = ys[k // n_cols] + rng.uniform(-1, 1)
        cx = xs[k % n_cols] + rng.uniform(-1, 1)
        part = _disk(size, size, (cy, cx), part_radius)
        socket = _disk(size, size, (cy, cx), part_radius + socket_width) & ~part
        gt[part] = 2 + k
        look[part] = 2 + k
        look[socket] = labels.count + k
        sockets.append(socket)
    socket_colors = 0.85 * palette[2:] + 0.15 * palette[1]
    image = _render(look, np.vstack([palette, socket_colors]), rng)
    unary = unary_from_labels(gt.ravel(), labels.count, CLEAN_MARGIN, rng)
    corrupted = [_over_segment(unary, sock, 2 + k, 1, rng, corruption_rate, corruption_margin)
                 for k, sock in enumerate(sockets)]
    sp = generate_superpixels(image, superpixel_count or max(1, (size * size) // 256), compactness=10.0)
    table = relations_from_names(labels, containment=[(f"part{k}", "body") for k in range(1, n_inner + 1)])
    return Scene(f"parts{n_parts}_seed{seed}", image, labels, gt.ravel(), unary, sp, table, np.concatenate(corrupted))


def eye_in_head_scene(seed: int = 0, size: int = 64, socket_width: float = 2.0, corruption_rate: float = 0.8,
                      corruption_margin: float = 1.0, superpixel_count: int | None = None) -> Scene:
    """An eye inside a head, ringed by a dark socket that belongs to the head.

    The socket looks like the eye, so superpixels group it with the eye and
    the unary field over-segments the eye into it.
    """
    rng = np.random.default_rng(seed)
    labels = LabelSet.of("background", "head", "eye", "nose")
    gt = np.zeros((size, size), dtype=np.int64)
    c = size / 2
    eye_c = (c - size * 0.12 + rng.uniform(-1, 1), c - size * 0.12 + rng.uniform(-1, 1))
    eye_r = size * 0.09
    head = _disk(size, size, (c, c), size * 0.42)
    eye = _disk(size, size, eye_c, eye_r)
    socket = _disk(size, size, eye_c, eye_r + socket_width) & ~eye
    nose = _disk(size, size, (c + size * 0.15, c + size * 0.05), size * 0.07)
    gt[head] = 1
    gt[eye] = 2
    gt[nose] = 3
    palette = np.array([(30, 60, 30), (210, 170, 140), (40, 40, 120), (180, 90, 80)], dtype=np.float64)
    image = _render(np.where(socket, 4, gt), np.vstack([palette, (60, 55, 125)]), rng)
    unary = unary_from_labels(gt.ravel(), labels.count, CLEAN_MARGIN, rng)
    corrupted = _over_segment(unary, socket, 2, 1, rng, corruption_rate, corruption_margin)
    sp = generate_superpixels(image, superpixel_count or max(1, (size * size) // 256), compactness=10.0)
    table = relations_from_names(labels, containment=[("eye", "head")])
    return Scene(f"eye_in_head_seed{seed}", image, labels, gt.ravel(), unary, sp, table, corrupted)


# --- head / neck / torso -----------------------------------------------------

BLOCK_W, BLOCK_H = 4, 3


def head_neck_torso_scene(seed: int = 0, spill_margin: float = 0.4, spill_columns: int = 2) -> Scene:
    """A 15 x 12 figure cut into 4-wide, 3-tall block superpixels.

    Block rows 0-1 are head, row 2 neck, rows 3-4 torso. In every neck block
    the leftmost ``spill_columns`` pixel columns prefer head (top two pixels)
    or torso (bottom pixel), so the unary readout lets head touch torso
    through the neck.
    """
    if not 0 <= spill_columns < BLOCK_W:
        raise ValueError(f"spill_columns must be in [0, {BLOCK_W})")
    rng = np.random.default_rng(seed)
    labels = LabelSet.of("head", "neck", "torso")
    n_block_rows, n_block_cols = 5, 3
    h, w = n_block_rows * BLOCK_H, n_block_cols * BLOCK_W
    row_label = {0: 0, 1: 0, 2: 1, 3: 2, 4: 2}
    gt = np.zeros((h, w), dtype=np.int64)
    assign = np.zeros((h, w), dtype=np.int64)
    for br in range(n_block_rows):
        for bc in range(n_block_cols):
            sl = (slice(br * BLOCK_H, (br + 1) * BLOCK_H), slice(bc * BLOCK_W, (bc + 1) * BLOCK_W))
            gt[sl] = row_label[br]
            assign[sl] = br * n_block_cols + bc
    palette = np.array([(210, 170, 140), (190, 150, 120), (60, 90, 160)], dtype=np.float64)
    image = _render(gt, palette, rng, noise=2.0)
    unary = unary_from_labels(gt.ravel(), labels.count, CLEAN_MARGIN, rng)
    corrupted = []
    for bc in range(n_block_cols):
        for dc in range(spill_columns):
            col = bc * BLOCK_W + dc
            for dr, wrong in ((0, 0), (1, 0), (2, 2)):
                i = (2 * BLOCK_H + dr) * w + col
                unary[i, :] = CLEAN_MARGIN
                unary[i, wrong] = 0.0
                unary[i, 1] = spill_margin
                corrupted.append(i)
    sp = SuperpixelMap.from_assignment(assign)
    table = relations_from_names(labels, attachment=[("head", "neck"), ("neck", "torso")])
    return Scene(f"head_neck_torso_seed{seed}", image, labels, gt.ravel(), unary, sp, table,
                 np.array(corrupted, dtype=np.int64))


def suite_config(containment: float = 0.0, attachment: float = 0.0) -> InferenceConfig:
    """Unary plus weak pairwise, with the given relational weights and no superpixel term."""
    return InferenceConfig(weight_superpixel=0.0, weight_containment=containment, weight_attachment=attachment,
                           pairwise=SUITE_PAIRWISE)


def run_suite(scenes: list[Scene], cfg: InferenceConfig) -> IoUReport:
    """Global-count IoU of ``cfg`` over ``scenes`` (all scenes must share a label set)."""
    pairs = []
    for sc in scenes:
        _, pred, _ = run_inference(sc.unary, sc.image, sc.superpixels, sc.table, cfg)
        pairs.append((pred, sc.gt))
    return evaluate_dataset(pairs, scenes[0].labels)
