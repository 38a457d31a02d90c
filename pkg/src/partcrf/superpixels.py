"""Compact, 4-connected superpixels and the geometry the relation terms need."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import FormatError, ImageGrid, InvalidParameterError

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

DEFAULT_COMPACTNESS = 10.0
DEFAULT_PIXELS_PER_SUPERPIXEL = 256


@dataclass(frozen=True)
class SuperpixelMap:
    """Pixel-to-superpixel assignment on a ``height x width`` grid.

    Ids are dense ``0..S-1``; every superpixel is non-empty and 4-connected
    (checked on construction).
    """

    assignment: np.ndarray
    height: int
    width: int
    centroids: np.ndarray = field(init=False, repr=False)
    sizes: np.ndarray = field(init=False, repr=False)
    _order: np.ndarray = field(init=False, repr=False)
    _starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.assignment).astype(np.int64).ravel()
        if a.shape[0] != self.height * self.width or a.size == 0:
            raise InvalidParameterError("assignment length does not match grid")
        if a.min() != 0:
            raise InvalidParameterError("superpixel ids must start at 0")
        sizes = np.bincount(a)
        if np.any(sizes == 0):
            raise InvalidParameterError("superpixel ids must be dense")
        grid = a.reshape(self.height, self.width)
        for s, sl in enumerate(ndimage.find_objects(grid + 1)):
            _, n = ndimage.label(grid[sl] == s, structure=FOUR_CONNECTED)
            if n != 1:
                raise InvalidParameterError(f"superpixel {s} is not 4-connected")
        rows, cols = np.divmod(np.arange(a.size), self.width)
        centroids = np.stack(
            [np.bincount(a, weights=rows) / sizes, np.bincount(a, weights=cols) / sizes], axis=1
        )
        order = np.argsort(a, kind="stable")
        starts = np.concatenate([[0], np.cumsum(sizes)])
        for name, val in (("assignment", a), ("centroids", centroids), ("sizes", sizes),
                          ("_order", order), ("_starts", starts)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def count(self) -> int:
        return int(self.sizes.shape[0])

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def members(self, s: int) -> np.ndarray:
        """Pixel indices of superpixel ``s`` in increasing order."""
        self._check_id(s)
        return self._order[self._starts[s]:self._starts[s + 1]]

    def _check_id(self, s: int):
        if not 0 <= int(s) < self.count:
            raise InvalidParameterError(f"superpixel id {s} out of range 0..{self.count - 1}")

    @classmethod
    def from_assignment(cls, assignment: np.ndarray) -> "SuperpixelMap":
        a = np.asarray(assignment)
        if a.ndim != 2:
            raise InvalidParameterError("expected a 2-d assignment array")
        return cls(a.ravel(), a.shape[0], a.shape[1])

    def as_grid(self) -> np.ndarray:
        return self.assignment.reshape(self.height, self.width)


@dataclass(frozen=True)
class BoundaryClique:
    superpixel_id: int
    pixels: tuple[int, ...]

    def __len__(self):
        return len(self.pixels)


def is_connected(mask: np.ndarray) -> bool:
    """Flood-fill check that a boolean mask forms exactly one 4-connected component."""
    _, n = ndimage.label(np.asarray(mask, dtype=bool), structure=FOUR_CONNECTED)
    return n == 1


def _seed_grid(height: int, width: int, target_count: int) -> np.ndarray:
    n_rows = min(height, max(1, int(round(math.sqrt(target_count * height / width)))))
    n_cols = min(width, max(1, int(round(target_count / n_rows))))
    rows = (np.arange(n_rows) + 0.5) * height / n_rows - 0.5
    cols = (np.arange(n_cols) + 0.5) * width / n_cols - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep the largest 4-connected piece of every cluster; fold the others into a neighbour."""
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int64)
    owner = []  # cluster id of each component
    n_comp = 0
    for k in np.unique(labels):
        cl, n = ndimage.label(labels == k, structure=FOUR_CONNECTED)
        mask = cl > 0
        comp[mask] = cl[mask] - 1 + n_comp
        owner.extend([k] * n)
        n_comp += n
    sizes = np.bincount(comp.ravel(), minlength=n_comp)
    owner = np.asarray(owner)
    keep = np.zeros(n_comp, dtype=bool)
    for k in np.unique(owner):
        ids = np.flatnonzero(owner == k)
        keep[ids[np.argmax(sizes[ids])]] = True

    # merge orphan components into the adjacent kept component touching the most
    # of their outer pixels (ties to the smaller component id); orphans only
    # bordering other orphans wait for a later sweep
    n = h * w
    idx = np.arange(n).reshape(h, w)
    src = np.concatenate([idx[:, :-1].ravel(), idx[:, 1:].ravel(), idx[:-1, :].ravel(), idx[1:, :].ravel()])
    dst = np.concatenate([idx[:, 1:].ravel(), idx[:, :-1].ravel(), idx[1:, :].ravel(), idx[:-1, :].ravel()])
    cur = comp.ravel()
    while not keep[cur].all():
        m = ~keep[cur[src]] & keep[cur[dst]]
        if not m.any():
            raise RuntimeError("connectivity enforcement stalled")
        touch = np.unique(cur[src[m]] * n + dst[m])
        orphan, target = touch // n, cur[touch % n]
        pair, counts = np.unique(orphan * n_comp + target, return_counts=True)
        po, pt = pair // n_comp, pair % n_comp
        order = np.lexsort((pt, -counts, po))
        po, pt = po[order], pt[order]
        first = np.r_[True, po[1:] != po[:-1]]
        remap = np.arange(n_comp)
        remap[po[first]] = pt[first]
        keep[po[first]] = True
        cur = remap[cur]
    comp = cur.reshape(h, w)

    # dense ids in order of first appearance (row-major)
    _, first, inverse = np.unique(comp.ravel(), return_index=True, return_inverse=True)
    rank = np.empty_like(first)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse].reshape(h, w)


def generate_superpixels(
    image: ImageGrid,
    target_count: int | None = None,
    compactness: float = DEFAULT_COMPACTNESS,
    n_iter: int = 10,
) -> SuperpixelMap:
    """SLIC-style clustering over colour and scaled position.

    Seeds are laid out on a regular grid (no randomness), each pixel is
    assigned to the nearest seed inside a ``2S x 2S`` window with distance
    ``|dI|^2 + (|dp| / S)^2 * compactness^2`` and seeds move to their
    cluster means. A final pass makes every superpixel 4-connected.
    """
    h, w = image.height, image.width
    n = h * w
    if target_count is None:
        target_count = max(1, n // DEFAULT_PIXELS_PER_SUPERPIXEL)
    if target_count < 1 or target_count > n:
        raise InvalidParameterError(f"target_count must be in 1..{n}, got {target_count}")
    if not compactness > 0:
        raise InvalidParameterError("compactness must be positive")

    step = math.sqrt(n / target_count)
    pos = image.positions
    col = image.features
    centers_pos = _seed_grid(h, w, target_count)
    # seed colour = colour of the nearest pixel to the seed location
    seed_pix = np.rint(centers_pos).astype(np.int64)
    centers_col = col[seed_pix[:, 0] * w + seed_pix[:, 1]]
    spatial_scale = (compactness / step) ** 2

    rows = pos[:, 0].reshape(h, w)
    cols = pos[:, 1].reshape(h, w)
    col_grid = col.reshape(h, w, -1)
    k_total = len(centers_pos)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(n_iter):
        best = np.full((h, w), np.inf)
        new_assign = np.zeros((h, w), dtype=np.int64)
        for k in range(k_total):
            cy, cx = centers_pos[k]
            r0, r1 = max(0, math.ceil(cy - step)), min(h, math.floor(cy + step) + 1)
            c0, c1 = max(0, math.ceil(cx - step)), min(w, math.floor(cx + step) + 1)
            if r0 >= r1 or c0 >= c1:
                continue
            win = (slice(r0, r1), slice(c0, c1))
            dist = ((col_grid[win] - centers_col[k]) ** 2).sum(axis=2) + spatial_scale * (
                (rows[win] - cy) ** 2 + (cols[win] - cx) ** 2)
            # strict comparison keeps the lowest seed index on ties
            closer = dist < best[win]
            best[win] = np.where(closer, dist, best[win])
            new_assign[win] = np.where(closer, k, new_assign[win])
        new_assign = new_assign.ravel()
        # a pixel outside every window falls back to its spatially closest seed
        lost = np.flatnonzero(~np.isfinite(best.ravel()))
        if lost.size:
            d_pos = ((pos[lost, None, :] - centers_pos[None, :, :]) ** 2).sum(axis=2)
            new_assign[lost] = np.argmin(d_pos, axis=1)
        counts = np.bincount(new_assign, minlength=k_total)
        live = counts > 0
        for dim in range(2):
            centers_pos[live, dim] = np.bincount(new_assign, weights=pos[:, dim], minlength=k_total)[live] / counts[live]
        for ch in range(col.shape[1]):
            centers_col[live, ch] = np.bincount(new_assign, weights=col[:, ch], minlength=k_total)[live] / counts[live]
        converged = np.array_equal(new_assign, assign)
        assign = new_assign
        if converged:
            break

    grid = _enforce_connectivity(assign.reshape(h, w))
    return SuperpixelMap(grid.ravel(), h, w)


def boundary_pixel_mask(sp: SuperpixelMap) -> np.ndarray:
    """Flat boolean mask of pixels with a 4-neighbour in another superpixel or off-image."""
    g = sp.as_grid()
    padded = np.pad(g, 1, constant_values=-1)
    core = padded[1:-1, 1:-1]
    mask = (padded[:-2, 1:-1] != core) | (padded[2:, 1:-1] != core) | \
           (padded[1:-1, :-2] != core) | (padded[1:-1, 2:] != core)
    return mask.ravel()


def boundary_clique(sp: SuperpixelMap, s: int, _mask: np.ndarray | None = None) -> BoundaryClique:
    sp._check_id(s)
    mask = boundary_pixel_mask(sp) if _mask is None else _mask
    members = sp.members(s)
    return BoundaryClique(int(s), tuple(int(i) for i in members[mask[members]]))


def boundary_cliques(sp: SuperpixelMap) -> list[BoundaryClique]:
    mask = boundary_pixel_mask(sp)
    return [boundary_clique(sp, s, mask) for s in range(sp.count)]


def outer_ring(sp: SuperpixelMap, s: int) -> np.ndarray:
    """Pixels outside superpixel ``s`` that are 4-adjacent to it."""
    sp._check_id(s)
    mask = (sp.as_grid() == s)
    ring = ndimage.binary_dilation(mask, structure=FOUR_CONNECTED) & ~mask
    return np.flatnonzero(ring.ravel())


def centroid_distance(sp: SuperpixelMap, a: int, b: int) -> float:
    sp._check_id(a)
    sp._check_id(b)
    return float(np.hypot(*(sp.centroids[a] - sp.centroids[b])))


def centroid_distances(sp: SuperpixelMap) -> np.ndarray:
    """``S x S`` matrix of centroid distances."""
    diff = sp.centroids[:, None, :] - sp.centroids[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def superpixel_widths(sp: SuperpixelMap) -> np.ndarray:
    cols = np.arange(sp.n_pixels) % sp.width
    lo = np.full(sp.count, np.iinfo(np.int64).max)
    hi = np.full(sp.count, -1)
    np.minimum.at(lo, sp.assignment, cols)
    np.maximum.at(hi, sp.assignment, cols)
    return (hi - lo + 1).astype(np.float64)


def attachment_threshold(sp: SuperpixelMap) -> float:
    """Distance gate ``d`` for attachment cliques: mean column span of the superpixels."""
    return float(superpixel_widths(sp).mean())


def majority_labels(sp: SuperpixelMap, labels: np.ndarray, n_labels: int) -> np.ndarray:
    """Mode of ``labels`` inside every superpixel, ties toward the smaller label id."""
    counts = np.zeros((sp.count, n_labels), dtype=np.int64)
    np.add.at(counts, (sp.assignment, np.asarray(labels, dtype=np.int64)), 1)
    return np.argmax(counts, axis=1)


def save_superpixels(sp: SuperpixelMap, path) -> None:
    ids = " ".join(str(int(v)) for v in sp.assignment)
    Path(path).write_text(f"{sp.count} {sp.height} {sp.width}\n{ids}\n")


def load_superpixels(path) -> SuperpixelMap:
    text = Path(path).read_text()
    head, _, body = text.partition("\n")
    try:
        s, h, w = (int(v) for v in head.split())
        ids = np.array([int(v) for v in body.split()], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed superpixel file ({exc})", 0) from None
    if ids.size != h * w:
        raise FormatError(f"{path}: expected {h * w} ids, found {ids.size}", len(head) + 1)
    sp = SuperpixelMap(ids, h, w)
    if sp.count != s:
        raise FormatError(f"{path}: header says {s} superpixels, found {sp.count}", 0)
    return sp
