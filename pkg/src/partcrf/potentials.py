"""Per-pixel, per-label message contributions of every energy term.

A message field ``m`` is an ``(N, L)`` array holding, for each pixel ``i`` and
label ``l``, the expected clique energy given ``x_i = l`` under the factorized
marginals of the remaining clique members. The mean-field update is
``Q_i(l) ~ exp(-unary[i, l] - m[i, l])``.

Pattern potentials (superpixel, containment, attachment) assign a low weight
to one labelling pattern of a clique and ``w_high`` to everything else, so
their messages reduce to ``P * w_low + (1 - P) * w_high`` with ``P`` the
probability that the other members complete the pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import ImageGrid, InvalidParameterError
from .relations import RelationTable, lookup_attachment, lookup_containment
from .superpixels import (
    BoundaryClique,
    SuperpixelMap,
    boundary_cliques,
    centroid_distances,
    majority_labels,
)

# dense kernels above this many pixels are rebuilt row-block by row-block instead of cached
DENSE_KERNEL_CACHE_LIMIT = 4096
_ROW_BLOCK = 512


@dataclass(frozen=True)
class PairwiseParams:
    """Two-kernel Gaussian pairwise term with Potts compatibility.

    ``k(i, j) = w_app * exp(-|p_i-p_j|^2 / 2 theta_alpha^2 - |I_i-I_j|^2 / 2 theta_beta^2)
              + w_sm  * exp(-|p_i-p_j|^2 / 2 theta_gamma^2)``

    ``truncate_radius`` switches to an inexact evaluation that drops every
    pair farther apart than the radius.
    """

    w_app: float = 3.0
    w_sm: float = 1.0
    theta_alpha: float = 8.0
    theta_beta: float = 13.0
    theta_gamma: float = 1.0
    truncate_radius: float | None = None

    def __post_init__(self):
        if min(self.theta_alpha, self.theta_beta, self.theta_gamma) <= 0:
            raise InvalidParameterError("kernel bandwidths must be positive")
        if self.w_app < 0 or self.w_sm < 0:
            raise InvalidParameterError("kernel weights must be non-negative")
        if self.truncate_radius is not None and self.truncate_radius <= 0:
            raise InvalidParameterError("truncate_radius must be positive")

    @property
    def exact(self) -> bool:
        return self.truncate_radius is None


@dataclass(frozen=True)
class ContainmentClique:
    boundary: BoundaryClique
    l_prime: int

    @property
    def pixels(self) -> tuple[int, ...]:
        return self.boundary.pixels


@dataclass(frozen=True)
class AttachmentClique:
    c1: tuple[int, ...]
    c2: tuple[int, ...]
    l1: int
    l2: int
    superpixels: tuple[int, int] | None = None

    def __post_init__(self):
        if self.l1 == self.l2:
            raise InvalidParameterError("attachment clique needs two distinct labels")
        if set(self.c1) & set(self.c2):
            raise InvalidParameterError("attachment clique halves must be disjoint")
        if not self.c1 or not self.c2:
            raise InvalidParameterError("attachment clique halves must be non-empty")


@dataclass(frozen=True)
class CliqueSet:
    superpixel_cliques: tuple[tuple[int, ...], ...] = ()
    containment_cliques: tuple[ContainmentClique, ...] = ()
    attachment_cliques: tuple[AttachmentClique, ...] = ()

    def counts(self) -> tuple[int, int, int]:
        return len(self.superpixel_cliques), len(self.containment_cliques), len(self.attachment_cliques)

    def validate(self, n_pixels: int, n_labels: int) -> "CliqueSet":
        def ok(pixels):
            return all(0 <= p < n_pixels for p in pixels)

        if not all(ok(c) for c in self.superpixel_cliques):
            raise InvalidParameterError("superpixel clique has an invalid pixel index")
        for c in self.containment_cliques:
            if not ok(c.pixels) or not 0 <= c.l_prime < n_labels:
                raise InvalidParameterError("invalid containment clique")
        for c in self.attachment_cliques:
            if not (ok(c.c1) and ok(c.c2)) or not (0 <= c.l1 < n_labels and 0 <= c.l2 < n_labels):
                raise InvalidParameterError("invalid attachment clique")
        return self


# --------------------------------------------------------------------------
# pairwise

def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0, out=d)


def _kernel_rows(image: ImageGrid, params: PairwiseParams, rows: slice) -> np.ndarray:
    pos = image.positions
    col = image.features
    d_pos = _sq_dist(pos[rows], pos)
    k = np.zeros_like(d_pos)
    if params.w_app:
        d_col = _sq_dist(col[rows], col)
        k += params.w_app * np.exp(-d_pos / (2 * params.theta_alpha ** 2) - d_col / (2 * params.theta_beta ** 2))
    if params.w_sm:
        k += params.w_sm * np.exp(-d_pos / (2 * params.theta_gamma ** 2))
    start = rows.start or 0
    idx = np.arange(k.shape[0])
    k[idx, idx + start] = 0.0
    return k


def pairwise_kernel(image: ImageGrid, params: PairwiseParams) -> np.ndarray:
    """Dense ``N x N`` kernel matrix with a zero diagonal."""
    n = image.n_pixels
    return np.vstack([_kernel_rows(image, params, slice(s, min(s + _ROW_BLOCK, n)))
                      for s in range(0, n, _ROW_BLOCK)])


class PairwiseOperator:
    """Applies the Potts pairwise message ``m[i, l] = sum_j k_ij (1 - q[j, l])``.

    The kernel is cached for small images; larger ones are streamed.
    """

    def __init__(self, image: ImageGrid, params: PairwiseParams):
        self.image = image
        self.params = params
        self._kernel = None
        self._rowsum = None
        if params.exact and image.n_pixels <= DENSE_KERNEL_CACHE_LIMIT:
            self._kernel = pairwise_kernel(image, params)
            self._rowsum = self._kernel.sum(axis=1)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        if self.params.w_app == 0 and self.params.w_sm == 0:
            return np.zeros_like(q)
        if not self.params.exact:
            return _truncated_message(q, self.image, self.params)
        if self._kernel is not None:
            return self._rowsum[:, None] - self._kernel @ q
        n = self.image.n_pixels
        out = np.empty_like(q)
        for s in range(0, n, _ROW_BLOCK):
            rows = slice(s, min(s + _ROW_BLOCK, n))
            k = _kernel_rows(self.image, self.params, rows)
            out[rows] = k.sum(axis=1)[:, None] - k @ q
        return out


def _truncated_message(q: np.ndarray, image: ImageGrid, params: PairwiseParams) -> np.ndarray:
    """Inexact pairwise message restricted to pairs within ``truncate_radius``."""
    h, w = image.height, image.width
    L = q.shape[1]
    r = int(np.floor(params.truncate_radius))
    img = image.pixels
    qg = (1.0 - q).reshape(h, w, L)
    out = np.zeros((h, w, L))
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            d2 = dr * dr + dc * dc
            if d2 == 0 or d2 > params.truncate_radius ** 2:
                continue
            # destination window and the window it reads from
            r0, r1 = max(0, -dr), min(h, h - dr)
            c0, c1 = max(0, -dc), min(w, w - dc)
            if r0 >= r1 or c0 >= c1:
                continue
            src = (slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
            dst = (slice(r0, r1), slice(c0, c1))
            dcol = ((img[dst] - img[src]) ** 2).sum(axis=2)
            k = np.zeros(dcol.shape)
            if params.w_app:
                k += params.w_app * np.exp(-d2 / (2 * params.theta_alpha ** 2) - dcol / (2 * params.theta_beta ** 2))
            if params.w_sm:
                k += params.w_sm * np.exp(-d2 / (2 * params.theta_gamma ** 2))
            out[dst] += k[:, :, None] * qg[src]
    return out.reshape(h * w, L)


def pairwise_message(q_prev: np.ndarray, image: ImageGrid, params: PairwiseParams) -> np.ndarray:
    return PairwiseOperator(image, params)(np.asarray(q_prev, dtype=np.float64))


# --------------------------------------------------------------------------
# single-entry pattern messages

def _others(clique: Sequence[int], i: int) -> np.ndarray:
    c = np.asarray(clique, dtype=np.int64)
    if i not in c:
        raise InvalidParameterError(f"pixel {i} is not in the clique")
    return c[c != i]


def superpixel_message(
    q_prev: np.ndarray,
    clique: Sequence[int],
    i: int,
    l: int,
    w_low_fn: Callable[[int], float] | float,
    w_high: float,
) -> float:
    """``P * w_low(l) + (1 - P) * w_high`` with ``P = prod_{j != i} q[j, l]``."""
    w_low = w_low_fn(l) if callable(w_low_fn) else float(w_low_fn)
    p = float(np.prod(q_prev[_others(clique, i), l]))
    return p * w_low + (1.0 - p) * w_high


def containment_message(
    q_prev: np.ndarray,
    clique: BoundaryClique | Sequence[int],
    l_prime: int,
    i: int,
    l: int,
    table: RelationTable,
) -> float:
    """Containment update for pixel ``i`` taking label ``l`` on a boundary clique with container ``l_prime``.

    ``P = prod_{j != i} (q[j, l] + q[j, l_prime])``, collapsing to ``q[j, l]`` when ``l == l_prime``.
    """
    pixels = clique.pixels if isinstance(clique, BoundaryClique) else clique
    others = _others(pixels, i)
    s = q_prev[others, l] if l == l_prime else q_prev[others, l] + q_prev[others, l_prime]
    p = float(np.prod(s))
    return p * lookup_containment(table, l, l_prime) + (1.0 - p) * table.w_high


def attachment_gamma(q_prev: np.ndarray, clique: AttachmentClique, i: int, l: int) -> float:
    """Probability that the clique shows its low-weight pattern given ``x_i = l``."""
    c1 = np.asarray(clique.c1, dtype=np.int64)
    c2 = np.asarray(clique.c2, dtype=np.int64)
    if l == clique.l1 and i in c1:
        return float(np.prod(q_prev[c1[c1 != i], clique.l1]) * np.prod(q_prev[c2, clique.l2]))
    if l == clique.l2 and i in c2:
        return float(np.prod(q_prev[c1, clique.l1]) * np.prod(q_prev[c2[c2 != i], clique.l2]))
    if i not in c1 and i not in c2:
        raise InvalidParameterError(f"pixel {i} is not in the clique")
    return 0.0


def attachment_message(
    q_prev: np.ndarray, clique: AttachmentClique, i: int, l: int, table: RelationTable
) -> float:
    gamma = attachment_gamma(q_prev, clique, i, l)
    return lookup_attachment(table, clique.l1, clique.l2) * gamma + table.w_high * (1.0 - gamma)


# --------------------------------------------------------------------------
# whole-field pattern messages

def _exclusive_prod(a: np.ndarray) -> np.ndarray:
    """Product along axis 0 of every entry except the row itself."""
    ones = np.ones((1,) + a.shape[1:])
    pre = np.cumprod(np.concatenate([ones, a[:-1]]), axis=0)
    suf = np.cumprod(np.concatenate([ones, a[::-1][:-1]]), axis=0)[::-1]
    return pre * suf


def superpixel_message_field(
    q: np.ndarray, cliques: Sequence[Sequence[int]], w_low: np.ndarray, w_high: float
) -> np.ndarray:
    m = np.zeros_like(q)
    w_low = np.broadcast_to(np.asarray(w_low, dtype=np.float64), (q.shape[1],))
    for c in cliques:
        idx = np.asarray(c, dtype=np.int64)
        p = _exclusive_prod(q[idx])
        np.add.at(m, idx, p * w_low[None, :] + (1.0 - p) * w_high)
    return m


def containment_weights(table: RelationTable, l_prime: int, n_labels: int) -> np.ndarray:
    return np.array([lookup_containment(table, l, l_prime) for l in range(n_labels)])


def containment_message_field(
    q: np.ndarray, cliques: Sequence[ContainmentClique], table: RelationTable
) -> np.ndarray:
    m = np.zeros_like(q)
    n_labels = q.shape[1]
    weights = {}
    for c in cliques:
        idx = np.asarray(c.pixels, dtype=np.int64)
        if idx.size == 0:
            continue
        lp = c.l_prime
        if lp not in weights:
            weights[lp] = containment_weights(table, lp, n_labels)
        qc = q[idx]
        s = qc + qc[:, lp:lp + 1]
        s[:, lp] = qc[:, lp]
        p = _exclusive_prod(s)
        np.add.at(m, idx, p * weights[lp][None, :] + (1.0 - p) * table.w_high)
    return m


def attachment_message_field(
    q: np.ndarray, cliques: Sequence[AttachmentClique], table: RelationTable
) -> np.ndarray:
    m = np.zeros_like(q)
    w_high = table.w_high
    for c in cliques:
        w_low = lookup_attachment(table, c.l1, c.l2)
        c1 = np.asarray(c.c1, dtype=np.int64)
        c2 = np.asarray(c.c2, dtype=np.int64)
        a1 = q[c1, c.l1]
        a2 = q[c2, c.l2]
        g1 = _exclusive_prod(a1) * np.prod(a2)
        g2 = np.prod(a1) * _exclusive_prod(a2)
        m[c1] += w_high
        m[c2] += w_high
        m[c1, c.l1] += g1 * (w_low - w_high)
        m[c2, c.l2] += g2 * (w_low - w_high)
    return m


# --------------------------------------------------------------------------
# clique construction

def build_superpixel_cliques(sp: SuperpixelMap) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(p) for p in sp.members(s)) for s in range(sp.count))


def build_containment_cliques(
    sp: SuperpixelMap, current: np.ndarray, n_labels: int, boundaries: Sequence[BoundaryClique] | None = None
) -> tuple[ContainmentClique, ...]:
    """One clique per superpixel boundary; the container label is the superpixel's current majority."""
    major = majority_labels(sp, current, n_labels)
    if boundaries is None:
        boundaries = boundary_cliques(sp)
    return tuple(ContainmentClique(b, int(major[b.superpixel_id])) for b in boundaries)


def build_attachment_cliques(
    sp: SuperpixelMap, current: np.ndarray, table: RelationTable, d: float, n_labels: int | None = None
) -> tuple[AttachmentClique, ...]:
    """Pair superpixels whose majority labels are attached and whose centroids are closer than ``d``."""
    if not d > 0:
        raise InvalidParameterError("d must be positive")
    current = np.asarray(current, dtype=np.int64)
    if n_labels is None:
        n_labels = int(current.max()) + 1
    major = majority_labels(sp, current, n_labels)
    dist = centroid_distances(sp)
    out = []
    for a in range(sp.count):
        for b in range(a + 1, sp.count):
            la, lb = int(major[a]), int(major[b])
            if table.attached(la, lb) and dist[a, b] < d:
                out.append(AttachmentClique(
                    tuple(int(p) for p in sp.members(a)),
                    tuple(int(p) for p in sp.members(b)),
                    la, lb, (a, b),
                ))
    return tuple(out)


@dataclass
class CliqueBuilder:
    """Derives the label-dependent cliques of an image from a current labelling."""

    sp: SuperpixelMap
    table: RelationTable | None
    n_labels: int
    d: float
    _superpixel: tuple = field(init=False, repr=False)
    _boundaries: list = field(init=False, repr=False)

    def __post_init__(self):
        self._superpixel = build_superpixel_cliques(self.sp)
        self._boundaries = boundary_cliques(self.sp)

    def __call__(self, current: np.ndarray) -> CliqueSet:
        cont = build_containment_cliques(self.sp, current, self.n_labels, self._boundaries)
        att = ()
        if self.table is not None and self.table.attachment:
            att = build_attachment_cliques(self.sp, current, self.table, self.d, self.n_labels)
        return CliqueSet(self._superpixel, cont, att)
