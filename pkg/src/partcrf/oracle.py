"""Brute-force references for tiny problems.

Nothing here reuses the closed-form message products: clique messages are
sums over every joint configuration of the clique, and marginals are sums
over every labelling of the image.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import ImageGrid, InvalidParameterError
from .inference import InferenceConfig
from .potentials import AttachmentClique, CliqueSet, ContainmentClique
from .relations import RelationTable, lookup_attachment, lookup_containment

MAX_CLIQUE = 12
MAX_PIXELS = 12
MAX_LABELS = 4


class OracleSizeError(InvalidParameterError):
    pass


def _member_labels(n: int, L: int) -> list[np.ndarray]:
    """Broadcastable label arrays, one per enumerated position, spanning an ``L^n`` grid."""
    out = []
    for k in range(n):
        shape = [1] * n
        shape[k] = L
        out.append(np.arange(L).reshape(shape))
    return out


def _joint_probability(q_rows: np.ndarray) -> np.ndarray:
    """Factorized joint ``prod_k q_k(x_k)`` laid out on the configuration grid."""
    n, L = q_rows.shape
    if n == 0:
        return np.ones(())
    return functools.reduce(np.multiply, [q_rows[k].reshape([L if j == k else 1 for j in range(n)])
                                          for k in range(n)])


def _enumerate_messages(
    q_prev: np.ndarray,
    members: Sequence[int],
    i: int,
    labels: Sequence[int],
    potential: Callable[[dict[int, np.ndarray], int], np.ndarray],
) -> np.ndarray:
    """``sum_{x_c | x_i = l} Q_{c-i}(x_{c-i}) psi_c(x_c)`` by enumeration, for each ``l`` in ``labels``.

    ``potential(x, l)`` receives a mapping pixel -> label array over the grid
    of configurations of the other members (``x_i`` is the scalar ``l``) and
    returns the clique energy of each configuration.
    """
    members = [int(p) for p in members]
    if i not in members:
        raise InvalidParameterError(f"pixel {i} is not in the clique")
    L = q_prev.shape[1]
    if len(members) > MAX_CLIQUE or L > MAX_LABELS:
        raise OracleSizeError(f"clique of {len(members)} pixels with {L} labels is too large to enumerate")
    others = [p for p in members if p != i]
    grids = _member_labels(len(others), L)
    prob = _joint_probability(q_prev[others])
    out = []
    for l in labels:
        assign = {p: g for p, g in zip(others, grids)}
        assign[i] = np.asarray(l)
        psi = np.broadcast_to(potential(assign, l), prob.shape)
        out.append(float(np.vdot(prob.ravel(), psi.ravel())))
    return np.array(out)


def _all_equal(arrays, value) -> np.ndarray:
    return functools.reduce(np.logical_and, [a == value for a in arrays])


def exact_clique_messages(q_prev: np.ndarray, clique, kind: str, i: int, labels: Sequence[int], weights) -> np.ndarray:
    """Enumerated clique messages of pixel ``i`` for each label in ``labels``.

    ``kind`` / ``clique`` / ``weights``:

    * ``"superpixel"``: pixel sequence; ``(w_low, w_high)`` with ``w_low`` a
      number or a callable of the label
    * ``"containment"``: :class:`ContainmentClique`; :class:`RelationTable`.
      The pattern is read from the updating pixel's label: it holds when
      every member is ``l`` or the container label (only ``l`` when the two
      coincide)
    * ``"attachment"``: :class:`AttachmentClique`; :class:`RelationTable`
    """
    q_prev = np.asarray(q_prev, dtype=np.float64)
    if kind == "superpixel":
        w_low, w_high = weights

        def potential(x, l):
            low = w_low(l) if callable(w_low) else float(w_low)
            return np.where(_all_equal(list(x.values()), l), low, w_high)

        return _enumerate_messages(q_prev, clique, i, labels, potential)

    if kind == "containment":
        table: RelationTable = weights
        lp = clique.l_prime

        def potential(x, l):
            ok = functools.reduce(np.logical_and, [(v == l) | (v == lp) for v in x.values()])
            return np.where(ok, lookup_containment(table, l, lp), table.w_high)

        return _enumerate_messages(q_prev, clique.pixels, i, labels, potential)

    if kind == "attachment":
        table = weights
        low = lookup_attachment(table, clique.l1, clique.l2)

        def potential(x, l):
            ok = _all_equal([x[p] for p in clique.c1], clique.l1) & _all_equal([x[p] for p in clique.c2], clique.l2)
            return np.where(ok, low, table.w_high)

        return _enumerate_messages(q_prev, list(clique.c1) + list(clique.c2), i, labels, potential)

    raise InvalidParameterError(f"unknown potential kind {kind!r}")


def exact_clique_message(q_prev: np.ndarray, clique, kind: str, i: int, l: int, weights) -> float:
    """Enumerated message of one pattern potential for pixel ``i`` taking label ``l``."""
    return float(exact_clique_messages(q_prev, clique, kind, i, [l], weights)[0])


# --------------------------------------------------------------------------
# exact posterior marginals

@dataclass(frozen=True)
class TinyInstance:
    """A fully specified energy small enough to enumerate (N <= 12, L <= 4)."""

    unary: np.ndarray
    image: ImageGrid
    cfg: InferenceConfig
    cliques: CliqueSet = CliqueSet()
    table: RelationTable | None = None

    def __post_init__(self):
        n, L = np.shape(self.unary)
        if n > MAX_PIXELS or L > MAX_LABELS:
            raise OracleSizeError(f"{n} pixels x {L} labels is too large to enumerate")
        if self.image.n_pixels != n:
            raise InvalidParameterError("unary and image sizes differ")
        self.cliques.validate(n, L)

    @property
    def n_pixels(self) -> int:
        return np.shape(self.unary)[0]

    @property
    def n_labels(self) -> int:
        return np.shape(self.unary)[1]


def _kernel_value(image: ImageGrid, cfg: InferenceConfig, i: int, j: int) -> float:
    p = cfg.pairwise
    ri, ci = divmod(i, image.width)
    rj, cj = divmod(j, image.width)
    d_pos = (ri - rj) ** 2 + (ci - cj) ** 2
    if p.truncate_radius is not None and d_pos > p.truncate_radius ** 2:
        return 0.0
    fi = image.pixels[ri, ci]
    fj = image.pixels[rj, cj]
    d_col = float(((fi - fj) ** 2).sum())
    return (p.w_app * math.exp(-d_pos / (2 * p.theta_alpha ** 2) - d_col / (2 * p.theta_beta ** 2))
            + p.w_sm * math.exp(-d_pos / (2 * p.theta_gamma ** 2)))


def configuration_energies(instance: TinyInstance, configs: np.ndarray) -> np.ndarray:
    """Energy of every row of ``configs`` (shape ``(C, N)``)."""
    x = np.asarray(configs, dtype=np.int64)
    n, L = instance.n_pixels, instance.n_labels
    cfg = instance.cfg
    w = cfg.term_weights
    e = w["unary"] * instance.unary[np.arange(n)[None, :], x].sum(axis=1)
    if w["pairwise"] > 0:
        for i in range(n):
            for j in range(i + 1, n):
                e = e + w["pairwise"] * _kernel_value(instance.image, cfg, i, j) * (x[:, i] != x[:, j])
    if w["superpixel"] > 0:
        for c in instance.cliques.superpixel_cliques:
            xc = x[:, list(c)]
            same = np.all(xc == xc[:, :1], axis=1)
            e = e + w["superpixel"] * np.where(same, cfg.superpixel_w_low, cfg.superpixel_w_high)
    table = instance.table
    if table is not None and w["containment"] > 0:
        for c in instance.cliques.containment_cliques:
            xc = x[:, list(c.pixels)]
            present = np.stack([np.any(xc == k, axis=1) for k in range(L)], axis=1)
            present[:, c.l_prime] = False
            n_other = present.sum(axis=1)
            other = np.argmax(present, axis=1)
            low = np.array([lookup_containment(table, k, c.l_prime) for k in range(L)])
            val = np.where(n_other == 0, lookup_containment(table, c.l_prime, c.l_prime),
                           np.where(n_other == 1, low[other], table.w_high))
            e = e + w["containment"] * val
    if table is not None and w["attachment"] > 0:
        for c in instance.cliques.attachment_cliques:
            ok = np.all(x[:, list(c.c1)] == c.l1, axis=1) & np.all(x[:, list(c.c2)] == c.l2, axis=1)
            e = e + w["attachment"] * np.where(ok, lookup_attachment(table, c.l1, c.l2), table.w_high)
    return e


def all_configurations(n: int, L: int) -> np.ndarray:
    return np.indices((L,) * n).reshape(n, -1).T


def exact_marginals(instance: TinyInstance) -> np.ndarray:
    """``P(x_i = l)`` under ``exp(-E(x)) / Z`` by summing over all ``L^N`` labellings."""
    n, L = instance.n_pixels, instance.n_labels
    configs = all_configurations(n, L)
    e = configuration_energies(instance, configs)
    weights = np.exp(-(e - e.min()))
    weights /= weights.sum()
    out = np.zeros((n, L))
    for i in range(n):
        out[i] = np.bincount(configs[:, i], weights=weights, minlength=L)
    return out


# --------------------------------------------------------------------------
# randomized equivalence audit

def _random_q(rng: np.random.Generator, n: int, L: int) -> np.ndarray:
    q = rng.dirichlet(np.full(L, rng.choice([0.3, 1.0, 3.0])), size=n)
    # occasionally pin rows to a vertex of the simplex
    pin = rng.random(n) < 0.1
    if pin.any():
        q[pin] = np.eye(L)[rng.integers(0, L, pin.sum())]
    return q


def _random_table(rng: np.random.Generator, L: int) -> RelationTable:
    w_high = float(rng.uniform(0.0, 3.0))
    pairs = [(a, b) for a in range(L) for b in range(L) if a != b]
    cont = [p for p in pairs if rng.random() < 0.4]
    att = [(a, b) for a, b in pairs if a < b and rng.random() < 0.6]
    return RelationTable(
        frozenset(cont), frozenset(att),
        {k: float(rng.uniform(-1.0, w_high)) for k in range(L)},
        {p: float(rng.uniform(-1.0, w_high)) for p in att},
        w_high,
    )


@dataclass
class EquivalenceResult:
    kind: str
    n_cliques: int
    n_checks: int
    max_abs_error: float

    def passed(self, tol: float = 1e-10) -> bool:
        return self.max_abs_error <= tol


def random_equivalence_check(n_cliques: int = 1000, seed: int = 0,
                             sizes: tuple[int, int] = (2, 12), labels: Sequence[int] = (2, 3, 4)) -> list[EquivalenceResult]:
    """Compare the closed-form pattern messages with enumeration on random cliques.

    Every clique checks one random member pixel against every label.
    """
    from .potentials import attachment_message, containment_message, superpixel_message
    from .superpixels import BoundaryClique

    rng = np.random.default_rng(seed)
    results = []
    for kind in ("superpixel", "containment", "attachment"):
        worst, checks = 0.0, 0
        for _ in range(n_cliques):
            n = int(rng.integers(sizes[0], sizes[1] + 1))
            L = int(rng.choice(labels))
            q = _random_q(rng, n, L)
            pixels = list(range(n))
            i = int(rng.integers(0, n))
            if kind == "superpixel":
                w_high = float(rng.uniform(0.0, 3.0))
                w_low_vec = rng.uniform(-1.0, w_high, size=L)
                w_low = lambda k, v=w_low_vec: float(v[k])  # noqa: E731
                fast = lambda l: superpixel_message(q, pixels, i, l, w_low, w_high)  # noqa: E731
                slow = exact_clique_messages(q, pixels, "superpixel", i, range(L), (w_low, w_high))
            elif kind == "containment":
                table = _random_table(rng, L)
                clique = ContainmentClique(BoundaryClique(0, tuple(pixels)), int(rng.integers(0, L)))
                fast = lambda l: containment_message(q, clique.boundary, clique.l_prime, i, l, table)  # noqa: E731
                slow = exact_clique_messages(q, clique, "containment", i, range(L), table)
            else:
                table = _random_table(rng, L)
                split = int(rng.integers(1, n))
                l1, l2 = (int(v) for v in rng.choice(L, size=2, replace=False))
                clique = AttachmentClique(tuple(pixels[:split]), tuple(pixels[split:]), l1, l2)
                fast = lambda l: attachment_message(q, clique, i, l, table)  # noqa: E731
                slow = exact_clique_messages(q, clique, "attachment", i, range(L), table)
            for l in range(L):
                worst = max(worst, abs(fast(l) - slow[l]))
                checks += 1
        results.append(EquivalenceResult(kind, n_cliques, checks, worst))
    return results
