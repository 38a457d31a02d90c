"""Lattice, label and distribution types shared by the rest of the package.

Marginal, unary and label fields are plain numpy arrays:

* unary field: ``(N, L)`` float array of energies ``psi_u(x_i = l)``
* marginal field: ``(N, L)`` float array, each row a categorical distribution
* label map: ``(N,)`` integer array of label ids

Pixels are indexed row-major, ``i = row * width + col``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class InvalidParameterError(ValueError):
    pass


class FormatError(ValueError):
    """Malformed input file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateRowError(ArithmeticError):
    """A row of a message field cannot be normalized."""

    def __init__(self, pixel: int, detail: str = "zero or non-finite mass"):
        super().__init__(f"degenerate row at pixel {pixel}: {detail}")
        self.pixel = pixel


ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LabelSet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 1:
            raise InvalidParameterError("label set must contain at least one label")
        if len(set(names)) != len(names):
            raise InvalidParameterError("label names must be unique")
        for n in names:
            if not n or any(ch.isspace() for ch in n):
                raise InvalidParameterError(f"invalid label name {n!r}")

    @property
    def count(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown label {name!r}") from None

    @classmethod
    def of(cls, *names: str) -> "LabelSet":
        return cls(tuple(names))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImageGrid:
    """An RGB image on a ``height x width`` lattice.

    ``pixels`` has shape ``(height, width, 3)`` with values in [0, 255].
    Grayscale input ``(height, width)`` is broadcast to three channels.
    """

    pixels: np.ndarray
    positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = np.repeat(px[:, :, None], 3, axis=2)
        if px.ndim != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidParameterError(f"bad image shape {px.shape}")
        object.__setattr__(self, "pixels", _frozen(px))
        rows, cols = np.divmod(np.arange(px.shape[0] * px.shape[1]), px.shape[1])
        object.__setattr__(self, "positions", _frozen(np.stack([rows, cols], axis=1).astype(np.float64)))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    @property
    def features(self) -> np.ndarray:
        """Per-pixel colour vectors, shape ``(N, channels)``."""
        return self.pixels.reshape(self.n_pixels, -1)

    def index(self, row: int, col: int) -> int:
        return pixel_index(row, col, self.width)

    def coords(self, i: int) -> tuple[int, int]:
        return pixel_coords(i, self.width)

    @classmethod
    def blank(cls, height: int, width: int, value: float = 0.0) -> "ImageGrid":
        return cls(np.full((height, width, 3), value, dtype=np.float64))


def pixel_index(row: int, col: int, width: int) -> int:
    return row * width + col


def pixel_coords(i: int, width: int) -> tuple[int, int]:
    r, c = divmod(int(i), width)
    return r, c


def check_unary(unary: np.ndarray) -> np.ndarray:
    u = np.asarray(unary, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] < 1:
        raise InvalidParameterError(f"unary field must be N x L, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidParameterError("unary field has non-finite entries")
    return u


def check_marginals(q: np.ndarray, tol: float = ROW_SUM_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2:
        raise InvalidParameterError(f"marginal field must be N x L, got shape {q.shape}")
    if np.any(q < 0) or np.any(q > 1):
        raise InvalidParameterError("marginal entries must lie in [0, 1]")
    err = np.abs(q.sum(axis=1) - 1.0)
    if err.size and err.max() >= tol:
        raise InvalidParameterError(f"row {int(err.argmax())} does not sum to 1")
    return q


def check_labels(labels: Sequence[int] | np.ndarray, n_labels: int, n_pixels: int | None = None) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.ndim != 1:
        raise InvalidParameterError("label map must be one-dimensional")
    if n_pixels is not None and lab.shape[0] != n_pixels:
        raise InvalidParameterError(f"label map has {lab.shape[0]} entries, expected {n_pixels}")
    if lab.size and (lab.min() < 0 or lab.max() >= n_labels):
        raise InvalidParameterError("label map has ids outside the label set")
    return lab.astype(np.int64)


def argmax_labeling(q: np.ndarray) -> np.ndarray:
    """MAP readout; ``np.argmax`` already returns the first (smallest) maximizer."""
    return np.argmax(np.asarray(q), axis=1).astype(np.int64)


def normalize_rows(raw: np.ndarray) -> np.ndarray:
    """Divide each row by its sum, raising :class:`DegenerateRowError` on zero/non-finite mass."""
    raw = np.asarray(raw, dtype=np.float64)
    sums = raw.sum(axis=1)
    bad = ~np.isfinite(sums) | (sums <= 0)
    if np.any(bad):
        raise DegenerateRowError(int(np.flatnonzero(bad)[0]))
    return raw / sums[:, None]


def softmax_neg(energy: np.ndarray) -> np.ndarray:
    """Row-wise ``exp(-energy) / Z`` computed with max-subtraction."""
    e = np.asarray(energy, dtype=np.float64)
    finite = np.isfinite(e).any(axis=1)
    if not np.all(finite):
        raise DegenerateRowError(int(np.flatnonzero(~finite)[0]), "no finite energy")
    shifted = -(e - e.min(axis=1, keepdims=True))
    return normalize_rows(np.exp(shifted))
