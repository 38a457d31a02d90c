"""On-disk formats: unary tensors, label maps, images, label sets, palettes, configs and weight grids.

Unary tensor layout (all little-endian)::

    bytes 0-3    magic b"UCRF"
    bytes 4-7    uint32 version (1)
    bytes 8-19   uint32 height, width, n_labels
    bytes 20-    float32 payload, pixel-major (row-major pixels), label fastest
"""

from __future__ import annotations

import itertools
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .grid import FormatError, ImageGrid, InvalidParameterError, LabelSet, check_labels
from .inference import InferenceConfig

__all__ = [
    "FormatError",
    "UNARY_MAGIC",
    "UNARY_VERSION",
    "save_unary",
    "load_unary",
    "read_unary_shape",
    "save_labelmap",
    "load_labelmap",
    "load_image",
    "save_image",
    "load_labelset",
    "save_labelset",
    "load_palette",
    "default_palette",
    "visualize",
    "parse_config",
    "format_config",
    "load_config",
    "save_config",
    "parse_grid",
    "load_grid",
]

UNARY_MAGIC = b"UCRF"
UNARY_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def save_unary(unary: np.ndarray, height: int, width: int, path) -> None:
    u = np.asarray(unary)
    if u.ndim != 2 or u.shape[0] != height * width:
        raise InvalidParameterError(f"unary of shape {u.shape} does not fit a {height}x{width} grid")
    payload = np.ascontiguousarray(u, dtype="<f4").tobytes()
    Path(path).write_bytes(_HEADER.pack(UNARY_MAGIC, UNARY_VERSION, height, width, u.shape[1]) + payload)


def _parse_unary_header(data: bytes) -> tuple[int, int, int]:
    if len(data) < _HEADER.size:
        raise FormatError(f"header truncated: {len(data)} of {_HEADER.size} bytes", len(data))
    magic, version, h, w, L = _HEADER.unpack_from(data)
    if magic != UNARY_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {UNARY_MAGIC!r}", 0)
    if version != UNARY_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if h == 0 or w == 0 or L == 0:
        raise FormatError(f"empty dimensions {h}x{w}x{L}", 8)
    return h, w, L


def read_unary_shape(path) -> tuple[int, int, int]:
    with open(path, "rb") as fh:
        return _parse_unary_header(fh.read(_HEADER.size))


def load_unary(path) -> tuple[np.ndarray, int, int]:
    """Return ``(unary (N, L) float64, height, width)``."""
    data = Path(path).read_bytes()
    h, w, L = _parse_unary_header(data)
    expected = _HEADER.size + 4 * h * w * L
    if len(data) < expected:
        raise FormatError(f"payload truncated: header declares {h}x{w}x{L}, file has {len(data)} bytes "
                          f"of {expected}", len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after a {h}x{w}x{L} payload", expected)
    u = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h * w, L).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(u).ravel())
    if bad.size:
        raise FormatError("non-finite unary value", _HEADER.size + 4 * int(bad[0]))
    return u, h, w


def save_labelmap(labels: np.ndarray, path, shape: tuple[int, int] | None = None) -> None:
    """Write label ids as an 8-bit grayscale PNG (gray value = label id)."""
    a = np.asarray(labels)
    if shape is not None:
        a = a.reshape(shape)
    if a.ndim != 2:
        raise InvalidParameterError("label map needs a 2-D shape")
    if a.size and (a.min() < 0 or a.max() > 255):
        raise InvalidParameterError("label ids must lie in [0, 255] for an 8-bit label map")
    Image.fromarray(a.astype(np.uint8), mode="L").save(path, format="PNG")


def load_labelmap(path, n_labels: int | None = None) -> np.ndarray:
    """Read an 8-bit grayscale label map as an ``(H, W)`` int64 array."""
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise FormatError(f"{path}: label map must be 8-bit grayscale, got mode {im.mode}", 0)
            a = np.array(im, dtype=np.int64)
    except FileNotFoundError:
        raise
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: unreadable label map ({exc})", 0) from None
    if n_labels is not None:
        check_labels(a.ravel(), n_labels)
    return a


def load_image(path) -> ImageGrid:
    try:
        with Image.open(path) as im:
            return ImageGrid(np.array(im.convert("RGB"), dtype=np.float64))
    except FileNotFoundError:
        raise
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: unreadable image ({exc})", 0) from None


def save_image(image: ImageGrid, path) -> None:
    px = np.clip(np.rint(image.pixels), 0, 255).astype(np.uint8)
    Image.fromarray(px, mode="RGB").save(path, format="PNG")


def _records(text: str):
    """Yield ``(lineno, byte_offset, stripped_line)`` skipping blanks and ``#`` comments."""
    offset = 0
    for lineno, raw in enumerate(text.splitlines(keepends=True), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, offset, line
        offset += len(raw.encode())


def load_labelset(path) -> LabelSet:
    """One label name per line; line order gives the ids."""
    names = [line for _, _, line in _records(Path(path).read_text())]
    try:
        return LabelSet(tuple(names))
    except InvalidParameterError as exc:
        raise FormatError(f"{path}: {exc}", 0) from None


def save_labelset(labels: LabelSet, path) -> None:
    Path(path).write_text("".join(n + "\n" for n in labels.names))


def load_palette(path) -> dict[int, tuple[int, int, int]]:
    """Lines of ``id r g b``."""
    pal: dict[int, tuple[int, int, int]] = {}
    for lineno, off, line in _records(Path(path).read_text()):
        parts = line.split()
        try:
            if len(parts) != 4:
                raise ValueError
            k, r, g, b = (int(p) for p in parts)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: expected 'id r g b', got {line!r}", off) from None
        if not all(0 <= v <= 255 for v in (r, g, b)):
            raise FormatError(f"{path}:{lineno}: colour component out of [0, 255]", off)
        if k in pal:
            raise FormatError(f"{path}:{lineno}: duplicate palette id {k}", off)
        pal[k] = (r, g, b)
    return pal


def default_palette(n_labels: int) -> dict[int, tuple[int, int, int]]:
    """Fixed, well-separated colours from matplotlib's tab20 then a seeded fill."""
    from matplotlib import colormaps

    base = colormaps["tab20"].colors
    rng = np.random.default_rng(0)
    pal = {}
    for k in range(n_labels):
        if k < len(base):
            pal[k] = tuple(int(round(255 * c)) for c in base[k])
        else:
            pal[k] = tuple(int(v) for v in rng.integers(0, 256, 3))
    return pal


def visualize(labels: np.ndarray, palette: dict[int, tuple[int, int, int]], path,
              shape: tuple[int, int] | None = None) -> np.ndarray:
    """Paint a label map with ``palette`` and write it as an RGB PNG; returns the raster."""
    a = np.asarray(labels, dtype=np.int64)
    if shape is not None:
        a = a.reshape(shape)
    if a.ndim != 2:
        raise InvalidParameterError("label map needs a 2-D shape")
    missing = sorted(set(np.unique(a).tolist()) - set(palette))
    if missing:
        raise InvalidParameterError(f"palette has no colour for label(s) {missing}")
    lut = np.zeros((max(palette) + 1, 3), dtype=np.uint8)
    for k, rgb in palette.items():
        lut[k] = rgb
    rgb = lut[a]
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
    return rgb


# --- config and grid files -----------------------------------------------------

_OPTIONAL = {"superpixel_count": int, "attachment_d": float, "pairwise_truncate_radius": float}


def _config_types() -> dict[str, type]:
    types = {}
    for k, v in InferenceConfig().flat().items():
        types[k] = _OPTIONAL.get(k) or type(v)
    return types


def _parse_value(key: str, raw: str, kind: type):
    raw = raw.strip()
    if raw.lower() == "none":
        if key not in _OPTIONAL:
            raise ValueError(f"{key} cannot be none")
        return None
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"{key} expects true/false, got {raw!r}")
    if kind is int:
        return int(raw)
    return float(raw)


def _key_values(text: str, source: str):
    types = _config_types()
    seen = set()
    for lineno, off, line in _records(text):
        key, eq, value = line.partition("=")
        key = key.strip()
        if not eq:
            raise FormatError(f"{source}:{lineno}: expected 'key = value', got {line!r}", off)
        if key not in types:
            raise FormatError(f"{source}:{lineno}: unknown key {key!r}", off)
        if key in seen:
            raise FormatError(f"{source}:{lineno}: key {key!r} given twice", off)
        seen.add(key)
        yield lineno, off, key, value, types[key]


def parse_config(text: str, source: str = "<config>", base: InferenceConfig | None = None) -> InferenceConfig:
    """``key = value`` lines; keys are the names in ``InferenceConfig.flat()``, unset keys keep defaults."""
    values = {}
    for lineno, off, key, value, kind in _key_values(text, source):
        try:
            values[key] = _parse_value(key, value, kind)
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}", off) from None
    try:
        return InferenceConfig.from_flat(values, base)
    except InvalidParameterError as exc:
        raise FormatError(f"{source}: {exc}", 0) from None


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


def format_config(cfg: InferenceConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in cfg.flat().items())


def load_config(path, base: InferenceConfig | None = None) -> InferenceConfig:
    return parse_config(Path(path).read_text(), str(path), base)


def save_config(cfg: InferenceConfig, path) -> None:
    Path(path).write_text(format_config(cfg))


def parse_grid(text: str, source: str = "<grid>") -> list[dict[str, object]]:
    """``key = v1, v2, ...`` lines; the grid is their cartesian product in file order."""
    keys, axes = [], []
    for lineno, off, key, value, kind in _key_values(text, source):
        try:
            vals = [_parse_value(key, v, kind) for v in value.split(",")]
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}", off) from None
        keys.append(key)
        axes.append(vals)
    if not keys:
        raise FormatError(f"{source}: empty grid", 0)
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]


def load_grid(path) -> list[dict[str, object]]:
    return parse_grid(Path(path).read_text(), str(path))
