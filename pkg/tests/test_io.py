import struct

import numpy as np
import pytest

from partcrf.grid import FormatError, ImageGrid, InvalidParameterError, LabelSet
from partcrf.inference import InferenceConfig
from partcrf.io import (
    default_palette,
    format_config,
    load_config,
    load_image,
    load_labelmap,
    load_labelset,
    load_palette,
    load_unary,
    parse_config,
    parse_grid,
    read_unary_shape,
    save_config,
    save_image,
    save_labelmap,
    save_labelset,
    save_unary,
    visualize,
)
from partcrf.potentials import PairwiseParams


@pytest.fixture
def unary():
    return np.random.default_rng(0).normal(size=(12, 3)).astype(np.float32).astype(np.float64)


def test_unary_round_trip_is_byte_identical(tmp_path, unary):
    a, b = tmp_path / "a.unary", tmp_path / "b.unary"
    save_unary(unary, 3, 4, a)
    u, h, w = load_unary(a)
    assert (h, w) == (3, 4)
    np.testing.assert_array_equal(u, unary)
    save_unary(u, h, w, b)
    assert a.read_bytes() == b.read_bytes()
    assert read_unary_shape(a) == (3, 4, 3)
    assert len(a.read_bytes()) == 20 + 4 * 36


def _offset(path):
    with pytest.raises(FormatError) as e:
        load_unary(path)
    return e.value.offset


def test_unary_errors_carry_offsets(tmp_path, unary):
    p = tmp_path / "u.unary"
    save_unary(unary, 3, 4, p)
    good = p.read_bytes()
    p.write_bytes(good[:-4])
    assert _offset(p) == len(good) - 4
    p.write_bytes(good + b"\0")
    assert _offset(p) == len(good)
    p.write_bytes(b"XXXX" + good[4:])
    assert _offset(p) == 0
    p.write_bytes(good[:10])
    assert _offset(p) == 10
    p.write_bytes(good[:4] + struct.pack("<I", 9) + good[8:])
    assert _offset(p) == 4
    p.write_bytes(good[:8] + struct.pack("<I", 0) + good[12:])
    assert _offset(p) == 8
    bad = bytearray(good)
    bad[20 + 4 * 5:20 + 4 * 6] = struct.pack("<f", float("nan"))
    p.write_bytes(bytes(bad))
    assert _offset(p) == 20 + 4 * 5


def test_unary_shape_mismatch_rejected(tmp_path, unary):
    with pytest.raises(InvalidParameterError):
        save_unary(unary, 4, 4, tmp_path / "x.unary")


def test_labelmap_round_trip(tmp_path):
    labels = np.random.default_rng(1).integers(0, 7, size=(5, 6))
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    save_labelmap(labels, a)
    got = load_labelmap(a, 7)
    np.testing.assert_array_equal(got, labels)
    save_labelmap(got.ravel(), b, shape=(5, 6))
    assert a.read_bytes() == b.read_bytes()
    with pytest.raises(InvalidParameterError):
        load_labelmap(a, 3)


def test_labelmap_rejects_colour_and_garbage(tmp_path):
    save_image(ImageGrid.blank(2, 2, 10.0), tmp_path / "rgb.png")
    with pytest.raises(FormatError):
        load_labelmap(tmp_path / "rgb.png")
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        load_labelmap(tmp_path / "junk.png")
    with pytest.raises(FileNotFoundError):
        load_labelmap(tmp_path / "missing.png")
    with pytest.raises(InvalidParameterError):
        save_labelmap(np.array([[300]]), tmp_path / "big.png")


def test_image_round_trip(tmp_path):
    px = np.random.default_rng(2).integers(0, 256, size=(4, 5, 3)).astype(float)
    save_image(ImageGrid(px), tmp_path / "i.png")
    np.testing.assert_array_equal(load_image(tmp_path / "i.png").pixels, px)


def test_labelset_round_trip(tmp_path):
    ls = LabelSet.of("background", "head", "eye")
    save_labelset(ls, tmp_path / "l.txt")
    assert load_labelset(tmp_path / "l.txt") == ls
    (tmp_path / "dup.txt").write_text("a\nb\na\n")
    with pytest.raises(FormatError):
        load_labelset(tmp_path / "dup.txt")


def test_palette_parsing(tmp_path):
    p = tmp_path / "pal.txt"
    p.write_text("# id r g b\n0 0 0 0\n1 255 10 20\n")
    assert load_palette(p) == {0: (0, 0, 0), 1: (255, 10, 20)}
    p.write_text("0 0 0 0\n0 1 1 1\n")
    with pytest.raises(FormatError) as e:
        load_palette(p)
    assert e.value.offset == len("0 0 0 0\n")
    p.write_text("0 0 0 256\n")
    with pytest.raises(FormatError):
        load_palette(p)
    assert len(set(default_palette(25).values())) == 25


def test_visualize_paints_exact_colours(tmp_path):
    labels = np.array([[0, 1], [1, 0]])
    pal = {0: (10, 20, 30), 1: (200, 100, 0)}
    rgb = visualize(labels, pal, tmp_path / "v.png")
    assert rgb[0, 1].tolist() == [200, 100, 0]
    np.testing.assert_array_equal(load_image(tmp_path / "v.png").pixels, rgb)
    with pytest.raises(InvalidParameterError):
        visualize(labels, {}, tmp_path / "w.png")


def test_config_round_trip(tmp_path):
    cfg = InferenceConfig(max_iterations=4, weight_attachment=2.5, rebuild_cliques_each_iter=False,
                          pairwise=PairwiseParams(truncate_radius=6.0), superpixel_count=40)
    save_config(cfg, tmp_path / "c.txt")
    assert load_config(tmp_path / "c.txt") == cfg
    assert parse_config(format_config(InferenceConfig())) == InferenceConfig()


def test_config_errors():
    assert parse_config("weight_pairwise = 0.5  # comment\n").weight_pairwise == 0.5
    for text, offset in (("bogus = 1\n", 0), ("max_iterations = 1\nmax_iterations = 2\n", 19),
                         ("weight_unary\n", 0), ("rebuild_cliques_each_iter = maybe\n", 0),
                         ("weight_unary = none\n", 0)):
        with pytest.raises(FormatError) as e:
            parse_config(text)
        assert e.value.offset == offset
    with pytest.raises(FormatError):
        parse_config("max_iterations = 0\n")


def test_grid_is_cartesian_product_in_file_order():
    grid = parse_grid("weight_containment = 0, 1\nweight_attachment = 2, 3, 4\n")
    assert len(grid) == 6
    assert grid[0] == {"weight_containment": 0.0, "weight_attachment": 2.0}
    assert grid[1] == {"weight_containment": 0.0, "weight_attachment": 3.0}
    assert grid[-1] == {"weight_containment": 1.0, "weight_attachment": 4.0}
    with pytest.raises(FormatError):
        parse_grid("# nothing\n")
