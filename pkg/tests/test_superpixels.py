import numpy as np
import pytest

from partcrf.grid import FormatError, ImageGrid, InvalidParameterError
from partcrf.superpixels import (
    SuperpixelMap,
    attachment_threshold,
    boundary_clique,
    boundary_pixel_mask,
    centroid_distance,
    centroid_distances,
    generate_superpixels,
    is_connected,
    load_superpixels,
    majority_labels,
    save_superpixels,
    superpixel_widths,
)


def _block_map(h, w, bh, bw):
    g = (np.arange(h)[:, None] // bh) * ((w + bw - 1) // bw) + np.arange(w)[None, :] // bw
    return SuperpixelMap.from_assignment(g)


def test_uniform_image_four_superpixels():
    sp = generate_superpixels(ImageGrid.blank(10, 10, 128.0), 4, 10.0)
    assert sp.count == 4
    for s in range(sp.count):
        assert is_connected(sp.as_grid() == s)
    assert sorted(sp.sizes.tolist()) == [25, 25, 25, 25]


def test_single_superpixel():
    rng = np.random.default_rng(3)
    sp = generate_superpixels(ImageGrid(rng.uniform(0, 255, (9, 7, 3))), 1)
    assert sp.count == 1 and sp.sizes.tolist() == [63]


def test_two_by_two_singletons():
    sp = generate_superpixels(ImageGrid(np.arange(12, dtype=float).reshape(2, 2, 3)), 4)
    assert sp.count == 4
    assert sorted(map(tuple, sp.centroids.tolist())) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_too_many_superpixels_rejected():
    with pytest.raises(InvalidParameterError):
        generate_superpixels(ImageGrid.blank(3, 3), 10)
    with pytest.raises(InvalidParameterError):
        generate_superpixels(ImageGrid.blank(3, 3), 0)


def test_generation_is_deterministic_partition_of_connected_pieces():
    rng = np.random.default_rng(0)
    img = ImageGrid(rng.uniform(0, 255, (40, 30, 3)))
    a = generate_superpixels(img, 12)
    b = generate_superpixels(img, 12)
    assert np.array_equal(a.assignment, b.assignment)
    assert a.sizes.sum() == 40 * 30
    grid = a.as_grid()
    for s in range(a.count):
        assert is_connected(grid == s)


def test_non_connected_assignment_rejected():
    with pytest.raises(InvalidParameterError):
        SuperpixelMap.from_assignment(np.array([[0, 1, 0]]))


def test_boundary_of_interior_block():
    g = np.zeros((5, 5), dtype=int)
    g[1:4, 1:4] = 1
    sp = SuperpixelMap.from_assignment(g)
    s = sp.assignment[6]
    bc = boundary_clique(sp, s)
    assert len(bc.pixels) == 8
    assert 12 not in bc.pixels  # centre (2, 2)


def test_boundary_singleton_and_strip():
    g = np.array([[0, 1, 1, 1, 1, 1]])
    sp = SuperpixelMap.from_assignment(g)
    assert boundary_clique(sp, 0).pixels == (0,)
    assert boundary_clique(sp, 1).pixels == (1, 2, 3, 4, 5)


def test_boundary_bad_id():
    sp = _block_map(4, 4, 2, 2)
    with pytest.raises(InvalidParameterError):
        boundary_clique(sp, 4)


def test_boundary_and_interior_partition_each_superpixel():
    rng = np.random.default_rng(1)
    sp = generate_superpixels(ImageGrid(rng.uniform(0, 255, (24, 24, 3))), 9)
    mask = boundary_pixel_mask(sp)
    grid = sp.as_grid()
    h, w = grid.shape
    for s in range(sp.count):
        members = set(sp.members(s).tolist())
        bc = set(boundary_clique(sp, s).pixels)
        assert bc <= members and bc
        for p in members - bc:
            r, c = divmod(p, w)
            assert 0 < r < h - 1 and 0 < c < w - 1
            assert all(grid[rr, cc] == s for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)))
        assert all(mask[p] for p in bc)


def test_centroid_distance_examples():
    sp = SuperpixelMap(np.arange(30), 5, 6)  # singletons: centroid = pixel coordinate
    a, b = 0, 3 * 6 + 4  # (0, 0) and (3, 4)
    assert centroid_distance(sp, a, b) == 5.0
    assert centroid_distance(sp, a, a) == 0.0
    assert centroid_distance(sp, 7, 10) == 3.0  # (1, 1) and (1, 4)
    with pytest.raises(InvalidParameterError):
        centroid_distance(sp, 0, 30)


def test_centroid_distances_metric():
    rng = np.random.default_rng(2)
    sp = generate_superpixels(ImageGrid(rng.uniform(0, 255, (20, 20, 3))), 8)
    d = centroid_distances(sp)
    assert np.allclose(d, d.T)
    k = sp.count
    for a in range(k):
        for b in range(k):
            assert np.all(d[a, b] <= d[a, :] + d[:, b] + 1e-12)


def test_attachment_threshold_examples():
    assert attachment_threshold(_block_map(4, 20, 4, 10)) == 10.0
    sp = SuperpixelMap.from_assignment(np.array([[0] * 4 + [1] * 8]))
    assert superpixel_widths(sp).tolist() == [4, 8]
    assert attachment_threshold(sp) == 6.0
    assert attachment_threshold(SuperpixelMap(np.arange(6), 2, 3)) == 1.0


def test_majority_ties_toward_smaller_label():
    sp = SuperpixelMap.from_assignment(np.array([[0, 0, 1, 1]]))
    assert majority_labels(sp, np.array([2, 1, 0, 0]), 3).tolist() == [1, 0]


def test_superpixel_file_round_trip(tmp_path):
    sp = _block_map(6, 8, 3, 4)
    p = tmp_path / "a.sp"
    save_superpixels(sp, p)
    assert p.read_text().splitlines()[0] == "4 6 8"
    back = load_superpixels(p)
    assert np.array_equal(back.assignment, sp.assignment)
    p.write_text("4 6 8\n0 1\n")
    with pytest.raises(FormatError):
        load_superpixels(p)
