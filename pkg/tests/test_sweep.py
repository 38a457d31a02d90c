import numpy as np
import pytest

from partcrf.grid import ImageGrid, InvalidParameterError, LabelSet
from partcrf.inference import InferenceConfig
from partcrf.sweep import ValidationItem, grid_search_weights, sweep
from partcrf.synthetic import SUITE_CONTAINMENT_WEIGHT, SUITE_SEEDS, eye_in_head_scene, suite_config

LABELS = LabelSet.of("a", "b")


def _toy_items():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 2, 16)
    u = np.where(np.eye(2)[gt] > 0, 0.0, 1.0)
    return [ValidationItem("toy", u, ImageGrid.blank(4, 4), gt)]


def test_single_candidate_is_returned():
    cfg = grid_search_weights([{"weight_pairwise": 0.0}], _toy_items(), InferenceConfig(weight_superpixel=0.0))
    assert cfg.weight_pairwise == 0.0


def test_ties_go_to_first_grid_point():
    base = InferenceConfig(weight_superpixel=0.0, weight_pairwise=0.0)
    grid = [{"weight_unary": 2.0}, {"weight_unary": 1.0}]
    res = sweep(grid, _toy_items(), LABELS, base)
    assert res.points[0].mean_iou == res.points[1].mean_iou == 1.0
    assert res.best_index == 0
    assert res.best.config.weight_unary == 2.0
    assert res.to_text().splitlines()[1].endswith("*")


def test_empty_inputs_and_unknown_keys_raise():
    with pytest.raises(InvalidParameterError):
        sweep([], _toy_items(), LABELS)
    with pytest.raises(InvalidParameterError):
        sweep([{"weight_unary": 1.0}], [], LABELS)
    with pytest.raises(InvalidParameterError):
        sweep([{"nope": 1.0}], _toy_items(), LABELS)


def test_containment_selected_on_eye_scenes():
    scenes = [eye_in_head_scene(s) for s in SUITE_SEEDS]
    items = [ValidationItem(s.name, s.unary, s.image, s.gt, s.superpixels) for s in scenes]
    grid = [{"weight_containment": 0.0}, {"weight_containment": SUITE_CONTAINMENT_WEIGHT}]
    res = sweep(grid, items, scenes[0].labels, suite_config(), scenes[0].table)
    assert res.best_index == 1
    assert res.best.config in [p.config for p in res.points]


def test_worker_count_does_not_change_scores():
    base = InferenceConfig(weight_superpixel=0.0)
    grid = [{"weight_pairwise": 0.0}, {"weight_pairwise": 5.0}]
    a = sweep(grid, _toy_items(), LABELS, base)
    b = sweep(grid, _toy_items(), LABELS, base, workers=2)
    assert [p.mean_iou for p in a.points] == [p.mean_iou for p in b.points]
    assert a.best_index == b.best_index
