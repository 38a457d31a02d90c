import math

import numpy as np
import pytest

from partcrf.grid import ImageGrid
from partcrf.inference import InferenceConfig
from partcrf.oracle import (
    OracleSizeError,
    TinyInstance,
    exact_clique_message,
    exact_marginals,
    random_equivalence_check,
)
from partcrf.potentials import CliqueSet, ContainmentClique, PairwiseParams
from partcrf.relations import RelationTable
from partcrf.superpixels import BoundaryClique

UNARY_ONLY = InferenceConfig().unary_only()


def test_size_limits():
    with pytest.raises(OracleSizeError):
        TinyInstance(np.zeros((13, 2)), ImageGrid.blank(1, 13), UNARY_ONLY)
    with pytest.raises(OracleSizeError):
        TinyInstance(np.zeros((2, 5)), ImageGrid.blank(1, 2), UNARY_ONLY)
    with pytest.raises(OracleSizeError):
        exact_clique_message(np.full((13, 2), 0.5), list(range(13)), "superpixel", 0, 0, (0.0, 1.0))


def test_singleton_clique_is_always_low():
    q = np.array([[0.2, 0.8]])
    assert exact_clique_message(q, [0], "superpixel", 0, 1, (0.3, 1.0)) == pytest.approx(0.3)


def test_deterministic_pattern_gives_low_weight():
    q = np.array([[0.5, 0.5], [0.0, 1.0], [0.0, 1.0]])
    assert exact_clique_message(q, [0, 1, 2], "superpixel", 0, 1, (0.1, 2.0)) == pytest.approx(0.1)
    table = RelationTable(containment=frozenset({(1, 0)}), w_low_containment={1: -0.4}, w_high=2.0)
    q = np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]])
    c = ContainmentClique(BoundaryClique(0, (0, 1, 2)), 0)
    assert exact_clique_message(q, c, "containment", 0, 1, table) == pytest.approx(-0.4)


def test_single_pixel_marginal_is_softmax():
    u = np.array([[0.4, -1.0, 2.0]])
    got = exact_marginals(TinyInstance(u, ImageGrid.blank(1, 1), InferenceConfig()))
    e = np.exp(-u[0])
    np.testing.assert_allclose(got[0], e / e.sum(), atol=1e-15)


def test_independent_pixels_factorize():
    rng = np.random.default_rng(0)
    u = rng.normal(size=(4, 3))
    got = exact_marginals(TinyInstance(u, ImageGrid.blank(2, 2), UNARY_ONLY))
    e = np.exp(-u)
    np.testing.assert_allclose(got, e / e.sum(axis=1, keepdims=True), atol=1e-14)


def test_two_pixel_potts_agreement_probability():
    w = 0.8
    cfg = InferenceConfig(weight_superpixel=0.0, pairwise=PairwiseParams(w_app=0.0, w_sm=w / math.exp(-0.5)))
    got = exact_marginals(TinyInstance(np.zeros((2, 2)), ImageGrid.blank(1, 2), cfg))
    np.testing.assert_allclose(got, 0.5, atol=1e-15)
    # joint: agree with weight 1 each (2 states), disagree with exp(-w) each (2 states)
    cfg = InferenceConfig(weight_superpixel=0.0, weight_unary=1.0,
                          pairwise=PairwiseParams(w_app=0.0, w_sm=w / math.exp(-0.5)))
    u = np.array([[0.0, 50.0], [0.0, 0.0]])  # pin pixel 0 to label 0
    got = exact_marginals(TinyInstance(u, ImageGrid.blank(1, 2), cfg))
    assert got[1, 0] == pytest.approx(1 / (1 + math.exp(-w)), abs=1e-12)
    assert 2 / (2 + 2 * math.exp(-w)) == pytest.approx(1 / (1 + math.exp(-w)))


def test_marginals_rows_sum_to_one_and_respect_label_swap():
    rng = np.random.default_rng(1)
    u = rng.normal(size=(5, 2))
    cfg = InferenceConfig(weight_superpixel=0.7, pairwise=PairwiseParams(w_app=0.3, w_sm=0.3))
    img = ImageGrid(rng.uniform(0, 255, (1, 5, 3)))
    cl = CliqueSet(superpixel_cliques=((0, 1, 2), (3, 4)))
    a = exact_marginals(TinyInstance(u, img, cfg, cl))
    b = exact_marginals(TinyInstance(u[:, ::-1].copy(), img, cfg, cl))
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(b, a[:, ::-1], atol=1e-12)


def test_random_equivalence_small_run():
    for r in random_equivalence_check(n_cliques=60, seed=3):
        assert r.n_checks > 0
        assert r.passed(1e-10), (r.kind, r.max_abs_error)


@pytest.mark.parametrize("seed", range(5))
def test_mean_field_tracks_exact_posterior_without_containment(seed):
    """Pairwise, superpixel and attachment updates are exact mean-field gradients, so weak coupling stays close."""
    from partcrf.inference import CRFModel, mean_field
    from partcrf.potentials import AttachmentClique

    rng = np.random.default_rng(seed)
    for _ in range(20):
        h, w = int(rng.integers(1, 3)), int(rng.integers(2, 4))
        n, L = h * w, int(rng.integers(2, 4))
        share = rng.dirichlet(np.ones(4)) * 0.5
        cut = int(rng.integers(1, n))
        cl = CliqueSet(superpixel_cliques=(tuple(range(cut)), tuple(range(cut, n))),
                       attachment_cliques=(AttachmentClique(tuple(range(cut)), tuple(range(cut, n)), 0, 1),))
        table = RelationTable(attachment=frozenset({(0, 1)}), w_low_attachment={(0, 1): 0.0}, w_high=1.0)
        cfg = InferenceConfig(max_iterations=500, convergence_tol=1e-12, weight_superpixel=share[2],
                              weight_attachment=share[3], rebuild_cliques_each_iter=False,
                              pairwise=PairwiseParams(w_app=share[0], w_sm=share[1], theta_beta=40.0))
        inst = TinyInstance(rng.normal(size=(n, L)), ImageGrid(rng.uniform(0, 255, (h, w, 3))), cfg, cl, table)
        q, _, _ = mean_field(CRFModel(inst.unary, inst.image, cfg, table=table, fixed_cliques=cl))
        assert 0.5 * np.abs(q - exact_marginals(inst)).sum(axis=1).max() < 0.05
