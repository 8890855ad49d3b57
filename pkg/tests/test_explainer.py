import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfexplain.evalharness import piou
from cfexplain.explainer import (
    attributive_explain,
    cell_to_pixel_region,
    counterfactual_explain,
    explanation_record,
    keypoint_to_cell,
    mask_at_area,
    mask_rle,
    pick_counter_image,
    rle_to_mask,
    save_explanation,
    segment,
    threshold_for_area,
)


# ---- segment ----------------------------------------------------------------


def test_segment_hand_case():
    np.testing.assert_array_equal(segment(np.array([[0.1, 0.9]]), 0.5), [[False, True]])


def test_segment_boundaries(rng):
    grid = rng.uniform(size=(5, 5))
    assert segment(grid, -1.0).all()
    assert not segment(grid, grid.max()).any()


def test_segment_rejects_nonfinite_threshold():
    with pytest.raises(ValueError):
        segment(np.zeros((2, 2)), math.nan)


def test_segment_area_monotone_in_threshold(rng):
    for _ in range(50):
        grid = rng.uniform(size=(6, 6))
        thresholds = np.sort(rng.uniform(-0.2, 1.2, size=8))
        areas = [segment(grid, t).sum() for t in thresholds]
        assert all(a >= b for a, b in zip(areas, areas[1:]))


# ---- threshold selection ------------------------------------------------------


def test_threshold_top_cell_for_distinct_values(rng):
    grid = rng.permutation(64).astype(float).reshape(8, 8)
    t, degenerate = threshold_for_area(grid, 1 / 64)
    assert not degenerate
    mask = segment(grid, t)
    assert mask.sum() == 1
    assert grid[mask][0] == 63.0


def test_threshold_full_area(rng):
    grid = rng.uniform(size=(8, 8))
    t, degenerate = threshold_for_area(grid, 1.0)
    assert not degenerate
    assert t < grid.min()
    assert segment(grid, t).all()


def test_threshold_area_close_for_distinct_values(rng):
    for _ in range(100):
        grid = rng.permutation(48).astype(float).reshape(6, 8)
        target = float(rng.uniform(0.01, 1.0))
        t, degenerate = threshold_for_area(grid, target)
        assert not degenerate
        area = segment(grid, t).mean()
        # at least the target, with excess below one cell
        assert area >= target - 1e-12
        assert area - target < 1 / grid.size
        assert area == math.ceil(target * grid.size) / grid.size


def test_threshold_includes_boundary_ties():
    grid = np.array([[9.0, 7.0, 7.0, 5.0, 1.0, 0.5, 0.25, 0.1]])
    t, degenerate = threshold_for_area(grid, 2 / 8)
    assert not degenerate
    mask = segment(grid, t)
    assert mask.sum() == 3          # both tied cells at the boundary included
    assert t == 5.0


def test_threshold_degenerate_constant_map():
    t, degenerate = threshold_for_area(np.zeros((4, 4)), 0.25)
    assert degenerate
    mask = mask_at_area(np.zeros((4, 4)), 0.25, "x")
    assert mask.degenerate and not mask.grid.any() and mask.area_fraction == 0.0
    t2, degenerate2 = threshold_for_area(np.full((4, 4), 3.3), 0.25)
    assert degenerate2


def test_threshold_rejects_bad_target(rng):
    grid = rng.uniform(size=(4, 4))
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            threshold_for_area(grid, bad)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 9), st.floats(min_value=0.02, max_value=0.98))
def test_threshold_nesting_property(seed, target):
    rng = np.random.default_rng(seed)
    grid = rng.uniform(size=(8, 8))
    small = mask_at_area(grid, target * 0.5, "x").grid
    large = mask_at_area(grid, min(1.0, target), "x").grid
    assert (large | small == large).all()    # growing the target never removes cells


# ---- counterfactual pairs ------------------------------------------------------


def first_of_class(bundle, label):
    for image_id in bundle.ids("test"):
        if bundle.label_of(image_id) == label:
            return image_id
    raise AssertionError


def test_pair_swap_symmetry(model, planted_bundle):
    qid = first_of_class(planted_bundle, 0)
    cid = first_of_class(planted_bundle, 1)
    x, xc = planted_bundle.images[qid], planted_bundle.images[cid]
    fwd = counterfactual_explain(model, x, xc, 0, 1, "softmax", area=4 / 64,
                                 query_id=qid, counter_id=cid)
    rev = counterfactual_explain(model, xc, x, 1, 0, "softmax", area=4 / 64,
                                 query_id=cid, counter_id=qid)
    np.testing.assert_array_equal(fwd.query.grid, rev.counter.grid)
    np.testing.assert_array_equal(fwd.counter.grid, rev.query.grid)


def test_pair_full_area(model, planted_bundle):
    qid = first_of_class(planted_bundle, 0)
    cid = first_of_class(planted_bundle, 2)
    pair = counterfactual_explain(model, planted_bundle.images[qid],
                                  planted_bundle.images[cid], 0, 2, "softmax", area=1.0)
    assert pair.query.grid.all() and pair.counter.grid.all()


def test_pair_rejects_equal_classes(model, planted_bundle):
    x = planted_bundle.images[first_of_class(planted_bundle, 0)]
    with pytest.raises(ValueError):
        counterfactual_explain(model, x, x, 2, 2, "softmax")


def test_pair_deterministic(model, planted_bundle):
    qid = first_of_class(planted_bundle, 0)
    cid = first_of_class(planted_bundle, 3)
    args = (model, planted_bundle.images[qid], planted_bundle.images[cid], 0, 3)
    p1 = counterfactual_explain(*args, score_kind="easiness", area=2 / 64)
    p2 = counterfactual_explain(*args, score_kind="easiness", area=2 / 64)
    assert np.array_equal(p1.query_map.grid, p2.query_map.grid)
    assert np.array_equal(p1.query.grid, p2.query.grid)
    assert p1.query.threshold == p2.query.threshold


def test_pair_beats_random_masks(model, planted_bundle, ground_truth, rng):
    qid = first_of_class(planted_bundle, 0)
    cid = first_of_class(planted_bundle, 1)
    size = planted_bundle.config.image_size
    pair = counterfactual_explain(model, planted_bundle.images[qid],
                                  planted_bundle.images[cid], 0, 1, "easiness",
                                  area=8 / 64, query_id=qid, counter_id=cid)
    kq = planted_bundle.keypoints_of(qid)
    kc = planted_bundle.keypoints_of(cid)
    real = piou(cell_to_pixel_region(pair.query.grid, (size, size)),
                cell_to_pixel_region(pair.counter.grid, (size, size)),
                kq, kc, ground_truth, 0, 1)
    draws = []
    cells = pair.query.grid.size
    k = int(pair.query.grid.sum())
    for _ in range(100):
        rq = np.zeros(cells, dtype=bool)
        rq[rng.choice(cells, size=k, replace=False)] = True
        rc = np.zeros(cells, dtype=bool)
        rc[rng.choice(cells, size=k, replace=False)] = True
        draws.append(piou(cell_to_pixel_region(rq.reshape(8, 8), (size, size)),
                          cell_to_pixel_region(rc.reshape(8, 8), (size, size)),
                          kq, kc, ground_truth, 0, 1))
    assert real > np.mean(draws)


# ---- attributive baseline -------------------------------------------------------


def test_attributive_differs_from_discriminant(model, planted_bundle):
    qid = first_of_class(planted_bundle, 0)
    cid = first_of_class(planted_bundle, 1)
    pair = counterfactual_explain(model, planted_bundle.images[qid],
                                  planted_bundle.images[cid], 0, 1, "easiness",
                                  area=6 / 64)
    base = attributive_explain(model, planted_bundle.images[qid], 0, area=6 / 64)
    assert not np.array_equal(base.grid, pair.query.grid)


def test_attributive_degenerate_on_constant_map(model, planted_bundle):
    x = planted_bundle.images[first_of_class(planted_bundle, 0)]
    # the constant selector yields an all-zero attribution map
    from cfexplain.attribution import attribution_map

    amap = attribution_map(model, x, "constant")
    region = mask_at_area(amap.grid, 0.1, "constant")
    assert region.degenerate


# ---- pixel-space mapping ---------------------------------------------------------


def test_cell_to_pixel_blocks():
    mask = np.zeros((8, 8), dtype=bool)
    mask[1, 2] = True
    pixel = cell_to_pixel_region(mask, (32, 32))
    assert pixel.sum() == 16
    assert pixel[4:8, 8:12].all()


def test_cell_to_pixel_full():
    assert cell_to_pixel_region(np.ones((8, 8), dtype=bool), (32, 32)).all()


def test_cell_to_pixel_rejects_indivisible():
    with pytest.raises(ValueError):
        cell_to_pixel_region(np.ones((7, 7), dtype=bool), (32, 32))


def test_keypoint_to_cell():
    assert keypoint_to_cell((17, 3), (8, 8), (32, 32)) == (4, 0)
    assert keypoint_to_cell((0, 31), (8, 8), (32, 32)) == (0, 7)


# ---- serialization -------------------------------------------------------------


def test_rle_roundtrip(rng):
    for _ in range(100):
        mask = rng.random((8, 8)) < rng.uniform(0.0, 1.0)
        runs = mask_rle(mask)
        assert sum(runs) == mask.size
        np.testing.assert_array_equal(rle_to_mask(runs, mask.shape), mask)


def test_rle_edges():
    empty = np.zeros((4, 4), dtype=bool)
    full = np.ones((4, 4), dtype=bool)
    assert mask_rle(empty) == [16]
    assert mask_rle(full) == [0, 16]
    with pytest.raises(ValueError):
        rle_to_mask([10], (4, 4))


def test_explanation_record_and_save(model, planted_bundle, tmp_path):
    qid = first_of_class(planted_bundle, 0)
    cid = first_of_class(planted_bundle, 2)
    pair = counterfactual_explain(model, planted_bundle.images[qid],
                                  planted_bundle.images[cid], 0, 2, "certainty",
                                  area=3 / 64, query_id=qid, counter_id=cid)
    record = explanation_record(pair)
    assert record["class_pair"] == [0, 2]
    assert record["score_kind"] == "certainty"
    decoded = rle_to_mask(record["query"]["mask_rle"], tuple(record["query"]["grid_shape"]))
    np.testing.assert_array_equal(decoded, pair.query.grid)
    out = tmp_path / "pair.json"
    save_explanation(pair, out)
    assert out.exists()
    assert (tmp_path / "pair.query_map.bin").exists()
    assert (tmp_path / "pair.counter_map.bin.json").exists()


def test_pick_counter_image_deterministic():
    ids = [f"img_{i:05d}" for i in range(40)]
    a = pick_counter_image(ids, seed=3, query_id="img_00001", counter_class=2)
    b = pick_counter_image(ids, seed=3, query_id="img_00001", counter_class=2)
    c = pick_counter_image(ids, seed=4, query_id="img_00001", counter_class=2)
    assert a == b
    assert a in ids and c in ids
    with pytest.raises(ValueError):
        pick_counter_image([], seed=0, query_id="x", counter_class=0)
