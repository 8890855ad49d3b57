import math

import numpy as np
import pytest

from cfexplain import evalharness as ev
from cfexplain.explainer import threshold_for_area
from cfexplain.synthgen import GroundTruthTriplet


def triplets_for(parts, a=0, b=1):
    return [GroundTruthTriplet(part=p, class_a=a, class_b=b, dissimilarity=2.0)
            for p in parts]


def region_with(*cells, shape=(32, 32)):
    region = np.zeros(shape, dtype=bool)
    for r, c in cells:
        region[r, c] = True
    return region


# ---- precision / recall -------------------------------------------------------


def test_pr_single_part_hit():
    kps = {"beak": (4, 4)}
    pr = ev.precision_recall(region_with((4, 4)), kps, triplets_for(["beak"]), 0, 1)
    assert pr == (1.0, 1.0, False)


def test_pr_half_precision():
    kps = {"beak": (4, 4), "tail": (10, 10)}
    region = region_with((4, 4), (10, 10))
    pr = ev.precision_recall(region, kps, triplets_for(["beak"]), 0, 1)
    assert pr.precision == 0.5 and pr.recall == 1.0


def test_pr_full_image():
    kps = {"beak": (4, 4), "tail": (10, 10), "wing": (20, 20)}
    region = np.ones((32, 32), dtype=bool)
    pr = ev.precision_recall(region, kps, triplets_for(["beak", "wing"]), 0, 1)
    assert pr.recall == 1.0
    assert pr.precision == pytest.approx(2 / 3)


def test_pr_empty_region_flagged():
    kps = {"beak": (4, 4)}
    pr = ev.precision_recall(np.zeros((32, 32), dtype=bool), kps,
                             triplets_for(["beak"]), 0, 1)
    assert pr == (0.0, 0.0, True)


def test_pr_no_ground_truth_raises():
    with pytest.raises(ValueError):
        ev.precision_recall(np.ones((8, 8), dtype=bool), {"x": (0, 0)},
                            triplets_for(["x"], a=2, b=3), 0, 1)


# ---- oracle equivalence ----------------------------------------------------------


def brute_force_metrics(region, counter_region, kps_q, kps_c, gt_q, gt_c, part_masks):
    """Set-enumeration oracle for P/R/IoU/PIoU on one instance."""
    inside = set()
    for part, (r, c) in kps_q.items():
        if region[r, c]:
            inside.add(part)
    j = len(inside & gt_q)
    precision = j / len(inside) if inside else 0.0
    recall = j / len(gt_q)
    union_mask = np.zeros_like(region)
    for part in gt_q:
        union_mask |= part_masks[part]
    inter = int((region & union_mask).sum())
    union = int((region | union_mask).sum())
    iou = inter / union if union else 0.0
    set_q = {p for p in gt_q if region[kps_q[p]]}
    set_c = {p for p in gt_c if counter_region[kps_c[p]]}
    piou = len(set_q & set_c) / len(set_q | set_c) if set_q | set_c else 0.0
    return precision, recall, iou, piou


def test_metrics_match_bruteforce_oracle(rng):
    parts = ["p0", "p1", "p2", "p3"]
    for _ in range(100):
        size = 16
        kps_q = {p: (int(rng.integers(size)), int(rng.integers(size))) for p in parts}
        kps_c = {p: (int(rng.integers(size)), int(rng.integers(size))) for p in parts}
        gt_parts = set(rng.choice(parts, size=int(rng.integers(1, 5)), replace=False))
        trips = ([GroundTruthTriplet(p, 0, 1, 2.0) for p in gt_parts]
                 + [GroundTruthTriplet(p, 1, 0, 2.0) for p in gt_parts])
        region = rng.random((size, size)) < rng.uniform(0.05, 0.6)
        counter_region = rng.random((size, size)) < rng.uniform(0.05, 0.6)
        part_masks = {}
        for p in parts:
            m = np.zeros((size, size), dtype=bool)
            r, c = kps_q[p]
            m[max(0, r - 1):r + 2, max(0, c - 1):c + 2] = True
            part_masks[p] = m

        exp_p, exp_r, exp_iou, exp_piou = brute_force_metrics(
            region, counter_region, kps_q, kps_c, gt_parts, gt_parts, part_masks)

        pr = ev.precision_recall(region, kps_q, trips, 0, 1)
        assert pr.precision == exp_p and pr.recall == exp_r

        union = np.zeros((size, size), dtype=bool)
        for p in gt_parts:
            union |= part_masks[p]
        assert ev.iou(region, union) == exp_iou

        assert ev.piou(region, counter_region, kps_q, kps_c, trips, 0, 1) == exp_piou


# ---- iou -------------------------------------------------------------------------


def test_iou_identical_and_disjoint():
    a = region_with((1, 1), (2, 2), shape=(4, 4))
    assert ev.iou(a, a) == 1.0
    b = region_with((0, 0), shape=(4, 4))
    assert ev.iou(a, b) == 0.0
    assert ev.iou(np.zeros((4, 4), bool), np.zeros((4, 4), bool)) == 0.0


def test_iou_half_overlap_thirds():
    a = region_with((0, 0), (0, 1), shape=(4, 4))
    b = region_with((0, 1), (0, 2), shape=(4, 4))
    assert ev.iou(a, b) == pytest.approx(1 / 3)


def test_iou_shape_mismatch():
    with pytest.raises(ValueError):
        ev.iou(np.zeros((4, 4), bool), np.zeros((8, 8), bool))


# ---- piou -------------------------------------------------------------------------


def test_piou_hand_sets():
    # query captures {p1, p2}, counter captures {p2, p3} -> 1/3
    kps = {"p1": (0, 0), "p2": (1, 1), "p3": (2, 2)}
    trips = ([GroundTruthTriplet(p, 0, 1, 2.0) for p in ("p1", "p2", "p3")]
             + [GroundTruthTriplet(p, 1, 0, 2.0) for p in ("p1", "p2", "p3")])
    query = region_with((0, 0), (1, 1), shape=(4, 4))
    counter = region_with((1, 1), (2, 2), shape=(4, 4))
    assert ev.piou(query, counter, kps, kps, trips, 0, 1) == pytest.approx(1 / 3)
    assert ev.piou(query, query, kps, kps, trips, 0, 1) == 1.0
    empty = np.zeros((4, 4), bool)
    assert ev.piou(empty, empty, kps, kps, trips, 0, 1) == 0.0


def test_piou_symmetric_in_regions():
    kps = {"p1": (0, 0), "p2": (1, 1)}
    trips = ([GroundTruthTriplet(p, 0, 1, 2.0) for p in ("p1", "p2")]
             + [GroundTruthTriplet(p, 1, 0, 2.0) for p in ("p1", "p2")])
    a = region_with((0, 0), shape=(4, 4))
    b = region_with((1, 1), shape=(4, 4))
    assert (ev.piou(a, b, kps, kps, trips, 0, 1)
            == ev.piou(b, a, kps, kps, trips, 1, 0))


# ---- pr curves --------------------------------------------------------------------


def test_pr_curve_extreme_threshold_matches_full_image(rng):
    grid = rng.uniform(0.1, 1.0, size=(8, 8))
    kps = {"p1": (5, 5), "p2": (20, 20), "p3": (9, 28)}
    trips = triplets_for(["p1", "p3"])
    curve = ev.pr_curve(grid, kps, trips, 0, 1, [grid.min() - 1.0, grid.max() + 1.0],
                        (32, 32))
    full = ev.precision_recall(np.ones((32, 32), bool), kps, trips, 0, 1)
    widest = curve[-1]
    assert widest["area"] == 1.0
    assert widest["precision"] == full.precision and widest["recall"] == full.recall


def test_pr_curve_recall_monotone(model, planted_bundle, ground_truth):
    image_id = planted_bundle.ids("test")[0]
    from cfexplain.attribution import attribution_map

    pred = model.predict(planted_bundle.images[image_id])
    counter = (pred + 1) % 4
    grid = attribution_map(model, planted_bundle.images[image_id], f"class:{pred}").grid
    areas = [k / 64 for k in (1, 2, 4, 8, 16, 32, 48, 64)]
    thresholds = [threshold_for_area(grid, a)[0] for a in areas]
    curve = ev.pr_curve(grid, planted_bundle.keypoints_of(image_id), ground_truth,
                        pred, counter, thresholds, (32, 32))
    recalls = [p["recall"] for p in curve]
    assert recalls == sorted(recalls)


def test_pr_curve_needs_two_thresholds():
    with pytest.raises(ValueError):
        ev.pr_curve(np.zeros((4, 4)), {}, triplets_for(["p"]), 0, 1, [0.5], (8, 8))


# ---- evaluate ----------------------------------------------------------------------


def test_evaluate_deterministic_rows(model, weak_model, planted_bundle, ground_truth):
    kwargs = dict(methods=("discriminant",), score_kinds=("softmax",),
                  user_kinds=("beginner",), areas=(2 / 64,), seed=3)
    r1 = ev.evaluate(model, weak_model, planted_bundle, ground_truth, **kwargs)
    r2 = ev.evaluate(model, weak_model, planted_bundle, ground_truth, **kwargs)
    for a, b in zip(r1.rows, r2.rows):
        assert (a.precision, a.recall, a.iou, a.piou, a.n, a.flags) == \
               (b.precision, b.recall, b.iou, b.piou, b.n, b.flags)


def test_evaluate_random_baseline_matches_analytic_expectation(
        model, weak_model, planted_bundle, ground_truth):
    area = 8 / 64
    report = ev.evaluate(model, weak_model, planted_bundle, ground_truth,
                         methods=("random",), score_kinds=("softmax",),
                         user_kinds=("beginner",), areas=(area,), seed=17)
    row = report.rows[0]
    detail = [d for d in report.per_image[row.key()] if "P" in d]
    assert len(detail) == row.n
    k = math.ceil(area * 64)
    p_none = (math.comb(60, k) / math.comb(64, k)) if k <= 60 else 0.0
    diffs = []
    for d in detail:
        a, b = d["pair"]
        g = len(ev.gt_parts_for_pair(ground_truth, a, b))
        expected = (g / 4.0) * (1.0 - p_none)
        diffs.append(d["P"] - expected)
    diffs = np.array(diffs)
    sigma = diffs.std(ddof=1) / math.sqrt(len(diffs))
    assert abs(diffs.mean()) <= 3.0 * sigma


def test_evaluate_skips_and_flags(model, weak_model, planted_bundle, ground_truth):
    report = ev.evaluate(model, weak_model, planted_bundle, ground_truth,
                         methods=("discriminant",), score_kinds=("easiness",),
                         user_kinds=("beginner",), areas=(1 / 64,), seed=3)
    row = report.rows[0]
    skipped = row.flags["skipped_collision"] + row.flags["skipped_no_gt"]
    assert row.n + skipped == len(planted_bundle.ids("test"))
    assert 0.0 <= row.precision <= 1.0 and 0.0 <= row.piou <= 1.0
    assert row.ips > 0


def test_evaluate_pair_weighting_differs(model, weak_model, planted_bundle, ground_truth):
    common = dict(methods=("attributive",), score_kinds=("softmax",),
                  user_kinds=("beginner",), areas=(4 / 64,), seed=3)
    by_image = ev.evaluate(model, weak_model, planted_bundle, ground_truth,
                           weight="image", **common)
    by_pair = ev.evaluate(model, weak_model, planted_bundle, ground_truth,
                          weight="pair", **common)
    assert by_image.rows[0].n == by_pair.rows[0].n
    with pytest.raises(ValueError):
        ev.evaluate(model, weak_model, planted_bundle, ground_truth,
                    weight="bogus", **common)


# ---- reports -----------------------------------------------------------------------


def make_report():
    rows = [ev.MetricRow(method="discriminant", score="easiness", user="beginner",
                         area=0.125, precision=0.5, recall=0.25, iou=0.1, piou=0.2,
                         ips=100.0, n=10,
                         flags={"skipped_collision": 1, "skipped_no_gt": 0,
                                "degenerate": 0, "empty_region": 2, "unreliable": False})]
    return ev.MetricReport(seed=3, rows=rows, per_image={rows[0].key(): []})


def test_report_roundtrip_and_reemission(tmp_path):
    report = make_report()
    first = ev.emit_report(report, tmp_path / "report")
    json_text = (tmp_path / "report.json").read_text()
    csv_text = (tmp_path / "report.csv").read_text()
    ev.emit_report(report, tmp_path / "report")
    assert (tmp_path / "report.json").read_text() == json_text
    assert (tmp_path / "report.csv").read_text() == csv_text
    parsed = ev.parse_report_json(json_text)
    assert parsed.seed == report.seed
    assert parsed.rows == report.rows
    assert len(first) == 2


def test_csv_schema():
    report = make_report()
    lines = ev.report_csv(report).splitlines()
    assert lines[0] == "method,score,user,area,P,R,IoU,PIoU,IPS,n,flags"
    assert len(lines) == 2
    assert len(lines[1].split(",")) == len(ev.CSV_COLUMNS)


def test_empty_report_header_only():
    empty = ev.MetricReport(seed=0, rows=[], per_image={})
    lines = ev.report_csv(empty).splitlines()
    assert lines == ["method,score,user,area,P,R,IoU,PIoU,IPS,n,flags"]
