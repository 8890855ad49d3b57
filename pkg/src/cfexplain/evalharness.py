"""Proxy-localization metrics and batch evaluation.

Regions are scored against part keypoints (precision/recall), part mask
unions (IoU), and, for counterfactual pairs, the agreement of the
ground-truth part sets captured by the two regions (part IoU).
"""

from __future__ import annotations

import csv
import io
import json
import time
import zlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .attribution import attribution_map
from .explainer import (
    cell_to_pixel_region,
    counterfactual_explain,
    mask_at_area,
    pick_counter_image,
    segment,
)
from .micronet.model import ModelBundle
from .synthgen import DatasetBundle, GroundTruthTriplet, triplets_for_pair

CSV_COLUMNS = ["method", "score", "user", "area", "P", "R", "IoU", "PIoU", "IPS", "n", "flags"]


class PRResult(NamedTuple):
    precision: float
    recall: float
    empty_region: bool


def gt_parts_for_pair(triplets: list[GroundTruthTriplet], a: int, b: int) -> set[str]:
    return {t.part for t in triplets_for_pair(triplets, a, b)}


def precision_recall(region: np.ndarray, keypoints: dict[str, tuple[int, int]],
                     triplets: list[GroundTruthTriplet], a: int, b: int) -> PRResult:
    """Keypoint-based precision and recall of one region for the pair (a, b).

    Precision counts ground-truth parts among all parts inside the region;
    recall counts them against all ground-truth parts of the pair. An empty
    region has precision 0 by definition (flagged).
    """
    gt_parts = gt_parts_for_pair(triplets, a, b)
    if not gt_parts:
        raise ValueError(f"no ground truth for class pair ({a}, {b})")
    region = np.asarray(region, dtype=bool)
    inside = [p for p, (r, c) in keypoints.items() if region[r, c]]
    hits = sum(1 for p in inside if p in gt_parts)
    recall = hits / len(gt_parts)
    if not inside:
        return PRResult(0.0, recall, True)
    return PRResult(hits / len(inside), recall, False)


def pr_curve(grid: np.ndarray, keypoints, triplets, a: int, b: int,
             thresholds, image_size: tuple[int, int]) -> list[dict]:
    """P/R at each threshold, sorted by increasing region area."""
    thresholds = list(thresholds)
    if len(thresholds) < 2:
        raise ValueError("need at least 2 thresholds")
    points = []
    for t in thresholds:
        mask = segment(grid, t)
        region = cell_to_pixel_region(mask, image_size)
        pr = precision_recall(region, keypoints, triplets, a, b)
        points.append({
            "threshold": float(t),
            "area": float(mask.sum()) / mask.size,
            "precision": pr.precision,
            "recall": pr.recall,
        })
    points.sort(key=lambda p: p["area"])
    return points


def pr_auc(points: list[dict]) -> float:
    """Trapezoidal area under precision as a function of recall."""
    order = sorted(points, key=lambda p: p["recall"])
    recalls = np.array([p["recall"] for p in order])
    precisions = np.array([p["precision"] for p in order])
    return float(np.trapezoid(precisions, recalls))


def iou(region: np.ndarray, parts_mask: np.ndarray) -> float:
    """Pixel intersection-over-union; 0 when the union is empty."""
    region = np.asarray(region, dtype=bool)
    parts_mask = np.asarray(parts_mask, dtype=bool)
    if region.shape != parts_mask.shape:
        raise ValueError("masks must share a pixel space")
    union = np.logical_or(region, parts_mask).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(region, parts_mask).sum() / union)


def piou(query_region: np.ndarray, counter_region: np.ndarray,
         keypoints_query: dict, keypoints_counter: dict,
         triplets: list[GroundTruthTriplet], a: int, b: int) -> float:
    """Part IoU of a counterfactual pair: agreement of the ground-truth part
    sets captured by the two regions. Both sets empty gives 0."""
    query_region = np.asarray(query_region, dtype=bool)
    counter_region = np.asarray(counter_region, dtype=bool)
    set_q = {p for p in gt_parts_for_pair(triplets, a, b)
             if p in keypoints_query and query_region[keypoints_query[p]]}
    set_c = {p for p in gt_parts_for_pair(triplets, b, a)
             if p in keypoints_counter and counter_region[keypoints_counter[p]]}
    union = set_q | set_c
    if not union:
        return 0.0
    return len(set_q & set_c) / len(union)


# ---- batch evaluation ------------------------------------------------------


@dataclass
class MetricRow:
    method: str
    score: str
    user: str
    area: float
    precision: float
    recall: float
    iou: float
    piou: float
    ips: float
    n: int
    flags: dict[str, int | bool] = field(default_factory=dict)

    def key(self) -> str:
        return f"{self.method}|{self.score}|{self.user}|{self.area}"


@dataclass
class MetricReport:
    seed: int
    rows: list[MetricRow]
    per_image: dict[str, list[dict]]

    def row(self, method: str, score: str, user: str, area: float) -> MetricRow:
        for r in self.rows:
            if (r.method, r.score, r.user) == (method, score, user) and np.isclose(r.area, area):
                return r
        raise KeyError((method, score, user, area))


def part_pixel_masks(bundle: DatasetBundle, image_id: str) -> dict[str, np.ndarray]:
    """Glyph footprint of every rendered part, in pixel space."""
    from .synthgen import GLYPH_SHAPES, _glyph_mask

    cfg = bundle.config
    size = cfg.image_size
    out = {}
    half = cfg.glyph_size // 2
    for k, part in enumerate(cfg.parts):
        kp = bundle.annotations[image_id].keypoints.get(part)
        if kp is None:
            continue
        mask = np.zeros((size, size), dtype=bool)
        glyph = _glyph_mask(GLYPH_SHAPES[k % len(GLYPH_SHAPES)], cfg.glyph_size)
        mask[kp[0] - half:kp[0] - half + cfg.glyph_size,
             kp[1] - half:kp[1] - half + cfg.glyph_size] = glyph
        out[part] = mask
    return out


def random_cell_mask(grid_shape: tuple[int, int], area: float,
                     rng: np.random.Generator) -> np.ndarray:
    cells = int(np.prod(grid_shape))
    k = max(1, int(np.ceil(area * cells)))
    mask = np.zeros(cells, dtype=bool)
    mask[rng.choice(cells, size=min(k, cells), replace=False)] = True
    return mask.reshape(grid_shape)


def assign_counter_classes(model: ModelBundle, weak_model: ModelBundle | None,
                           bundle: DatasetBundle, user_kind: str, seed: int,
                           split: str = "test") -> dict[str, int]:
    """One counter class per test image, fixed across methods and areas so
    method comparisons stay paired."""
    from .synthgen import virtual_user

    ids = bundle.ids(split)
    rng = np.random.default_rng([seed, zlib.crc32(user_kind.encode())])
    counters = {}
    for image_id in ids:
        true_class = bundle.label_of(image_id)
        counters[image_id] = virtual_user(
            user_kind, bundle.images[image_id], true_class, weak_model=weak_model,
            num_classes=len(bundle.config.classes), rng=rng)
    return counters


def evaluate(model: ModelBundle, weak_model: ModelBundle | None, bundle: DatasetBundle,
             triplets: list[GroundTruthTriplet],
             methods=("discriminant", "attributive", "random"),
             score_kinds=("softmax", "certainty", "easiness"),
             user_kinds=("beginner", "advanced"),
             areas=(1 / 64,), seed: int = 0, split: str = "test",
             weight: str = "image") -> MetricReport:
    """Run every (method, score, user, area) row over the test split.

    Rows are deterministic given the seed; only the images/second figure
    depends on the clock. Images whose counter class collides with the
    model prediction, or whose class pair has no ground truth, are skipped
    and counted in the row flags.
    """
    if weight not in ("image", "pair"):
        raise ValueError("weight must be 'image' or 'pair'")
    ids = bundle.ids(split)
    if not ids:
        raise ValueError("empty test split")
    size = bundle.config.image_size

    preds = {i: model.predict(bundle.images[i]) for i in ids}
    counters_by_user = {u: assign_counter_classes(model, weak_model, bundle, u, seed, split)
                        for u in user_kinds}
    ids_by_class = {c: bundle.ids_of_class(split, c)
                    for c in range(len(bundle.config.classes))}
    parts_cache = {i: part_pixel_masks(bundle, i) for i in ids}

    rows, per_image = [], {}
    for method in methods:
        scores = score_kinds if method == "discriminant" else ("none",)
        for score in scores:
            for user in user_kinds:
                counters = counters_by_user[user]
                for area in areas:
                    row, detail = _evaluate_row(
                        model, bundle, triplets, parts_cache, ids, preds, counters,
                        ids_by_class, method, score, user, area, seed, size, weight)
                    rows.append(row)
                    per_image[row.key()] = detail
    return MetricReport(seed=seed, rows=rows, per_image=per_image)


def _evaluate_row(model, bundle, triplets, parts_cache, ids, preds, counters,
                  ids_by_class, method, score, user, area, seed, size, weight):
    details = []
    skipped_collision = skipped_no_gt = degenerate = empty_region = 0
    explain_seconds = 0.0
    records = []

    for image_id in ids:
        pred, counter = preds[image_id], counters[image_id]
        if counter == pred:
            skipped_collision += 1
            details.append({"image": image_id, "skipped": "counter_equals_prediction"})
            continue
        if not gt_parts_for_pair(triplets, pred, counter):
            skipped_no_gt += 1
            details.append({"image": image_id, "skipped": "no_ground_truth"})
            continue
        counter_id = pick_counter_image(ids_by_class[counter], seed, image_id, counter)

        t0 = time.perf_counter()
        if method == "discriminant":
            pair = counterfactual_explain(
                model, bundle.images[image_id], bundle.images[counter_id],
                pred, counter, score_kind=score, area=area,
                query_id=image_id, counter_id=counter_id)
            query_mask, counter_mask = pair.query.grid, pair.counter.grid
            is_degenerate = pair.degenerate
        elif method == "attributive":
            qm = attribution_map(model, bundle.images[image_id], f"class:{pred}")
            cm = attribution_map(model, bundle.images[counter_id], f"class:{counter}")
            q = mask_at_area(qm.grid, area, "attributive")
            c = mask_at_area(cm.grid, area, "attributive")
            query_mask, counter_mask = q.grid, c.grid
            is_degenerate = q.degenerate or c.degenerate
        elif method == "random":
            rng = np.random.default_rng([seed, zlib.crc32(image_id.encode()),
                                         int(area * 1e6), 7])
            grid_shape = _tap_grid_shape(model)
            query_mask = random_cell_mask(grid_shape, area, rng)
            counter_mask = random_cell_mask(grid_shape, area, rng)
            is_degenerate = False
        else:
            raise ValueError(f"unknown method {method!r}")
        explain_seconds += time.perf_counter() - t0

        query_px = cell_to_pixel_region(query_mask, (size, size))
        counter_px = cell_to_pixel_region(counter_mask, (size, size))
        kps_q = bundle.keypoints_of(image_id)
        kps_c = bundle.keypoints_of(counter_id)
        pr = precision_recall(query_px, kps_q, triplets, pred, counter)
        gt_union = _gt_part_union(parts_cache[image_id], triplets, pred, counter)
        region_iou = iou(query_px, gt_union)
        pair_iou = piou(query_px, counter_px, kps_q, kps_c, triplets, pred, counter)

        degenerate += int(is_degenerate)
        empty_region += int(pr.empty_region)
        records.append((pred, counter, pr.precision, pr.recall, region_iou, pair_iou))
        details.append({
            "image": image_id, "counter_image": counter_id,
            "pair": [int(pred), int(counter)],
            "P": pr.precision, "R": pr.recall, "IoU": region_iou, "PIoU": pair_iou,
            "degenerate": bool(is_degenerate), "empty_region": bool(pr.empty_region),
        })

    n = len(records)
    if n:
        arr = np.array([r[2:] for r in records], dtype=np.float64)
        if weight == "image":
            means = arr.mean(axis=0)
        else:
            by_pair = {}
            for rec in records:
                by_pair.setdefault((rec[0], rec[1]), []).append(rec[2:])
            means = np.mean([np.mean(v, axis=0) for v in by_pair.values()], axis=0)
        mean_p, mean_r, mean_iou, mean_piou = (float(v) for v in means)
    else:
        mean_p = mean_r = mean_iou = mean_piou = 0.0
    ips = n / explain_seconds if explain_seconds > 0 else 0.0
    flags = {
        "skipped_collision": skipped_collision,
        "skipped_no_gt": skipped_no_gt,
        "degenerate": degenerate,
        "empty_region": empty_region,
        "unreliable": bool(n == 0 or degenerate > n / 2),
    }
    row = MetricRow(method=method, score=score, user=user, area=float(area),
                    precision=mean_p, recall=mean_r, iou=mean_iou, piou=mean_piou,
                    ips=float(ips), n=n, flags=flags)
    return row, details


def _tap_grid_shape(model: ModelBundle) -> tuple[int, int]:
    _, h, w = model.input_shape
    factor = {"conv1": 1, "conv2": 2, "conv3": 4}[model.tap_layer]
    return h // factor, w // factor


def _gt_part_union(part_masks: dict[str, np.ndarray], triplets, a: int, b: int) -> np.ndarray:
    parts = gt_parts_for_pair(triplets, a, b)
    size = next(iter(part_masks.values())).shape if part_masks else None
    if size is None:
        raise ValueError("image has no rendered parts")
    union = np.zeros(size, dtype=bool)
    for p in parts:
        if p in part_masks:
            union |= part_masks[p]
    return union


# ---- timing ----------------------------------------------------------------


def explain_timing(model: ModelBundle, bundle: DatasetBundle, areas,
                   score_kind: str = "easiness", seed: int = 0, split: str = "test",
                   max_images: int = 40, repeats: int = 3) -> dict[float, float]:
    """Seconds per counterfactual explanation at each area target.

    Fresh computation per call (no caching) so region size genuinely cannot
    influence the measured cost. Takes the best of ``repeats`` interleaved
    passes per area, which filters scheduler noise but keeps any systematic
    dependence on region size; one warmup pass is excluded.
    """
    ids = bundle.ids(split)[:max_images]
    preds = {i: model.predict(bundle.images[i]) for i in ids}
    jobs = []
    for image_id in ids:
        pred = preds[image_id]
        counter = (pred + 1) % len(bundle.config.classes)
        counter_id = pick_counter_image(bundle.ids_of_class(split, counter), seed,
                                        image_id, counter)
        jobs.append((image_id, counter_id, pred, counter))

    def run(area: float) -> float:
        t0 = time.perf_counter()
        for image_id, counter_id, pred, counter in jobs:
            counterfactual_explain(model, bundle.images[image_id],
                                   bundle.images[counter_id], pred, counter,
                                   score_kind=score_kind, area=area,
                                   query_id=image_id, counter_id=counter_id)
        return (time.perf_counter() - t0) / len(jobs)

    run(float(areas[0]))  # warmup
    best: dict[float, float] = {}
    for _ in range(repeats):
        for area in areas:
            t = run(float(area))
            key = float(area)
            best[key] = min(best.get(key, np.inf), t)
    return best


# ---- report emission -------------------------------------------------------


def _row_dict(row: MetricRow) -> dict:
    return {
        "method": row.method, "score": row.score, "user": row.user, "area": row.area,
        "P": row.precision, "R": row.recall, "IoU": row.iou, "PIoU": row.piou,
        "IPS": row.ips, "n": row.n, "flags": row.flags,
    }


def _flags_str(flags: dict) -> str:
    return ";".join(f"{k}={int(v)}" for k, v in sorted(flags.items()))


def report_json(report: MetricReport) -> str:
    payload = {
        "seed": report.seed,
        "rows": [_row_dict(r) for r in report.rows],
        "per_image": report.per_image,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def report_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.rows:
        writer.writerow([r.method, r.score, r.user, repr(r.area), repr(r.precision),
                         repr(r.recall), repr(r.iou), repr(r.piou), repr(r.ips),
                         r.n, _flags_str(r.flags)])
    return buf.getvalue()


def emit_report(report: MetricReport, path, formats=("json", "csv")) -> list[str]:
    """Write the report; emission is byte-identical for an identical report."""
    from pathlib import Path

    base = Path(path)
    written = []
    if "json" in formats:
        p = base.with_suffix(".json")
        p.write_text(report_json(report))
        written.append(str(p))
    if "csv" in formats:
        p = base.with_suffix(".csv")
        p.write_text(report_csv(report))
        written.append(str(p))
    return written


def parse_report_json(text: str) -> MetricReport:
    payload = json.loads(text)
    rows = [MetricRow(method=r["method"], score=r["score"], user=r["user"], area=r["area"],
                      precision=r["P"], recall=r["R"], iou=r["IoU"], piou=r["PIoU"],
                      ips=r["IPS"], n=r["n"], flags=r["flags"])
            for r in payload["rows"]]
    return MetricReport(seed=payload["seed"], rows=rows, per_image=payload["per_image"])
