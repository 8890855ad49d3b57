"""Thresholding of heatmaps into regions and counterfactual pair assembly.

Region size is controlled by picking the threshold from the sorted cell
values so the mask covers at least the requested area fraction with minimal
excess; cells tied at the boundary value are all included. Masks use the
strict rule cell > T, so the degenerate constant map yields an empty mask
at T = max.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .attribution import DiscriminantMap, attribution_map, discriminant_map
from .micronet.model import ModelBundle


@dataclass
class RegionMask:
    grid: np.ndarray            # (H, W) bool over tap cells
    threshold: float
    area_target: float
    source: str                 # provenance of the thresholded map
    degenerate: bool = False

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=bool)

    @property
    def area_fraction(self) -> float:
        return float(self.grid.sum()) / self.grid.size


@dataclass
class ExplanationPair:
    query: RegionMask
    counter: RegionMask
    query_id: str
    counter_id: str
    predicted: int
    counter_class: int
    score_kind: str
    query_map: DiscriminantMap
    counter_map: DiscriminantMap
    area_target: float

    @property
    def degenerate(self) -> bool:
        return self.query_map.degenerate or self.counter_map.degenerate


def segment(grid: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean mask of cells strictly above the threshold."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return np.asarray(grid) > threshold


def threshold_for_area(grid: np.ndarray, target_fraction: float) -> tuple[float, bool]:
    """Threshold whose strict mask covers >= target_fraction with minimal excess.

    Ties at the boundary value are all included. A constant grid (including
    the all-zero degenerate map) has no usable threshold; it is flagged and
    the returned threshold equals the max, which yields an empty mask.
    """
    if not 0.0 < target_fraction <= 1.0:
        raise ValueError("target_fraction must be in (0, 1]")
    values = np.sort(np.asarray(grid, dtype=np.float64).ravel())
    n = values.size
    if values[0] == values[-1]:
        return float(values[0]), True
    k = math.ceil(target_fraction * n)
    boundary = values[n - k]
    first_tied = int(np.searchsorted(values, boundary, side="left"))
    threshold = float(values[first_tied - 1]) if first_tied > 0 else float(values[0] - 1.0)
    return threshold, False


def mask_at_area(grid: np.ndarray, area: float, source: str) -> RegionMask:
    threshold, degenerate = threshold_for_area(grid, area)
    mask = np.zeros_like(grid, dtype=bool) if degenerate else segment(grid, threshold)
    return RegionMask(mask, threshold=threshold, area_target=area, source=source,
                      degenerate=degenerate)


def counterfactual_explain(model: ModelBundle, x, x_c, predicted: int, counter: int,
                           score_kind: str = "easiness", area: float = 1 / 64,
                           query_id: str = "query", counter_id: str = "counter",
                           tap_layer: str | None = None) -> ExplanationPair:
    """Matched region pair: discriminant of (predicted, counter) on the query
    image and of (counter, predicted) on the counter image, both thresholded
    at the same area target."""
    if predicted == counter:
        raise ValueError("predicted and counter class must differ")
    d_query = discriminant_map(model, x, predicted, counter, score_kind,
                               tap_layer=tap_layer, image_id=query_id)
    d_counter = discriminant_map(model, x_c, counter, predicted, score_kind,
                                 tap_layer=tap_layer, image_id=counter_id)
    return ExplanationPair(
        query=mask_at_area(d_query.grid, area, f"discriminant({predicted},{counter})"),
        counter=mask_at_area(d_counter.grid, area, f"discriminant({counter},{predicted})"),
        query_id=query_id,
        counter_id=counter_id,
        predicted=predicted,
        counter_class=counter,
        score_kind=score_kind,
        query_map=d_query,
        counter_map=d_counter,
        area_target=area,
    )


def attributive_explain(model: ModelBundle, x, cls: int, area: float = 1 / 64,
                        tap_layer: str | None = None) -> RegionMask:
    """Baseline: threshold the plain class-posterior attribution map."""
    amap = attribution_map(model, x, f"class:{cls}", tap_layer=tap_layer)
    return mask_at_area(amap.grid, area, f"attribution(class:{cls})")


def cell_to_pixel_region(mask: np.ndarray, image_size: tuple[int, int]) -> np.ndarray:
    """Upsample a tap-cell mask to pixel space, one uniform block per cell."""
    mask = np.asarray(mask, dtype=bool)
    gh, gw = mask.shape
    ih, iw = image_size
    if ih % gh or iw % gw:
        raise ValueError(f"image size {image_size} not divisible by grid {mask.shape}")
    return np.kron(mask, np.ones((ih // gh, iw // gw), dtype=bool))


def keypoint_to_cell(point: tuple[int, int], grid_shape: tuple[int, int],
                     image_size: tuple[int, int]) -> tuple[int, int]:
    """Map a pixel keypoint (row, col) to its tap cell by integer division."""
    gh, gw = grid_shape
    ih, iw = image_size
    return int(point[0]) // (ih // gh), int(point[1]) // (iw // gw)


# ---- serialization -------------------------------------------------------


def mask_rle(mask: np.ndarray) -> list[int]:
    """Alternating run lengths over the row-major flattened mask, starting
    with the length of the leading False run (possibly 0)."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs = []
    current, count = False, 0
    for bit in flat:
        if bit == current:
            count += 1
        else:
            runs.append(count)
            current, count = bit, 1
    runs.append(count)
    return runs


def rle_to_mask(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    total = int(np.prod(shape))
    flat = np.zeros(total, dtype=bool)
    pos, value = 0, False
    for run in runs:
        if run < 0 or pos + run > total:
            raise ValueError("run-length data does not fit the mask shape")
        flat[pos:pos + run] = value
        pos += run
        value = not value
    if pos != total:
        raise ValueError("run-length data does not fit the mask shape")
    return flat.reshape(shape)


def explanation_record(pair: ExplanationPair) -> dict:
    """JSON-ready record of an explanation pair (heatmaps travel separately)."""
    def side(mask: RegionMask, dmap: DiscriminantMap):
        return {
            "threshold": mask.threshold,
            "area_fraction": mask.area_fraction,
            "mask_rle": mask_rle(mask.grid),
            "grid_shape": list(mask.grid.shape),
            "degenerate_factors": list(dmap.degenerate_factors),
        }

    return {
        "query_id": pair.query_id,
        "counter_id": pair.counter_id,
        "class_pair": [pair.predicted, pair.counter_class],
        "score_kind": pair.score_kind,
        "area": pair.area_target,
        "query": side(pair.query, pair.query_map),
        "counter": side(pair.counter, pair.counter_map),
        "degenerate": pair.degenerate,
    }


def save_explanation(pair: ExplanationPair, path) -> None:
    from .tensor import Tensor, save_tensor

    path = str(path)
    with open(path, "w") as f:
        json.dump(explanation_record(pair), f, indent=2, sort_keys=True)
    base = path[:-5] if path.endswith(".json") else path
    save_tensor(Tensor(pair.query_map.grid), base + ".query_map.bin")
    save_tensor(Tensor(pair.counter_map.grid), base + ".counter_map.bin")


def pick_counter_image(candidates: list[str], seed: int, query_id: str,
                       counter_class: int) -> str:
    """Deterministic uniform choice of a counter image for a query.

    Seeded by (seed, query id, counter class) so the CLI and the service
    agree on the same draw.
    """
    if not candidates:
        raise ValueError("no candidate images for the counter class")
    rng = np.random.default_rng([seed, zlib.crc32(query_id.encode()), counter_class])
    return candidates[int(rng.integers(len(candidates)))]
