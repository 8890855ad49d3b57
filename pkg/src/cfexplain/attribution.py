"""Attribution maps, their complement, confidence scores, and the
discriminant combination.

An attribution map assigns each tap-layer cell the channel dot product of
the selector gradient with the activations at that cell; negative cells are
clamped to zero by default. The discriminant map for (predicted, counter)
multiplies three max-normalized factors: attribution of the predicted-class
posterior, complement of the counter-class attribution, and attribution of
a confidence score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .micronet.model import ForwardState, ModelBundle, certainty_score_rows

SCORE_KINDS = ("softmax", "certainty", "easiness", "constant")


@dataclass
class AttributionMap:
    grid: np.ndarray                      # (H, W), nonnegative after rectification
    target: str
    tap_layer: str
    image_id: str | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2:
            raise ValueError("attribution grid must be 2-D")


@dataclass
class DiscriminantMap:
    grid: np.ndarray                      # (H, W), nonnegative
    predicted: int
    counter: int
    score_kind: str
    degenerate_factors: tuple[str, ...] = ()
    image_id: str | None = None

    @property
    def degenerate(self) -> bool:
        return bool(self.degenerate_factors)


def attribution_map(model: ModelBundle, x, target: str, tap_layer: str | None = None,
                    state: ForwardState | None = None, rectify: bool = True,
                    image_id: str | None = None) -> AttributionMap:
    """Per-cell <gradient, activation> over channels at the tap layer."""
    tap = tap_layer or model.tap_layer
    state = state or model.forward(x)
    if not state.single:
        raise ValueError("attribution_map expects a single image")
    grad = model.grad_wrt_tap(state, target, tap)       # (D, H, W)
    acts = state.tap(tap)
    grid = np.einsum("chw,chw->hw", grad, acts)
    if rectify:
        grid = np.maximum(grid, 0.0)
    return AttributionMap(grid, target=target, tap_layer=tap, image_id=image_id)


def complement(a: AttributionMap) -> AttributionMap:
    """Max-minus-value transform: large where the source map is small."""
    grid = a.grid.max() - a.grid
    return AttributionMap(grid, target=f"complement({a.target})",
                          tap_layer=a.tap_layer, image_id=a.image_id)


# ---- confidence scores ------------------------------------------------


def score_softmax(h: np.ndarray) -> float:
    """Largest class posterior; lies in [1/C, 1]."""
    h = _check_simplex(h)
    return float(h.max())


def score_certainty(h: np.ndarray) -> float:
    """One minus normalized entropy: 0 on uniform, 1 on one-hot."""
    h = _check_simplex(h)
    if h.size < 2:
        raise ValueError("certainty needs at least 2 classes")
    return float(certainty_score_rows(h[None])[0])


def score_easiness(model: ModelBundle, x, state: ForwardState | None = None) -> float:
    """One minus the hardness predictor output."""
    state = state or model.forward(x)
    s_hp = state.hardness
    return float(1.0 - (s_hp[0] if state.single else s_hp))


def _check_simplex(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    if np.any(h < -1e-9) or abs(h.sum() - 1.0) > 1e-6:
        raise ValueError("expected a probability simplex point")
    return np.clip(h, 0.0, 1.0)


# ---- discriminant combination ------------------------------------------


def max_normalize(grid: np.ndarray) -> tuple[np.ndarray, bool]:
    """Scale to [0, 1] by the max; flags an all-zero grid as degenerate."""
    peak = grid.max()
    if peak <= 0.0:
        return np.zeros_like(grid), True
    return grid / peak, False


def combine_discriminant(a_predicted: np.ndarray, a_counter: np.ndarray,
                         a_score: np.ndarray, normalize: bool = True
                         ) -> tuple[np.ndarray, tuple[str, ...]]:
    """Combine the three factor grids into a discriminant grid.

    The counter factor enters as its complement (max minus value), so
    cells carrying evidence against the counter class rank highest; pass
    the unrectified counter attribution to preserve that ranking. A
    degenerate (all-zero) score factor falls back to all-ones so the two
    class factors stay informative; a degenerate class factor zeroes the
    result. Returns the grid and the names of degenerate factors.
    """
    comp = a_counter.max() - a_counter
    degenerate = []
    if normalize:
        f_pred, deg_p = max_normalize(a_predicted)
        f_comp, deg_c = max_normalize(comp)
        f_score, deg_s = max_normalize(a_score)
    else:
        f_pred, deg_p = a_predicted, not a_predicted.any()
        f_comp, deg_c = comp, not comp.any()
        f_score, deg_s = a_score, not a_score.any()
    if deg_p:
        degenerate.append("predicted")
    if deg_c:
        degenerate.append("counter_complement")
    if deg_s:
        degenerate.append("score")
        f_score = np.ones_like(a_score)
    grid = f_pred * f_comp * f_score
    if deg_p or deg_c:
        grid = np.zeros_like(grid)
    return grid, tuple(degenerate)


def discriminant_map(model: ModelBundle, x, predicted: int, counter: int,
                     score_kind: str = "easiness", tap_layer: str | None = None,
                     state: ForwardState | None = None, rectify: bool = True,
                     normalize: bool = True, image_id: str | None = None) -> DiscriminantMap:
    """Discriminant grid for (predicted, counter) on one image."""
    if predicted == counter:
        raise ValueError("predicted and counter class must differ")
    for cls in (predicted, counter):
        if not 0 <= cls < model.num_classes:
            raise ValueError(f"class index {cls} out of range")
    if score_kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {score_kind!r}")
    tap = tap_layer or model.tap_layer
    state = state or model.forward(x)
    a_pred = attribution_map(model, None, f"class:{predicted}", tap, state, rectify)
    # the complement wants the raw counter attribution: clamping first would
    # collapse all anti-counter evidence to a single complement level (and
    # can collapse the whole factor to zero on confident predictions)
    a_cnt = attribution_map(model, None, f"class:{counter}", tap, state, rectify=False)
    a_scr = attribution_map(model, None, score_kind, tap, state, rectify)
    grid, degenerate = combine_discriminant(a_pred.grid, a_cnt.grid, a_scr.grid,
                                            normalize=normalize)
    return DiscriminantMap(grid, predicted=predicted, counter=counter,
                           score_kind=score_kind, degenerate_factors=degenerate,
                           image_id=image_id)


# ---- export -------------------------------------------------------------


def heatmap_to_bytes(grid: np.ndarray) -> bytes:
    """8-bit grayscale, scaled so the map max hits 255 (zero map stays zero)."""
    peak = grid.max()
    scaled = grid / peak if peak > 0 else np.zeros_like(grid)
    return (np.clip(scaled, 0.0, 1.0) * 255.0).round().astype(np.uint8).tobytes()


def save_heatmap_png(grid: np.ndarray, path) -> None:
    from PIL import Image

    h, w = grid.shape
    img = Image.frombytes("L", (w, h), heatmap_to_bytes(grid))
    img.save(path, format="PNG")
