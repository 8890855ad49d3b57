"""Synthetic part/attribute datasets with keypoint annotations.

Each class renders one fixed glyph per part at a jittered quadrant center;
the glyph's color is the part's sampled attribute, drawn from that class's
attribute distribution. Counterfactual ground truth is the set of
(part, class a, class b) triplets whose attribute distributions are most
dissimilar, mirroring how an annotated dataset would be mined for parts
that discriminate a class pair.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .micronet.model import ModelBundle
from .micronet.train import LabeledDataset
from .tensor import Tensor, load_tensor, save_tensor

PALETTE = {
    "red": (0.90, 0.10, 0.10),
    "blue": (0.15, 0.25, 0.95),
    "green": (0.10, 0.80, 0.20),
    "yellow": (0.95, 0.85, 0.10),
    "brown": (0.55, 0.35, 0.15),
    "silver": (0.72, 0.74, 0.78),
    "olive": (0.52, 0.53, 0.18),
    "orange": (0.95, 0.50, 0.10),
    "purple": (0.60, 0.15, 0.80),
    "cyan": (0.10, 0.85, 0.90),
    "magenta": (0.90, 0.15, 0.75),
    "gray": (0.50, 0.50, 0.50),
    "white": (0.95, 0.95, 0.95),
}

GLYPH_SHAPES = ("square", "disc", "cross", "triangle")

KL_SMOOTHING = 1e-8
DEFAULT_KEEP_FRACTION = 0.8


@dataclass
class PartProfile:
    part: str
    keypoint: tuple[int, int]                       # canonical (row, col) center
    distributions: dict[int, list[float] | None]    # class index -> probs, None if absent


@dataclass
class GroundTruthTriplet:
    part: str
    class_a: int
    class_b: int
    dissimilarity: float

    def __post_init__(self):
        if self.class_a == self.class_b:
            raise ValueError("triplet classes must differ")
        if self.dissimilarity < 0:
            raise ValueError("dissimilarity must be nonnegative")


@dataclass
class SceneAnnotation:
    label: int
    keypoints: dict[str, tuple[int, int]]
    attributes: dict[str, str]


@dataclass
class DatasetConfig:
    classes: list[str]
    parts: list[str]
    attributes: dict[str, list[str]]                      # part -> vocabulary
    profiles: dict[str, dict[str, list[float] | None]]    # class -> part -> probs
    images_per_class: int = 200
    image_size: int = 32
    train_fraction: float = 0.8
    glyph_size: int = 6
    jitter: int = 2
    noise: float = 0.05

    def validate(self):
        if len(self.classes) < 2:
            raise ValueError("need at least 2 classes (no counterfactual pairs otherwise)")
        if not 1 <= len(self.parts) <= 4:
            raise ValueError("supports 1 to 4 parts (one per quadrant)")
        if self.image_size % 4:
            raise ValueError("image_size must be divisible by 4")
        for part in self.parts:
            vocab = self.attributes.get(part)
            if not vocab:
                raise ValueError(f"part {part!r} has no attribute vocabulary")
            for name in vocab:
                if name not in PALETTE:
                    raise ValueError(f"unknown attribute color {name!r}")
        for cls in self.classes:
            table = self.profiles.get(cls)
            if table is None:
                raise ValueError(f"class {cls!r} has no attribute profile")
            for part in self.parts:
                probs = table.get(part)
                if probs is None:
                    continue  # part absent for this class
                if len(probs) != len(self.attributes[part]):
                    raise ValueError(f"profile length mismatch for {cls}/{part}")
                if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
                    raise ValueError(f"profile for {cls}/{part} is not a probability vector")

    def quadrant_centers(self) -> list[tuple[int, int]]:
        q = self.image_size // 4
        return [(q, q), (q, 3 * q), (3 * q, q), (3 * q, 3 * q)]

    def part_profiles(self) -> list[PartProfile]:
        centers = self.quadrant_centers()
        out = []
        for k, part in enumerate(self.parts):
            dists = {c: self.profiles[name].get(part)
                     for c, name in enumerate(self.classes)}
            out.append(PartProfile(part=part, keypoint=centers[k], distributions=dists))
        return out

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "parts": self.parts,
            "attributes": self.attributes,
            "profiles": self.profiles,
            "images_per_class": self.images_per_class,
            "image_size": self.image_size,
            "train_fraction": self.train_fraction,
            "glyph_size": self.glyph_size,
            "jitter": self.jitter,
            "noise": self.noise,
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetConfig":
        return DatasetConfig(**d)


def planted_config(images_per_class: int = 200) -> DatasetConfig:
    """Four classes split along the three possible 2+2 class partitions.

    Each strong part (crown, marker, badge) colors one partition of the
    four classes into two sides, plus a shared "murky" third color that
    hides the side on a fraction of images; those images are genuinely
    hard, which is what the hardness predictor learns. Any two classes
    differ on exactly two partitions and share the third, so every class
    pair has two counterfactual ground-truth parts and one part that is
    class-informative but shared within the pair: plain attributions
    spread onto the shared part, while the pair's discriminant map should
    suppress it. The fringe is a weak copy of the crown partition, kept
    out of the ground truth by its low dissimilarity.

    For the reference pair (alpha, beta) the marker and badge differ and
    the crown is shared.
    """
    classes = ["alpha", "beta", "gamma", "delta"]
    # sides of the three partitions, per class index
    partition_side = {
        "crown": (0, 0, 1, 1),    # {alpha, beta} vs {gamma, delta}
        "marker": (0, 1, 0, 1),   # {alpha, gamma} vs {beta, delta}
        "badge": (0, 1, 1, 0),    # {alpha, delta} vs {beta, gamma}
    }
    strong, off, murky = 0.86, 0.02, 0.12

    def strong_part(side: int) -> list[float]:
        return [strong, off, murky] if side == 0 else [off, strong, murky]

    profiles = {
        cls: {
            part: strong_part(sides[c])
            for part, sides in partition_side.items()
        }
        for c, cls in enumerate(classes)
    }
    for c, cls in enumerate(classes):
        lean = 0.8 if partition_side["crown"][c] == 0 else 0.2
        profiles[cls]["fringe"] = [lean, 1.0 - lean]
    return DatasetConfig(
        classes=classes,
        parts=["crown", "marker", "badge", "fringe"],
        attributes={
            "crown": ["white", "gray", "silver"],
            "marker": ["red", "blue", "brown"],
            "badge": ["green", "yellow", "olive"],
            "fringe": ["orange", "purple"],
        },
        profiles=profiles,
        images_per_class=images_per_class,
    )


def ambiguous_config(images_per_class: int = 200) -> DatasetConfig:
    """Classes 0/1 mostly crisp, classes 2/3 showing the murky attribute far
    more often on the two partitions that separate them from each other
    (crown stays crisp, so the ambiguity lands within the 2/3 pair): the
    hardness predictor should find that pair much harder than 0/1."""
    cfg = planted_config(images_per_class)
    for cls in ("gamma", "delta"):
        for part in ("marker", "badge"):
            probs = cfg.profiles[cls][part]
            cfg.profiles[cls][part] = [
                0.53 if p == 0.86 else (0.45 if p == 0.12 else p) for p in probs
            ]
    return cfg


# ---- rendering ------------------------------------------------------------


def _glyph_mask(shape: str, size: int) -> np.ndarray:
    rr, cc = np.mgrid[0:size, 0:size]
    center = (size - 1) / 2.0
    dr, dc = rr - center, cc - center
    if shape == "square":
        return np.ones((size, size), dtype=bool)
    if shape == "disc":
        return dr ** 2 + dc ** 2 <= (size / 2.0) ** 2
    if shape == "cross":
        return (np.abs(dr) <= 1.0) | (np.abs(dc) <= 1.0)
    if shape == "triangle":
        return dr >= np.abs(dc) - 1.0
    raise ValueError(f"unknown glyph shape {shape!r}")


def render_scene(config: DatasetConfig, label: int, rng: np.random.Generator
                 ) -> tuple[np.ndarray, SceneAnnotation]:
    size = config.image_size
    img = rng.uniform(0.0, config.noise, size=(3, size, size))
    cls = config.classes[label]
    centers = config.quadrant_centers()
    keypoints, attributes = {}, {}
    half = config.glyph_size // 2
    for k, part in enumerate(config.parts):
        probs = config.profiles[cls].get(part)
        if probs is None:
            continue
        vocab = config.attributes[part]
        attr = vocab[int(rng.choice(len(vocab), p=probs))]
        jr = int(rng.integers(-config.jitter, config.jitter + 1))
        jc = int(rng.integers(-config.jitter, config.jitter + 1))
        r0, c0 = centers[k][0] + jr, centers[k][1] + jc
        mask = _glyph_mask(GLYPH_SHAPES[k % len(GLYPH_SHAPES)], config.glyph_size)
        color = PALETTE[attr]
        rows = slice(r0 - half, r0 - half + config.glyph_size)
        cols = slice(c0 - half, c0 - half + config.glyph_size)
        for ch in range(3):
            plane = img[ch, rows, cols]
            plane[mask] = color[ch]
        keypoints[part] = (r0, c0)
        attributes[part] = attr
    return img, SceneAnnotation(label=label, keypoints=keypoints, attributes=attributes)


class DatasetBundle:
    """In-memory dataset: images, annotations, splits and the generating config."""

    def __init__(self, config: DatasetConfig, seed: int,
                 images: dict[str, np.ndarray],
                 annotations: dict[str, SceneAnnotation],
                 splits: dict[str, list[str]]):
        self.config = config
        self.seed = seed
        self.images = images
        self.annotations = annotations
        self.splits = splits

    def ids(self, split: str) -> list[str]:
        return list(self.splits[split])

    def labeled(self, split: str) -> LabeledDataset:
        ids = self.splits[split]
        stack = np.stack([self.images[i] for i in ids])
        labels = np.array([self.annotations[i].label for i in ids])
        return LabeledDataset(Tensor(stack), labels, split=split)

    def label_of(self, image_id: str) -> int:
        return self.annotations[image_id].label

    def keypoints_of(self, image_id: str) -> dict[str, tuple[int, int]]:
        return self.annotations[image_id].keypoints

    def ids_of_class(self, split: str, label: int) -> list[str]:
        return [i for i in self.splits[split] if self.annotations[i].label == label]


def generate_dataset(config: DatasetConfig, seed: int) -> DatasetBundle:
    """Render the full dataset; identical (config, seed) gives identical bytes."""
    config.validate()
    rng = np.random.default_rng(seed)
    images, annotations = {}, {}
    ids_by_class = []
    idx = 0
    for label in range(len(config.classes)):
        class_ids = []
        for _ in range(config.images_per_class):
            image_id = f"img_{idx:05d}"
            img, ann = render_scene(config, label, rng)
            images[image_id] = img
            annotations[image_id] = ann
            class_ids.append(image_id)
            idx += 1
        ids_by_class.append(class_ids)
    train, test = [], []
    for class_ids in ids_by_class:
        order = rng.permutation(len(class_ids))
        cut = int(round(config.train_fraction * len(class_ids)))
        train.extend(class_ids[i] for i in sorted(order[:cut]))
        test.extend(class_ids[i] for i in sorted(order[cut:]))
    return DatasetBundle(config, seed, images, annotations, {"train": train, "test": test})


# ---- dissimilarity and ground truth ---------------------------------------


def dissimilarity(phi_a, phi_b, mode: str = "kl") -> float:
    """Part-attribute dissimilarity between two classes.

    kl mode: exp of the symmetrized KL divergence between the two attribute
    distributions, with additive smoothing so disjoint supports stay finite;
    always >= 1. occurrence mode: scalar presence probabilities; 1 when the
    part occurs in the first class but never in the second, else 0.
    """
    if mode == "kl":
        a = np.asarray(phi_a, dtype=np.float64) + KL_SMOOTHING
        b = np.asarray(phi_b, dtype=np.float64) + KL_SMOOTHING
        if a.shape != b.shape:
            raise ValueError("distributions must share a vocabulary")
        a = a / a.sum()
        b = b / b.sum()
        sym = float(np.sum(a * np.log(a / b)) + np.sum(b * np.log(b / a)))
        return float(np.exp(sym))
    if mode == "occurrence":
        return 1.0 if float(phi_a) > 0.0 and float(phi_b) == 0.0 else 0.0
    raise ValueError(f"unknown dissimilarity mode {mode!r}")


def build_ground_truth(profiles: list[PartProfile], mode: str = "kl",
                       keep_fraction: float = DEFAULT_KEEP_FRACTION
                       ) -> list[GroundTruthTriplet]:
    """Score every (part, a, b) ordered pair and keep the most dissimilar.

    kl mode keeps the top keep_fraction by dissimilarity (stable order:
    dissimilarity desc, then part/class indices). occurrence mode keeps
    exactly the triplets whose part occurs in a but not in b.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    class_ids = sorted({c for p in profiles for c in p.distributions})
    if len(class_ids) < 2:
        raise ValueError("need at least 2 classes")
    scored = []
    for k, prof in enumerate(profiles):
        for a in class_ids:
            for b in class_ids:
                if a == b:
                    continue
                pa, pb = prof.distributions.get(a), prof.distributions.get(b)
                if mode == "kl":
                    if pa is None or pb is None:
                        continue
                    alpha = dissimilarity(pa, pb, "kl")
                else:
                    occ_a = 0.0 if pa is None else 1.0
                    occ_b = 0.0 if pb is None else 1.0
                    alpha = dissimilarity(occ_a, occ_b, "occurrence")
                scored.append((alpha, k, a, b, prof.part))
    if mode == "occurrence":
        kept = [s for s in scored if s[0] == 1.0]
    else:
        scored.sort(key=lambda s: (-s[0], s[1], s[2], s[3]))
        keep = int(np.floor(keep_fraction * len(scored) + 0.5))
        kept = scored[:keep]
    if not kept:
        warnings.warn("ground truth is empty for this configuration")
    return [GroundTruthTriplet(part=part, class_a=a, class_b=b, dissimilarity=alpha)
            for alpha, _, a, b, part in kept]


def triplets_for_pair(triplets: list[GroundTruthTriplet], a: int, b: int) -> list[GroundTruthTriplet]:
    return [t for t in triplets if t.class_a == a and t.class_b == b]


# ---- virtual users ---------------------------------------------------------


def virtual_user(kind: str, x, true_class: int, weak_model: ModelBundle | None = None,
                 num_classes: int | None = None, rng: np.random.Generator | None = None) -> int:
    """Simulated counter-class choice.

    beginner: uniformly random class other than the true one (seeded rng).
    advanced: the weak model's prediction; when that equals the true class,
    its second-ranked class, so the choice always differs from the truth.
    """
    if kind == "beginner":
        if num_classes is None or num_classes < 2:
            raise ValueError("beginner user needs num_classes >= 2")
        if rng is None:
            raise ValueError("beginner user needs an rng")
        others = [c for c in range(num_classes) if c != true_class]
        return int(others[int(rng.integers(len(others)))])
    if kind == "advanced":
        if weak_model is None:
            raise ValueError("advanced user needs a weak model")
        if weak_model.num_classes < 2:
            raise ValueError("weak model must have at least 2 classes")
        h = weak_model.forward(x).posteriors[0]
        ranked = np.argsort(-h, kind="stable")
        pick = int(ranked[0])
        return pick if pick != true_class else int(ranked[1])
    raise ValueError(f"unknown user kind {kind!r}")


# ---- directory IO ----------------------------------------------------------


def write_dataset(bundle: DatasetBundle, out_dir) -> None:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    manifest = dict(bundle.config.to_dict(), seed=bundle.seed, splits=bundle.splits)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    annotations = {
        image_id: {
            "class": ann.label,
            "keypoints": {p: list(kp) for p, kp in ann.keypoints.items()},
            "attributes": ann.attributes,
        }
        for image_id, ann in bundle.annotations.items()
    }
    (out / "annotations.json").write_text(json.dumps(annotations, indent=2, sort_keys=True))
    for image_id, img in bundle.images.items():
        save_tensor(Tensor(img), out / "images" / f"{image_id}.bin")


def load_dataset(in_dir) -> DatasetBundle:
    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    splits = manifest.pop("splits")
    seed = manifest.pop("seed")
    config = DatasetConfig.from_dict(manifest)
    raw = json.loads((src / "annotations.json").read_text())
    annotations = {
        image_id: SceneAnnotation(
            label=entry["class"],
            keypoints={p: tuple(kp) for p, kp in entry["keypoints"].items()},
            attributes=entry["attributes"],
        )
        for image_id, entry in raw.items()
    }
    images = {image_id: load_tensor(src / "images" / f"{image_id}.bin").data
              for image_id in annotations}
    return DatasetBundle(config, seed, images, annotations, splits)
