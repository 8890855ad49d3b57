"""Discriminant counterfactual explanations for a small CNN classifier,
plus synthetic benchmark data, a proxy-localization evaluation harness,
a CLI, and a JSON HTTP service."""

from .attribution import (
    AttributionMap,
    DiscriminantMap,
    attribution_map,
    complement,
    discriminant_map,
    score_certainty,
    score_easiness,
    score_softmax,
)
from .explainer import (
    ExplanationPair,
    RegionMask,
    attributive_explain,
    cell_to_pixel_region,
    counterfactual_explain,
    segment,
    threshold_for_area,
)
from .micronet import (
    Hyperparams,
    LabeledDataset,
    ModelBundle,
    load_model,
    save_model,
    train,
)
from .synthgen import (
    DatasetConfig,
    GroundTruthTriplet,
    build_ground_truth,
    dissimilarity,
    generate_dataset,
    load_dataset,
    virtual_user,
    write_dataset,
)
from .tensor import Tensor

__version__ = "0.1.0"
