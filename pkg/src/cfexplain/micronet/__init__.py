from .checkpoint import CheckpointError, load_model, save_model
from .model import ForwardState, ModelBundle, parse_selector
from .train import Hyperparams, LabeledDataset, TrainingDiverged, accuracy, train

__all__ = [
    "CheckpointError",
    "ForwardState",
    "Hyperparams",
    "LabeledDataset",
    "ModelBundle",
    "TrainingDiverged",
    "accuracy",
    "load_model",
    "parse_selector",
    "save_model",
    "train",
]
