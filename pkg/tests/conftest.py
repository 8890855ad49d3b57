import numpy as np
import pytest

from cfexplain import synthgen
from cfexplain.micronet import train


@pytest.fixture(scope="session")
def planted_bundle():
    cfg = synthgen.planted_config(images_per_class=150)
    return synthgen.generate_dataset(cfg, seed=2)


@pytest.fixture(scope="session")
def model(planted_bundle):
    return train(planted_bundle.labeled("train"), seed=2,
                 class_names=planted_bundle.config.classes)


@pytest.fixture(scope="session")
def weak_model(planted_bundle):
    return train(planted_bundle.labeled("train"), seed=1002,
                 class_names=planted_bundle.config.classes, conv_widths=(4, 8, 16))


@pytest.fixture(scope="session")
def ground_truth(planted_bundle):
    return synthgen.build_ground_truth(planted_bundle.config.part_profiles(),
                                       mode="kl", keep_fraction=0.5)


@pytest.fixture(scope="session")
def ambiguous_setup():
    cfg = synthgen.ambiguous_config(images_per_class=150)
    bundle = synthgen.generate_dataset(cfg, seed=7)
    m = train(bundle.labeled("train"), seed=7, class_names=cfg.classes)
    w = train(bundle.labeled("train"), seed=1007, class_names=cfg.classes,
              conv_widths=(4, 8, 16))
    return bundle, m, w


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
