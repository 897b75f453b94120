from dataclasses import replace

import numpy as np
import pytest

from fracbnn import modelfile
from fracbnn.images import synthetic_images
from fracbnn.model import ConvUnitParams, LoadedModel


@pytest.fixture(scope="session")
def resnet_model():
    return modelfile.generate_synthetic(1234)


@pytest.fixture(scope="session")
def sample_images():
    return synthetic_images(99, 6)


def override_deltas(m: LoadedModel, value: int) -> LoadedModel:
    """Copy of a model with every gating threshold replaced."""
    layers = []
    for params in m.layers:
        if isinstance(params, ConvUnitParams):
            ch = replace(params.channel,
                         delta=np.full_like(params.channel.delta, value))
            layers.append(ConvUnitParams(params.weights, ch))
        else:
            layers.append(params)
    return LoadedModel(m.spec, tuple(layers))
