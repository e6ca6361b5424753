import numpy as np
import pytest

from relsar.synth import SynthSpec, synth_dataset
from relsar.tensor import default_dtype


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """3 classes x 8 videos of 40 frames at T=12, written once per session."""
    out = tmp_path_factory.mktemp("tiny")
    spec = SynthSpec(classes=3, samples_per_class=8, T=12, frames_per_video=40, seed=3,
                     noise=0.005)
    return synth_dataset(out, spec)
