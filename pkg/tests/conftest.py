import numpy as np
import pytest
from hypothesis import settings

from scenedistill.synth import SceneSpec, render

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def scene():
    return render(SceneSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
