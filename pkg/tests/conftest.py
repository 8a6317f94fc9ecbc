import math

import numpy as np
import pytest

from progmatch.core import Feature, FeatureSet


def unit_vec(d: int, axis: int) -> np.ndarray:
    v = np.zeros(d)
    v[axis] = 1.0
    return v


def make_feature(x=0.0, y=0.0, scale=1.0, orientation=0.0, descriptor=None) -> Feature:
    if descriptor is None:
        descriptor = unit_vec(4, 0)
    return Feature(x, y, scale, orientation, np.asarray(descriptor, dtype=np.float64))


def random_feature_set(rng, n, width=200.0, height=200.0, d=8) -> FeatureSet:
    return FeatureSet(
        width, height,
        np.column_stack([rng.uniform(0, width, n), rng.uniform(0, height, n)]),
        rng.uniform(0.5, 3.0, n),
        rng.uniform(-math.pi, math.pi, n),
        rng.normal(size=(n, d)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
