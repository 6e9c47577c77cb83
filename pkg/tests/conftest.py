import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glimpsenet.features import FeatureSequence
from glimpsenet.rng import SplitMix64
from glimpsenet.training import Dataset


def random_sequence(rng: SplitMix64, steps: int, dim: int) -> FeatureSequence:
    return FeatureSequence(color=rng.normal(1.0, (steps, dim)),
                           depth=rng.normal(1.0, (steps, dim)))


def separable_dataset(n_pos=200, n_neg=600, steps=3, dim=16, amplitude=3.0,
                      noise=0.3, seed=99) -> Dataset:
    """Linearly separable fixture: the last step carries +pattern for
    positives and -pattern for negatives, earlier steps are pure noise."""
    rng = SplitMix64(seed)
    pattern = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0) * amplitude
    pos, neg = [], []
    for i in range(n_pos + n_neg):
        color = rng.normal(noise, (steps, dim))
        depth = rng.normal(noise, (steps, dim))
        if i < n_pos:
            color[steps - 1] += pattern
            depth[steps - 1] += pattern
            pos.append(FeatureSequence(color=color, depth=depth, label=1))
        else:
            color[steps - 1] -= pattern
            depth[steps - 1] -= pattern
            neg.append(FeatureSequence(color=color, depth=depth, label=0))
    return Dataset(positives=pos, negatives=neg)


@pytest.fixture
def rng():
    return SplitMix64(20260810)
