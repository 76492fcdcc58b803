import numpy as np
import pytest

from tscf.core import COMMON, INDEPENDENT, ChangeMask, LabeledDataset, TimeSeriesInstance


def random_mask(rng, length=None, channels=None, kind=None):
    """Random mask over random dims (L <= 64, C <= 8) unless pinned."""
    length = length or int(rng.integers(1, 65))
    channels = channels or int(rng.integers(1, 9))
    kind = kind or (COMMON if rng.random() < 0.5 else INDEPENDENT)
    shape = (length,) if kind == COMMON else (length, channels)
    bits = (rng.random(shape) < rng.uniform(0.05, 0.95)).astype(np.uint8)
    return ChangeMask(kind, bits)


def tiny_dataset(rng, n=12, length=8, channels=2, classes=2):
    instances = tuple(
        TimeSeriesInstance(rng.normal(size=(length, channels)) + 3.0 * (i % classes), i % classes)
        for i in range(n)
    )
    return LabeledDataset(instances, class_count=classes)


class StubClassifier:
    """Fixed-output classifier for isolating mask-side behavior."""

    def __init__(self, n_classes=2, always=None):
        self.n_classes = n_classes
        self.always = always  # class id every instance maps to, or None

    def predict_proba(self, batch):
        n = batch.shape[0] if isinstance(batch, np.ndarray) else len(batch)
        proba = np.full((n, self.n_classes), 1.0 / self.n_classes)
        if self.always is not None:
            proba[:] = 0.0
            proba[:, self.always] = 1.0
        return proba


class ZeroScorer:
    """Outlier scorer with zero error everywhere."""

    e_max = 1.0

    def reconstruction_errors(self, batch):
        n = batch.shape[0] if isinstance(batch, np.ndarray) else len(batch)
        return np.zeros(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
