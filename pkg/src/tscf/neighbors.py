"""Nearest Unlike Neighbor search over a training dataset."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import LabeledDataset, TimeSeriesInstance
from .models import ClassifierModel, predict_labels


class NoUnlikeNeighborError(LookupError):
    """No training instance satisfies the unlike-class filter."""


@dataclass(frozen=True)
class NunResult:
    neighbor: TimeSeriesInstance
    target_class: int
    distance: float
    index: int


def find_nun(
    train: LabeledDataset,
    x: TimeSeriesInstance,
    predicted_class: int,
    classifier: ClassifierModel,
    target_class: Optional[int] = None,
    by_label: bool = False,
) -> NunResult:
    """Closest training instance (flattened Euclidean distance) whose class
    differs from ``predicted_class``, or equals ``target_class`` when given.

    The class filter uses the classifier's own prediction on each candidate,
    which guarantees that swapping in the whole neighbor already flips the
    prediction. Pass ``by_label=True`` to filter on ground-truth labels
    instead; that restores the textbook definition but forfeits the
    guarantee when the classifier mislabels training points.

    Ties in distance break toward the lowest dataset index. The returned
    ``target_class`` is the classifier's prediction on the neighbor
    (its label under ``by_label``).
    """
    if x.values.shape != (train.length, train.channels):
        raise ValueError(
            f"query shape {x.values.shape} does not match dataset "
            f"({train.length}, {train.channels})"
        )
    if target_class is not None and target_class == predicted_class:
        raise ValueError("target class must differ from the predicted class")

    if by_label:
        classes = train.labels_array()
    else:
        classes = predict_labels(classifier, train.values_array())

    eligible = (classes == target_class) if target_class is not None else (classes != predicted_class)
    if not eligible.any():
        wanted = f"class {target_class}" if target_class is not None else "any unlike class"
        raise NoUnlikeNeighborError(f"no training instance with {wanted}")

    diffs = train.values_array() - x.values[None, :, :]
    dists = np.sqrt((diffs * diffs).sum(axis=(1, 2)))
    dists[~eligible] = np.inf
    best = int(np.argmin(dists))  # argmin returns the first minimum: lowest index wins
    neighbor = train.instances[best]
    return NunResult(
        neighbor=neighbor,
        target_class=int(classes[best]),
        distance=float(np.linalg.norm(neighbor.values - x.values)),
        index=best,
    )
