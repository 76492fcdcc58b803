"""The four penalized objectives scored for every candidate mask.

All objectives are maximized. A candidate is valid when the classifier
assigns the counterfactual the target class; invalid candidates have the
penalty subtracted from every objective, which makes any valid candidate
dominate every invalid one (provided the normalized outlier increase stays
below the penalty).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import COMMON, ChangeMask, TimeSeriesInstance
from .models import ClassifierModel, OutlierScorer


@dataclass(frozen=True)
class ObjectiveVector:
    """(o1, o2, o3, o4) fitness plus the validity flag.

    o1: probability of the target class.
    o2: negated fraction of changed cells (sparsity).
    o3: negated, exponent-shaped count of changed runs (contiguity).
    o4: negated normalized increase in outlier score (plausibility).
    """

    o1: float
    o2: float
    o3: float
    o4: float
    valid: bool

    @property
    def values(self) -> tuple[float, float, float, float]:
        return (self.o1, self.o2, self.o3, self.o4)


@dataclass(frozen=True)
class ObjectiveConfig:
    gamma: float = 0.25
    penalty: float = 100.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")


def increase_in_outlier_score(
    x: TimeSeriesInstance, x_prime: TimeSeriesInstance, scorer: OutlierScorer
) -> float:
    """max(0, err(x') - err(x)); zero when the counterfactual is at least
    as plausible as the original."""
    errs = scorer.reconstruction_errors([x, x_prime])
    return float(max(0.0, errs[1] - errs[0]))


def evaluate_masks(
    x: TimeSeriesInstance,
    masks: Sequence[ChangeMask],
    nun: TimeSeriesInstance,
    y_nun: int,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    cfg: ObjectiveConfig = ObjectiveConfig(),
    err_x: float | None = None,
) -> list[ObjectiveVector]:
    """Score a whole population in one batched classifier/scorer call.

    Common masks are broadcast to the independent form first, so sparsity
    and run counts are measured on the full L x C grid and stay comparable
    across both optimization phases.
    """
    length, channels = x.length, x.channels
    cells = length * channels
    active = np.stack(
        [
            m.bits != 0
            if m.kind != COMMON
            else np.repeat(m.bits[:, None] != 0, channels, axis=1)
            for m in masks
        ]
    )

    cf_values = np.where(active, nun.values[None, :, :], x.values[None, :, :])
    proba = classifier.predict_proba(cf_values)
    predicted = np.argmax(proba, axis=1)
    valid = predicted == y_nun

    if err_x is None:
        err_x = float(scorer.reconstruction_errors([x])[0])
    errs = scorer.reconstruction_errors(cf_values)
    ios = np.maximum(0.0, errs - err_x) / scorer.e_max

    popcounts = active.sum(axis=(1, 2))
    rises = active.copy()
    rises[:, 1:, :] &= ~active[:, :-1, :]
    nos = rises.sum(axis=(1, 2)).astype(float)  # run count, leading runs included

    penalties = np.where(valid, 0.0, cfg.penalty)
    o1 = proba[:, y_nun] - penalties
    o2 = -popcounts / cells - penalties
    o3 = -((nos / (cells / 2.0)) ** cfg.gamma) - penalties
    o4 = -ios - penalties
    return [
        ObjectiveVector(float(o1[i]), float(o2[i]), float(o3[i]), float(o4[i]), bool(valid[i]))
        for i in range(len(masks))
    ]


def evaluate_objectives(
    x: TimeSeriesInstance,
    mask: ChangeMask,
    nun: TimeSeriesInstance,
    y_nun: int,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    cfg: ObjectiveConfig = ObjectiveConfig(),
) -> ObjectiveVector:
    """Single-candidate convenience wrapper over evaluate_masks."""
    return evaluate_masks(x, [mask], nun, y_nun, classifier, scorer, cfg)[0]
