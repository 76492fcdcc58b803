"""Quality metrics, a trivial full-swap baseline, and batch reports.

Value metrics are computed exclusively on valid counterfactuals; validity
itself is the fraction of valid ones. The outlier score is min-max scaled
to the training error range, so implausible counterfactuals can exceed 1.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    INDEPENDENT,
    ChangeMask,
    LabeledDataset,
    TimeSeriesInstance,
    as_independent,
    count_subsequences,
)
from .driver import RunConfig, UtilityWeights, run_for_instance, select_by_utility
from .models import ClassifierModel, OutlierScorer, predict_labels
from .neighbors import find_nun

VALUE_METRICS = ("proximity", "sparsity", "nos", "os_scaled", "sparsity_nos_mean")
LOWER_IS_BETTER = set(VALUE_METRICS)


@dataclass
class MetricsRecord:
    instance_id: int
    valid: bool
    proximity: Optional[float] = None
    sparsity: Optional[float] = None
    nos: Optional[int] = None
    os_scaled: Optional[float] = None
    sparsity_nos_mean: Optional[float] = None
    wall_time_s: float = 0.0
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return asdict(self)


def metric_validity(records: Sequence[MetricsRecord]) -> float:
    if not records:
        raise ValueError("no records")
    return sum(r.valid for r in records) / len(records)


def metric_proximity(x: TimeSeriesInstance, x_prime: TimeSeriesInstance) -> float:
    """Flattened Euclidean distance."""
    return float(np.linalg.norm(x.values - x_prime.values))


def metric_sparsity(mask: ChangeMask, channels: Optional[int] = None) -> float:
    """Fraction of changed cells on the full L x C grid."""
    mask = _independent(mask, channels)
    return mask.popcount() / mask.positions


def metric_nos(mask: ChangeMask, channels: Optional[int] = None) -> int:
    return count_subsequences(_independent(mask, channels))


def metric_os_scaled(
    x_prime: TimeSeriesInstance, scorer: OutlierScorer, train_errors: np.ndarray
) -> float:
    """Reconstruction error of the counterfactual, min-max scaled to the
    training range; a degenerate range maps everything to 0."""
    err = float(scorer.reconstruction_errors([x_prime])[0])
    lo, hi = float(np.min(train_errors)), float(np.max(train_errors))
    if hi <= lo:
        return 0.0
    return (err - lo) / (hi - lo)


def metric_sparsity_nos_mean(mask: ChangeMask, channels: Optional[int] = None) -> float:
    """Arithmetic mean of sparsity and the run count normalized by the
    same half-grid denominator the contiguity objective uses."""
    mask = _independent(mask, channels)
    nos_norm = count_subsequences(mask) / (mask.positions / 2.0)
    return 0.5 * metric_sparsity(mask) + 0.5 * nos_norm


def _independent(mask: ChangeMask, channels: Optional[int]) -> ChangeMask:
    if mask.kind == INDEPENDENT:
        return mask
    if channels is None:
        raise ValueError("channel count required to broadcast a common mask")
    return as_independent(mask, channels)


def baseline_full_swap(
    x: TimeSeriesInstance, nun: TimeSeriesInstance
) -> tuple[ChangeMask, TimeSeriesInstance]:
    """All-ones mask: the counterfactual is the neighbor itself."""
    mask = ChangeMask(INDEPENDENT, np.ones((x.length, x.channels), dtype=np.uint8))
    return mask, TimeSeriesInstance(nun.values)


def record_for(
    instance_id: int,
    x: TimeSeriesInstance,
    mask: ChangeMask,
    counterfactual: TimeSeriesInstance,
    valid: bool,
    scorer: OutlierScorer,
    train_errors: np.ndarray,
    wall_time_s: float = 0.0,
) -> MetricsRecord:
    """Assemble one record; value metrics stay unset for invalid results."""
    rec = MetricsRecord(instance_id=instance_id, valid=valid, wall_time_s=wall_time_s)
    if valid:
        rec.proximity = metric_proximity(x, counterfactual)
        rec.sparsity = metric_sparsity(mask, x.channels)
        rec.nos = metric_nos(mask, x.channels)
        rec.os_scaled = metric_os_scaled(counterfactual, scorer, train_errors)
        rec.sparsity_nos_mean = metric_sparsity_nos_mean(mask, x.channels)
    return rec


def aggregate_records(records: Sequence[MetricsRecord]) -> dict:
    """Mean per metric over valid records; validity over all of them."""
    if not records:
        return {"n": 0, "n_valid": 0, "validity": None}
    valid = [r for r in records if r.valid]
    agg = {"n": len(records), "n_valid": len(valid), "validity": metric_validity(records)}
    for name in VALUE_METRICS:
        vals = [getattr(r, name) for r in valid if getattr(r, name) is not None]
        agg[name] = float(np.mean(vals)) if vals else None
    agg["wall_time_s"] = float(np.mean([r.wall_time_s for r in records]))
    return agg


def rank_methods(aggregates: dict) -> dict:
    """Order methods per metric (validity descending, value metrics
    ascending) and average the ranks."""
    methods = list(aggregates)
    per_metric: dict = {}
    totals = {m: 0.0 for m in methods}
    counted = {m: 0 for m in methods}
    for metric in ("validity",) + VALUE_METRICS:
        scored = [
            (m, aggregates[m][metric]) for m in methods if aggregates[m].get(metric) is not None
        ]
        if not scored:
            continue
        reverse = metric == "validity"
        scored.sort(key=lambda pair: (-pair[1] if reverse else pair[1], pair[0]))
        per_metric[metric] = [m for m, _ in scored]
        for rank, (m, _) in enumerate(scored, start=1):
            totals[m] += rank
            counted[m] += 1
    average = {
        m: (totals[m] / counted[m] if counted[m] else None) for m in methods
    }
    return {"per_metric": per_metric, "average_rank": average}


def build_report(records_by_method: dict[str, list[MetricsRecord]], seed: int) -> dict:
    aggregates = {m: aggregate_records(recs) for m, recs in records_by_method.items()}
    instance_ids = sorted(
        {r.instance_id for recs in records_by_method.values() for r in recs}
    )
    return {
        "format_version": 1,
        "seed": seed,
        "instance_ids": instance_ids,
        "records": {m: [r.as_dict() for r in recs] for m, recs in records_by_method.items()},
        "aggregates": aggregates,
        "rankings": rank_methods(aggregates),
    }


def sample_instance_ids(split_size: int, n_eval: int, seed: int) -> list[int]:
    """Seeded subsample of at most n_eval distinct instance ids, reported
    in ascending order."""
    n = min(n_eval, split_size)
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(split_size)[:n]
    return sorted(int(i) for i in chosen)


def evaluate_batch(
    test: LabeledDataset,
    train: LabeledDataset,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    cfg: RunConfig = RunConfig(),
    weights: UtilityWeights = UtilityWeights(),
    n_eval: int = 100,
    seed: int = 0,
    methods: Sequence[str] = ("multispace", "full_swap"),
    progress: Optional[Callable[[int, str], None]] = None,
) -> dict:
    """Run each method over a seeded subsample of the test split and
    assemble the report. Per-instance failures are recorded on the record,
    never raised."""
    ids = sample_instance_ids(len(test), n_eval, seed)
    train_errors = scorer.reconstruction_errors(train.values_array())
    records: dict[str, list[MetricsRecord]] = {m: [] for m in methods}
    for instance_id in ids:
        x = TimeSeriesInstance(test.instances[instance_id].values)
        for method in methods:
            if progress is not None:
                progress(instance_id, method)
            start = time.monotonic()
            try:
                mask, cf, valid = _run_method(method, x, train, classifier, scorer, cfg, weights, instance_id)
                rec = record_for(
                    instance_id, x, mask, cf, valid, scorer, train_errors,
                    wall_time_s=time.monotonic() - start,
                )
            except Exception as exc:  # recorded, not fatal
                rec = MetricsRecord(
                    instance_id=instance_id,
                    valid=False,
                    wall_time_s=time.monotonic() - start,
                    error=f"{type(exc).__name__}: {exc}",
                )
            records[method].append(rec)
    return build_report(records, seed)


def _run_method(
    method: str,
    x: TimeSeriesInstance,
    train: LabeledDataset,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    cfg: RunConfig,
    weights: UtilityWeights,
    instance_id: int,
) -> tuple[ChangeMask, TimeSeriesInstance, bool]:
    if method == "multispace":
        front = run_for_instance(x, train, classifier, scorer, cfg, instance_id)
        member = select_by_utility(front, weights)
        return member.mask, member.counterfactual, member.objectives.valid
    if method == "full_swap":
        predicted = int(predict_labels(classifier, [x])[0])
        nun_res = find_nun(
            train, x, predicted, classifier,
            target_class=cfg.nun_target_class, by_label=cfg.nun_by_label,
        )
        mask, cf = baseline_full_swap(x, nun_res.neighbor)
        valid = int(predict_labels(classifier, [cf])[0]) == nun_res.target_class
        return mask, cf, valid
    raise ValueError(f"unknown method {method!r}")
