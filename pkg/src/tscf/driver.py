"""Top-level two-phase optimization: evolve a common mask, broadcast it,
prune per channel, then hand back the valid first front.

Phase 1 restarts with a denser initialization whenever no valid candidate
has appeared after a configured number of generations; the activation
percentage climbs until it saturates at 100%, where the all-ones mask is
valid by construction for a prediction-consistent neighbor. Phase 2 never
restarts: validity persists on its own because the merge is elitist and
valid candidates dominate invalid ones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (
    COMMON,
    ChangeMask,
    LabeledDataset,
    TimeSeriesInstance,
    apply_mask,
    as_independent,
    broadcast_mask,
)
from .genetic import (
    MutationRates,
    Population,
    evaluate_population,
    fast_nondominated_sort,
    init_population,
    optimize_generation,
)
from .models import ClassifierModel, OutlierScorer, predict_labels
from .neighbors import find_nun
from .objectives import ObjectiveConfig, ObjectiveVector

log = logging.getLogger(__name__)


class EmptyFrontError(ValueError):
    pass


class NoValidSolutionError(RuntimeError):
    """The final front contains no valid member. Reachable only when the
    neighbor filter runs on ground-truth labels and even the full swap
    fails to flip the prediction."""


@dataclass(frozen=True)
class RunConfig:
    population_size: int = 100
    phase1_generations: int = 75
    phase2_generations: int = 25
    phase1_rates: MutationRates = field(default_factory=lambda: MutationRates(0.75, 0.75, 0.0))
    phase2_rates: MutationRates = field(default_factory=lambda: MutationRates(0.0, 0.0, 0.75))
    init_percent: float = 20.0
    reinit_increment: float = 20.0
    reinit_after: int = 50
    gamma: float = 0.25
    penalty: float = 100.0
    seed: int = 0
    nun_target_class: Optional[int] = None
    nun_by_label: bool = False

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population size must be even and >= 2")
        if self.phase1_generations < 0 or self.phase2_generations < 0:
            raise ValueError("generation counts must be nonnegative")
        if not 0 < self.init_percent <= 100:
            raise ValueError("init_percent must lie in (0, 100]")
        if self.reinit_increment < 0:
            raise ValueError("reinit_increment must be nonnegative")
        if self.reinit_after > self.phase1_generations:
            raise ValueError("reinit_after cannot exceed phase1_generations")

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(gamma=self.gamma, penalty=self.penalty)


@dataclass(frozen=True)
class UtilityWeights:
    adversarial: float = 0.1
    sparsity: float = 0.3
    subsequences: float = 0.4
    plausibility: float = 0.2

    def __post_init__(self):
        w = self.as_tuple()
        if any(v < 0 for v in w):
            raise ValueError("weights must be nonnegative")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(w)}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.adversarial, self.sparsity, self.subsequences, self.plausibility)


@dataclass(frozen=True)
class FrontMember:
    mask: ChangeMask  # always independent
    counterfactual: TimeSeriesInstance
    objectives: ObjectiveVector


@dataclass(frozen=True)
class ParetoFront:
    """Valid, mutually non-dominated solutions plus run provenance
    (predicted/target class, seed, escalation history)."""

    members: tuple[FrontMember, ...]
    provenance: dict

    def __len__(self) -> int:
        return len(self.members)


def run_multispace(
    x: TimeSeriesInstance,
    train: LabeledDataset,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    cfg: RunConfig = RunConfig(),
    instance_id: Optional[int] = None,
) -> ParetoFront:
    """Explain one instance end to end and return its Pareto front."""
    ocfg = cfg.objective_config()
    rng = np.random.default_rng(cfg.seed)
    length, channels = x.length, x.channels

    predicted = int(predict_labels(classifier, [x])[0])
    nun_res = find_nun(
        train,
        x,
        predicted,
        classifier,
        target_class=cfg.nun_target_class,
        by_label=cfg.nun_by_label,
    )
    nun, y_nun = nun_res.neighbor, nun_res.target_class
    err_x = float(scorer.reconstruction_errors([x])[0])

    def fresh_population(percent: float) -> Population:
        pop = init_population(cfg.population_size, length, channels, COMMON, percent, rng)
        evaluate_population(pop, x, classifier, scorer, nun, y_nun, ocfg, err_x=err_x)
        return pop

    h = cfg.init_percent
    reinit_history: list[float] = []
    pop = fresh_population(h)

    g = 0
    while g < cfg.phase1_generations:
        pop, any_valid = optimize_generation(
            pop, x, classifier, scorer, nun, y_nun, cfg.phase1_rates, ocfg, rng, err_x=err_x
        )
        if not any_valid and g == cfg.reinit_after:
            if h >= 100.0 or cfg.reinit_increment == 0.0:
                # escalation exhausted: at full activation the population
                # started as the full swap and still never validated
                raise NoValidSolutionError(
                    "no valid counterfactual found even at "
                    f"{h:.0f}% activation; the classifier never assigns the "
                    "target class"
                )
            g = 0
            h = min(100.0, h + cfg.reinit_increment)
            reinit_history.append(h)
            log.info(
                "instance %s: no valid candidate after %d generations, "
                "reinitializing at %.0f%% activation",
                instance_id,
                cfg.reinit_after,
                h,
            )
            pop = fresh_population(h)
        else:
            g += 1

    # broadcast every common mask so phase 2 can prune channels independently
    for ind in pop.individuals:
        if ind.mask.kind == COMMON:
            ind.mask = broadcast_mask(ind.mask, channels)

    for _ in range(cfg.phase2_generations):
        pop, _ = optimize_generation(
            pop, x, classifier, scorer, nun, y_nun, cfg.phase2_rates, ocfg, rng, err_x=err_x
        )

    fronts = fast_nondominated_sort(pop.objective_matrix())
    members: list[FrontMember] = []
    seen: set[bytes] = set()
    for idx in fronts[0]:
        ind = pop.individuals[idx]
        if not ind.objectives.valid:
            continue
        mask = as_independent(ind.mask, channels)
        if mask.key() in seen:
            continue
        seen.add(mask.key())
        members.append(FrontMember(mask, apply_mask(x, mask, nun), ind.objectives))
    if not members:
        raise NoValidSolutionError(
            "no valid counterfactual on the final front; the neighbor's actual "
            "prediction does not match the requested target class"
        )

    provenance = {
        "instance_id": instance_id,
        "seed": cfg.seed,
        "predicted_class": predicted,
        "target_class": y_nun,
        "nun_index": nun_res.index,
        "nun_distance": nun_res.distance,
        "init_percent_final": h,
        "reinit_history": list(reinit_history),
    }
    return ParetoFront(tuple(members), provenance)


def run_for_instance(
    x: TimeSeriesInstance,
    train: LabeledDataset,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    cfg: RunConfig,
    instance_id: int,
) -> ParetoFront:
    """Derive the per-instance stream (seed + instance id) so instances can
    be explained in parallel yet reproducibly."""
    return run_multispace(
        x, train, classifier, scorer, replace(cfg, seed=cfg.seed + instance_id), instance_id
    )


def utility_scores(front: ParetoFront, weights: UtilityWeights = UtilityWeights()) -> np.ndarray:
    if not front.members:
        raise EmptyFrontError("front has no members")
    w = np.array(weights.as_tuple())
    return np.array([float(w @ np.array(m.objectives.values)) for m in front.members])


def select_by_utility(
    front: ParetoFront, weights: UtilityWeights = UtilityWeights()
) -> FrontMember:
    """Collapse the front to the member maximizing the weighted objective
    sum; ties keep the lowest member index."""
    scores = utility_scores(front, weights)
    return front.members[int(np.argmax(scores))]
