"""NSGA-II machinery over binary change-masks.

Variation is subsequence-based: runs are extended at their boundaries,
shaved at their endpoints, or deleted whole. Each operator re-identifies
runs on the mask it receives, and all random draws happen in a fixed,
documented order so a seeded generator reproduces populations bit for bit:

  * crossover cut points, one per parent pair, pairs in order;
  * per offspring, in offspring order: extension draws (runs in
    (channel, start) order, left boundary before right, draws only for
    in-range boundary cells), then compression draws (first cell then last
    cell per run, one draw for length-1 runs), then one pruning draw per
    run.

Fitness evaluation consumes no randomness, so parallelizing it cannot
perturb determinism.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    COMMON,
    ChangeMask,
    Individual,
    TimeSeriesInstance,
    decompose_mask,
    flatten_bits,
    mask_from_flat,
)
from .models import ClassifierModel, OutlierScorer
from .objectives import ObjectiveConfig, evaluate_masks

Rng = np.random.Generator


class MissingRanksError(RuntimeError):
    """Tournament selection ran before ranks/crowding were assigned."""


@dataclass(frozen=True)
class MutationRates:
    extend: float
    compress: float
    prune: float

    def __post_init__(self):
        for name, p in (("extend", self.extend), ("compress", self.compress), ("prune", self.prune)):
            if not 0 <= p <= 1:
                raise ValueError(f"{name} rate {p} outside [0, 1]")


@dataclass
class Population:
    individuals: list[Individual]
    generation: int = 0

    def __post_init__(self):
        n = len(self.individuals)
        if n < 2 or n % 2:
            raise ValueError(f"population size must be even and >= 2, got {n}")

    def __len__(self) -> int:
        return len(self.individuals)

    def masks(self) -> list[ChangeMask]:
        return [ind.mask for ind in self.individuals]

    def objective_matrix(self) -> np.ndarray:
        return objective_matrix(self.individuals)

    def any_valid(self) -> bool:
        return any(ind.objectives is not None and ind.objectives.valid for ind in self.individuals)


def objective_matrix(individuals: Sequence[Individual]) -> np.ndarray:
    rows = []
    for ind in individuals:
        if ind.objectives is None:
            raise ValueError("individual has no objectives; evaluate first")
        rows.append(ind.objectives.values)
    return np.array(rows, dtype=float)


def init_population(
    n: int, length: int, channels: int, kind: str, init_percent: float, rng: Rng
) -> Population:
    """Each individual activates the round(h% * positions) top-scoring
    positions of an independent uniform draw, so every mask carries the
    same activation count with an unbiased pattern."""
    if not 0 < init_percent <= 100:
        raise ValueError("init_percent must lie in (0, 100]")
    positions = length if kind == COMMON else length * channels
    n_active = int(round(init_percent / 100.0 * positions))
    individuals = []
    for _ in range(n):
        scores = rng.random(positions)
        flat = np.zeros(positions, dtype=np.uint8)
        if n_active:
            top = np.argsort(scores, kind="stable")[positions - n_active :]
            flat[top] = 1
        individuals.append(Individual(mask_from_flat(flat, length, channels, kind)))
    return Population(individuals)


def _writable_bits(mask: ChangeMask) -> np.ndarray:
    return mask.bits.copy()


def _set(bits: np.ndarray, t: int, c: int, kind: str, value: int) -> None:
    if kind == COMMON:
        bits[t] = value
    else:
        bits[t, c] = value


def mutate_extend(mask: ChangeMask, p_ext: float, rng: Rng) -> ChangeMask:
    """Grow each run: the cells just before and just after it (same
    channel, in range) each switch on with probability p_ext."""
    bits = _writable_bits(mask)
    length = mask.length
    for sub in decompose_mask(mask):
        left, right = sub.start - 1, sub.start + sub.length
        if left >= 0 and rng.random() < p_ext:
            _set(bits, left, sub.channel, mask.kind, 1)
        if right < length and rng.random() < p_ext:
            _set(bits, right, sub.channel, mask.kind, 1)
    return ChangeMask(mask.kind, bits)


def mutate_compress(mask: ChangeMask, p_comp: float, rng: Rng) -> ChangeMask:
    """Shave each run: its first and last cells each clear with probability
    p_comp; a length-1 run gets a single removal draw."""
    bits = _writable_bits(mask)
    for sub in decompose_mask(mask):
        first, last = sub.start, sub.start + sub.length - 1
        if rng.random() < p_comp:
            _set(bits, first, sub.channel, mask.kind, 0)
        if first != last and rng.random() < p_comp:
            _set(bits, last, sub.channel, mask.kind, 0)
    return ChangeMask(mask.kind, bits)


def mutate_prune(mask: ChangeMask, p_prune: float, rng: Rng) -> ChangeMask:
    """Delete whole runs, one Bernoulli draw per run in (channel, start)
    order."""
    bits = _writable_bits(mask)
    for sub in decompose_mask(mask):
        if rng.random() < p_prune:
            for t in range(sub.start, sub.start + sub.length):
                _set(bits, t, sub.channel, mask.kind, 0)
    return ChangeMask(mask.kind, bits)


def single_point_crossover(a: ChangeMask, b: ChangeMask, rng: Rng) -> tuple[ChangeMask, ChangeMask]:
    """Swap suffixes at a uniform cut over the channel-major flattening."""
    if a.kind != b.kind or a.bits.shape != b.bits.shape:
        raise ValueError("parents must share kind and dimensions")
    flat_a, flat_b = flatten_bits(a), flatten_bits(b)
    positions = flat_a.size
    cut = int(rng.integers(1, positions))
    child1 = np.concatenate((flat_a[:cut], flat_b[cut:]))
    child2 = np.concatenate((flat_b[:cut], flat_a[cut:]))
    length = a.length
    channels = 1 if a.kind == COMMON else a.bits.shape[1]
    return (
        mask_from_flat(child1, length, channels, a.kind),
        mask_from_flat(child2, length, channels, a.kind),
    )


def fast_nondominated_sort(values: np.ndarray) -> list[list[int]]:
    """Deb's layering under maximization: front 0 holds the non-dominated
    vectors, front k the vectors non-dominated once fronts < k are removed.
    a dominates b iff a >= b everywhere and a > b somewhere."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    ge = (values[:, None, :] >= values[None, :, :]).all(axis=2)
    gt = (values[:, None, :] > values[None, :, :]).any(axis=2)
    dominates = ge & gt

    n_dominators = dominates.sum(axis=0).astype(np.int64)  # dominators of each index
    assigned = np.zeros(n, dtype=bool)
    fronts: list[list[int]] = []
    while not assigned.all():
        current = np.flatnonzero((n_dominators == 0) & ~assigned)
        fronts.append([int(i) for i in current])
        assigned[current] = True
        n_dominators -= dominates[current].sum(axis=0)
    return fronts


def crowding_distance(values: np.ndarray) -> np.ndarray:
    """Deb's density estimate within one front: boundary individuals get
    infinity, interior ones the sum over objectives of the normalized gap
    between their neighbors. Objectives with zero range contribute 0;
    fronts of size <= 2 are all infinite."""
    values = np.asarray(values, dtype=float)
    k, m = values.shape
    if k <= 2:
        return np.full(k, np.inf)
    dist = np.zeros(k)
    for j in range(m):
        order = np.argsort(values[:, j], kind="stable")
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = values[order[-1], j] - values[order[0], j]
        if span <= 0:
            continue
        gaps = (values[order[2:], j] - values[order[:-2], j]) / span
        for pos in range(1, k - 1):
            if not np.isinf(dist[order[pos]]):
                dist[order[pos]] += gaps[pos - 1]
    return dist


def _crowded_better(a: Individual, b: Individual) -> bool:
    """Crowded-comparison: lower rank wins, then larger crowding; a full
    tie keeps the first-drawn contestant."""
    if a.rank != b.rank:
        return a.rank < b.rank
    return a.crowding >= b.crowding


def tournament_select(pop: Population, rng: Rng) -> list[Individual]:
    """N binary tournaments between distinct uniformly drawn contestants."""
    for ind in pop.individuals:
        if ind.rank is None or ind.crowding is None:
            raise MissingRanksError("run non-dominated sorting before selection")
    n = len(pop)
    parents = []
    for _ in range(n):
        i, j = rng.choice(n, size=2, replace=False)
        a, b = pop.individuals[int(i)], pop.individuals[int(j)]
        parents.append(a if _crowded_better(a, b) else b)
    return parents


def assign_ranks(individuals: Sequence[Individual]) -> list[list[int]]:
    """Sort, then write rank and crowding back onto each individual."""
    values = objective_matrix(individuals)
    fronts = fast_nondominated_sort(values)
    for rank, front in enumerate(fronts):
        dists = crowding_distance(values[front])
        for pos, idx in enumerate(front):
            individuals[idx].rank = rank
            individuals[idx].crowding = float(dists[pos])
    return fronts


def evaluate_population(
    pop: Population,
    x: TimeSeriesInstance,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    nun: TimeSeriesInstance,
    y_nun: int,
    cfg: ObjectiveConfig,
    err_x: float | None = None,
) -> None:
    """Fill in objectives, ranks and crowding for a fresh population."""
    vectors = evaluate_masks(x, pop.masks(), nun, y_nun, classifier, scorer, cfg, err_x=err_x)
    for ind, vec in zip(pop.individuals, vectors):
        ind.objectives = vec
    assign_ranks(pop.individuals)


def optimize_generation(
    pop: Population,
    x: TimeSeriesInstance,
    classifier: ClassifierModel,
    scorer: OutlierScorer,
    nun: TimeSeriesInstance,
    y_nun: int,
    rates: MutationRates,
    cfg: ObjectiveConfig,
    rng: Rng,
    err_x: float | None = None,
) -> tuple[Population, bool]:
    """One elitist generation: selection, crossover, the three mutations in
    order, offspring evaluation, then crowding-based truncation of the
    merged 2N pool back to N (whole fronts first; the split front admits
    by descending crowding, ties to the lower merged index)."""
    n = len(pop)
    parents = tournament_select(pop, rng)

    child_masks: list[ChangeMask] = []
    for i in range(0, n, 2):
        child_masks.extend(single_point_crossover(parents[i].mask, parents[i + 1].mask, rng))
    for i, mask in enumerate(child_masks):
        mask = mutate_extend(mask, rates.extend, rng)
        mask = mutate_compress(mask, rates.compress, rng)
        child_masks[i] = mutate_prune(mask, rates.prune, rng)

    vectors = evaluate_masks(x, child_masks, nun, y_nun, classifier, scorer, cfg, err_x=err_x)
    offspring = [Individual(mask=m, objectives=v) for m, v in zip(child_masks, vectors)]

    merged = list(pop.individuals) + offspring
    fronts = assign_ranks(merged)

    chosen: list[Individual] = []
    for front in fronts:
        members = [merged[i] for i in front]
        if len(chosen) + len(members) <= n:
            chosen.extend(members)
        else:
            need = n - len(chosen)
            order = sorted(range(len(front)), key=lambda p: (-members[p].crowding, front[p]))
            chosen.extend(members[p] for p in order[:need])
        if len(chosen) == n:
            break

    new_pop = Population(chosen, generation=pop.generation + 1)
    return new_pop, new_pop.any_valid()
