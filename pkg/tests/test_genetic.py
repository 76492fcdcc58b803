import numpy as np
import pytest

from tscf.core import (
    COMMON,
    INDEPENDENT,
    ChangeMask,
    Individual,
    TimeSeriesInstance,
    decompose_mask,
)
from tscf.genetic import (
    MissingRanksError,
    MutationRates,
    Population,
    assign_ranks,
    crowding_distance,
    evaluate_population,
    fast_nondominated_sort,
    init_population,
    mutate_compress,
    mutate_extend,
    mutate_prune,
    optimize_generation,
    single_point_crossover,
    tournament_select,
)
from tscf.objectives import ObjectiveConfig, ObjectiveVector
from conftest import StubClassifier, ZeroScorer, random_mask


def bits(text):
    return np.array([int(ch) for ch in text], dtype=np.uint8)


def brute_force_fronts(values):
    """Repeatedly peel the non-dominated set via pairwise comparison."""
    values = np.asarray(values, dtype=float)
    remaining = list(range(values.shape[0]))
    fronts = []
    while remaining:
        front = []
        for i in remaining:
            dominated = False
            for j in remaining:
                if i == j:
                    continue
                if np.all(values[j] >= values[i]) and np.any(values[j] > values[i]):
                    dominated = True
                    break
            if not dominated:
                front.append(i)
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


class TestInitPopulation:
    def test_full_activation(self, rng):
        pop = init_population(10, 12, 1, COMMON, 100.0, rng)
        assert all(ind.mask.popcount() == 12 for ind in pop.individuals)

    def test_exact_count(self, rng):
        pop = init_population(50, 10, 1, COMMON, 20.0, rng)
        assert all(ind.mask.popcount() == 2 for ind in pop.individuals)

    def test_independent_count(self, rng):
        pop = init_population(20, 10, 4, INDEPENDENT, 25.0, rng)
        assert all(ind.mask.popcount() == 10 for ind in pop.individuals)

    def test_position_uniformity(self, rng):
        # h=20%, L=5 -> one active bit; over 10k draws each position gets
        # about 2000 hits, within 3 sigma of binomial(10000, 0.2)
        counts = np.zeros(5)
        pop_size = 10
        for _ in range(1000):
            pop = init_population(pop_size, 5, 1, COMMON, 20.0, rng)
            for ind in pop.individuals:
                counts += ind.mask.bits
        sigma = np.sqrt(10000 * 0.2 * 0.8)
        assert np.all(np.abs(counts - 2000) <= 3 * sigma)


class TestMutations:
    def test_extend_identity_at_zero(self, rng):
        m = random_mask(rng)
        assert mutate_extend(m, 0.0, rng) == m

    def test_extend_deterministic_growth(self, rng):
        m = ChangeMask(COMMON, bits("00110000"))
        out = mutate_extend(m, 1.0, rng)
        assert np.array_equal(out.bits, bits("01111000"))

    def test_extend_boundary_rule(self, rng):
        out = mutate_extend(ChangeMask(COMMON, bits("1100")), 1.0, rng)
        assert np.array_equal(out.bits, bits("1110"))

    def test_compress_identity_at_zero(self, rng):
        m = random_mask(rng)
        assert mutate_compress(m, 0.0, rng) == m

    def test_compress_removes_short_run(self, rng):
        out = mutate_compress(ChangeMask(COMMON, bits("00110000")), 1.0, rng)
        assert out.popcount() == 0

    def test_compress_endpoints_only(self, rng):
        out = mutate_compress(ChangeMask(COMMON, bits("0111110")), 1.0, rng)
        assert np.array_equal(out.bits, bits("0011100"))

    def test_prune_all(self, rng):
        m = random_mask(rng)
        assert mutate_prune(m, 1.0, rng).popcount() == 0

    def test_prune_identity_at_zero(self, rng):
        m = random_mask(rng)
        assert mutate_prune(m, 0.0, rng) == m

    def test_prune_per_run_semantics(self):
        # force draw sequence (hit, miss) over the two runs of 1101
        class FakeRng:
            def __init__(self, draws):
                self.draws = iter(draws)

            def random(self):
                return next(self.draws)

        out = mutate_prune(ChangeMask(COMMON, bits("1101")), 0.5, FakeRng([0.1, 0.9]))
        assert np.array_equal(out.bits, bits("0001"))

    def test_extend_locality(self, rng):
        # flipped cells are only 0-cells adjacent to a run, same channel
        for _ in range(500):
            m = random_mask(rng)
            out = mutate_extend(m, 0.6, rng)
            diff = np.flatnonzero(out.bits.astype(int) ^ m.bits.astype(int))
            allowed = set()
            for sub in decompose_mask(m):
                for t in (sub.start - 1, sub.start + sub.length):
                    if 0 <= t < m.length:
                        if m.kind == COMMON:
                            allowed.add(t)
                        else:
                            allowed.add(t * m.bits.shape[1] + sub.channel)
            assert set(diff.tolist()) <= allowed
            assert np.all(out.bits.astype(int) - m.bits.astype(int) >= 0)

    def test_compress_locality(self, rng):
        for _ in range(500):
            m = random_mask(rng)
            out = mutate_compress(m, 0.6, rng)
            diff = np.flatnonzero(out.bits.astype(int) ^ m.bits.astype(int))
            allowed = set()
            for sub in decompose_mask(m):
                for t in (sub.start, sub.start + sub.length - 1):
                    if m.kind == COMMON:
                        allowed.add(t)
                    else:
                        allowed.add(t * m.bits.shape[1] + sub.channel)
            assert set(diff.tolist()) <= allowed
            assert np.all(out.bits.astype(int) - m.bits.astype(int) <= 0)

    def test_prune_locality(self, rng):
        # the removed set is a union of whole runs
        for _ in range(500):
            m = random_mask(rng)
            out = mutate_prune(m, 0.5, rng)
            removed = m.bits.astype(int) - out.bits.astype(int)
            assert removed.min() >= 0
            runs = decompose_mask(m)
            for sub in runs:
                if m.kind == COMMON:
                    segment = removed[sub.start : sub.start + sub.length]
                else:
                    segment = removed[sub.start : sub.start + sub.length, sub.channel]
                assert segment.min() == segment.max()  # all kept or all removed


class TestCrossover:
    def test_equal_parents_equal_children(self, rng):
        m = random_mask(rng)
        c1, c2 = single_point_crossover(m, m, rng)
        assert c1 == m and c2 == m

    def test_suffix_swap(self):
        class FakeRng:
            def integers(self, lo, hi):
                return 2

        a, b = ChangeMask(COMMON, bits("0000")), ChangeMask(COMMON, bits("1111"))
        c1, c2 = single_point_crossover(a, b, FakeRng())
        assert np.array_equal(c1.bits, bits("0011"))
        assert np.array_equal(c2.bits, bits("1100"))

    def test_bit_conservation(self, rng):
        for _ in range(200):
            kind = COMMON if rng.random() < 0.5 else INDEPENDENT
            a = random_mask(rng, length=16, channels=3, kind=kind)
            b = random_mask(rng, length=16, channels=3, kind=kind)
            c1, c2 = single_point_crossover(a, b, rng)
            assert c1.popcount() + c2.popcount() == a.popcount() + b.popcount()


class TestSorting:
    def test_projection_example(self):
        fronts = fast_nondominated_sort(np.array([[1, 1], [0, 2], [2, 0], [0, 0]], float))
        assert fronts == [[0, 1, 2], [3]]

    def test_identical_vectors_single_front(self):
        fronts = fast_nondominated_sort(np.tile([1.0, 2.0, 3.0, 4.0], (5, 1)))
        assert fronts == [[0, 1, 2, 3, 4]]

    def test_chain(self):
        fronts = fast_nondominated_sort(np.array([[3, 3], [2, 2], [1, 1]], float))
        assert fronts == [[0], [1], [2]]

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(500):
            n = int(rng.integers(2, 33))
            values = rng.integers(0, 5, size=(n, 4)).astype(float)  # ints force ties
            assert fast_nondominated_sort(values) == brute_force_fronts(values)


class TestCrowding:
    def test_singleton(self):
        assert np.isinf(crowding_distance(np.array([[1.0, 2.0]]))).all()

    def test_hand_computed_middle(self):
        d = crowding_distance(np.array([[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]]))
        assert np.isinf(d[0]) and np.isinf(d[2])
        assert d[1] == pytest.approx((2 - 0) / 2 + (2 - 0) / 2)

    def test_identical_front(self):
        d = crowding_distance(np.tile([1.0, 1.0], (4, 1)))
        assert np.isinf(d[0]) and np.isinf(d[-1])
        assert d[1] == 0.0 and d[2] == 0.0

    def test_pair_is_infinite(self):
        assert np.isinf(crowding_distance(np.array([[0.0, 1.0], [1.0, 0.0]]))).all()


def ranked_population(vectors, masks=None, rng=None):
    individuals = []
    for i, vals in enumerate(vectors):
        mask = masks[i] if masks else ChangeMask(COMMON, bits("0101"))
        individuals.append(
            Individual(mask=mask, objectives=ObjectiveVector(*vals, True))
        )
    assign_ranks(individuals)
    return Population(individuals)


class TestTournament:
    def test_lower_rank_wins(self):
        pop = ranked_population([(3, 3, 3, 3), (1, 1, 1, 1)])

        class FakeRng:
            def choice(self, n, size, replace):
                return np.array([1, 0])

        winner = tournament_select(pop, FakeRng())[0]
        assert winner.rank == 0

    def test_crowding_breaks_rank_tie(self):
        # four mutually non-dominated points: boundaries get inf crowding
        pop = ranked_population([(0, 3, 0, 0), (1, 2, 0, 0), (2, 1, 0, 0), (3, 0, 0, 0)])

        class FakeRng:
            def choice(self, n, size, replace):
                return np.array([1, 0])  # interior vs boundary

        winner = tournament_select(pop, FakeRng())[0]
        assert np.isinf(winner.crowding)

    def test_full_tie_keeps_first_drawn(self):
        pop = ranked_population([(1, 1, 1, 1), (1, 1, 1, 1)])

        class FakeRng:
            def choice(self, n, size, replace):
                return np.array([1, 0])

        winner = tournament_select(pop, FakeRng())[0]
        assert winner is pop.individuals[1]

    def test_missing_ranks(self, rng):
        pop = Population([Individual(random_mask(rng, kind=COMMON)) for _ in range(4)])
        with pytest.raises(MissingRanksError):
            tournament_select(pop, rng)


def make_ga_setup(rng, n=8, length=12):
    x = TimeSeriesInstance(np.zeros((length, 1)))
    nun = TimeSeriesInstance(np.ones((length, 1)))
    clf = StubClassifier(always=1)
    scorer = ZeroScorer()
    cfg = ObjectiveConfig()
    pop = init_population(n, length, 1, COMMON, 40.0, rng)
    evaluate_population(pop, x, clf, scorer, nun, 1, cfg)
    return pop, x, clf, scorer, nun, cfg


class TestOptimizeGeneration:
    def test_elitism_keeps_front0_undominated(self, rng):
        pop, x, clf, scorer, nun, cfg = make_ga_setup(rng)
        old_values = pop.objective_matrix()
        new_pop, _ = optimize_generation(
            pop, x, clf, scorer, nun, 1, MutationRates(0, 0, 0), cfg, rng
        )
        for ind in new_pop.individuals:
            if ind.rank != 0:
                continue
            vals = np.array(ind.objectives.values)
            for row in old_values:
                assert not (np.all(row >= vals) and np.any(row > vals))

    def test_prune_only_offspring_shrink(self, rng):
        # with rates (0, 0, 1) every offspring mask is a sub-union of the
        # crossover of its parents, so the merged pool never gains cells
        pop, x, clf, scorer, nun, cfg = make_ga_setup(rng)
        max_pop_before = max(ind.mask.popcount() for ind in pop.individuals)
        new_pop, _ = optimize_generation(
            pop, x, clf, scorer, nun, 1, MutationRates(0, 0, 1.0), cfg, rng
        )
        # full pruning removes every run from every offspring
        offspring = [i for i in new_pop.individuals if i.mask.popcount() == 0]
        assert offspring or max(
            ind.mask.popcount() for ind in new_pop.individuals
        ) <= max_pop_before

    def test_fixed_seed_reproduces_population(self):
        outs = []
        for _ in range(2):
            rng = np.random.default_rng(77)
            pop, x, clf, scorer, nun, cfg = make_ga_setup(rng)
            new_pop, _ = optimize_generation(
                pop, x, clf, scorer, nun, 1, MutationRates(0.5, 0.5, 0.2), cfg, rng
            )
            outs.append([ind.mask.key() for ind in new_pop.individuals])
        assert outs[0] == outs[1]

    def test_population_size_and_any_valid(self, rng):
        pop, x, clf, scorer, nun, cfg = make_ga_setup(rng, n=10)
        new_pop, any_valid = optimize_generation(
            pop, x, clf, scorer, nun, 1, MutationRates(0.3, 0.3, 0.1), cfg, rng
        )
        assert len(new_pop) == 10
        assert any_valid  # stub classifier validates everything
        assert new_pop.generation == pop.generation + 1

    def test_population_must_be_even(self, rng):
        with pytest.raises(ValueError):
            Population([Individual(random_mask(rng))] * 3)
