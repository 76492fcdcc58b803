import logging

import numpy as np
import pytest

from tscf.core import INDEPENDENT, TimeSeriesInstance
from tscf.driver import (
    EmptyFrontError,
    FrontMember,
    NoValidSolutionError,
    ParetoFront,
    RunConfig,
    UtilityWeights,
    run_multispace,
    select_by_utility,
    utility_scores,
)
from tscf.models import fit_linear_scorer, fit_nearest_centroid
from tscf.objectives import ObjectiveVector
from tscf.synth import make_sine_square


SMALL = RunConfig(
    population_size=16,
    phase1_generations=12,
    phase2_generations=6,
    reinit_after=10,
    seed=5,
)


@pytest.fixture(scope="module")
def setup():
    train = make_sine_square(24, length=24, channels=2, seed=1)
    clf = fit_nearest_centroid(train)
    scorer = fit_linear_scorer(train)
    x = TimeSeriesInstance(make_sine_square(2, length=24, channels=2, seed=7).instances[0].values)
    return train, clf, scorer, x


def member(o1, o2, o3, o4):
    from tscf.core import ChangeMask

    return FrontMember(
        mask=ChangeMask(INDEPENDENT, np.ones((2, 1), np.uint8)),
        counterfactual=TimeSeriesInstance(np.zeros((2, 1))),
        objectives=ObjectiveVector(o1, o2, o3, o4, True),
    )


class TestRunMultispace:
    def test_front_nonempty_and_all_valid(self, setup):
        train, clf, scorer, x = setup
        front = run_multispace(x, train, clf, scorer, SMALL)
        assert len(front) >= 1
        assert all(m.objectives.valid for m in front.members)

    def test_front_mutually_nondominated(self, setup):
        train, clf, scorer, x = setup
        front = run_multispace(x, train, clf, scorer, SMALL)
        vals = np.array([m.objectives.values for m in front.members])
        for i in range(len(vals)):
            for j in range(len(vals)):
                if i != j:
                    assert not (np.all(vals[i] >= vals[j]) and np.any(vals[i] > vals[j]))

    def test_masks_deduplicated_and_independent(self, setup):
        train, clf, scorer, x = setup
        front = run_multispace(x, train, clf, scorer, SMALL)
        keys = [m.mask.key() for m in front.members]
        assert len(keys) == len(set(keys))
        assert all(m.mask.kind == INDEPENDENT for m in front.members)

    def test_counterfactual_matches_mask(self, setup):
        train, clf, scorer, x = setup
        front = run_multispace(x, train, clf, scorer, SMALL)
        for m in front.members:
            active = m.mask.bits.astype(bool)
            assert np.array_equal(m.counterfactual.values[~active], x.values[~active])

    def test_seed_determinism(self, setup):
        train, clf, scorer, x = setup
        fronts = [run_multispace(x, train, clf, scorer, SMALL) for _ in range(2)]
        assert {m.mask.key() for m in fronts[0].members} == {
            m.mask.key() for m in fronts[1].members
        }

    def test_degenerate_schedule_returns_nun(self, setup):
        train, clf, scorer, x = setup
        cfg = RunConfig(
            population_size=8,
            phase1_generations=0,
            phase2_generations=0,
            init_percent=100.0,
            reinit_after=0,
            seed=1,
        )
        front = run_multispace(x, train, clf, scorer, cfg)
        assert len(front) == 1
        m = front.members[0]
        assert m.mask.popcount() == m.mask.positions  # sparsity 1.0
        from tscf.core import count_subsequences

        assert count_subsequences(m.mask) == x.channels
        nun = train.instances[front.provenance["nun_index"]]
        assert np.array_equal(m.counterfactual.values, nun.values)

    def test_single_cell_difference_yields_single_cell_mask(self):
        # NUN differs from x in exactly one cell; flipping that cell flips
        # the class under a classifier centered on the two points
        from tscf.core import LabeledDataset

        base = np.zeros((6, 1))
        other = base.copy()
        other[3, 0] = 4.0
        train = LabeledDataset(
            (
                TimeSeriesInstance(base, 0),
                TimeSeriesInstance(base + np.full((6, 1), 0.01), 0),
                TimeSeriesInstance(other, 1),
                TimeSeriesInstance(other + np.full((6, 1), 0.01), 1),
            ),
            class_count=2,
        )
        clf = fit_nearest_centroid(train, temperature=0.25)
        scorer = fit_linear_scorer(train, n_components=1)
        x = TimeSeriesInstance(base)
        cfg = RunConfig(
            population_size=8, phase1_generations=15, phase2_generations=5,
            reinit_after=12, seed=2,
        )
        front = run_multispace(x, train, clf, scorer, cfg)
        popcounts = [m.mask.popcount() for m in front.members]
        assert 1 in popcounts
        sel = select_by_utility(front)
        assert sel.mask.popcount() == 1

    def test_phase2_never_grows_selected_mask(self, setup):
        train, clf, scorer, x = setup
        no_prune = RunConfig(
            population_size=16, phase1_generations=12, phase2_generations=0,
            reinit_after=10, seed=5,
        )
        with_prune = RunConfig(
            population_size=16, phase1_generations=12, phase2_generations=6,
            reinit_after=10, seed=5,
        )
        before = select_by_utility(run_multispace(x, train, clf, scorer, no_prune))
        after = select_by_utility(run_multispace(x, train, clf, scorer, with_prune))
        assert after.mask.popcount() <= before.mask.popcount()


class WallClassifier:
    """Validity wall: class 1 only for an exact match with the stored
    series, so nothing short of the full swap ever validates."""

    n_classes = 2

    def __init__(self, target_values):
        self.target_values = target_values

    def predict_proba(self, batch):
        arr = batch if isinstance(batch, np.ndarray) else np.stack([i.values for i in batch])
        hit = np.all(arr == self.target_values[None, :, :], axis=(1, 2))
        proba = np.zeros((arr.shape[0], 2))
        proba[:, 0] = ~hit
        proba[:, 1] = hit
        return proba


class TestReinitialization:
    def test_escalation_sequence(self, caplog):
        from tscf.core import LabeledDataset
        from conftest import ZeroScorer

        rng = np.random.default_rng(3)
        x_values = rng.normal(size=(16, 1))
        nun_values = x_values + rng.uniform(1.0, 2.0, size=(16, 1))
        train = LabeledDataset(
            (TimeSeriesInstance(x_values, 0), TimeSeriesInstance(nun_values, 1)),
            class_count=2,
        )
        clf = WallClassifier(nun_values)
        cfg = RunConfig(
            population_size=12,
            phase1_generations=8,
            phase2_generations=2,
            init_percent=20.0,
            reinit_increment=20.0,
            reinit_after=5,
            seed=4,
        )
        with caplog.at_level(logging.INFO, logger="tscf.driver"):
            front = run_multispace(TimeSeriesInstance(x_values), train, clf, ZeroScorer(), cfg)
        history = front.provenance["reinit_history"]
        assert history and history[0] == 40.0
        # monotone 20-point escalation, capped at 100
        assert history == sorted(history)
        assert all(b - a == 20.0 for a, b in zip([20.0] + history, history))
        assert history[-1] <= 100.0
        assert front.provenance["init_percent_final"] == history[-1]
        assert all(m.objectives.valid for m in front.members)
        assert sum("reinitializing" in rec.message for rec in caplog.records) == len(history)


class TestUtilitySelection:
    def test_single_member(self):
        front = ParetoFront((member(0.9, -0.1, -0.2, 0.0),), {})
        assert select_by_utility(front) is front.members[0]

    def test_hand_evaluated_difference(self):
        a = member(0.8, -0.1, -0.2, -0.05)
        b = member(0.8, -0.3, -0.1, -0.05)
        front = ParetoFront((a, b), {})
        scores = utility_scores(front)
        # equal o1/o4: difference = 0.3*(-0.1+0.3) + 0.4*(-0.2+0.1) = +0.02
        assert scores[0] - scores[1] == pytest.approx(0.02)
        assert select_by_utility(front) is a

    def test_positive_scaling_invariance(self, rng):
        members = tuple(
            member(*(rng.uniform(0.1, 1.0), -rng.random(), -rng.random(), -rng.random()))
            for _ in range(5)
        )
        front = ParetoFront(members, {})
        base = np.argmax(utility_scores(front))
        scaled = ParetoFront(
            tuple(
                member(*(3.7 * v for v in m.objectives.values)) for m in members
            ),
            {},
        )
        assert np.argmax(utility_scores(scaled)) == base

    def test_tie_keeps_lowest_index(self):
        a = member(0.5, -0.1, -0.1, -0.1)
        b = member(0.5, -0.1, -0.1, -0.1)
        front = ParetoFront((a, b), {})
        assert select_by_utility(front) is a

    def test_empty_front(self):
        with pytest.raises(EmptyFrontError):
            utility_scores(ParetoFront((), {}))


class TestConfigValidation:
    def test_weight_sum_enforced(self):
        with pytest.raises(ValueError):
            UtilityWeights(0.1, 0.3, 0.4, 0.1)

    def test_reinit_bounded_by_phase1(self):
        with pytest.raises(ValueError):
            RunConfig(phase1_generations=10, reinit_after=20)

    def test_odd_population_rejected(self):
        with pytest.raises(ValueError):
            RunConfig(population_size=7)


def test_by_label_full_swap_invalid_raises(rng):
    # ground-truth filter picks a neighbor the classifier refuses to move to
    from tscf.core import LabeledDataset
    from conftest import ZeroScorer

    x_values = np.zeros((8, 1))

    class StubbornClassifier:
        n_classes = 2

        def predict_proba(self, batch):
            arr = batch if isinstance(batch, np.ndarray) else np.stack([i.values for i in batch])
            proba = np.zeros((arr.shape[0], 2))
            proba[:, 0] = 1.0
            return proba

    train = LabeledDataset(
        (
            TimeSeriesInstance(x_values, 0),
            TimeSeriesInstance(np.ones((8, 1)), 1),
        ),
        class_count=2,
    )
    cfg = RunConfig(
        population_size=4, phase1_generations=2, phase2_generations=1,
        reinit_after=1, seed=0, nun_by_label=True,
    )
    with pytest.raises(NoValidSolutionError):
        run_multispace(TimeSeriesInstance(x_values), train, StubbornClassifier(), ZeroScorer(), cfg)
