import math

import numpy as np
import pytest

from ocrm.tasks import ContinuousTask, DiscreteTask, make_discrete_task


def reference_gold(a0: float, a1: float) -> float:
    """Independent scalar re-implementation of the continuous reward formula."""
    return (
        abs(math.sqrt(a0 * a0 + a1 * a1) - 0.7)
        + math.sin(4.0 * math.pi * a0)
        + math.sin(6.0 * math.pi * a1)
    )


class TestContinuousTask:
    def test_origin_value(self):
        assert ContinuousTask().gold_reward(np.array([0.0, 0.0])) == pytest.approx(0.7)

    def test_sine_zero_point(self):
        assert ContinuousTask().gold_reward(np.array([0.25, 0.0])) == pytest.approx(0.45)

    def test_hand_evaluated_point(self):
        # |0.2795... - 0.7| + 1 - 1
        got = ContinuousTask().gold_reward(np.array([0.125, 0.25]))
        assert got == pytest.approx(abs(math.hypot(0.125, 0.25) - 0.7), abs=1e-12)
        assert got == pytest.approx(0.4205, abs=5e-4)

    def test_out_of_box_action_rejected(self):
        with pytest.raises(ValueError, match="box"):
            ContinuousTask().gold_reward(np.array([1.6, 0.0]))

    def test_gold_score_clamps_before_scoring(self):
        task = ContinuousTask()
        far = np.array([2.7, -9.0])
        assert task.gold_score(far) == pytest.approx(
            task.gold_reward(np.array([1.5, -1.5]))
        )

    def test_matches_independent_formula_at_random_points(self):
        task = ContinuousTask()
        rng = np.random.default_rng(11)
        pts = rng.uniform(-1.5, 1.5, size=(1000, 2))
        batch = task.gold_reward(pts)
        for (a0, a1), got in zip(pts, batch):
            assert got == reference_gold(a0, a1)

    def test_batch_and_scalar_agree(self):
        task = ContinuousTask()
        pts = np.array([[0.1, 0.2], [-1.0, 1.0]])
        batch = task.gold_reward(pts)
        for p, v in zip(pts, batch):
            assert task.gold_reward(p) == v


class TestDiscreteTask:
    def test_zero_table_scores_zero(self):
        task = DiscreteTask(0, np.zeros((2, 4)), np.array([0.5, 0.5]), np.eye(4, 2))
        assert task.gold_reward(1, 3) == 0.0

    def test_seeded_lookup(self):
        task = make_discrete_task(42, n_states=2, n_actions=8, feature_dim=3)
        assert task.gold_reward(0, 0) == task.gold_table[0, 0]

    def test_argmax_matches_linear_scan(self):
        task = make_discrete_task(3, n_states=3, n_actions=12, feature_dim=4)
        for s in range(task.n_states):
            best, best_val = 0, -np.inf
            for a in range(task.n_actions):
                v = task.gold_reward(s, a)
                if v > best_val:
                    best, best_val = a, v
            assert best == int(np.argmax(task.gold_table[s]))

    def test_same_seed_gives_identical_tasks(self):
        t1 = make_discrete_task(9, 2, 16, 3)
        t2 = make_discrete_task(9, 2, 16, 3)
        np.testing.assert_array_equal(t1.gold_table, t2.gold_table)
        np.testing.assert_array_equal(t1.features, t2.features)
        np.testing.assert_array_equal(t1.state_probs, t2.state_probs)

    def test_feature_matrix_has_full_column_rank(self):
        task = make_discrete_task(5, 1, 8, 2)
        assert np.linalg.matrix_rank(task.features) == 2

    def test_misspecification_requirement_enforced(self):
        with pytest.raises(ValueError, match="feature_dim"):
            make_discrete_task(0, 1, 8, 8)

    def test_state_probs_sum_to_one(self):
        for seed in range(20):
            task = make_discrete_task(seed, n_states=4, n_actions=8, feature_dim=2)
            assert abs(task.state_probs.sum() - 1.0) <= 1e-12

    def test_out_of_range_indices_rejected(self):
        task = make_discrete_task(1, 2, 8, 3)
        with pytest.raises(ValueError):
            task.gold_reward(2, 0)
        with pytest.raises(ValueError):
            task.gold_reward(0, 8)

    def test_save_load_roundtrip(self, tmp_path):
        task = make_discrete_task(77, 3, 10, 4)
        path = tmp_path / "task.txt"
        task.save(path)
        loaded = DiscreteTask.load(path)
        assert loaded.seed == 77
        np.testing.assert_array_equal(loaded.gold_table, task.gold_table)
        np.testing.assert_array_equal(loaded.features, task.features)
        np.testing.assert_array_equal(loaded.state_probs, task.state_probs)

    def test_state_features_are_one_hot(self):
        task = make_discrete_task(1, 3, 8, 2)
        feats = task.state_features(np.array([0, 2]))
        np.testing.assert_array_equal(feats, [[1, 0, 0], [0, 0, 1]])
