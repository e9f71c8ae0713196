"""Synthetic single-step environments with known ground-truth rewards.

Two flavors: a continuous 2-D task whose reward is a ring plus two sine
ripples (hard for tiny reward networks to fit globally), and a finite discrete
task small enough that every expectation over it can be enumerated exactly.
"""

from __future__ import annotations

import numpy as np

BOX_HALF_WIDTH = 1.5
RING_RADIUS = 0.7


class ContinuousTask:
    """Single-state task over the action box [-1.5, 1.5]^2."""

    kind = "continuous"
    n_states = 1
    action_dim = 2

    def gold_reward(self, action: np.ndarray) -> np.ndarray:
        """Exact reward; rejects actions outside the box.

        |..norm - 0.7| ripple structure: distance from a ring of radius 0.7
        plus sin(4 pi a0) + sin(6 pi a1).
        """
        a = np.asarray(action, dtype=np.float64)
        if np.any(np.abs(a) > BOX_HALF_WIDTH + 1e-12):
            raise ValueError("action outside the action box")
        return self._formula(a)

    @staticmethod
    def _formula(a: np.ndarray) -> np.ndarray:
        single = a.ndim == 1
        a2 = a.reshape(1, -1) if single else a
        norm = np.sqrt(a2[:, 0] ** 2 + a2[:, 1] ** 2)
        r = np.abs(norm - RING_RADIUS) + np.sin(4.0 * np.pi * a2[:, 0]) + np.sin(6.0 * np.pi * a2[:, 1])
        return float(r[0]) if single else r

    def gold_score(self, action: np.ndarray) -> np.ndarray:
        """Reward of the action clamped to the box.

        Policies have unbounded support; anything sampled outside the box is
        scored as if clipped back onto it.
        """
        a = np.asarray(action, dtype=np.float64)
        return self._formula(np.clip(a, -BOX_HALF_WIDTH, BOX_HALF_WIDTH))

    def sample_state(self, rng: np.random.Generator, n: int | None = None):
        if n is None:
            return 0
        return np.zeros(n, dtype=np.int64)

    def state_features(self, states) -> np.ndarray:
        states = np.atleast_1d(np.asarray(states))
        return np.ones((states.shape[0], 1), dtype=np.float64)


class DiscreteTask:
    """Finite task with tabular gold rewards and a rank-deficient feature map.

    The feature map deliberately has fewer dimensions than there are actions,
    so no linear reward model over it can represent the gold table exactly.
    """

    kind = "discrete"

    def __init__(
        self,
        seed: int,
        gold_table: np.ndarray,
        state_probs: np.ndarray,
        features: np.ndarray,
    ):
        gold_table = np.asarray(gold_table, dtype=np.float64)
        state_probs = np.asarray(state_probs, dtype=np.float64)
        features = np.asarray(features, dtype=np.float64)
        if gold_table.ndim != 2:
            raise ValueError("gold table must be [state x action]")
        if state_probs.shape != (gold_table.shape[0],):
            raise ValueError("state_probs length must match number of states")
        if abs(state_probs.sum() - 1.0) > 1e-12 or np.any(state_probs < 0):
            raise ValueError("state_probs must be a probability vector")
        if features.shape[0] != gold_table.shape[1]:
            raise ValueError("feature rows must match number of actions")
        self.seed = seed
        self.gold_table = gold_table
        self.state_probs = state_probs
        self.features = features

    @property
    def n_states(self) -> int:
        return self.gold_table.shape[0]

    @property
    def n_actions(self) -> int:
        return self.gold_table.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def gold_reward(self, state, action) -> np.ndarray:
        s = np.asarray(state)
        a = np.asarray(action)
        if np.any(s < 0) or np.any(s >= self.n_states):
            raise ValueError("state index out of range")
        if np.any(a < 0) or np.any(a >= self.n_actions):
            raise ValueError("action index out of range")
        return self.gold_table[s, a]

    # Alias so both tasks expose the same scoring surface to callers.
    def gold_score(self, state, action) -> np.ndarray:
        return self.gold_reward(state, action)

    def sample_state(self, rng: np.random.Generator, n: int | None = None):
        if n is None:
            return int(rng.choice(self.n_states, p=self.state_probs))
        return rng.choice(self.n_states, size=n, p=self.state_probs)

    def state_features(self, states) -> np.ndarray:
        states = np.atleast_1d(np.asarray(states, dtype=np.int64))
        out = np.zeros((states.shape[0], self.n_states), dtype=np.float64)
        out[np.arange(states.shape[0]), states] = 1.0
        return out

    def save(self, path) -> None:
        lines = [
            "discrete-task v1",
            f"seed {self.seed}",
            f"n_states {self.n_states}",
            f"n_actions {self.n_actions}",
            f"feature_dim {self.feature_dim}",
            "state_probs " + ",".join(repr(float(p)) for p in self.state_probs),
        ]
        for s in range(self.n_states):
            lines.append("gold " + ",".join(repr(float(v)) for v in self.gold_table[s]))
        for a in range(self.n_actions):
            lines.append("phi " + ",".join(repr(float(v)) for v in self.features[a]))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DiscreteTask":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != "discrete-task v1":
            raise ValueError(f"{path}: not a discrete task file")
        fields = dict(line.split(" ", 1) for line in lines[1:6])
        n_states = int(fields["n_states"])
        n_actions = int(fields["n_actions"])
        probs = np.array([float(v) for v in fields["state_probs"].split(",")])
        gold = np.array(
            [[float(v) for v in line.split(" ", 1)[1].split(",")] for line in lines[6 : 6 + n_states]]
        )
        phi = np.array(
            [[float(v) for v in line.split(" ", 1)[1].split(",")] for line in lines[6 + n_states :]]
        )
        if phi.shape[0] != n_actions:
            raise ValueError(f"{path}: truncated feature block")
        return cls(int(fields["seed"]), gold, probs, phi)


def make_discrete_task(
    seed: int, n_states: int = 1, n_actions: int = 16, feature_dim: int = 3
) -> DiscreteTask:
    """Build a seeded random discrete task.

    Gold rewards are i.i.d. standard normal; action features are Gaussian with
    full column rank; feature_dim must stay below n_actions so the linear
    hypothesis class is misspecified.
    """
    if feature_dim >= n_actions:
        raise ValueError("feature_dim must be smaller than n_actions")
    rng = np.random.default_rng(seed)
    gold = rng.standard_normal((n_states, n_actions))
    probs = rng.dirichlet(np.ones(n_states)) if n_states > 1 else np.ones(1)
    features = rng.standard_normal((n_actions, feature_dim))
    if np.linalg.matrix_rank(features) != feature_dim:
        raise ValueError("degenerate feature draw (rank-deficient columns)")
    return DiscreteTask(seed, gold, probs, features)
