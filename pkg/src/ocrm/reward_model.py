"""Pairwise-preference reward modeling.

The model is a small MLP scoring (state features, action); training minimizes
the logistic ranking loss -log sigmoid(margin) over winner/loser pairs,
optionally with a non-negative weight per row. Accuracy is sign agreement
with the gold reward on freshly sampled action pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import AdamW, Mlp, load_checkpoint, save_checkpoint, sgd_step
from .preference import PreferenceDataset, PreferencePair


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), overflow-safe for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class RewardModel:
    """Scalar score net over encoded (state, action) inputs."""

    def __init__(self, net: Mlp, encoder, kind: str):
        self.net = net
        self._encode = encoder
        self.kind = kind

    @classmethod
    def for_continuous(cls, rng: np.random.Generator, hidden: int = 4) -> "RewardModel":
        """Didactic architecture: actions in, one tanh hidden layer of 4 units."""
        net = Mlp([2, hidden, 1], ["tanh", "identity"], rng)
        return cls(net, lambda states, actions: np.asarray(actions, dtype=np.float64).reshape(-1, 2), "continuous")

    @classmethod
    def for_discrete(cls, task, rng: np.random.Generator, hidden: int = 8) -> "RewardModel":
        n_s, n_a = task.n_states, task.n_actions

        def encode(states, actions):
            s = np.atleast_1d(np.asarray(states, dtype=np.int64))
            a = np.atleast_1d(np.asarray(actions, dtype=np.int64))
            out = np.zeros((s.shape[0], n_s + n_a), dtype=np.float64)
            out[np.arange(s.shape[0]), s] = 1.0
            out[np.arange(s.shape[0]), n_s + a] = 1.0
            return out

        net = Mlp([n_s + n_a, hidden, 1], ["tanh", "identity"], rng)
        return cls(net, encode, "discrete")

    def encode(self, states, actions) -> np.ndarray:
        return self._encode(states, actions)

    def score(self, states, actions) -> np.ndarray:
        """Vector of scalar rewards for a batch of (state, action) rows."""
        x = self.encode(states, actions)
        return self.net.forward(x)[:, 0]

    def score_one(self, state, action) -> float:
        return float(self.score(np.atleast_1d(state), _one_action(action))[0])

    def save(self, path) -> None:
        meta = {
            "kind": "reward-model",
            "task_kind": self.kind,
            "layer_dims": ",".join(str(d) for d in self.net.layer_dims),
            "activations": ",".join(self.net.activations),
        }
        save_checkpoint(path, meta, {"params": self.net.params})


def _one_action(action):
    if np.isscalar(action) or getattr(action, "ndim", 0) == 0:
        return np.atleast_1d(action)
    return np.asarray(action).reshape(1, -1)


def bt_loss(rm: RewardModel, pair: PreferencePair) -> float:
    """Ranking loss of one pair: softplus(-(R(w) - R(l))).

    Equals ln 2 at zero margin and stays finite for arbitrarily bad margins.
    """
    margin = rm.score_one(pair.state, pair.action_w) - rm.score_one(pair.state, pair.action_l)
    return float(softplus(np.asarray(-margin)))


def bt_loss_batch(rm: RewardModel, states, actions_w, actions_l) -> np.ndarray:
    margins = rm.score(states, actions_w) - rm.score(states, actions_l)
    return softplus(-margins)


@dataclass
class RmTrainReport:
    final_loss: float
    epochs: int
    mean_weight: float
    max_weight: float
    ess: float


def train_rm(
    rm: RewardModel,
    ds: PreferenceDataset,
    weights: np.ndarray | None = None,
    epochs: int = 50,
    lr: float = 1e-3,
    batch_size: int = 512,
    rng: np.random.Generator | None = None,
    optimizer: str = "adamw",
    weight_decay: float = 0.0,
) -> RmTrainReport:
    """Minimize the (optionally weighted) mean ranking loss over the dataset.

    ``weights=None`` is identical to all-ones weights. ``batch_size=None``
    runs full-batch steps. The model's optimizer state starts fresh on every
    call; retraining never inherits stale moments.
    """
    n = len(ds)
    if weights is None:
        w = np.ones(n, dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValueError(f"weights must have length {n}")
        if np.any(w < 0):
            raise ValueError("importance weights must be non-negative")
    if rng is None:
        rng = np.random.default_rng(0)

    x_w = rm.encode(ds.states, ds.actions_w)
    x_l = rm.encode(ds.states, ds.actions_l)
    opt = AdamW(rm.net.params.size, lr=lr, weight_decay=weight_decay)
    if batch_size is None or batch_size >= n:
        batch_size = n

    def batch_grad(idx: np.ndarray) -> tuple[float, np.ndarray]:
        sw = rm.net.forward(x_w[idx])[:, 0]
        cache_w = rm.net._cache
        sl = rm.net.forward(x_l[idx])[:, 0]
        margins = sw - sl
        wj = w[idx]
        loss = float((wj * softplus(-margins)).mean())
        # d softplus(-m)/dm = -sigmoid(-m); mean over the batch.
        dm = -(wj * sigmoid(-margins)) / idx.size
        g = rm.net.backward(-dm.reshape(-1, 1))  # loser side uses the live cache
        rm.net._cache = cache_w
        g += rm.net.backward(dm.reshape(-1, 1))
        return loss, g

    final_loss = float("nan")
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, g = batch_grad(idx)
            losses.append(loss * idx.size)
            if optimizer == "adamw":
                rm.net.params = opt.step(rm.net.params, g)
            elif optimizer == "sgd":
                rm.net.params = sgd_step(rm.net.params, g, lr)
            else:
                raise ValueError(f"unknown optimizer {optimizer!r}")
        final_loss = float(np.sum(losses) / n)

    wsum = w.sum()
    ess = float(wsum * wsum / (w * w).sum()) if wsum > 0 else 0.0
    return RmTrainReport(
        final_loss=final_loss,
        epochs=epochs,
        mean_weight=float(w.mean()),
        max_weight=float(w.max()),
        ess=ess,
    )


def rm_accuracy(rm: RewardModel, task, policy, n_pairs: int, rng: np.random.Generator) -> float:
    """Sign agreement between model and gold rankings on policy-sampled pairs.

    Exact model ties are broken uniformly at random. Gold-tied pairs carry no
    ranking information and are excluded from the average; a policy so
    degenerate that every pair ties scores 0.5.
    """
    if n_pairs <= 0:
        raise ValueError("n_pairs must be positive")
    states = task.sample_state(rng, n_pairs)
    a0 = policy.sample(states, rng)
    a1 = policy.sample(states, rng)
    if task.kind == "continuous":
        g0, g1 = task.gold_score(a0), task.gold_score(a1)
    else:
        g0, g1 = task.gold_score(states, a0), task.gold_score(states, a1)
    r0 = rm.score(states, a0)
    r1 = rm.score(states, a1)
    rm_diff = r0 - r1
    model_pref = np.where(rm_diff == 0.0, rng.random(n_pairs) < 0.5, rm_diff > 0.0)
    keep = g0 != g1
    if not np.any(keep):
        return 0.5
    agree = model_pref[keep] == (g0 > g1)[keep]
    return float(agree.mean())
