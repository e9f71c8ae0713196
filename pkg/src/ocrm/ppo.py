"""KL-regularized policy optimization for single-step episodes.

The proximal update maximizes the clipped surrogate over advantages
A = R' - V(s). R' carries the KL constraint as a per-sample penalty on the
reward, beta * (log pi(a|s) - log pi_ref(a|s)), whose expectation over the
policy is exactly beta * KL(pi || pi_ref). The per-sample form matters: a
state-constant penalty would be absorbed entirely by the baseline (and by
advantage whitening) in a single-state task and exert no force on the policy.

A group-baseline variant replaces the learned value function with per-state
Monte-Carlo baselines over several actions sampled at the same state; there
the KL constraint enters as a separate differentiable loss term instead of
through the reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import AdamW, Mlp


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    value_coef: float = 0.5
    beta: float = 0.3
    whiten_advantages: bool = True
    batch_size: int = 256
    policy_lr: float = 5e-4
    value_lr: float = 1e-3

    def __post_init__(self):
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


@dataclass
class RlBatch:
    states: np.ndarray
    actions: np.ndarray
    behavior_logp: np.ndarray
    rm_rewards: np.ndarray
    kl_penalties: np.ndarray
    rewards: np.ndarray
    value_targets: np.ndarray
    advantages: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.behavior_logp)


@dataclass
class GroupedBatch:
    states: np.ndarray          # one state per group
    actions: np.ndarray         # (n_groups, group_size, ...) flattened below
    behavior_logp: np.ndarray   # (n_groups, group_size)
    rm_rewards: np.ndarray
    kl_penalties: np.ndarray    # per group
    rewards: np.ndarray         # (n_groups, group_size)


class ValueFunction:
    """State-value net over the task's state features."""

    def __init__(self, net: Mlp, encoder):
        self.net = net
        self._encode = encoder

    @classmethod
    def for_task(cls, task, rng: np.random.Generator, hidden=(64, 64)) -> "ValueFunction":
        dims = [task.state_features(0).shape[1], *hidden, 1]
        acts = ["relu"] * len(hidden) + ["identity"]
        return cls(Mlp(dims, acts, rng), task.state_features)

    def value(self, states) -> np.ndarray:
        return self.net.forward(self._encode(states))[:, 0]


def regularized_reward(rm_value, kl, beta: float):
    """Model reward with the KL penalty taken off: R' = R - beta * KL."""
    kl = np.asarray(kl, dtype=np.float64)
    if np.any(kl < 0):
        raise ValueError("KL divergence cannot be negative")
    return np.asarray(rm_value, dtype=np.float64) - beta * kl


def kl_per_sample(policy, ref, states) -> np.ndarray:
    """Analytic KL(policy || ref) evaluated at each sample's state."""
    states = np.atleast_1d(np.asarray(states))
    kl = policy.kl_to(ref, states=None)
    if np.isscalar(kl) or np.ndim(kl) == 0:
        return np.full(states.shape[0], float(kl))
    return np.asarray(kl)[states.astype(np.int64)]


def collect_batch(policy, rm, kl_ref, task, n: int, rng: np.random.Generator, beta: float) -> RlBatch:
    """Roll out n on-policy samples scored by the current reward model.

    The stored penalty is the per-sample log-density ratio to the reference,
    scaled by beta; its mean estimates beta * KL(policy || kl_ref).
    """
    if n <= 0:
        raise ValueError("batch size must be positive")
    states = task.sample_state(rng, n)
    actions = policy.sample(states, rng)
    behavior_logp = np.asarray(policy.log_prob(states, actions), dtype=np.float64)
    rm_rewards = np.asarray(rm.score(states, actions), dtype=np.float64)
    ref_logp = np.asarray(kl_ref.log_prob(states, actions), dtype=np.float64)
    penalties = beta * (behavior_logp - ref_logp)
    rewards = rm_rewards - penalties
    return RlBatch(
        states=states,
        actions=actions,
        behavior_logp=behavior_logp,
        rm_rewards=rm_rewards,
        kl_penalties=penalties,
        rewards=rewards,
        value_targets=rewards.copy(),
    )


def compute_advantages(batch: RlBatch, value_fn: ValueFunction | None, whiten: bool = True) -> np.ndarray:
    """A = R' - V(s), optionally whitened across the batch afterwards."""
    v = 0.0 if value_fn is None else value_fn.value(batch.states)
    adv = batch.rewards - v
    if whiten:
        adv = adv - adv.mean()
        std = adv.std()
        if std > 0.0:
            adv = adv / std
    batch.advantages = adv
    return adv


def surrogate_and_grad(policy, states, actions, behavior_logp, advantages, clip_eps):
    """Mean clipped surrogate and its ascent gradient w.r.t. policy params.

    min(rho*A, clip(rho)*A) with rho the density ratio to the behavior
    policy; samples where the clipped branch is strictly active contribute no
    gradient.
    """
    new_logp = policy.log_prob(states, actions)
    ratio = np.exp(new_logp - behavior_logp)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    surr = np.minimum(surr1, surr2)
    if not (np.all(np.isfinite(ratio)) and np.all(np.isfinite(surr))):
        raise RuntimeError(
            "non-finite surrogate "
            f"(max |ratio|={np.max(np.abs(ratio))}, max |adv|={np.max(np.abs(advantages))})"
        )
    active = surr2 >= surr1  # plain branch selected (ties go to the plain branch)
    coeffs = np.where(active, ratio * advantages, 0.0) / len(ratio)
    grad = policy.logprob_weighted_grad(states, actions, coeffs)
    clip_frac = float(np.mean(~active))
    return float(surr.mean()), grad, clip_frac


@dataclass
class UpdateStats:
    surrogate: float = 0.0
    clip_frac: float = 0.0
    value_loss: float = 0.0
    n_minibatches: int = 0

    def accumulate(self, surrogate, clip_frac, value_loss):
        self.surrogate += surrogate
        self.clip_frac += clip_frac
        self.value_loss += value_loss
        self.n_minibatches += 1

    def finalize(self) -> "UpdateStats":
        n = max(self.n_minibatches, 1)
        return UpdateStats(self.surrogate / n, self.clip_frac / n, self.value_loss / n, n)


def _kl_loss_grad(policy, kl_ref, states, beta: float) -> np.ndarray:
    """Gradient of beta * mean_j KL(policy || ref)(s_j) w.r.t. policy params."""
    from .policies import CategoricalPolicy

    if isinstance(policy, CategoricalPolicy):
        states = np.atleast_1d(np.asarray(states, dtype=np.int64))
        counts = np.bincount(states, minlength=policy.n_states).astype(np.float64)
        return policy.kl_grad(kl_ref, state_weights=beta * counts / states.shape[0])
    return beta * policy.kl_grad(kl_ref)


def ppo_update(
    policy,
    value_fn: ValueFunction,
    batch: RlBatch,
    cfg: PpoConfig,
    rng: np.random.Generator,
    policy_opt: AdamW,
    value_opt: AdamW,
) -> UpdateStats:
    """Clipped-surrogate policy update plus value regression on one batch.

    The KL constraint already sits inside the batch rewards (per-sample
    penalty), so the policy loss is the plain clipped surrogate.
    """
    if batch.advantages is None:
        compute_advantages(batch, value_fn, cfg.whiten_advantages)
    n = len(batch)
    mb = min(cfg.minibatch_size, n)
    stats = UpdateStats()
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start : start + mb]
            states_mb = batch.states[idx]
            actions_mb = batch.actions[idx]
            surr, ascent_grad, clip_frac = surrogate_and_grad(
                policy, states_mb, actions_mb, batch.behavior_logp[idx],
                batch.advantages[idx], cfg.clip_eps,
            )
            policy.set_params(policy_opt.step(policy.params, -ascent_grad))

            v = value_fn.value(states_mb)
            err = v - batch.value_targets[idx]
            value_loss = cfg.value_coef * float((err * err).mean())
            upstream = cfg.value_coef * 2.0 * err / idx.size
            vgrad = value_fn.net.backward(upstream.reshape(-1, 1))
            value_fn.net.params = value_opt.step(value_fn.net.params, vgrad)

            stats.accumulate(surr, clip_frac, value_loss)
    return stats.finalize()


def collect_grouped_batch(
    policy, rm, kl_ref, task, n_groups: int, group_size: int, rng: np.random.Generator, beta: float
) -> GroupedBatch:
    """Sample group_size actions at each of n_groups states."""
    if group_size < 2:
        raise ValueError("group baselines need at least 2 actions per state")
    states = task.sample_state(rng, n_groups)
    flat_states = np.repeat(states, group_size)
    actions = policy.sample(flat_states, rng)
    behavior_logp = policy.log_prob(flat_states, actions).reshape(n_groups, group_size)
    rm_rewards = rm.score(flat_states, actions).reshape(n_groups, group_size)
    kl = kl_per_sample(policy, kl_ref, states)
    rewards = regularized_reward(rm_rewards, kl[:, None], beta)
    action_shape = actions.shape[1:] if getattr(actions, "ndim", 1) > 1 else ()
    return GroupedBatch(
        states=states,
        actions=actions.reshape(n_groups, group_size, *action_shape),
        behavior_logp=behavior_logp,
        rm_rewards=rm_rewards,
        kl_penalties=beta * kl,
        rewards=rewards,
    )


def group_advantages(rewards: np.ndarray) -> np.ndarray:
    """Center and scale rewards within each group (row)."""
    if rewards.ndim != 2 or rewards.shape[1] < 2:
        raise ValueError("group baselines need at least 2 actions per state")
    centered = rewards - rewards.mean(axis=1, keepdims=True)
    std = rewards.std(axis=1, keepdims=True)
    denom = np.where(std > 1e-12, std, 1.0)
    return centered / denom


def grpo_update(
    policy,
    batch: GroupedBatch,
    cfg: PpoConfig,
    rng: np.random.Generator,
    policy_opt: AdamW,
    kl_ref=None,
) -> UpdateStats:
    """Policy update from group-relative advantages; no value network.

    The KL term enters as a separate differentiable loss component rather
    than through the rewards.
    """
    adv = group_advantages(batch.rewards)
    n_groups, group_size = batch.rewards.shape
    flat_states = np.repeat(batch.states, group_size)
    flat_actions = batch.actions.reshape(n_groups * group_size, *batch.actions.shape[2:])
    flat_logp = batch.behavior_logp.ravel()
    flat_adv = adv.ravel()
    n = flat_adv.shape[0]
    mb = min(cfg.minibatch_size, n)
    stats = UpdateStats()
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start : start + mb]
            surr, ascent_grad, clip_frac = surrogate_and_grad(
                policy, flat_states[idx], flat_actions[idx], flat_logp[idx],
                flat_adv[idx], cfg.clip_eps,
            )
            loss_grad = -ascent_grad
            if kl_ref is not None and cfg.beta > 0.0:
                loss_grad = loss_grad + _kl_loss_grad(policy, kl_ref, flat_states[idx], cfg.beta)
            policy.set_params(policy_opt.step(policy.params, loss_grad))
            stats.accumulate(surr, clip_frac, 0.0)
    return stats.finalize()
