"""Iterated reward-model retraining inside the policy-optimization loop.

One run is m iterations of: reweight the fixed preference dataset against the
current policy, train a fresh reward model on the weighted loss, move the KL
reference to the current policy, reset the value network and optimizer state,
then spend k on-policy samples on proximal updates against the new model.

With m=1 the loop degenerates to standard single-reward-model training, which
doubles as the baseline. Ablation variants toggle the three boundary actions
(retrain / reference switch / resets) independently.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .importance import IWConfig, WeightReport, dataset_weights
from .metrics import MetricsRow, evaluate_policy, win_rate, write_metrics_csv
from .nets import AdamW, Mlp
from .policies import CategoricalPolicy, GaussianPolicy
from .ppo import PpoConfig, ValueFunction, collect_batch, compute_advantages, ppo_update
from .preference import PreferenceDataset
from .reward_model import RewardModel, rm_accuracy, train_rm

VARIANTS = ("ppo", "ppo+reset", "ppo+newkl", "ocrm")


@dataclass
class OcrmSchedule:
    m: int = 3
    k: int = 200_000
    iw: IWConfig = field(default_factory=IWConfig)
    reset_value: bool = True
    reset_optimizer: bool = True
    rm_epochs: int = 50
    rm_lr: float = 1e-3
    rm_batch_size: int = 512
    rm_hidden: int = 4
    ppo: PpoConfig = field(default_factory=PpoConfig)
    retrain_rm: bool = True
    switch_kl: bool = True
    eval_pairs: int = 256
    final_eval_n: int = 4096

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.k <= 0:
            raise ValueError("k must be positive")

    @property
    def beta(self) -> float:
        return self.ppo.beta


@dataclass
class RunState:
    policy: object
    value_fn: ValueFunction
    rm: RewardModel | None
    kl_ref: object
    iteration: int
    samples: int
    metrics: list


@dataclass
class RunResult:
    policy: object
    rm: RewardModel
    value_fn: ValueFunction
    metrics: list
    weight_reports: list
    final_eval: dict
    boundary_policies: list
    boundary_rms: list
    boundary_value_inits: list


def init_policy_from(sft, task, rng: np.random.Generator):
    """Trainable policy whose initial distribution equals the sft snapshot.

    Hidden layers start random; the output layer starts at zero weights with
    the sft's statistics in the bias, so densities match the snapshot exactly
    at step zero (which in turn makes the first round of correction weights
    exactly one).
    """
    if task.kind == "continuous":
        net = Mlp([1, 64, 64, 2], ["relu", "relu", "identity"], rng)
        net.zero_output_layer()
        _, b = net.unpack()[-1]
        b[:] = sft.mean()
        return GaussianPolicy(mean_net=net, log_std=sft.log_std.copy())
    net = Mlp([task.n_states, 64, 64, task.n_actions], ["relu", "relu", "identity"], rng)
    net.zero_output_layer()
    table = sft.log_prob_table()
    if not np.allclose(table, table[0]):
        raise ValueError("discrete runs need a state-constant behavior policy")
    _, b = net.unpack()[-1]
    b[:] = table[0] * sft.temperature
    return CategoricalPolicy(net, task.n_states, temperature=sft.temperature)


def _fresh_rm(task, schedule: OcrmSchedule, rng: np.random.Generator) -> RewardModel:
    if task.kind == "continuous":
        return RewardModel.for_continuous(rng, hidden=schedule.rm_hidden)
    return RewardModel.for_discrete(task, rng, hidden=schedule.rm_hidden)


def run_ocrm(
    task,
    sft,
    ds: PreferenceDataset,
    schedule: OcrmSchedule,
    rng: np.random.Generator,
    out_dir: str | None = None,
) -> RunResult:
    """Run the full m-iteration loop and return the final policy and logs."""
    if ds.snapshot_id != sft.fingerprint():
        raise ValueError("dataset was not generated by the given behavior snapshot")
    s_policy, s_value0, s_train, s_eval = rng.spawn(4)
    iter_streams = [rng.spawn(2) for _ in range(schedule.m)]

    policy = init_policy_from(sft, task, s_policy)
    value_fn = ValueFunction.for_task(task, s_value0)
    policy_opt = AdamW(policy.params.size, lr=schedule.ppo.policy_lr)
    value_opt = AdamW(value_fn.net.params.size, lr=schedule.ppo.value_lr)
    sft_ref = sft
    kl_ref = policy.snapshot()
    rm: RewardModel | None = None
    metrics: list[MetricsRow] = []
    weight_reports: list[tuple[int, WeightReport]] = []
    boundary_policies = []
    boundary_rms = []
    boundary_value_inits = [value_fn.net.params.copy()]
    samples = 0

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    for i in range(1, schedule.m + 1):
        rm_stream, value_stream = iter_streams[i - 1]
        current = policy.snapshot()

        if i == 1 or schedule.retrain_rm:
            report = dataset_weights(ds, current, schedule.iw)
            weight_reports.append((i, report))
            rm_init, rm_shuffle = rm_stream.spawn(2)
            rm = _fresh_rm(task, schedule, rm_init)
            train_rm(
                rm, ds, report.weights,
                epochs=schedule.rm_epochs, lr=schedule.rm_lr,
                batch_size=schedule.rm_batch_size, rng=rm_shuffle,
            )

        if i == 1 or schedule.switch_kl:
            kl_ref = current
        if i > 1 and schedule.reset_value:
            value_fn = ValueFunction.for_task(task, value_stream)
            value_opt = AdamW(value_fn.net.params.size, lr=schedule.ppo.value_lr)
            boundary_value_inits.append(value_fn.net.params.copy())
        if i > 1 and schedule.reset_optimizer:
            policy_opt.reset()
            value_opt.reset()

        done = 0
        while done < schedule.k:
            n = min(schedule.ppo.batch_size, schedule.k - done)
            batch = collect_batch(policy, rm, kl_ref, task, n, s_train, schedule.ppo.beta)
            compute_advantages(batch, value_fn, schedule.ppo.whiten_advantages)
            stats = ppo_update(
                policy, value_fn, batch, schedule.ppo, s_train, policy_opt, value_opt
            )
            done += n
            samples += n
            if task.kind == "continuous":
                gold = task.gold_score(batch.actions)
            else:
                gold = task.gold_score(batch.states, batch.actions)
            metrics.append(
                MetricsRow(
                    samples=samples,
                    iteration=i,
                    mean_rm_reward=float(batch.rm_rewards.mean()),
                    mean_gold_reward=float(gold.mean()),
                    kl_to_sft=float(np.mean(np.atleast_1d(policy.kl_to(sft_ref)))),
                    kl_to_ref=float(np.mean(np.atleast_1d(policy.kl_to(kl_ref)))),
                    rm_accuracy=rm_accuracy(rm, task, policy, schedule.eval_pairs, s_eval),
                    win_rate_vs_sft=win_rate(policy, sft_ref, task, schedule.eval_pairs, s_eval),
                    surrogate=stats.surrogate,
                    clip_frac=stats.clip_frac,
                    value_loss=stats.value_loss,
                )
            )

        boundary_policies.append(policy.snapshot())
        boundary_rms.append(rm)
        if out_dir is not None:
            policy.save(os.path.join(out_dir, f"policy_iter{i}.ckpt"))
            rm.save(os.path.join(out_dir, f"rm_iter{i}.ckpt"))
            write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metrics)

    final_eval = evaluate_policy(policy, sft_ref, task, schedule.final_eval_n, s_eval)
    if out_dir is not None:
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), metrics)
        _write_weight_reports(os.path.join(out_dir, "weights-report.csv"), weight_reports)
    return RunResult(
        policy=policy,
        rm=rm,
        value_fn=value_fn,
        metrics=metrics,
        weight_reports=weight_reports,
        final_eval=final_eval,
        boundary_policies=boundary_policies,
        boundary_rms=boundary_rms,
        boundary_value_inits=boundary_value_inits,
    )


def run_ppo_baseline(
    task,
    sft,
    ds: PreferenceDataset,
    total_samples: int,
    schedule: OcrmSchedule,
    rng: np.random.Generator,
    out_dir: str | None = None,
) -> RunResult:
    """Single reward model, fixed KL reference, one long training stretch."""
    base = replace(schedule, m=1, k=total_samples)
    return run_ocrm(task, sft, ds, base, rng, out_dir=out_dir)


def run_ablation(
    variant: str,
    task,
    sft,
    ds: PreferenceDataset,
    schedule: OcrmSchedule,
    rng: np.random.Generator,
    out_dir: str | None = None,
) -> RunResult:
    """Boundary-action ablations sharing the m/k structure of the full loop.

    ppo        keeps the first reward model, reference and optimizers all run;
    ppo+reset  adds only the value/optimizer resets at boundaries;
    ppo+newkl  adds the KL-reference switch on top of the resets;
    ocrm       is the full method.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r} (choose from {VARIANTS})")
    flags = {
        "ppo": dict(retrain_rm=False, switch_kl=False, reset_value=False, reset_optimizer=False),
        "ppo+reset": dict(retrain_rm=False, switch_kl=False, reset_value=True, reset_optimizer=True),
        "ppo+newkl": dict(retrain_rm=False, switch_kl=True, reset_value=True, reset_optimizer=True),
        "ocrm": dict(retrain_rm=True, switch_kl=True, reset_value=True, reset_optimizer=True),
    }[variant]
    return run_ocrm(task, sft, ds, replace(schedule, **flags), rng, out_dir=out_dir)


def _write_weight_reports(path, reports: list[tuple[int, WeightReport]]) -> None:
    lines = ["iteration,mean,max,min,ess"]
    for i, r in reports:
        lines.append(f"{i},{r.mean!r},{r.max!r},{r.min!r},{r.ess!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
