"""Run metrics: per-update rows, CSV persistence and policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


@dataclass
class MetricsRow:
    samples: int
    iteration: int
    mean_rm_reward: float
    mean_gold_reward: float
    kl_to_sft: float
    kl_to_ref: float
    rm_accuracy: float
    win_rate_vs_sft: float
    surrogate: float
    clip_frac: float
    value_loss: float


METRICS_COLUMNS = [f.name for f in fields(MetricsRow)]


def write_metrics_csv(path, rows: list[MetricsRow]) -> None:
    lines = [",".join(METRICS_COLUMNS)]
    for r in rows:
        vals = [getattr(r, c) for c in METRICS_COLUMNS]
        lines.append(",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != ",".join(METRICS_COLUMNS):
        raise ValueError(f"{path}: unexpected metrics header")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(METRICS_COLUMNS):
            raise ValueError(f"{path}: malformed metrics row: {line!r}")
        rows.append(MetricsRow(int(parts[0]), int(parts[1]), *[float(v) for v in parts[2:]]))
    return rows


def win_rate(policy, sft, task, n: int, rng: np.random.Generator) -> float:
    """Fraction of paired draws where the policy's action beats the
    behavior policy's action under the gold reward; ties count half."""
    if n <= 0:
        raise ValueError("n must be positive")
    states = task.sample_state(rng, n)
    a_pol = policy.sample(states, rng)
    a_sft = sft.sample(states, rng)
    if task.kind == "continuous":
        g_pol, g_sft = task.gold_score(a_pol), task.gold_score(a_sft)
    else:
        g_pol, g_sft = task.gold_score(states, a_pol), task.gold_score(states, a_sft)
    return float(np.mean((g_pol > g_sft) + 0.5 * (g_pol == g_sft)))


def evaluate_policy(policy, sft, task, n: int, rng: np.random.Generator) -> dict:
    """Fresh-sample evaluation: mean gold score, win rate and KL to the sft."""
    states = task.sample_state(rng, n)
    actions = policy.sample(states, rng)
    if task.kind == "continuous":
        gold = task.gold_score(actions)
    else:
        gold = task.gold_score(states, actions)
    return {
        "mean_gold": float(gold.mean()),
        "win_rate_vs_sft": win_rate(policy, sft, task, n, rng),
        "kl_to_sft": float(np.mean(np.atleast_1d(policy.kl_to(sft)))),
    }
