"""Calibration sweep for the didactic experiment defaults (dev tool, not shipped)."""

import sys
import time

import numpy as np

from ocrm.importance import IWConfig
from ocrm.loop import OcrmSchedule, run_ablation
from ocrm.policies import GaussianPolicy
from ocrm.ppo import PpoConfig
from ocrm.preference import generate_dataset
from ocrm.tasks import ContinuousTask


def window_mean(vals, center_frac, width=6):
    j = int(round(center_frac * (len(vals) - 1)))
    lo = max(0, j - width + 1)
    return float(np.mean(vals[lo : j + 1]))


def run_cell(beta, policy_lr, seeds, k=20_000, m=3, n_rm=50_000, epochs=4, batch=256):
    task = ContinuousTask()
    sft = GaussianPolicy.isotropic(2, 0.7).snapshot()
    out = {}
    for seed in seeds:
        ds = generate_dataset(sft, task, n_rm, np.random.default_rng(seed * 7919 + 13), seed=seed)
        sch = OcrmSchedule(
            m=m, k=k, iw=IWConfig(),
            ppo=PpoConfig(batch_size=batch, beta=beta, policy_lr=policy_lr, epochs=epochs),
            eval_pairs=256,
        )
        row = {}
        for variant in ("ppo", "ppo+newkl", "ocrm"):
            res = run_ablation(variant, task, sft, ds, sch, np.random.default_rng(seed))
            gold = [r.mean_gold_reward for r in res.metrics]
            rm = [r.mean_rm_reward for r in res.metrics]
            row[variant] = dict(
                final=res.final_eval["mean_gold"],
                kl=res.final_eval["kl_to_sft"],
                gold_q=window_mean(gold, 0.25),
                gold_e=window_mean(gold, 1.0),
                rm_q=window_mean(rm, 0.25),
                rm_e=window_mean(rm, 1.0),
                ess=[round(r.ess) for _, r in res.weight_reports],
                acc0=res.metrics[0].rm_accuracy,
                acc_end=res.metrics[-1].rm_accuracy,
            )
        out[seed] = row
    return out


def summarize(tag, cells):
    print(f"=== {tag}")
    c1 = c2a = c2b = c8a = c8b = 0
    n = len(cells)
    for seed, row in cells.items():
        ppo, newkl, ocrm = row["ppo"], row["ppo+newkl"], row["ocrm"]
        c1 += ocrm["final"] > ppo["final"]
        c2a += ppo["rm_e"] > ppo["rm_q"]
        c2b += ppo["gold_e"] <= ppo["gold_q"] + 0.05
        c8a += ocrm["final"] > newkl["final"]
        c8b += newkl["final"] > ppo["final"]
        print(
            f"  seed {seed}: ppo={ppo['final']:.3f} newkl={newkl['final']:.3f} ocrm={ocrm['final']:.3f}"
            f" | ppo rm {ppo['rm_q']:.2f}->{ppo['rm_e']:.2f} gold {ppo['gold_q']:.2f}->{ppo['gold_e']:.2f}"
            f" | ocrm ess {ocrm['ess']} | acc {ppo['acc0']:.2f}->{ppo['acc_end']:.2f}"
        )
    print(f"  c1 ocrm>ppo {c1}/{n} | c2 rm-up {c2a}/{n} gold-flat {c2b}/{n} | c8 ocrm>newkl {c8a}/{n} newkl>ppo {c8b}/{n}")


if __name__ == "__main__":
    seeds = [int(s) for s in sys.argv[1].split(",")] if len(sys.argv) > 1 else [1, 2, 3]
    t0 = time.perf_counter()
    for beta in (0.05, 0.2, 0.5):
        for lr in (3e-4, 1e-3):
            cells = run_cell(beta, lr, seeds)
            summarize(f"beta={beta} lr={lr}", cells)
            print(f"  [{time.perf_counter() - t0:.0f}s elapsed]")
