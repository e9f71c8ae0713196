"""Second calibration pass: beta/lr grid with clamped RM inputs (dev tool)."""

import sys
import time

import numpy as np

from ocrm.importance import IWConfig
from ocrm.loop import OcrmSchedule, run_ablation, run_ppo_baseline
from ocrm.policies import GaussianPolicy
from ocrm.ppo import PpoConfig
from ocrm.preference import generate_dataset
from ocrm.tasks import ContinuousTask


def window_mean(vals, center_frac, width=8):
    j = int(round(center_frac * (len(vals) - 1)))
    lo = max(0, j - width + 1)
    return float(np.mean(vals[lo : j + 1]))


def probe_scaled(beta, lr, seeds, k=20_000):
    """c1/c8 probe at the scaled budget."""
    task = ContinuousTask()
    sft = GaussianPolicy.isotropic(2, 0.7).snapshot()
    print(f"--- scaled beta={beta} lr={lr}")
    wins1 = wins8a = wins8b = 0
    for seed in seeds:
        ds = generate_dataset(sft, task, 200_000, np.random.default_rng(seed * 7919 + 13), seed=seed)
        sch = OcrmSchedule(
            m=3, k=k, iw=IWConfig(),
            ppo=PpoConfig(batch_size=256, beta=beta, policy_lr=lr, epochs=4),
        )
        res = {}
        for variant in ("ppo", "ppo+newkl", "ocrm"):
            r = run_ablation(variant, task, sft, ds, sch, np.random.default_rng(seed))
            res[variant] = r
        f = {v: res[v].final_eval["mean_gold"] for v in res}
        pol = res["ocrm"].boundary_policies
        desc = [
            f"mu={np.round(p.mean(), 2).tolist()} sd={np.round(p.std(), 2).tolist()}" for p in pol
        ]
        ess = [round(r.ess) for _, r in res["ocrm"].weight_reports]
        wins1 += f["ocrm"] > f["ppo"]
        wins8a += f["ocrm"] > f["ppo+newkl"]
        wins8b += f["ppo+newkl"] > f["ppo"]
        print(
            f"  seed {seed}: ppo={f['ppo']:.3f} newkl={f['ppo+newkl']:.3f} ocrm={f['ocrm']:.3f}"
            f" ess={ess} | ocrm bounds: {' | '.join(desc)}"
        )
    n = len(seeds)
    print(f"  => c1 {wins1}/{n}  c8 ocrm>newkl {wins8a}/{n}  newkl>ppo {wins8b}/{n}")


def probe_signature(beta, lr, seeds, total=200_000):
    """c2 probe: single long baseline run."""
    task = ContinuousTask()
    sft = GaussianPolicy.isotropic(2, 0.7).snapshot()
    print(f"--- signature beta={beta} lr={lr} total={total}")
    ok_rm = ok_gold = 0
    for seed in seeds:
        ds = generate_dataset(sft, task, 200_000, np.random.default_rng(seed * 7919 + 13), seed=seed)
        sch = OcrmSchedule(
            m=1, k=total, iw=IWConfig(),
            ppo=PpoConfig(batch_size=256, beta=beta, policy_lr=lr, epochs=4),
        )
        r = run_ppo_baseline(task, sft, ds, total, sch, np.random.default_rng(seed))
        gold = [m.mean_gold_reward for m in r.metrics]
        rm = [m.mean_rm_reward for m in r.metrics]
        rm_q, rm_e = window_mean(rm, 0.25), window_mean(rm, 1.0)
        g_q, g_e = window_mean(gold, 0.25), window_mean(gold, 1.0)
        per_update_sd = float(np.std(gold[len(gold) // 4 :]))
        noise = 2.0 * per_update_sd / np.sqrt(8)
        ok_rm += rm_e > rm_q
        ok_gold += g_e <= g_q + noise
        pol = r.policy
        print(
            f"  seed {seed}: rm {rm_q:.3f}->{rm_e:.3f} gold {g_q:.3f}->{g_e:.3f} (noise {noise:.3f})"
            f" final mu={np.round(pol.mean(),2).tolist()} sd={np.round(pol.std(),2).tolist()}"
        )
    print(f"  => rm-up {ok_rm}/{len(seeds)} gold-flat {ok_gold}/{len(seeds)}")


if __name__ == "__main__":
    mode = sys.argv[1]
    seeds = [int(s) for s in sys.argv[2].split(",")]
    t0 = time.perf_counter()
    if mode == "scaled":
        for beta in (0.4, 0.5, 0.7):
            for lr in (3e-4,):
                probe_scaled(beta, lr, seeds)
                print(f"  [{time.perf_counter()-t0:.0f}s]")
    elif mode == "sig":
        for beta in (0.05,):
            for lr in (3e-4,):
                probe_signature(beta, lr, seeds)
                print(f"  [{time.perf_counter()-t0:.0f}s]")
