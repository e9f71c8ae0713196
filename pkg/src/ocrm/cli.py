"""Command-line entry points for all experiments.

Each run writes into its output directory: the resolved config, metrics.csv
(one row per policy update), weights-report.csv (one row per reward-model
retraining), per-boundary checkpoints, and plot-data CSVs (training curves
plus the KL/gold trade-off pairs). Everything is a pure function of
(config, seed).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, config_text, parse_config
from .consistency import ExactLossSpec, consistency_sweep, make_shift_instance
from .importance import IWConfig
from .loop import OcrmSchedule, RunResult, run_ablation, run_ocrm, run_ppo_baseline
from .metrics import evaluate_policy, win_rate
from .policies import GaussianPolicy, load_policy
from .ppo import PpoConfig
from .preference import generate_dataset, load_dataset, save_dataset
from .tasks import ContinuousTask


def sft_snapshot() -> GaussianPolicy:
    """The didactic behavior policy: zero-mean Gaussian, covariance 0.7 I."""
    return GaussianPolicy.isotropic(2, variance=0.7).snapshot()


def dataset_rng(seed: int) -> np.random.Generator:
    # own stream so dataset contents do not depend on training-run structure
    return np.random.default_rng(seed * 7919 + 13)


def schedule_from_config(cfg: RunConfig) -> OcrmSchedule:
    return OcrmSchedule(
        m=cfg.m,
        k=cfg.k,
        iw=IWConfig(
            eta=cfg.eta, alpha=cfg.alpha, clip_w=cfg.clip_w if cfg.clip_w > 0 else None
        ),
        reset_value=cfg.reset_value,
        reset_optimizer=cfg.reset_optimizer,
        rm_epochs=cfg.rm_epochs,
        rm_lr=cfg.rm_lr,
        rm_batch_size=cfg.rm_batch_size,
        rm_hidden=cfg.rm_hidden,
        ppo=PpoConfig(
            clip_eps=cfg.clip_eps,
            epochs=cfg.ppo_epochs,
            minibatch_size=cfg.minibatch_size,
            value_coef=cfg.value_coef,
            beta=cfg.beta,
            whiten_advantages=cfg.whiten_advantages,
            batch_size=cfg.batch_size,
            policy_lr=cfg.policy_lr,
            value_lr=cfg.value_lr,
        ),
        eval_pairs=cfg.eval_pairs,
        final_eval_n=cfg.final_eval_n,
    )


def _load_or_generate_dataset(cfg: RunConfig, sft, task):
    if cfg.dataset_path:
        return load_dataset(cfg.dataset_path)
    return generate_dataset(sft, task, cfg.n_pairs, dataset_rng(cfg.seed), seed=cfg.seed)


def _write_plot_data(out_dir: str, result: RunResult) -> None:
    curves = ["samples,mean_gold_reward,mean_rm_reward,kl_to_sft"]
    trade = ["kl_to_sft,mean_gold_reward"]
    for row in result.metrics:
        curves.append(f"{row.samples},{row.mean_gold_reward!r},{row.mean_rm_reward!r},{row.kl_to_sft!r}")
        trade.append(f"{row.kl_to_sft!r},{row.mean_gold_reward!r}")
    with open(os.path.join(out_dir, "plot_curves.csv"), "w") as fh:
        fh.write("\n".join(curves) + "\n")
    with open(os.path.join(out_dir, "plot_tradeoff.csv"), "w") as fh:
        fh.write("\n".join(trade) + "\n")


def _finish_didactic(cfg: RunConfig, result: RunResult, sft, task) -> None:
    _write_plot_data(cfg.out_dir, result)
    result.policy.save(os.path.join(cfg.out_dir, "policy_final.ckpt"))
    result.rm.save(os.path.join(cfg.out_dir, "rm_final.ckpt"))
    lines = [f"{key} = {value!r}" for key, value in sorted(result.final_eval.items())]
    with open(os.path.join(cfg.out_dir, "final_eval.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run(cfg: RunConfig) -> int:
    """Dispatch one experiment; returns a process exit status."""
    if cfg.experiment != "eval" and not cfg.out_dir:
        print("error: an output directory is required (--out)", file=sys.stderr)
        return 2
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, "config.txt"), "w") as fh:
            fh.write(config_text(cfg))

    task = ContinuousTask()
    sft = sft_snapshot()

    if cfg.experiment == "dataset-gen":
        ds = generate_dataset(sft, task, cfg.n_pairs, dataset_rng(cfg.seed), seed=cfg.seed)
        save_dataset(ds, os.path.join(cfg.out_dir, "dataset.txt"))
        print(f"wrote {len(ds)} pairs to {cfg.out_dir}/dataset.txt")
        return 0

    if cfg.experiment in ("didactic-ocrm", "didactic-ppo", "ablation"):
        ds = _load_or_generate_dataset(cfg, sft, task)
        schedule = schedule_from_config(cfg)
        rng = np.random.default_rng(cfg.seed)
        if cfg.experiment == "didactic-ocrm":
            result = run_ocrm(task, sft, ds, schedule, rng, out_dir=cfg.out_dir)
        elif cfg.experiment == "didactic-ppo":
            result = run_ppo_baseline(task, sft, ds, cfg.total_samples, schedule, rng, out_dir=cfg.out_dir)
        else:
            result = run_ablation(cfg.variant, task, sft, ds, schedule, rng, out_dir=cfg.out_dir)
        _finish_didactic(cfg, result, sft, task)
        print(
            f"{cfg.experiment} done: final mean gold {result.final_eval['mean_gold']:.4f}, "
            f"win rate vs sft {result.final_eval['win_rate_vs_sft']:.3f}"
        )
        return 0

    if cfg.experiment == "consistency":
        spec, pi1, pii = make_shift_instance(cfg.task_seed, cfg.concentration)
        spec.task.save(os.path.join(cfg.out_dir, "task.txt"))
        n_grid = [int(v) for v in cfg.n_grid.split(",")]
        report = consistency_sweep(
            spec, pi1, pii, n_grid, cfg.n_seeds, np.random.default_rng(cfg.seed)
        )
        report.write_csv(os.path.join(cfg.out_dir, "consistency.csv"))
        with open(os.path.join(cfg.out_dir, "summary.txt"), "w") as fh:
            fh.write(report.summary() + "\n")
        print(report.summary())
        return 0

    if cfg.experiment == "eval":
        if not cfg.checkpoint:
            print("error: eval needs --set checkpoint=<path>", file=sys.stderr)
            return 2
        policy = load_policy(cfg.checkpoint)
        result = evaluate_policy(policy, sft, task, cfg.final_eval_n, np.random.default_rng(cfg.seed))
        for key, value in sorted(result.items()):
            print(f"{key} = {value!r}")
        if cfg.out_dir:
            with open(os.path.join(cfg.out_dir, "eval.txt"), "w") as fh:
                fh.write("\n".join(f"{k} = {v!r}" for k, v in sorted(result.items())) + "\n")
        return 0

    raise AssertionError(f"unhandled experiment {cfg.experiment!r}")


_SUBCOMMANDS = {
    "dataset-gen": "dataset-gen",
    "train-ppo": "didactic-ppo",
    "train-ocrm": "didactic-ocrm",
    "ablation": "ablation",
    "consistency": "consistency",
    "eval": "eval",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ocrm",
        description="Off-policy corrected reward modeling lab: didactic runs, "
        "ablations and exact consistency checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="run seed (overrides file)")
        p.add_argument("--out", default=None, help="output directory (overrides file)")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
        if name == "ablation":
            p.add_argument("--variant", default=None, help="ppo | ppo+reset | ppo+newkl | ocrm")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "variant", None) is not None:
        overrides["variant"] = args.variant
    try:
        cfg = parse_config(_SUBCOMMANDS[args.command], args.config, overrides)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
