"""Run configuration: flat key=value files with flag overrides.

Every experiment kind has documented defaults; unknown keys are rejected by
name so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


EXPERIMENTS = ("didactic-ocrm", "didactic-ppo", "ablation", "consistency", "dataset-gen", "eval")


@dataclass
class RunConfig:
    experiment: str
    seed: int = 1
    out_dir: str = ""
    # didactic task / schedule
    n_pairs: int = 200_000
    dataset_path: str = ""          # empty: generate from (seed) before running
    m: int = 3
    k: int = 200_000
    total_samples: int = 200_000    # didactic-ppo only
    variant: str = "ocrm"           # ablation only
    beta: float = 0.5
    eta: float = 1.0
    alpha: float = 1.0
    clip_w: float = 0.0             # 0 disables clipping
    batch_size: int = 256
    ppo_epochs: int = 4
    minibatch_size: int = 64
    clip_eps: float = 0.2
    value_coef: float = 0.5
    whiten_advantages: bool = True
    policy_lr: float = 3e-4
    value_lr: float = 1e-3
    rm_epochs: int = 50
    rm_lr: float = 1e-3
    rm_batch_size: int = 512
    rm_hidden: int = 4
    reset_value: bool = True
    reset_optimizer: bool = True
    eval_pairs: int = 256
    final_eval_n: int = 4096
    # consistency lab
    task_seed: int = 7
    concentration: float = 3.0
    n_grid: str = "100,1000,10000"
    n_seeds: int = 20
    # eval
    checkpoint: str = ""

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r} (choose from {EXPERIMENTS})")


# Keys that do not apply to an experiment kind are still accepted in files so
# one config can drive several runs; only truly unknown keys are errors.
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

# The overoptimization-signature baseline deliberately runs with the weak
# LM-default KL strength; the reproduction/ablation runs use the calibrated
# stronger anchor (see README).
_KIND_DEFAULTS = {
    "didactic-ppo": {"beta": 0.05, "total_samples": 200_000},
    "didactic-ocrm": {"beta": 0.5},
    "ablation": {"beta": 0.5},
}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    try:
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
        if kind in ("bool", bool):
            if text.lower() in ("true", "1", "yes", "on"):
                return True
            if text.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        return text
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def read_config_file(path) -> dict:
    """Parse `key = value` lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def parse_config(experiment: str, path=None, overrides: dict | None = None) -> RunConfig:
    """Resolve a full configuration: defaults, then file, then overrides."""
    values: dict = {"experiment": experiment}
    values.update(_KIND_DEFAULTS.get(experiment, {}))
    layers = []
    if path is not None:
        layers.append(read_config_file(path))
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for key, raw in layer.items():
            if key == "experiment":
                raise ConfigError("config key 'experiment' is fixed by the subcommand")
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, str(raw))
    return RunConfig(**values)


def config_text(cfg: RunConfig) -> str:
    """Echo of the fully resolved configuration, stable across runs."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"
