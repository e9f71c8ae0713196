"""Off-policy correction weights for preference pairs.

The plain weight of a pair is the current policy's joint density of both
actions divided by the stored behavior density. Variance control comes in two
composable forms: dividing by an alpha-mixture of behavior and current
densities instead of the behavior density alone ("relative" weights), and
raising the result to a power eta in [0, 1] ("flattened" weights). Mixture is
applied to the joint pair probability first, then the power, then an optional
hard clip.

All arithmetic happens in log space; softmax and Gaussian policies keep every
log-ratio finite even when the direct ratio would over- or underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .preference import PreferenceDataset, PreferencePair


@dataclass
class IWConfig:
    eta: float = 1.0
    alpha: float = 1.0
    clip_w: float | None = None
    self_normalize: bool = False

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.clip_w is not None and self.clip_w <= 0:
            raise ValueError("clip_w must be positive")


@dataclass
class WeightReport:
    weights: np.ndarray
    mean: float
    max: float
    min: float
    ess: float


def _log_weights(logp_cur: np.ndarray, logp_beh: np.ndarray, cfg: IWConfig) -> np.ndarray:
    """log of the flattened relative weight, given joint pair log-densities."""
    if cfg.alpha == 1.0:
        log_ratio = logp_cur - logp_beh
    elif cfg.alpha == 0.0:
        log_ratio = np.zeros_like(logp_cur)
    else:
        denom = np.logaddexp(np.log(cfg.alpha) + logp_beh, np.log1p(-cfg.alpha) + logp_cur)
        log_ratio = logp_cur - denom
    return cfg.eta * log_ratio


def pair_weight(pair: PreferencePair, current, cfg: IWConfig = IWConfig()) -> float:
    """Correction weight of one pair against the current policy."""
    logp_cur = current.log_prob(pair.state, pair.action_w) + current.log_prob(
        pair.state, pair.action_l
    )
    logp_beh = pair.logp1_w + pair.logp1_l
    w = float(np.exp(_log_weights(np.asarray(logp_cur), np.asarray(logp_beh), cfg)))
    if cfg.clip_w is not None:
        w = min(w, cfg.clip_w)
    return w


def dataset_weights(ds: PreferenceDataset, current, cfg: IWConfig = IWConfig()) -> WeightReport:
    """Weights for every row of the dataset, plus degeneracy diagnostics."""
    logp_cur = current.log_prob(ds.states, ds.actions_w) + current.log_prob(
        ds.states, ds.actions_l
    )
    logp_beh = ds.logp1_w + ds.logp1_l
    weights = np.exp(_log_weights(logp_cur, logp_beh, cfg))
    if cfg.clip_w is not None:
        weights = np.minimum(weights, cfg.clip_w)
    if cfg.self_normalize:
        weights = weights / weights.mean()
    wsum = weights.sum()
    ess = float(wsum * wsum / (weights * weights).sum()) if wsum > 0 else 0.0
    return WeightReport(
        weights=weights,
        mean=float(weights.mean()),
        max=float(weights.max()),
        min=float(weights.min()),
        ess=ess,
    )
