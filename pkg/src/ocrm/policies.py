"""Stochastic policies with exact log-densities, gradients and KL divergences.

Two families: a diagonal Gaussian over a 2-D continuous action space (the
mean either produced by an MLP on a constant input, or held as a direct
parameter vector) and a softmax categorical over a finite action set.

Both expose the same surface: sampling, exact log-probabilities, analytic KL
to another policy of the same family, and parameter-space gradients of
weighted log-probability sums and of the KL term. Snapshots are frozen deep
copies used as behavior policies and KL references.
"""

from __future__ import annotations

import numpy as np

from .nets import Mlp, load_checkpoint, params_fingerprint, save_checkpoint

LOG_2PI = float(np.log(2.0 * np.pi))


class FrozenPolicyError(RuntimeError):
    pass


class GaussianPolicy:
    """Diagonal Gaussian over R^d for a single-state task.

    ``mean_net`` maps the constant input [1.0] to the mean; passing
    ``mean=...`` instead keeps the mean as a plain parameter vector (handy in
    unit tests). ``log_std`` is always a direct parameter vector.
    """

    family = "gaussian"

    def __init__(
        self,
        mean_net: Mlp | None = None,
        mean: np.ndarray | None = None,
        log_std: np.ndarray | None = None,
        frozen: bool = False,
    ):
        if (mean_net is None) == (mean is None):
            raise ValueError("provide exactly one of mean_net or mean")
        self.mean_net = mean_net
        self._mean = None if mean is None else np.asarray(mean, dtype=np.float64).copy()
        if mean_net is not None and mean_net.layer_dims[0] != 1:
            raise ValueError("mean_net must take the constant 1-dim input")
        d = mean_net.layer_dims[-1] if mean_net is not None else self._mean.shape[0]
        if log_std is None:
            log_std = np.zeros(d)
        self.log_std = np.asarray(log_std, dtype=np.float64).copy()
        if self.log_std.shape != (d,):
            raise ValueError("log_std length must match the action dimension")
        self.frozen = frozen

    @classmethod
    def isotropic(cls, action_dim: int, variance: float) -> "GaussianPolicy":
        """Zero-mean Gaussian with the given per-dimension variance."""
        return cls(
            mean=np.zeros(action_dim),
            log_std=np.full(action_dim, 0.5 * np.log(variance)),
        )

    @property
    def action_dim(self) -> int:
        return self.log_std.shape[0]

    def mean(self) -> np.ndarray:
        if self._mean is not None:
            return self._mean.copy()
        return np.asarray(self.mean_net.forward(np.ones((1, 1))), dtype=np.float64)[0]

    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    # -- flat parameter vector ------------------------------------------
    @property
    def params(self) -> np.ndarray:
        head = self.mean_net.params if self.mean_net is not None else self._mean
        return np.concatenate([head, self.log_std])

    def set_params(self, params: np.ndarray) -> None:
        if self.frozen:
            raise FrozenPolicyError("cannot mutate a policy snapshot")
        params = np.asarray(params, dtype=np.float64)
        d = self.action_dim
        if self.mean_net is not None:
            n = self.mean_net.params.size
            if params.size != n + d:
                raise ValueError("parameter vector has wrong length")
            self.mean_net.params[:] = params[:n]
        else:
            if params.size != self._mean.size + d:
                raise ValueError("parameter vector has wrong length")
            self._mean[:] = params[: self._mean.size]
        self.log_std[:] = params[-d:]

    def snapshot(self) -> "GaussianPolicy":
        dup = GaussianPolicy(
            mean_net=self.mean_net.copy() if self.mean_net is not None else None,
            mean=None if self.mean_net is not None else self._mean,
            log_std=self.log_std,
            frozen=True,
        )
        return dup

    def fingerprint(self) -> str:
        return params_fingerprint([self.params])

    # -- distribution surface --------------------------------------------
    def sample(self, states, rng: np.random.Generator) -> np.ndarray:
        """Draw one action per requested state (states only fix the count)."""
        n = 1 if np.isscalar(states) or states is None else len(np.atleast_1d(states))
        mu = self.mean()
        std = self.std()
        out = mu + std * rng.standard_normal((n, self.action_dim))
        return out[0] if (np.isscalar(states) or states is None) else out

    def log_prob(self, states, actions) -> np.ndarray:
        a = np.asarray(actions, dtype=np.float64)
        single = a.ndim == 1
        a2 = a.reshape(1, -1) if single else a
        mu = self.mean()
        std = self.std()
        z = (a2 - mu) / std
        lp = -0.5 * (z * z + LOG_2PI).sum(axis=1) - self.log_std.sum()
        return float(lp[0]) if single else lp

    def kl_to(self, other: "GaussianPolicy", states=None) -> float:
        """KL(self || other), exact diagonal-Gaussian form."""
        if not isinstance(other, GaussianPolicy):
            raise ValueError("KL requires two policies of the same family")
        mu_p, mu_q = self.mean(), other.mean()
        var_p, var_q = self.std() ** 2, other.std() ** 2
        terms = (
            other.log_std
            - self.log_std
            + (var_p + (mu_p - mu_q) ** 2) / (2.0 * var_q)
            - 0.5
        )
        return float(terms.sum())

    # -- gradients ---------------------------------------------------------
    def logprob_weighted_grad(self, states, actions, coeffs) -> np.ndarray:
        """Gradient of sum_j coeffs_j * log pi(a_j) w.r.t. the flat params."""
        a = np.asarray(actions, dtype=np.float64).reshape(-1, self.action_dim)
        c = np.asarray(coeffs, dtype=np.float64).reshape(-1, 1)
        mu = self.mean()
        std = self.std()
        diff = (a - mu) / (std * std)
        d_mu = (c * diff).sum(axis=0)
        d_logstd = (c[:, 0, None] * (((a - mu) / std) ** 2 - 1.0)).sum(axis=0)
        return self._assemble_grad(d_mu, d_logstd)

    def kl_grad(self, other: "GaussianPolicy") -> np.ndarray:
        """Gradient of KL(self || other) w.r.t. self's flat params."""
        mu_p, mu_q = self.mean(), other.mean()
        var_p, var_q = self.std() ** 2, other.std() ** 2
        d_mu = (mu_p - mu_q) / var_q
        d_logstd = var_p / var_q - 1.0
        return self._assemble_grad(d_mu, d_logstd)

    def _assemble_grad(self, d_mu: np.ndarray, d_logstd: np.ndarray) -> np.ndarray:
        if self.mean_net is not None:
            self.mean_net.forward(np.ones((1, 1)))
            head = self.mean_net.backward(d_mu.reshape(1, -1))
        else:
            head = d_mu
        return np.concatenate([head, d_logstd])

    # -- persistence --------------------------------------------------------
    def save(self, path) -> None:
        meta = {"family": self.family, "parameterization": "mlp" if self.mean_net else "direct"}
        arrays: dict[str, np.ndarray] = {"log_std": self.log_std}
        if self.mean_net is not None:
            meta["layer_dims"] = ",".join(str(d) for d in self.mean_net.layer_dims)
            meta["activations"] = ",".join(self.mean_net.activations)
            arrays["mean_params"] = self.mean_net.params
        else:
            arrays["mean"] = self._mean
        save_checkpoint(path, meta, arrays)


class CategoricalPolicy:
    """Softmax policy over a finite action set, one logit row per state."""

    family = "categorical"

    def __init__(self, logits_net: Mlp, n_states: int, temperature: float = 1.0, frozen: bool = False):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        if logits_net.layer_dims[0] != n_states:
            raise ValueError("logits_net input must be the one-hot state encoding")
        self.logits_net = logits_net
        self.n_states = n_states
        self.temperature = float(temperature)
        self.frozen = frozen

    @classmethod
    def from_logit_table(cls, table: np.ndarray, temperature: float = 1.0) -> "CategoricalPolicy":
        """Policy with an explicit logit table (identity-net construction)."""
        table = np.asarray(table, dtype=np.float64)
        n_states, n_actions = table.shape
        net = Mlp([n_states, n_actions], ["identity"], np.random.default_rng(0))
        w, b = net.unpack()[0]
        w[:] = table
        b[:] = 0.0
        return cls(net, n_states, temperature)

    @property
    def n_actions(self) -> int:
        return self.logits_net.layer_dims[-1]

    @property
    def params(self) -> np.ndarray:
        return self.logits_net.params.copy()

    def set_params(self, params: np.ndarray) -> None:
        if self.frozen:
            raise FrozenPolicyError("cannot mutate a policy snapshot")
        self.logits_net.params[:] = np.asarray(params, dtype=np.float64)

    def snapshot(self) -> "CategoricalPolicy":
        return CategoricalPolicy(
            self.logits_net.copy(), self.n_states, self.temperature, frozen=True
        )

    def fingerprint(self) -> str:
        return params_fingerprint([self.logits_net.params, np.array([self.temperature])])

    def log_prob_table(self) -> np.ndarray:
        """(n_states, n_actions) matrix of log probabilities."""
        logits = self.logits_net.forward(np.eye(self.n_states)) / self.temperature
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def prob_table(self) -> np.ndarray:
        return np.exp(self.log_prob_table())

    def sample(self, states, rng: np.random.Generator):
        single = np.isscalar(states)
        s = np.atleast_1d(np.asarray(states, dtype=np.int64))
        probs = self.prob_table()
        # Draw uniforms in sample order so the stream is independent of how
        # states happen to be grouped.
        u = rng.random(s.shape[0])
        cdf = np.cumsum(probs, axis=1)
        out = (u[:, None] > cdf[s]).sum(axis=1)
        out = np.minimum(out, self.n_actions - 1)
        return int(out[0]) if single else out

    def log_prob(self, states, actions) -> np.ndarray:
        single = np.isscalar(states) and np.isscalar(actions)
        s = np.atleast_1d(np.asarray(states, dtype=np.int64))
        a = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        lp = self.log_prob_table()[s, a]
        return float(lp[0]) if single else lp

    def kl_to(self, other: "CategoricalPolicy", states=None):
        """KL(self || other) per state; scalar for a scalar state, else the
        full per-state vector (states=None)."""
        if not isinstance(other, CategoricalPolicy):
            raise ValueError("KL requires two policies of the same family")
        lp = self.log_prob_table()
        lq = other.log_prob_table()
        kl = (np.exp(lp) * (lp - lq)).sum(axis=1)
        if states is None:
            return kl
        if np.isscalar(states):
            return float(kl[states])
        return kl[np.asarray(states, dtype=np.int64)]

    def logprob_weighted_grad(self, states, actions, coeffs) -> np.ndarray:
        s = np.atleast_1d(np.asarray(states, dtype=np.int64))
        a = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        c = np.asarray(coeffs, dtype=np.float64).ravel()
        probs = self.prob_table()
        g = np.zeros_like(probs)
        np.add.at(g, (s, a), c)
        per_state = np.zeros(self.n_states)
        np.add.at(per_state, s, c)
        g -= per_state[:, None] * probs
        g /= self.temperature
        self.logits_net.forward(np.eye(self.n_states))
        return self.logits_net.backward(g)

    def kl_grad(self, other: "CategoricalPolicy", state_weights=None) -> np.ndarray:
        """Gradient of sum_s weight_s * KL_s(self || other) w.r.t. params."""
        lp = self.log_prob_table()
        lq = other.log_prob_table()
        p = np.exp(lp)
        kl = (p * (lp - lq)).sum(axis=1, keepdims=True)
        w = np.ones(self.n_states) if state_weights is None else np.asarray(state_weights)
        g = w[:, None] * p * ((lp - lq) - kl) / self.temperature
        self.logits_net.forward(np.eye(self.n_states))
        return self.logits_net.backward(g)

    def save(self, path) -> None:
        meta = {
            "family": self.family,
            "n_states": str(self.n_states),
            "temperature": repr(self.temperature),
            "layer_dims": ",".join(str(d) for d in self.logits_net.layer_dims),
            "activations": ",".join(self.logits_net.activations),
        }
        save_checkpoint(path, meta, {"logits_params": self.logits_net.params})


def load_policy(path):
    meta, arrays = load_checkpoint(path)
    family = meta.get("family")
    if family == "gaussian":
        if meta.get("parameterization") == "mlp":
            layer_dims = [int(d) for d in meta["layer_dims"].split(",")]
            net = Mlp(layer_dims, meta["activations"].split(","), np.random.default_rng(0))
            net.params[:] = arrays["mean_params"]
            return GaussianPolicy(mean_net=net, log_std=arrays["log_std"])
        return GaussianPolicy(mean=arrays["mean"], log_std=arrays["log_std"])
    if family == "categorical":
        layer_dims = [int(d) for d in meta["layer_dims"].split(",")]
        net = Mlp(layer_dims, meta["activations"].split(","), np.random.default_rng(0))
        net.params[:] = arrays["logits_params"]
        return CategoricalPolicy(net, int(meta["n_states"]), float(meta["temperature"]))
    raise ValueError(f"{path}: unknown policy family {family!r}")
