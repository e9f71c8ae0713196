"""Minimal feed-forward networks with hand-rolled reverse-mode gradients.

Everything is float64 and deterministic given a seed. Networks store their
parameters as a single flat vector so optimizers, checkpoints and snapshots
can treat them uniformly.
"""

from __future__ import annotations

import hashlib

import numpy as np

_ACTIVATIONS = ("tanh", "relu", "identity")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name: str, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation z (h = act(z))."""
    if name == "tanh":
        return 1.0 - h * h
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def param_count(layer_dims: list[int]) -> int:
    return sum((d_in + 1) * d_out for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]))


class Mlp:
    """Fully-connected network over a flat float64 parameter vector.

    ``layer_dims`` gives the sizes of input, hidden and output layers;
    ``activations`` names one activation per weight layer (the output layer is
    normally "identity"). Parameters are packed layer by layer as the weight
    matrix (row-major, shape d_in x d_out) followed by the bias.
    """

    def __init__(self, layer_dims: list[int], activations: list[str], rng: np.random.Generator):
        if len(layer_dims) < 2:
            raise ValueError("need at least an input and an output dimension")
        if len(activations) != len(layer_dims) - 1:
            raise ValueError(
                f"expected {len(layer_dims) - 1} activations, got {len(activations)}"
            )
        for a in activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.layer_dims = list(layer_dims)
        self.activations = list(activations)
        self.params = np.zeros(param_count(self.layer_dims), dtype=np.float64)
        self._cache: tuple | None = None
        self._init_params(rng)

    def _init_params(self, rng: np.random.Generator) -> None:
        # Uniform in +-1/sqrt(fan_in), the usual bounded-activation choice.
        offset = 0
        for d_in, d_out in self._layer_shapes():
            bound = 1.0 / np.sqrt(d_in)
            n = (d_in + 1) * d_out
            self.params[offset : offset + n] = rng.uniform(-bound, bound, size=n)
            offset += n

    def _layer_shapes(self):
        return list(zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def unpack(self, params: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views of (weight, bias) per layer into the flat vector."""
        p = self.params if params is None else params
        out = []
        offset = 0
        for d_in, d_out in self._layer_shapes():
            w = p[offset : offset + d_in * d_out].reshape(d_in, d_out)
            offset += d_in * d_out
            b = p[offset : offset + d_out]
            offset += d_out
            out.append((w, b))
        return out

    def zero_output_layer(self) -> None:
        """Zero the last layer so the network output is exactly 0 everywhere."""
        w, b = self.unpack()[-1]
        w[:] = 0.0
        b[:] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Run the network; records intermediates for a later backward pass.

        Accepts a single input vector or a (batch, d_in) matrix and returns
        an output of matching leading shape.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        if h.shape[1] != self.layer_dims[0]:
            raise ValueError(
                f"input dimension {h.shape[1]} does not match first layer {self.layer_dims[0]}"
            )
        inputs = []
        preacts = []
        for (w, b), act in zip(self.unpack(), self.activations):
            inputs.append(h)
            z = h @ w + b
            preacts.append(z)
            h = _act(act, z)
        self._cache = (inputs, preacts, h)
        return h[0] if single else h

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Gradient of sum_j <grad_out_j, output_j> w.r.t. the flat parameters.

        Requires a preceding forward pass; the recorded batch must match the
        leading shape of ``grad_out``.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        inputs, preacts, out = self._cache
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g.reshape(1, -1)
        if g.shape != out.shape:
            raise ValueError(f"output gradient shape {g.shape} does not match {out.shape}")
        grad = np.zeros_like(self.params)
        layers = self.unpack()
        gw_views = self.unpack(grad)
        delta = g
        for li in range(len(layers) - 1, -1, -1):
            w, _ = layers[li]
            h_out = _act(self.activations[li], preacts[li])
            delta = delta * _act_grad(self.activations[li], preacts[li], h_out)
            gw, gb = gw_views[li]
            gw += inputs[li].T @ delta
            gb += delta.sum(axis=0)
            if li > 0:
                delta = delta @ w.T
        return grad

    def copy(self) -> "Mlp":
        dup = object.__new__(Mlp)
        dup.layer_dims = list(self.layer_dims)
        dup.activations = list(self.activations)
        dup.params = self.params.copy()
        dup._cache = None
        return dup


class AdamW:
    """Adaptive moment optimizer with decoupled weight decay.

    State (step count and both moment vectors) can be reset without touching
    the hyperparameters, which matters when a training loop deliberately
    discards stale moments.
    """

    def __init__(
        self,
        n_params: int,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.first_moment = np.zeros(n_params, dtype=np.float64)
        self.second_moment = np.zeros(n_params, dtype=np.float64)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if params.shape != self.first_moment.shape or grad.shape != params.shape:
            raise ValueError("parameter/gradient shape does not match optimizer state")
        if not np.all(np.isfinite(grad)):
            bad = int(np.flatnonzero(~np.isfinite(grad))[0])
            raise ValueError(f"non-finite gradient (first bad entry at index {bad})")
        self.step_count += 1
        t = self.step_count
        self.first_moment = self.beta1 * self.first_moment + (1.0 - self.beta1) * grad
        self.second_moment = self.beta2 * self.second_moment + (1.0 - self.beta2) * grad * grad
        m_hat = self.first_moment / (1.0 - self.beta1**t)
        v_hat = self.second_moment / (1.0 - self.beta2**t)
        update = m_hat / (np.sqrt(v_hat) + self.eps)
        if self.weight_decay != 0.0:
            update = update + self.weight_decay * params
        return params - self.lr * update

    def reset(self) -> None:
        self.step_count = 0
        self.first_moment[:] = 0.0
        self.second_moment[:] = 0.0


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    return params - lr * grad


def params_fingerprint(arrays: list[np.ndarray]) -> str:
    """Short stable identifier for a set of parameter vectors."""
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:12]


# --- checkpoint files -------------------------------------------------------
#
# Text format, one value per line so files diff cleanly:
#
#   ckpt v1
#   meta <key> <value>          (zero or more)
#   array <name> <length>
#   <repr of float64>           (length lines)
#   ...
#   end

_CKPT_HEADER = "ckpt v1"


def save_checkpoint(path, meta: dict[str, str], arrays: dict[str, np.ndarray]) -> None:
    lines = [_CKPT_HEADER]
    for key, value in meta.items():
        if any(c.isspace() for c in key):
            raise ValueError(f"checkpoint meta key {key!r} must not contain whitespace")
        lines.append(f"meta {key} {value}")
    for name, arr in arrays.items():
        flat = np.ascontiguousarray(arr, dtype=np.float64).ravel()
        lines.append(f"array {name} {flat.size}")
        lines.extend(repr(float(v)) for v in flat)
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CKPT_HEADER:
        raise ValueError(f"{path}: not a checkpoint file (bad header)")
    meta: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line == "end":
            return meta, arrays
        if line.startswith("meta "):
            _, key, value = line.split(" ", 2)
            meta[key] = value
            i += 1
        elif line.startswith("array "):
            _, name, length = line.split(" ")
            n = int(length)
            vals = lines[i + 1 : i + 1 + n]
            if len(vals) != n:
                raise ValueError(f"{path}: array {name!r} truncated")
            arrays[name] = np.array([float(v) for v in vals], dtype=np.float64)
            i += 1 + n
        else:
            raise ValueError(f"{path}: unexpected line {i + 1}: {line!r}")
    raise ValueError(f"{path}: missing end marker (truncated file)")


def save_mlp(path, net: Mlp, extra_meta: dict[str, str] | None = None) -> None:
    meta = {
        "kind": "mlp",
        "layer_dims": ",".join(str(d) for d in net.layer_dims),
        "activations": ",".join(net.activations),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, meta, {"params": net.params})


def load_mlp(path) -> tuple[Mlp, dict[str, str]]:
    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "mlp":
        raise ValueError(f"{path}: checkpoint is not an mlp (kind={meta.get('kind')!r})")
    layer_dims = [int(d) for d in meta["layer_dims"].split(",")]
    activations = meta["activations"].split(",")
    net = object.__new__(Mlp)
    net.layer_dims = layer_dims
    net.activations = activations
    net.params = arrays["params"].copy()
    net._cache = None
    if net.params.size != param_count(layer_dims):
        raise ValueError(f"{path}: parameter vector length does not match layer dims")
    return net, meta
