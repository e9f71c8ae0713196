"""Preference-pair dataset: generation from a behavior policy, gold labeling
and plain-text persistence.

Each pair stores the behavior policy's log-densities of both actions at
generation time, so later off-policy corrections never have to re-evaluate
(or even see) the policy that produced the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MAX_TIE_ROUNDS = 1000


@dataclass
class PreferencePair:
    state: int
    action_w: np.ndarray | int
    action_l: np.ndarray | int
    logp1_w: float
    logp1_l: float
    gold_w: float
    gold_l: float


class PreferenceDataset:
    """Columnar store of preference pairs from one behavior-policy snapshot."""

    def __init__(
        self,
        task_kind: str,
        states: np.ndarray,
        actions_w: np.ndarray,
        actions_l: np.ndarray,
        logp1_w: np.ndarray,
        logp1_l: np.ndarray,
        gold_w: np.ndarray,
        gold_l: np.ndarray,
        snapshot_id: str,
        seed: int,
    ):
        self.task_kind = task_kind
        self.states = np.asarray(states, dtype=np.int64)
        self.actions_w = np.asarray(actions_w)
        self.actions_l = np.asarray(actions_l)
        self.logp1_w = np.asarray(logp1_w, dtype=np.float64)
        self.logp1_l = np.asarray(logp1_l, dtype=np.float64)
        self.gold_w = np.asarray(gold_w, dtype=np.float64)
        self.gold_l = np.asarray(gold_l, dtype=np.float64)
        self.snapshot_id = snapshot_id
        self.seed = seed
        n = len(self.states)
        for arr in (self.actions_w, self.actions_l, self.logp1_w, self.logp1_l, self.gold_w, self.gold_l):
            if len(arr) != n:
                raise ValueError("dataset columns have inconsistent lengths")
        if np.any(self.gold_w <= self.gold_l):
            raise ValueError("winner gold reward must be strictly above loser on every row")
        if not (np.all(np.isfinite(self.logp1_w)) and np.all(np.isfinite(self.logp1_l))):
            raise ValueError("behavior log-densities must be finite")

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, j: int) -> PreferencePair:
        return PreferencePair(
            state=int(self.states[j]),
            action_w=self.actions_w[j],
            action_l=self.actions_l[j],
            logp1_w=float(self.logp1_w[j]),
            logp1_l=float(self.logp1_l[j]),
            gold_w=float(self.gold_w[j]),
            gold_l=float(self.gold_l[j]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PreferenceDataset):
            return NotImplemented
        return (
            self.task_kind == other.task_kind
            and self.snapshot_id == other.snapshot_id
            and self.seed == other.seed
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions_w, other.actions_w)
            and np.array_equal(self.actions_l, other.actions_l)
            and np.array_equal(self.logp1_w, other.logp1_w)
            and np.array_equal(self.logp1_l, other.logp1_l)
            and np.array_equal(self.gold_w, other.gold_w)
            and np.array_equal(self.gold_l, other.gold_l)
        )


def generate_dataset(sft, task, n_pairs: int, rng: np.random.Generator, seed: int = -1) -> PreferenceDataset:
    """Sample preference pairs from the behavior policy ``sft``.

    Per pair: draw a state, draw two i.i.d. actions, label the one with the
    higher gold score as winner. Gold ties are resampled (state included), so
    the strict winner>loser invariant holds on every stored row.
    """
    if n_pairs <= 0:
        raise ValueError("n_pairs must be positive")
    states = task.sample_state(rng, n_pairs)
    a0 = sft.sample(states, rng)
    a1 = sft.sample(states, rng)
    if task.kind == "continuous":
        g0 = task.gold_score(a0)
        g1 = task.gold_score(a1)
    else:
        g0 = task.gold_score(states, a0)
        g1 = task.gold_score(states, a1)

    rounds = 0
    tied = g0 == g1
    while np.any(tied):
        rounds += 1
        if rounds > _MAX_TIE_ROUNDS:
            raise RuntimeError("could not draw untied preference pairs (degenerate gold rewards)")
        idx = np.flatnonzero(tied)
        states[idx] = task.sample_state(rng, len(idx))
        ra0 = sft.sample(states[idx], rng)
        ra1 = sft.sample(states[idx], rng)
        a0[idx] = ra0
        a1[idx] = ra1
        if task.kind == "continuous":
            g0[idx] = task.gold_score(ra0)
            g1[idx] = task.gold_score(ra1)
        else:
            g0[idx] = task.gold_score(states[idx], ra0)
            g1[idx] = task.gold_score(states[idx], ra1)
        tied = g0 == g1

    win0 = g0 > g1
    if task.kind == "continuous":
        actions_w = np.where(win0[:, None], a0, a1)
        actions_l = np.where(win0[:, None], a1, a0)
    else:
        actions_w = np.where(win0, a0, a1)
        actions_l = np.where(win0, a1, a0)
    gold_w = np.where(win0, g0, g1)
    gold_l = np.where(win0, g1, g0)
    logp1_w = sft.log_prob(states, actions_w)
    logp1_l = sft.log_prob(states, actions_l)
    return PreferenceDataset(
        task_kind=task.kind,
        states=states,
        actions_w=actions_w,
        actions_l=actions_l,
        logp1_w=logp1_w,
        logp1_l=logp1_l,
        gold_w=gold_w,
        gold_l=gold_l,
        snapshot_id=sft.fingerprint(),
        seed=seed,
    )


def save_dataset(ds: PreferenceDataset, path) -> None:
    header = [
        "# prefdata v1",
        f"# task_kind {ds.task_kind}",
        f"# seed {ds.seed}",
        f"# snapshot {ds.snapshot_id}",
        f"# n_pairs {len(ds)}",
    ]
    # %.17g keeps enough digits that every float64 round-trips exactly.
    if ds.task_kind == "continuous":
        header.append("# columns state,aw0,aw1,al0,al1,logp1_w,logp1_l,gold_w,gold_l")
        fmt = "%d," + ",".join(["%.17g"] * 8)
        cols = [
            ds.actions_w[:, 0], ds.actions_w[:, 1], ds.actions_l[:, 0], ds.actions_l[:, 1],
            ds.logp1_w, ds.logp1_l, ds.gold_w, ds.gold_l,
        ]
        rows = [fmt % t for t in zip(ds.states.tolist(), *[c.tolist() for c in cols])]
    else:
        header.append("# columns state,aw,al,logp1_w,logp1_l,gold_w,gold_l")
        fmt = "%d,%d,%d," + ",".join(["%.17g"] * 4)
        cols = [ds.actions_w, ds.actions_l, ds.logp1_w, ds.logp1_l, ds.gold_w, ds.gold_l]
        rows = [fmt % t for t in zip(ds.states.tolist(), *[c.tolist() for c in cols])]
    with open(path, "w") as fh:
        fh.write("\n".join(header + rows) + "\n")


def load_dataset(path) -> PreferenceDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "# prefdata v1":
        raise ValueError(f"{path}: not a preference dataset file")
    meta: dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("# "):
            body_start = i
            break
        if i > 0:
            key, _, value = line[2:].partition(" ")
            meta[key] = value
    else:
        body_start = len(lines)
    task_kind = meta.get("task_kind")
    if task_kind not in ("continuous", "discrete"):
        raise ValueError(f"{path}: unknown task_kind {task_kind!r}")
    n_pairs = int(meta["n_pairs"])
    rows = lines[body_start:]
    if len(rows) != n_pairs:
        raise ValueError(f"{path}: expected {n_pairs} rows, found {len(rows)} (truncated or padded file)")
    n_cols = 9 if task_kind == "continuous" else 7
    try:
        data = np.loadtxt(rows, delimiter=",", dtype=np.float64, ndmin=2)
        if data.shape != (n_pairs, n_cols):
            raise ValueError("field count mismatch")
    except ValueError:
        # Slow diagnostic pass to name the offending row.
        for j, row in enumerate(rows):
            parts = row.split(",")
            if len(parts) != n_cols:
                raise ValueError(
                    f"{path}: row {j} has {len(parts)} fields, expected {n_cols}"
                ) from None
            try:
                [float(v) for v in parts]
            except ValueError:
                raise ValueError(f"{path}: row {j} has a non-numeric field") from None
        raise ValueError(f"{path}: malformed data block") from None
    states = data[:, 0].astype(np.int64)
    if task_kind == "continuous":
        return PreferenceDataset(
            task_kind, states, data[:, 1:3], data[:, 3:5], data[:, 5], data[:, 6],
            data[:, 7], data[:, 8], meta.get("snapshot", ""), int(meta.get("seed", -1)),
        )
    return PreferenceDataset(
        task_kind, states, data[:, 1].astype(np.int64), data[:, 2].astype(np.int64),
        data[:, 3], data[:, 4], data[:, 5], data[:, 6], meta.get("snapshot", ""),
        int(meta.get("seed", -1)),
    )
