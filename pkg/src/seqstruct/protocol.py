"""Global-temporal + leave-one-out split and seeded per-user shuffles."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from seqstruct.data import InteractionLog, sort_by_user_time

log = logging.getLogger(__name__)


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class EvalInstance:
    user: int
    input: tuple[int, ...]
    target: int


@dataclass
class SplitBundle:
    train_sequences: dict[int, np.ndarray]
    val_instances: list[EvalInstance]
    test_instances: list[EvalInstance]
    boundary_ts: float
    n_items: int
    config: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def train_items(self) -> np.ndarray:
        """Boolean mask over item indices: True if the item occurs in training."""
        seen = np.zeros(self.n_items, dtype=bool)
        for seq in self.train_sequences.values():
            seen[seq] = True
        return seen


def user_rng(seed: int, user: int) -> np.random.Generator:
    """Generator keyed by (seed, user), independent of iteration order."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, int(user)])


def temporal_boundary(log_: InteractionLog, q: float) -> float:
    """Smallest T such that at least ceil(q * N) interactions have timestamp <= T."""
    if not 0 < q < 1:
        raise SplitError(f"q must be in (0, 1), got {q}")
    n = len(log_)
    if n == 0:
        raise SplitError("cannot place a temporal boundary on an empty log")
    # guard against q * n landing a hair above an integer (0.7 * 10 = 7.000000000000001)
    need = max(1, math.ceil(q * n - 1e-9))
    return float(np.partition(log_.timestamps, need - 1)[need - 1])


def build_split(
    log_: InteractionLog,
    q: float = 0.9,
    val_user_fraction: float = 0.1,
    seed: int = 0,
) -> SplitBundle:
    if not 0 <= val_user_fraction < 1:
        raise SplitError(f"val_user_fraction must be in [0, 1), got {val_user_fraction}")
    boundary = temporal_boundary(log_, q)
    ordered = log_ if log_.is_sorted() else sort_by_user_time(log_)
    off = ordered.user_offsets()
    items, stamps = ordered.items, ordered.timestamps

    pre_users, test_users = [], []
    for u in range(ordered.n_users):
        ts = stamps[off[u]:off[u + 1]]
        if ts[0] <= boundary:
            pre_users.append(u)
        if ts[-1] > boundary:
            test_users.append(u)
    if not test_users:
        raise SplitError("no test users: no interactions after the temporal boundary")

    rng = np.random.default_rng(seed)
    n_val = int(round(val_user_fraction * len(pre_users)))
    perm = rng.permutation(len(pre_users))
    val_set = {pre_users[j] for j in perm[:n_val]}
    if val_user_fraction > 0 and n_val == 0:
        log.warning("validation fraction %.3f selects no users", val_user_fraction)
    if n_val == 0:
        log.warning("empty validation set; early stopping falls back to max_epochs")

    train_sequences: dict[int, np.ndarray] = {}
    val_candidates: list[EvalInstance] = []
    for u in pre_users:
        lo, hi = off[u], off[u + 1]
        cut = lo + int(np.searchsorted(stamps[lo:hi], boundary, side="right"))
        seq = items[lo:cut]
        if u in val_set:
            if len(seq) >= 2:
                val_candidates.append(EvalInstance(u, tuple(seq[:-1].tolist()), int(seq[-1])))
        else:
            train_sequences[u] = seq.copy()
    if not train_sequences:
        raise SplitError("empty train partition")

    seen = np.zeros(ordered.n_items, dtype=bool)
    for seq in train_sequences.values():
        seen[seq] = True

    test_candidates: list[EvalInstance] = []
    empty_input = 0
    for u in test_users:
        seq = items[off[u]:off[u + 1]]
        if len(seq) < 2:
            empty_input += 1
            continue
        test_candidates.append(EvalInstance(u, tuple(seq[:-1].tolist()), int(seq[-1])))

    val = [inst for inst in val_candidates if seen[inst.target]]
    test = [inst for inst in test_candidates if seen[inst.target]]
    counts = {
        "n_pre_boundary_users": len(pre_users),
        "n_train_users": len(train_sequences),
        "n_val_users": len(val),
        "n_test_users": len(test),
        "val_dropped_unseen_target": len(val_candidates) - len(val),
        "test_dropped_empty_input": empty_input,
        "test_dropped_unseen_target": len(test_candidates) - len(test),
    }
    if counts["test_dropped_unseen_target"]:
        log.info("dropped %d test targets unseen in training", counts["test_dropped_unseen_target"])
    if not test:
        raise SplitError("no test users left after dropping unseen targets")
    return SplitBundle(
        train_sequences=train_sequences,
        val_instances=val,
        test_instances=test,
        boundary_ts=boundary,
        n_items=ordered.n_items,
        config={"q": q, "val_user_fraction": val_user_fraction, "seed": seed},
        counts=counts,
    )


def shuffle_instance(instance: EvalInstance, seed: int) -> EvalInstance:
    """Permute the input uniformly at random; the target is left alone."""
    if len(instance.input) < 2:
        return instance
    perm = user_rng(seed, instance.user).permutation(len(instance.input))
    return replace(instance, input=tuple(instance.input[j] for j in perm))


def shuffle_log(log_: InteractionLog, seed: int) -> InteractionLog:
    """Permute each user's item sequence; the sorted timestamp slots stay put."""
    ordered = log_ if log_.is_sorted() else sort_by_user_time(log_)
    off = ordered.user_offsets()
    items = ordered.items.copy()
    for u in range(ordered.n_users):
        lo, hi = off[u], off[u + 1]
        if hi - lo > 1:
            items[lo:hi] = items[lo:hi][user_rng(seed, u).permutation(hi - lo)]
    return replace(ordered, items=items, event_types=None)


def save_split(bundle: SplitBundle, directory) -> None:
    """Persist as train.tsv / val.tsv / test.tsv plus manifest.json.

    Sequences are space-separated dense item indices.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "train.tsv", "w") as fh:
        fh.write("user\titems\n")
        for u in sorted(bundle.train_sequences):
            fh.write(f"{u}\t{' '.join(map(str, bundle.train_sequences[u].tolist()))}\n")
    for name, instances in (("val", bundle.val_instances), ("test", bundle.test_instances)):
        with open(directory / f"{name}.tsv", "w") as fh:
            fh.write("user\tinput\ttarget\n")
            for inst in instances:
                fh.write(f"{inst.user}\t{' '.join(map(str, inst.input))}\t{inst.target}\n")
    manifest = {
        "boundary_ts": bundle.boundary_ts,
        "n_items": bundle.n_items,
        "config": bundle.config,
        "counts": bundle.counts,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_split(directory) -> SplitBundle:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    train: dict[int, np.ndarray] = {}
    with open(directory / "train.tsv") as fh:
        next(fh)
        for line in fh:
            user, seq = line.rstrip("\n").split("\t")
            train[int(user)] = np.array(seq.split(), dtype=np.int64)

    def _read(name):
        out = []
        with open(directory / f"{name}.tsv") as fh:
            next(fh)
            for line in fh:
                user, inp, target = line.rstrip("\n").split("\t")
                out.append(EvalInstance(int(user), tuple(int(x) for x in inp.split()), int(target)))
        return out

    return SplitBundle(
        train_sequences=train,
        val_instances=_read("val"),
        test_instances=_read("test"),
        boundary_ts=manifest["boundary_ts"],
        n_items=manifest["n_items"],
        config=manifest["config"],
        counts=manifest["counts"],
    )
