"""Seeded synthetic corpora with known sequential structure.

``markov``: each item has one dominant successor that follows it with
probability ``dominant_prob``; otherwise the next item is uniform over the
items that are neither the dominant successor nor the current item, so the
chain never produces a consecutive repeat.

``exchangeable``: each user draws items i.i.d. from a Dirichlet preference
over a personal subset; order carries no information.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from seqstruct.data import InteractionLog, Vocab

KINDS = ("markov", "exchangeable")


@dataclass
class SynthConfig:
    kind: str = "markov"
    n_users: int = 2000
    n_items: int | None = None
    length: int = 50
    dominant_prob: float = 0.8
    subset_size: int = 20
    concentration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.n_items is None:
            self.n_items = 200 if self.kind == "markov" else 500
        if not 0 < self.dominant_prob < 1:
            raise ValueError(f"dominant_prob must be in (0, 1), got {self.dominant_prob}")
        if self.n_items < 2:
            raise ValueError(f"n_items must be >= 2, got {self.n_items}")
        if self.length < 2:
            raise ValueError(f"length must be >= 2, got {self.length}")
        if self.n_users < 1:
            raise ValueError(f"n_users must be >= 1, got {self.n_users}")
        if self.kind == "exchangeable" and not 1 <= self.subset_size <= self.n_items:
            raise ValueError(f"subset_size must be in [1, n_items], got {self.subset_size}")

    def to_dict(self) -> dict:
        return asdict(self)


def _log_from_matrix(items: np.ndarray) -> InteractionLog:
    # ids are "i<k>" for generator item k; take() then re-densifies indices
    n_users, length = items.shape
    n_items = int(items.max()) + 1
    full = InteractionLog(
        users=np.repeat(np.arange(n_users, dtype=np.int64), length),
        items=items.reshape(-1).astype(np.int64),
        timestamps=np.tile(np.arange(length, dtype=np.float64), n_users),
        user_vocab=Vocab([f"u{u}" for u in range(n_users)]),
        item_vocab=Vocab([f"i{i}" for i in range(n_items)]),
    )
    return full.take(np.ones(len(full.users), dtype=bool))


def markov_successors(config: SynthConfig) -> np.ndarray:
    """The dominant-successor map: a permutation without fixed points."""
    rng = np.random.default_rng([config.seed, 0])
    n = config.n_items
    while True:
        succ = rng.permutation(n)
        if not np.any(succ == np.arange(n)):
            return succ


def gen_markov(config: SynthConfig) -> InteractionLog:
    succ = markov_successors(config)
    rng = np.random.default_rng([config.seed, 1])
    n, users = config.n_items, config.n_users
    seq = np.empty((users, config.length), dtype=np.int64)
    seq[:, 0] = rng.integers(n, size=users)
    for t in range(1, config.length):
        cur = seq[:, t - 1]
        dom = succ[cur]
        follow = rng.random(users) < config.dominant_prob
        if n >= 3:
            lo, hi = np.minimum(cur, dom), np.maximum(cur, dom)
            other = rng.integers(n - 2, size=users)
            other += other >= lo
            other += other >= hi
        else:
            other = cur.copy()
        seq[:, t] = np.where(follow, dom, other)
    return _log_from_matrix(seq)


def gen_exchangeable(config: SynthConfig) -> InteractionLog:
    rng = np.random.default_rng([config.seed, 2])
    n, users, size = config.n_items, config.n_users, config.subset_size
    seq = np.empty((users, config.length), dtype=np.int64)
    for u in range(users):
        subset = rng.choice(n, size=size, replace=False)
        weights = rng.dirichlet(np.full(size, config.concentration))
        seq[u] = subset[rng.choice(size, size=config.length, p=weights)]
    return _log_from_matrix(seq)


def generate(config: SynthConfig) -> InteractionLog:
    return gen_markov(config) if config.kind == "markov" else gen_exchangeable(config)


def write_log(log_: InteractionLog, path) -> None:
    """CSV with a ``user,item,timestamp`` header, readable by the parser defaults for synth files."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "item", "timestamp"])
        for u, i, t in zip(log_.users.tolist(), log_.items.tolist(), log_.timestamps.tolist()):
            w.writerow([log_.user_vocab.ids[u], log_.item_vocab.ids[i], int(t)])
