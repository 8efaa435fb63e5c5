"""Sequential association rules of order 1 and 2 and their shuffle delta.

A rule of order ``L`` is an ``(L + 1)``-gram of consecutive items read as
``prefix -> last item``.  Support is the n-gram's occurrence count;
confidence divides it by the occurrence count of the prefix (the item
itself anywhere in the corpus for 2-grams, the consecutive pair for
3-grams).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from seqstruct import kernels
from seqstruct.data import InteractionLog
from seqstruct.protocol import shuffle_log


@dataclass
class NGramTable:
    n: int
    keys: np.ndarray
    counts: np.ndarray
    unigram_counts: np.ndarray
    prefix_keys: np.ndarray | None = None
    prefix_counts: np.ndarray | None = None

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(k): int(c) for k, c in zip(self.keys.tolist(), self.counts.tolist())}

    def prefix_dict(self) -> dict[tuple[int, int], int]:
        if self.prefix_keys is None:
            return {}
        return {tuple(k): int(c) for k, c in zip(self.prefix_keys.tolist(), self.prefix_counts.tolist())}


def _flatten(sequences: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    arrays = [np.asarray(s, dtype=np.int64) for s in sequences]
    lengths = np.array([len(a) for a in arrays], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    flat = np.concatenate(arrays) if arrays else np.zeros(0, dtype=np.int64)
    return flat, offsets


def count_ngrams(sequences: Sequence[Sequence[int]], n: int, n_items: int | None = None) -> NGramTable:
    """Count consecutive n-grams (n = 2 or 3) within each user sequence."""
    if n not in (2, 3):
        raise ValueError(f"n must be 2 or 3, got {n}")
    flat, offsets = _flatten(sequences)
    if n_items is None:
        n_items = int(flat.max()) + 1 if len(flat) else 0
    unigram = np.bincount(flat, minlength=n_items).astype(np.int64)
    keys, counts = kernels.count_windows(flat, offsets, n)
    table = NGramTable(n=n, keys=keys, counts=counts, unigram_counts=unigram)
    if n == 3:
        table.prefix_keys, table.prefix_counts = kernels.count_windows(flat, offsets, 2)
    return table


def _lookup_pairs(pair_keys: np.ndarray, pair_counts: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Counts of ``query`` rows (m, 2) in a lexicographically sorted pair table."""
    if len(query) == 0:
        return np.zeros(0, dtype=np.int64)
    base = int(max(pair_keys.max(), query.max())) + 1
    table_code = pair_keys[:, 0] * base + pair_keys[:, 1]
    query_code = query[:, 0] * base + query[:, 1]
    pos = np.searchsorted(table_code, query_code)
    # every 3-gram prefix occurs as a pair, so lookups always hit
    assert np.all(table_code[pos] == query_code)
    return pair_counts[pos]


def rule_mask(table: NGramTable, min_support: int, min_confidence: float) -> np.ndarray:
    """Which n-grams qualify as rules; both thresholds are inclusive."""
    if table.n == 2:
        denom = table.unigram_counts[table.keys[:, 0]] if len(table.keys) else np.ones(0)
    else:
        denom = _lookup_pairs(table.prefix_keys, table.prefix_counts, table.keys[:, :2])
    # true division is correctly rounded, so 3/30 >= 0.1 holds exactly
    confidence = table.counts / np.maximum(denom, 1)
    return (table.counts >= min_support) & (confidence >= min_confidence)


def count_rules(table: NGramTable, min_support: int = 5, min_confidence: float = 0.1) -> int:
    if min_support <= 0 or min_confidence <= 0:
        raise ValueError("thresholds must be positive")
    return int(rule_mask(table, min_support, min_confidence).sum())


@dataclass
class RuleStats:
    n: int
    support_threshold: int
    confidence_threshold: float
    rules_before: int
    per_seed_after: list[int] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    @property
    def rules_after_mean(self) -> float:
        return float(np.mean(self.per_seed_after))

    @property
    def relative_change(self) -> float | None:
        if self.rules_before <= 0:
            return None
        return (self.rules_after_mean - self.rules_before) / self.rules_before

    @property
    def insufficient(self) -> bool:
        return self.rules_before == 0

    def to_dict(self) -> dict:
        return {
            "order": self.n - 1,
            "n": self.n,
            "support_threshold": self.support_threshold,
            "confidence_threshold": self.confidence_threshold,
            "rules_before": self.rules_before,
            "rules_after_mean": self.rules_after_mean,
            "per_seed_after": list(self.per_seed_after),
            "seeds": list(self.seeds),
            "relative_change": self.relative_change,
            "insufficient_rules": self.insufficient,
        }


def rule_shuffle_delta(
    log_: InteractionLog,
    n: int,
    min_support: int = 5,
    min_confidence: float = 0.1,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
) -> RuleStats:
    if not seeds:
        raise ValueError("at least one seed required")
    before = count_rules(count_ngrams(log_.sequences(), n, log_.n_items), min_support, min_confidence)
    after = []
    for seed in seeds:
        shuffled = shuffle_log(log_, seed)
        after.append(count_rules(count_ngrams(shuffled.sequences(), n, log_.n_items), min_support, min_confidence))
    return RuleStats(
        n=n,
        support_threshold=min_support,
        confidence_threshold=min_confidence,
        rules_before=before,
        per_seed_after=after,
        seeds=[int(s) for s in seeds],
    )


def list_rules(table: NGramTable, min_support: int = 5, min_confidence: float = 0.1) -> list[dict]:
    """Qualifying rules with support and confidence, for debugging output."""
    mask = rule_mask(table, min_support, min_confidence)
    keys, counts = table.keys[mask], table.counts[mask]
    if table.n == 2:
        denom = table.unigram_counts[keys[:, 0]]
    else:
        denom = _lookup_pairs(table.prefix_keys, table.prefix_counts, keys[:, :2])
    return [
        {"antecedent": k[:-1], "consequent": k[-1], "support": int(c), "confidence": float(c) / float(d)}
        for k, c, d in zip(keys.tolist(), counts.tolist(), denom.tolist())
    ]
