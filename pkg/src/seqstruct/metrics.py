"""Ranking metrics, top-K overlap, relative change, rank correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from seqstruct.models.base import ScoredList, top_k
from seqstruct.protocol import EvalInstance, shuffle_instance

# default weak-structure thresholds
ACCURACY_WEAK_ABOVE = -0.10
JACCARD_WEAK_ABOVE = 1.0 / 3.0
RULES_WEAK_ABOVE = -0.90


def _items(recs) -> Sequence[int]:
    return recs.items if isinstance(recs, ScoredList) else recs


def hit_rate_at_k(recs, target: int, k: int = 10) -> int:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return int(target in _items(recs)[:k])


def ndcg_at_k(recs, target: int, k: int = 10) -> float:
    """Single-relevant-item NDCG: 1 / log2(rank + 1) inside the top k, else 0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    items = list(_items(recs)[:k])
    if target not in items:
        return 0.0
    return 1.0 / math.log2(items.index(target) + 2)


def jaccard_at_k(a, b, k: int = 10) -> float:
    sa, sb = set(_items(a)[:k]), set(_items(b)[:k])
    if not sa or not sb:
        raise ValueError("jaccard_at_k needs two non-empty lists")
    return len(sa & sb) / len(sa | sb)


def relative_change(before: float | None, after: float | None) -> float | None:
    """(after - before) / before; None when undefined (before is 0 or missing)."""
    if before is None or after is None or before == 0:
        return None
    return (after - before) / before


def average_ranks(values: Sequence[float], descending: bool = False) -> np.ndarray:
    """1-based ranks, ties sharing their mean rank."""
    x = np.asarray(values, dtype=np.float64)
    if descending:
        x = -x
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson correlation of average ranks; None if either side is constant."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("spearman needs at least two points")
    rx, ry = average_ranks(xs), average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx * rx).sum()) * float((ry * ry).sum()))
    if denom == 0:
        return None
    return max(-1.0, min(1.0, float((rx * ry).sum()) / denom))


@dataclass
class EvalResult:
    hr: float
    ndcg: float
    k: int
    lists: dict[int, ScoredList] = field(default_factory=dict)
    hits: dict[int, int] = field(default_factory=dict)
    gains: dict[int, float] = field(default_factory=dict)
    skipped: int = 0
    shuffle_seed: int | None = None

    @property
    def n_evaluated(self) -> int:
        return len(self.lists)


def evaluate_split(
    model,
    instances: Sequence[EvalInstance],
    k: int = 10,
    shuffle_seed: int | None = None,
    batch_size: int = 256,
) -> EvalResult:
    """Mean HR@k / NDCG@k over instances, optionally with shuffled inputs.

    Instances whose input is empty after dropping items unseen in training
    are skipped and counted.
    """
    if not instances:
        raise ValueError("evaluate_split needs at least one instance")
    prepared = []
    skipped = 0
    for inst in instances:
        if shuffle_seed is not None:
            inst = shuffle_instance(inst, shuffle_seed)
        seq = model.prepare_input(inst.input)
        if not seq:
            skipped += 1
            continue
        prepared.append((inst, seq))
    if not prepared:
        raise ValueError(f"all {len(instances)} instances were skipped")

    result = EvalResult(0.0, 0.0, k, skipped=skipped, shuffle_seed=shuffle_seed)
    for start in range(0, len(prepared), batch_size):
        chunk = prepared[start:start + batch_size]
        scores = model.score_batch([seq for _, seq in chunk])
        best = top_k(scores, k)
        for (inst, _), idx, row in zip(chunk, best, scores):
            recs = ScoredList(inst.user, tuple(idx.tolist()), tuple(row[idx].tolist()))
            result.lists[inst.user] = recs
            result.hits[inst.user] = hit_rate_at_k(recs, inst.target, k)
            result.gains[inst.user] = ndcg_at_k(recs, inst.target, k)
    n = len(result.lists)
    result.hr = math.fsum(result.hits.values()) / n
    result.ndcg = math.fsum(result.gains.values()) / n
    return result


def mean_jaccard(original: EvalResult, shuffled: EvalResult, k: int = 10) -> float:
    users = sorted(set(original.lists) & set(shuffled.lists))
    if not users:
        raise ValueError("no user evaluated in both runs")
    return math.fsum(jaccard_at_k(original.lists[u], shuffled.lists[u], k) for u in users) / len(users)


def rank_metric(values: Sequence[float | None], lower_is_stronger: bool = True) -> tuple[np.ndarray, list[bool]]:
    """Rank datasets on one diagnostic: rank 1 = strongest sequential structure.

    For relative changes and Jaccard alike, lower means stronger.  Undefined
    values share the last ranks and are flagged.
    """
    defined = [v is not None and not (isinstance(v, float) and math.isnan(v)) for v in values]
    sentinel = math.inf if lower_is_stronger else -math.inf
    filled = [float(v) if ok else sentinel for v, ok in zip(values, defined)]
    ranks = average_ranks(filled, descending=not lower_is_stronger)
    return ranks, [not ok for ok in defined]


def rank_datasets(rows: list[dict], metrics: Sequence[str], order_by: Sequence[str]) -> dict:
    """Per-metric ranks plus an overall order by the mean rank over ``order_by``.

    ``rows`` are dicts with a ``name`` and the metric values (None when
    undefined).
    """
    if len(rows) < 2:
        raise ValueError("ranking needs at least two datasets")
    ranks = {}
    flagged = {}
    for m in metrics:
        r, undefined = rank_metric([row.get(m) for row in rows])
        ranks[m] = r.tolist()
        flagged[m] = [row["name"] for row, bad in zip(rows, undefined) if bad]
    key = [float(np.mean([ranks[m][j] for m in order_by])) for j in range(len(rows))]
    order = sorted(range(len(rows)), key=lambda j: (key[j], rows[j]["name"]))
    return {
        "names": [row["name"] for row in rows],
        "ranks": ranks,
        "mean_order_rank": key,
        "order": [rows[j]["name"] for j in order],
        "undefined": flagged,
    }
