"""Brute-force reference implementations used as test oracles."""

from collections import Counter

import numpy as np


def ngrams(sequences, n):
    out = Counter()
    for seq in sequences:
        seq = list(seq)
        for j in range(len(seq) - n + 1):
            out[tuple(seq[j:j + n])] += 1
    return out


def rule_count(sequences, n, min_support, min_confidence):
    grams = ngrams(sequences, n)
    unigrams = Counter(x for seq in sequences for x in seq)
    pairs = ngrams(sequences, 2)
    total = 0
    for gram, support in grams.items():
        denom = unigrams[gram[0]] if n == 2 else pairs[gram[:2]]
        if support >= min_support and support / denom >= min_confidence:
            total += 1
    return total


def kcore_rows(rows, k):
    """Delete rows of under-populated users/items and rescan until nothing changes."""
    rows = list(rows)
    while True:
        users = Counter(r[0] for r in rows)
        items = Counter(r[1] for r in rows)
        kept = [r for r in rows if users[r[0]] >= k and items[r[1]] >= k]
        if len(kept) == len(rows):
            return kept
        rows = kept


def random_corpus(rng, max_users=10, max_items=8, max_len=12):
    n_users = int(rng.integers(1, max_users + 1))
    n_items = int(rng.integers(1, max_items + 1))
    return [rng.integers(0, n_items, size=int(rng.integers(0, max_len + 1))).tolist() for _ in range(n_users)]


def random_rows(rng, max_users=8, max_items=8, max_rows=40):
    n = int(rng.integers(0, max_rows + 1))
    nu = int(rng.integers(1, max_users + 1))
    ni = int(rng.integers(1, max_items + 1))
    return [(f"u{rng.integers(nu)}", f"i{rng.integers(ni)}", float(t)) for t in range(n)]


def rows_csv(rows):
    return "".join(f"{u},{i},{t}\n" for u, i, t in rows)


def log_rows(log_):
    """Multiset of (user id, item id, timestamp) rows, order-free."""
    return Counter((x.user, x.item, x.timestamp) for x in log_.interactions())


def numeric_grad(f, x, step=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + step
        hi = f()
        x[idx] = old - step
        lo = f()
        x[idx] = old
        g[idx] = (hi - lo) / (2 * step)
    return g
