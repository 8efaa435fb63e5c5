"""Pure-Python reference kernels.

Used when the compiled extension is unavailable or when
``SEQSTRUCT_KERNELS=python`` is set.  Semantics must stay identical to
``_ckernels.pyx``; the test suite runs both against the same oracles.
"""

from collections import Counter, deque

import numpy as np


def count_windows(items, offsets, n):
    """Count every run of ``n`` consecutive items inside each segment.

    Segment ``s`` is ``items[offsets[s]:offsets[s + 1]]``; windows never
    cross a segment boundary.

    Returns:
        (keys, counts): ``keys`` is an int64 array of shape (m, n) sorted
        lexicographically, ``counts`` the matching int64 occurrence counts.
    """
    seq = np.asarray(items, dtype=np.int64).tolist()
    off = np.asarray(offsets, dtype=np.int64).tolist()
    table = Counter()
    for start, stop in zip(off[:-1], off[1:]):
        for j in range(start, stop - n + 1):
            table[tuple(seq[j:j + n])] += 1
    keys = sorted(table)
    return (
        np.array(keys, dtype=np.int64).reshape(-1, n),
        np.array([table[key] for key in keys], dtype=np.int64),
    )


def kcore_mask(users, items, n_users, n_items, k):
    """Keep-mask of the maximal subset where every user and item has >= k rows.

    Degrees count interactions (rows), so repeated (user, item) pairs count
    more than once.  Peeling order does not affect the result.
    """
    users = np.asarray(users, dtype=np.int64).tolist()
    items = np.asarray(items, dtype=np.int64).tolist()
    user_rows = [[] for _ in range(n_users)]
    item_rows = [[] for _ in range(n_items)]
    for row, (u, i) in enumerate(zip(users, items)):
        user_rows[u].append(row)
        item_rows[i].append(row)
    user_deg = [len(r) for r in user_rows]
    item_deg = [len(r) for r in item_rows]
    alive = [True] * len(users)
    user_gone = [False] * n_users
    item_gone = [False] * n_items

    # negative ids are items: node -1 - i
    queue = deque()
    for u in range(n_users):
        if user_deg[u] < k:
            user_gone[u] = True
            queue.append(u)
    for i in range(n_items):
        if item_deg[i] < k:
            item_gone[i] = True
            queue.append(-1 - i)

    while queue:
        node = queue.popleft()
        if node >= 0:
            for row in user_rows[node]:
                if not alive[row]:
                    continue
                alive[row] = False
                i = items[row]
                item_deg[i] -= 1
                if not item_gone[i] and item_deg[i] < k:
                    item_gone[i] = True
                    queue.append(-1 - i)
        else:
            for row in item_rows[-1 - node]:
                if not alive[row]:
                    continue
                alive[row] = False
                u = users[row]
                user_deg[u] -= 1
                if not user_gone[u] and user_deg[u] < k:
                    user_gone[u] = True
                    queue.append(u)
    return np.array(alive, dtype=bool)
