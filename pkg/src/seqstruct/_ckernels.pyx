# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled counterparts of ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from libcpp.algorithm cimport sort
from cython.operator cimport dereference as deref, preincrement as inc

cnp.import_array()

# 2**63 - 1; encoded keys must stay below this
cdef int64_t _KEY_LIMIT = 9223372036854775807


def count_windows(items, offsets, int n):
    cdef cnp.int64_t[::1] seq = np.ascontiguousarray(items, dtype=np.int64)
    cdef cnp.int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    if seq.shape[0] == 0:
        return np.zeros((0, n), dtype=np.int64), np.zeros(0, dtype=np.int64)
    py_base = int(np.max(seq)) + 1
    if py_base ** n > _KEY_LIMIT:
        raise OverflowError("item vocabulary too large for encoded window keys")
    cdef int64_t base = py_base

    cdef unordered_map[int64_t, int64_t] table
    cdef Py_ssize_t s, j, t
    cdef int64_t key, start, stop
    for s in range(off.shape[0] - 1):
        start = off[s]
        stop = off[s + 1]
        for j in range(start, stop - n + 1):
            key = 0
            for t in range(n):
                key = key * base + seq[j + t]
            table[key] += 1

    cdef vector[int64_t] keys
    keys.reserve(table.size())
    cdef unordered_map[int64_t, int64_t].iterator it = table.begin()
    while it != table.end():
        keys.push_back(deref(it).first)
        inc(it)
    sort(keys.begin(), keys.end())

    cdef Py_ssize_t m = keys.size()
    out_keys = np.empty((m, n), dtype=np.int64)
    out_counts = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] ok = out_keys
    cdef cnp.int64_t[::1] oc = out_counts
    for j in range(m):
        key = keys[j]
        oc[j] = table[key]
        for t in range(n - 1, -1, -1):
            ok[j, t] = key % base
            key = key // base
    return out_keys, out_counts


def kcore_mask(users, items, Py_ssize_t n_users, Py_ssize_t n_items, int64_t k):
    cdef cnp.int64_t[::1] us = np.ascontiguousarray(users, dtype=np.int64)
    cdef cnp.int64_t[::1] its = np.ascontiguousarray(items, dtype=np.int64)
    cdef Py_ssize_t n_rows = us.shape[0]

    # CSR adjacency: rows grouped by user and by item
    user_order = np.argsort(users, kind="stable").astype(np.int64)
    item_order = np.argsort(items, kind="stable").astype(np.int64)
    user_ptr_a = np.zeros(n_users + 1, dtype=np.int64)
    item_ptr_a = np.zeros(n_items + 1, dtype=np.int64)
    np.cumsum(np.bincount(users, minlength=n_users), out=user_ptr_a[1:])
    np.cumsum(np.bincount(items, minlength=n_items), out=item_ptr_a[1:])
    cdef cnp.int64_t[::1] uo = user_order
    cdef cnp.int64_t[::1] io = item_order
    cdef cnp.int64_t[::1] up = user_ptr_a
    cdef cnp.int64_t[::1] ip = item_ptr_a

    user_deg_a = np.diff(user_ptr_a)
    item_deg_a = np.diff(item_ptr_a)
    cdef cnp.int64_t[::1] udeg = user_deg_a
    cdef cnp.int64_t[::1] ideg = item_deg_a

    alive_a = np.ones(n_rows, dtype=np.uint8)
    user_gone_a = np.zeros(n_users, dtype=np.uint8)
    item_gone_a = np.zeros(n_items, dtype=np.uint8)
    cdef cnp.uint8_t[::1] alive = alive_a
    cdef cnp.uint8_t[::1] ugone = user_gone_a
    cdef cnp.uint8_t[::1] igone = item_gone_a

    cdef vector[int64_t] queue
    cdef Py_ssize_t u, i, r, row, head = 0
    cdef int64_t node
    for u in range(n_users):
        if udeg[u] < k:
            ugone[u] = 1
            queue.push_back(u)
    for i in range(n_items):
        if ideg[i] < k:
            igone[i] = 1
            queue.push_back(-1 - i)

    while head < <Py_ssize_t>queue.size():
        node = queue[head]
        head += 1
        if node >= 0:
            for r in range(up[node], up[node + 1]):
                row = uo[r]
                if not alive[row]:
                    continue
                alive[row] = 0
                i = its[row]
                ideg[i] -= 1
                if not igone[i] and ideg[i] < k:
                    igone[i] = 1
                    queue.push_back(-1 - i)
        else:
            i = -1 - node
            for r in range(ip[i], ip[i + 1]):
                row = io[r]
                if not alive[row]:
                    continue
                alive[row] = 0
                u = us[row]
                udeg[u] -= 1
                if not ugone[u] and udeg[u] < k:
                    ugone[u] = 1
                    queue.push_back(u)
    return alive_a.astype(bool)
