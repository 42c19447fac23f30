# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: bounded reverse BFS, bounded reachability closure,
and bit-parallel logic simulation. Must match aigflow._kern_py exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def cone_members(cnp.int32_t[::1] indptr, cnp.int32_t[::1] preds, int root, int k):
    cdef int n = indptr.shape[0] - 1
    cdef cnp.int32_t[::1] dist = np.full(n, -1, dtype=np.int32)
    cdef cnp.int32_t[::1] queue = np.empty(n, dtype=np.int32)
    cdef int head = 0, tail = 0
    cdef int v, u, j, d
    dist[root] = 0
    queue[tail] = root
    tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        d = dist[v]
        if d == k:
            continue
        for j in range(indptr[v], indptr[v + 1]):
            u = preds[j]
            if dist[u] < 0:
                dist[u] = d + 1
                queue[tail] = u
                tail += 1
    out = np.empty(tail, dtype=np.int32)
    cdef cnp.int32_t[::1] out_v = out
    cdef int m = 0
    for v in range(n):
        if dist[v] >= 0:
            out_v[m] = v
            m += 1
    return out


def reach_pairs(cnp.int32_t[::1] indptr, cnp.int32_t[::1] preds, int n, int k):
    cdef cnp.int32_t[::1] dist = np.empty(n, dtype=np.int32)
    cdef cnp.int32_t[::1] queue = np.empty(n, dtype=np.int32)
    cdef list src_out = []
    cdef list dst_out = []
    cdef int v, w, u, j, d, head, tail
    for v in range(n):
        dist[:] = -1
        head = 0
        tail = 0
        dist[v] = 0
        queue[tail] = v
        tail += 1
        while head < tail:
            w = queue[head]
            head += 1
            d = dist[w]
            if d == k:
                continue
            for j in range(indptr[w], indptr[w + 1]):
                u = preds[j]
                if dist[u] < 0:
                    dist[u] = d + 1
                    queue[tail] = u
                    tail += 1
        for u in range(n):
            if dist[u] > 0:
                src_out.append(u)
                dst_out.append(v)
    return (np.array(src_out, dtype=np.int32), np.array(dst_out, dtype=np.int32))


def sim_words(cnp.int8_t[::1] kinds, cnp.int32_t[::1] fan0, cnp.int32_t[::1] fan1,
              cnp.int32_t[::1] topo, cnp.uint64_t[:, ::1] words, cnp.uint64_t tail_mask):
    cdef int n_words = words.shape[1]
    cdef int i, w, v
    cdef cnp.int8_t kind
    cdef cnp.uint64_t full = 0xFFFFFFFFFFFFFFFFULL
    for i in range(topo.shape[0]):
        v = topo[i]
        kind = kinds[v]
        if kind == 1:
            for w in range(n_words):
                words[v, w] = words[fan0[v], w] & words[fan1[v], w]
        elif kind == 2:
            for w in range(n_words - 1):
                words[v, w] = (~words[fan0[v], w]) & full
            words[v, n_words - 1] = (~words[fan0[v], n_words - 1]) & tail_mask
    return np.asarray(words)
