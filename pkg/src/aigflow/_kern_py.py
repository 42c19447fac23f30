"""Pure-Python/numpy fallback for the hot kernels.

Same contracts as the compiled module ``aigflow._ckern``: exact integer and
bit-level semantics, so both backends must produce identical outputs.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


def cone_members(indptr, preds, root, k):
    """Nodes with a path of length <= k to ``root`` (root included).

    ``indptr``/``preds`` is the fan-in adjacency in CSR form. Returns a sorted
    int32 array; bounded reverse BFS over shortest path length.
    """
    frontier = [int(root)]
    seen = {int(root)}
    for _ in range(int(k)):
        nxt = []
        for v in frontier:
            for u in preds[indptr[v]:indptr[v + 1]]:
                u = int(u)
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        if not nxt:
            break
        frontier = nxt
    return np.array(sorted(seen), dtype=np.int32)


def reach_pairs(indptr, preds, n, k):
    """All pairs (u, v), u != v, with a path u -> v of length <= k.

    Operates on a local graph of ``n`` nodes given by its fan-in CSR. Returns
    (src, dst) int32 arrays sorted by (dst, src).
    """
    src_out = []
    dst_out = []
    for v in range(int(n)):
        frontier = [v]
        seen = {v}
        for _ in range(int(k)):
            nxt = []
            for w in frontier:
                for u in preds[indptr[w]:indptr[w + 1]]:
                    u = int(u)
                    if u not in seen:
                        seen.add(u)
                        nxt.append(u)
            if not nxt:
                break
            frontier = nxt
        seen.discard(v)
        for u in sorted(seen):
            src_out.append(u)
            dst_out.append(v)
    return (np.array(src_out, dtype=np.int32), np.array(dst_out, dtype=np.int32))


def sim_words(kinds, fan0, fan1, topo, words, tail_mask):
    """Bit-parallel evaluation of AND/NOT rows in topological order.

    ``words`` is (n_nodes, n_words) uint64 with PI rows prefilled; modified in
    place. ``kinds``: 0 PI, 1 AND, 2 NOT. ``tail_mask`` clears pad bits of the
    last word.
    """
    n_words = words.shape[1]
    mask = np.full(n_words, np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    mask[-1] = np.uint64(tail_mask)
    for v in topo:
        kind = kinds[v]
        if kind == 1:
            np.bitwise_and(words[fan0[v]], words[fan1[v]], out=words[v])
        elif kind == 2:
            np.bitwise_and(np.bitwise_not(words[fan0[v]]), mask, out=words[v])
    return words
