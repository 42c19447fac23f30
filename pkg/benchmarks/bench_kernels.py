#!/usr/bin/env python3
"""Compare the compiled kernels against the pure-Python fallback.

Times the three hot paths (bounded reverse BFS, bounded reachability closure,
bit-parallel simulation) on the same inputs and checks output equality.

Usage: python benchmarks/bench_kernels.py [--nodes N] [--repeat R]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import aigflow._kern_py as pure  # noqa: E402
from aigflow.aig import GateType  # noqa: E402
from aigflow.synth import random_aig  # noqa: E402

try:
    import aigflow._ckern as compiled
except ImportError:
    compiled = None


def timeit(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--k", type=int, default=8)
    args = ap.parse_args()

    aig = random_aig(24, args.nodes, seed=12345)
    indptr, preds = aig.pred_csr
    indptr = indptr.astype(np.int32)
    preds = preds.astype(np.int32)
    n = aig.node_count
    print(f"circuit: {n} nodes, {len(aig.edges)} edges, k={args.k}")

    backends = [("pure", pure)]
    if compiled is not None:
        backends.append(("compiled", compiled))
    else:
        print("compiled kernels unavailable; timing the fallback only")

    roots = [int(v) for v in np.linspace(n // 2, n - 1, 200, dtype=int)]
    results = {}
    for name, mod in backends:
        t, out = timeit(lambda m=mod: [m.cone_members(indptr, preds, r, args.k)
                                       for r in roots], args.repeat)
        results.setdefault("cone_members", {})[name] = (t, out)

    sub = [int(v) for v in range(min(400, n))]
    sub_indptr = indptr[:len(sub) + 1]
    sub_preds = preds[:sub_indptr[-1]]
    for name, mod in backends:
        t, out = timeit(lambda m=mod: m.reach_pairs(sub_indptr, sub_preds, len(sub), args.k),
                        args.repeat)
        results.setdefault("reach_pairs", {})[name] = (t, out)

    fan0 = np.zeros(n, dtype=np.int32)
    fan1 = np.zeros(n, dtype=np.int32)
    for v in range(n):
        fin = preds[indptr[v]:indptr[v + 1]]
        if len(fin) >= 1:
            fan0[v] = fin[0]
        if len(fin) == 2:
            fan1[v] = fin[1]
    order = np.argsort(aig.levels, kind="stable").astype(np.int32)
    topo = order[aig.gate_types[order] != GateType.PI]
    rng = np.random.default_rng(0)
    words0 = rng.integers(0, 2**63, size=(n, 64), dtype=np.int64).astype(np.uint64)
    mask = np.uint64(0xFFFFFFFFFFFFFFFF)
    for name, mod in backends:
        t, out = timeit(lambda m=mod: m.sim_words(aig.gate_types, fan0, fan1, topo,
                                                  words0.copy(), mask), args.repeat)
        results.setdefault("sim_words", {})[name] = (t, out)

    print(f"{'kernel':<14}{'pure (s)':>12}{'compiled (s)':>14}{'speedup':>10}  equal")
    for kernel, by_backend in results.items():
        tp, op = by_backend["pure"]
        if "compiled" in by_backend:
            tc, oc = by_backend["compiled"]
            if kernel == "cone_members":
                equal = all(np.array_equal(a, b) for a, b in zip(op, oc))
            elif kernel == "reach_pairs":
                equal = np.array_equal(op[0], oc[0]) and np.array_equal(op[1], oc[1])
            else:
                equal = np.array_equal(op, oc)
            print(f"{kernel:<14}{tp:>12.4f}{tc:>14.4f}{tp / tc:>10.1f}x  {equal}")
        else:
            print(f"{kernel:<14}{tp:>12.4f}{'-':>14}{'-':>10}  -")


if __name__ == "__main__":
    main()
