"""Synthetic circuit generators for tests, benchmarks and the bundled corpus."""

from __future__ import annotations

import numpy as np

from .aig import Aig, GateType, compute_levels


def build_aig(gate_types, edges, outputs=None, const0_id=None, name="") -> Aig:
    aig = Aig(
        node_count=len(gate_types),
        gate_types=np.array([int(t) for t in gate_types], dtype=np.int8),
        edges=np.array(edges, dtype=np.int32).reshape(-1, 2),
        outputs=list(outputs) if outputs else [],
        const0_id=const0_id,
        name=name,
    )
    compute_levels(aig)
    return aig


def not_chain(length: int, name: str = "not_chain") -> Aig:
    """PI followed by ``length`` NOT gates. Not expressible in AIGER text."""
    types = [GateType.PI] + [GateType.NOT] * length
    edges = [(i, i + 1) for i in range(length)]
    return build_aig(types, edges, outputs=[length], name=name)


def and_tree(depth: int, name: str = "and_tree") -> Aig:
    """Complete binary AND tree: 2^depth PIs, 2^depth - 1 AND gates."""
    n_pi = 1 << depth
    types = [GateType.PI] * n_pi
    edges = []
    frontier = list(range(n_pi))
    next_id = n_pi
    while len(frontier) > 1:
        nxt = []
        for a, b in zip(frontier[0::2], frontier[1::2]):
            types.append(GateType.AND)
            edges.append((a, next_id))
            edges.append((b, next_id))
            nxt.append(next_id)
            next_id += 1
        frontier = nxt
    return build_aig(types, edges, outputs=[frontier[0]], name=name)


def alternating_tower(height: int, name: str = "tower") -> Aig:
    """One PI, then NOT/AND pairs: t' = AND(t, NOT t). Levels 0..2*height.

    AIGER-expressible stand-in for a chain: every level holds one node and
    cones of distinct towers are disjoint.
    """
    types = [GateType.PI]
    edges = []
    t = 0
    next_id = 1
    for _ in range(height):
        types.append(GateType.NOT)
        edges.append((t, next_id))
        inv = next_id
        next_id += 1
        types.append(GateType.AND)
        edges.append((t, next_id))
        edges.append((inv, next_id))
        t = next_id
        next_id += 1
    return build_aig(types, edges, outputs=[t], name=name)


def comb(columns: int, height: int, name: str = "comb") -> Aig:
    """Disjoint union of ``columns`` alternating towers.

    The per-level cone sets are pairwise disjoint and of equal size, which
    makes scheduler peak-memory figures independent of how cones are grouped
    into mini-batches.
    """
    types = []
    edges = []
    outputs = []
    for _ in range(columns):
        base = len(types)
        tower = alternating_tower(height)
        types.extend(GateType(int(t)) for t in tower.gate_types)
        edges.extend((int(s) + base, int(d) + base) for s, d in tower.edges)
        outputs.append(base + tower.outputs[0])
    return build_aig(types, edges, outputs=outputs, name=name)


def random_aig(n_pi: int, n_gates: int, seed: int, p_not: float = 0.35,
               recent_bias: float = 0.6, name: str = "") -> Aig:
    """Random layered AIG: each AND picks two distinct earlier nodes, each
    optionally inverted through a (deduplicated) NOT node."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA16]))
    types = [GateType.PI] * n_pi
    edges = []
    not_of: dict[int, int] = {}
    base_of: dict[int, int] = {}  # NOT node -> its fanin
    pool = list(range(n_pi))

    def maybe_invert(v: int) -> int:
        if rng.random() >= p_not:
            return v
        if types[v] == GateType.NOT:
            # inverting an inverter output selects its base signal
            return base_of[v]
        if v not in not_of:
            nid = len(types)
            not_of[v] = nid
            base_of[nid] = v
            types.append(GateType.NOT)
            edges.append((v, nid))
            pool.append(nid)
        return not_of[v]

    for _ in range(n_gates):
        if rng.random() < recent_bias and len(pool) > 4:
            lo = max(0, len(pool) - 8)
            a = pool[int(rng.integers(lo, len(pool)))]
        else:
            a = pool[int(rng.integers(0, len(pool)))]
        b = a
        while b == a:
            b = pool[int(rng.integers(0, len(pool)))]
        a2, b2 = maybe_invert(a), maybe_invert(b)
        if a2 == b2:
            continue
        g = len(types)
        types.append(GateType.AND)
        edges.append((a2, g))
        edges.append((b2, g))
        pool.append(g)
    aig = build_aig(types, edges, name=name)
    aig.outputs = [int(v) for v in aig.po_ids]
    return aig


def random_dag_aig(n_nodes: int, seed: int, name: str = "") -> Aig:
    """Random DAG honoring gate in-degree rules, for structural tests."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDA6]))
    n_pi = max(2, n_nodes // 8)
    types = [GateType.PI] * n_pi
    edges = []
    for v in range(n_pi, n_nodes):
        if rng.random() < 0.4:
            types.append(GateType.NOT)
            edges.append((int(rng.integers(0, v)), v))
        else:
            a = int(rng.integers(0, v))
            b = a
            while b == a:
                b = int(rng.integers(0, v))
            types.append(GateType.AND)
            edges.append((a, v))
            edges.append((b, v))
    return build_aig(types, edges, name=name)


def duplicate(aig: Aig, copies: int, name: str = "") -> Aig:
    """Disjoint union of ``copies`` copies of ``aig`` (ids offset per copy)."""
    n = aig.node_count
    types = []
    edges = []
    outputs = []
    for c in range(copies):
        base = c * n
        types.extend(GateType(int(t)) for t in aig.gate_types)
        edges.extend((int(s) + base, int(d) + base) for s, d in aig.edges)
        outputs.extend(base + o for o in aig.outputs)
    if aig.const0_id is not None:
        raise ValueError("duplicate() does not support circuits with a constant node")
    return build_aig(types, edges, outputs=outputs,
                     name=name or f"{aig.name}_x{copies}")
