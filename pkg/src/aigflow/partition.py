"""Depth-bounded cone extraction and the level-strided graph partition.

A cone of depth k rooted at v collects every node with a path of length <= k
into v. The partition samples output levels k, k+delta, ... and then adds one
cone per out-degree-0 node; any node still uncovered gets a fallback cone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .aig import Aig, AigError, compute_levels


def max_cone_size(k: int) -> int:
    return (1 << (k + 1)) - 1


@dataclass
class Cone:
    output_id: int
    output_level: int
    members: np.ndarray               # sorted global ids, int32
    local_edges: np.ndarray           # (m, 2) int32 pairs of LOCAL indices
    global_to_local: dict[int, int]
    fallback: bool = False

    def __len__(self):
        return len(self.members)


@dataclass
class VirtualEdgeSet:
    """Pairs (u, v) of global ids with a path u -> v of length <= k in the cone."""
    edges: np.ndarray                 # (m, 2) int32 global pairs, sorted by (dst, src)

    def __len__(self):
        return len(self.edges)

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(s), int(d)) for s, d in self.edges}


@dataclass
class PartitionPlan:
    k: int
    delta: int
    levels: list[int]                                  # sampled levels only
    cones_by_level: dict[int, list[Cone]] = field(default_factory=dict)
    fallback_cones: list[Cone] = field(default_factory=list)

    def all_levels(self) -> list[int]:
        return sorted(self.cones_by_level)

    def all_cones(self) -> list[Cone]:
        out = []
        for lvl in self.all_levels():
            out.extend(self.cones_by_level[lvl])
        return out

    def covered(self) -> set[int]:
        s: set[int] = set()
        for c in self.all_cones():
            s.update(int(v) for v in c.members)
        return s


def cone_k(aig: Aig, v: int, k: int, fallback: bool = False) -> Cone:
    """Extract cone_k(v): bounded reverse BFS from v over fan-in edges."""
    if not (0 <= v < aig.node_count):
        raise AigError(f"invalid node id {v}")
    if k < 1:
        raise AigError("cone depth k must be >= 1")
    if aig.levels is None:
        compute_levels(aig)
    indptr, preds = aig.pred_csr
    members = kernels.cone_members(indptr, preds, int(v), int(k))
    g2l = {int(g): i for i, g in enumerate(members)}
    local_edges = []
    for g in members:
        li = g2l[int(g)]
        for u in preds[indptr[g]:indptr[g + 1]]:
            u = int(u)
            if u in g2l:
                local_edges.append((g2l[u], li))
    local = (np.array(sorted(local_edges), dtype=np.int32).reshape(-1, 2)
             if local_edges else np.zeros((0, 2), dtype=np.int32))
    return Cone(
        output_id=int(v),
        output_level=int(aig.levels[v]),
        members=members,
        local_edges=local,
        global_to_local=g2l,
        fallback=fallback,
    )


def virtual_edges(cone: Cone, k: int) -> VirtualEdgeSet:
    """Bounded transitive closure of the cone's local graph, as global pairs."""
    n = len(cone.members)
    indptr = np.zeros(n + 1, dtype=np.int32)
    if len(cone.local_edges):
        counts = np.bincount(cone.local_edges[:, 1], minlength=n)
        np.cumsum(counts, out=indptr[1:])
        order = np.lexsort((cone.local_edges[:, 0], cone.local_edges[:, 1]))
        preds = cone.local_edges[order, 0].astype(np.int32)
    else:
        preds = np.zeros(0, dtype=np.int32)
    src_l, dst_l = kernels.reach_pairs(indptr, preds, n, int(k))
    glob = cone.members
    pairs = np.stack([glob[src_l], glob[dst_l]], axis=1) if len(src_l) else np.zeros((0, 2), dtype=np.int32)
    return VirtualEdgeSet(edges=pairs.astype(np.int32))


def partition(aig: Aig, k: int, delta: int) -> PartitionPlan:
    """Level-strided partition: cones at levels k, k+delta, ..., then one cone
    per out-degree-0 node (deduplicated by output id), then fallback cones
    until every node is covered."""
    if aig.node_count == 0:
        raise AigError("empty graph")
    if delta >= k:
        raise AigError(f"stride delta ({delta}) must be smaller than cone depth k ({k})")
    if delta < 1:
        raise AigError("stride delta must be >= 1")
    if aig.levels is None:
        compute_levels(aig)
    max_lvl = aig.max_level
    levels_arr = aig.levels

    sampled = []
    l = k
    while l <= max_lvl:
        sampled.append(l)
        l += delta

    cones_by_level: dict[int, list[Cone]] = {}
    taken: set[int] = set()
    for lvl in sampled:
        group = [cone_k(aig, int(v), k) for v in np.flatnonzero(levels_arr == lvl)]
        cones_by_level[lvl] = group
        taken.update(c.output_id for c in group)

    for v in aig.po_ids:
        v = int(v)
        if v in taken:
            continue
        c = cone_k(aig, v, k)
        cones_by_level.setdefault(c.output_level, []).append(c)
        taken.add(v)

    plan = PartitionPlan(k=k, delta=delta, levels=sampled, cones_by_level=cones_by_level)

    covered = plan.covered()
    if len(covered) < aig.node_count:
        uncovered = [v for v in range(aig.node_count) if v not in covered]
        # deepest first: a fallback cone also covers ancestors within k
        uncovered.sort(key=lambda v: (-int(levels_arr[v]), v))
        for v in uncovered:
            if v in covered:
                continue
            c = cone_k(aig, v, k, fallback=True)
            cones_by_level.setdefault(c.output_level, []).append(c)
            plan.fallback_cones.append(c)
            covered.update(int(g) for g in c.members)
    return plan


@dataclass
class CoverageReport:
    uncovered_before_fallback: list[int]
    fallback_count: int
    intra_level_overlaps: dict[int, list[int]]   # level -> sizes of pairwise overlaps > 0
    inter_level_overlaps: list[tuple[int, int, int]]  # (level_a, level_b, |union_a & union_b|)

    def overlap_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for sizes in self.intra_level_overlaps.values():
            for s in sizes:
                hist[s] = hist.get(s, 0) + 1
        return hist


def coverage_report(plan: PartitionPlan, aig: Aig) -> CoverageReport:
    covered_main: set[int] = set()
    for c in plan.all_cones():
        if not c.fallback:
            covered_main.update(int(v) for v in c.members)
    uncovered = [v for v in range(aig.node_count) if v not in covered_main]

    intra: dict[int, list[int]] = {}
    for lvl in plan.all_levels():
        group = plan.cones_by_level[lvl]
        sizes = []
        for i in range(len(group)):
            mi = group[i].members
            for j in range(i + 1, len(group)):
                inter = np.intersect1d(mi, group[j].members, assume_unique=True)
                if len(inter):
                    sizes.append(int(len(inter)))
        intra[lvl] = sizes

    inter_lv: list[tuple[int, int, int]] = []
    lvls = plan.all_levels()
    for a, b in zip(lvls, lvls[1:]):
        ua = np.unique(np.concatenate([c.members for c in plan.cones_by_level[a]]))
        ub = np.unique(np.concatenate([c.members for c in plan.cones_by_level[b]]))
        inter_lv.append((a, b, int(len(np.intersect1d(ua, ub, assume_unique=True)))))

    return CoverageReport(
        uncovered_before_fallback=uncovered,
        fallback_count=len(plan.fallback_cones),
        intra_level_overlaps=intra,
        inter_level_overlaps=inter_lv,
    )


def plan_to_json(plan: PartitionPlan) -> str:
    payload = {
        "k": plan.k,
        "delta": plan.delta,
        "levels": plan.levels,
        "cones": [
            {
                "output": c.output_id,
                "level": c.output_level,
                "members": [int(v) for v in c.members],
                "fallback": c.fallback,
            }
            for c in plan.all_cones()
        ],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
