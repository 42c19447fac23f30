"""Level-ordered schedule over partitioned cones with a historical store.

Each mini-batch pulls already-updated nodes from the offline store (freezing
them and pruning their in-edges), encodes the remaining fresh nodes, and
pushes the results back. Every node is encoded exactly once per run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aig import Aig
from .partition import Cone, PartitionPlan, max_cone_size, virtual_edges


class ScheduleError(RuntimeError):
    pass


@dataclass
class EmbeddingStore:
    """Offline (hf, hs) per node plus bookkeeping marks."""

    node_count: int
    dim: int
    hf: dict[int, np.ndarray] = field(default_factory=dict)
    hs: dict[int, np.ndarray] = field(default_factory=dict)
    update_mark: np.ndarray = None
    update_count: np.ndarray = None

    def __post_init__(self):
        if self.update_mark is None:
            self.update_mark = np.zeros(self.node_count, dtype=bool)
        if self.update_count is None:
            self.update_count = np.zeros(self.node_count, dtype=np.int32)

    @property
    def offline_entries(self) -> int:
        return len(self.hf)


@dataclass
class MemoryMeter:
    peak_online_nodes: int = 0
    peak_online_bytes: int = 0
    offline_entries: int = 0

    def observe(self, online_nodes: int, dim: int):
        self.peak_online_nodes = max(self.peak_online_nodes, online_nodes)
        self.peak_online_bytes = max(self.peak_online_bytes, online_nodes * 2 * dim * 8)


@dataclass
class BatchPlan:
    """Ordered (level, mini-batch) stages; each mini-batch holds <= B cones."""

    B: int
    stages: list[tuple[int, list[Cone]]]
    mode: str  # "train" | "eval"
    seed: int | None = None


def build_batches(plan: PartitionPlan, B: int, seed: int | None = None,
                  mode: str = "eval") -> BatchPlan:
    """Chunk each level's cones into mini-batches of <= B.

    Train mode permutes cones within a level with a seeded shuffle; eval mode
    keeps plan order. Level order is always ascending.
    """
    if B < 1:
        raise ScheduleError("mini-batch size B must be >= 1")
    if mode not in ("train", "eval"):
        raise ScheduleError(f"unknown mode {mode!r}")
    stages: list[tuple[int, list[Cone]]] = []
    for lvl in plan.all_levels():
        cones = list(plan.cones_by_level[lvl])
        if mode == "train":
            rng = np.random.default_rng(np.random.SeedSequence([int(seed or 0), 0xBA7C, lvl]))
            cones = [cones[i] for i in rng.permutation(len(cones))]
        for i in range(0, len(cones), B):
            stages.append((lvl, cones[i:i + B]))
    return BatchPlan(B=B, stages=stages, mode=mode, seed=seed)


@dataclass
class WorkBatch:
    """Materialized working graph of one mini-batch.

    Nodes are the union of the member sets of the batch's cones; edges are in
    batch-local indices. Frozen rows were pulled from the store and keep their
    stored values; their in-edges (original and virtual) are pruned.
    """

    level: int
    index: int
    cones: list[Cone]
    nodes: np.ndarray                 # sorted global ids
    g2l: dict[int, int]
    frozen: np.ndarray                # bool per local node
    orig_edges: np.ndarray            # (m, 2) local (src, dst), frozen dst pruned
    aug_edges: np.ndarray             # orig + virtual, local, frozen dst pruned
    pulled_hf: np.ndarray             # (n, d); zero rows for fresh nodes
    pulled_hs: np.ndarray
    cone_members_local: list[np.ndarray]

    @property
    def fresh_local(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen)

    @property
    def fresh_global(self) -> np.ndarray:
        return self.nodes[self.fresh_local]


def assemble_batch(aig: Aig, k: int, level: int, index: int,
                   cones: list[Cone]) -> WorkBatch:
    nodes = np.unique(np.concatenate([c.members for c in cones])).astype(np.int32)
    g2l = {int(g): i for i, g in enumerate(nodes)}
    orig = set()
    aug = set()
    for c in cones:
        for ls, ld in c.local_edges:
            e = (g2l[int(c.members[ls])], g2l[int(c.members[ld])])
            orig.add(e)
            aug.add(e)
        for gs, gd in virtual_edges(c, k).edges:
            aug.add((g2l[int(gs)], g2l[int(gd)]))
    orig_arr = (np.array(sorted(orig), dtype=np.int32).reshape(-1, 2)
                if orig else np.zeros((0, 2), dtype=np.int32))
    aug_arr = (np.array(sorted(aug), dtype=np.int32).reshape(-1, 2)
               if aug else np.zeros((0, 2), dtype=np.int32))
    return WorkBatch(
        level=level, index=index, cones=cones, nodes=nodes, g2l=g2l,
        frozen=np.zeros(len(nodes), dtype=bool),
        orig_edges=orig_arr, aug_edges=aug_arr,
        pulled_hf=np.zeros((0, 0)), pulled_hs=np.zeros((0, 0)),
        cone_members_local=[np.array([g2l[int(g)] for g in c.members], dtype=np.int32)
                            for c in cones],
    )


def pull(store: EmbeddingStore, batch: WorkBatch) -> int:
    """Initialize already-updated nodes from the store and prune their in-edges.

    Returns the number of pulled nodes. Pulled nodes are flagged frozen and
    will not be rewritten by any later stage.
    """
    d = store.dim
    n = len(batch.nodes)
    batch.pulled_hf = np.zeros((n, d))
    batch.pulled_hs = np.zeros((n, d))
    marked = store.update_mark[batch.nodes]
    for li in np.flatnonzero(marked):
        g = int(batch.nodes[li])
        if g not in store.hf:
            raise ScheduleError(f"store corruption: node {g} marked but missing offline")
        batch.pulled_hf[li] = store.hf[g]
        batch.pulled_hs[li] = store.hs[g]
    batch.frozen = marked.copy()
    if marked.any():
        fz = np.flatnonzero(marked)
        keep_o = ~np.isin(batch.orig_edges[:, 1], fz)
        keep_a = ~np.isin(batch.aug_edges[:, 1], fz)
        batch.orig_edges = batch.orig_edges[keep_o]
        batch.aug_edges = batch.aug_edges[keep_a]
    return int(marked.sum())


def push(store: EmbeddingStore, batch: WorkBatch,
         fresh_hf: np.ndarray, fresh_hs: np.ndarray) -> int:
    """Write freshly encoded embeddings offline and mark the nodes updated.

    ``fresh_hf``/``fresh_hs`` rows align with ``batch.fresh_global``. Frozen
    nodes are never rewritten.
    """
    fresh = batch.fresh_global
    if fresh_hf.shape != (len(fresh), store.dim):
        raise ScheduleError(
            f"push shape mismatch: got {fresh_hf.shape}, want {(len(fresh), store.dim)}")
    for row, g in enumerate(fresh):
        g = int(g)
        if store.update_mark[g]:
            raise ScheduleError(f"attempt to rewrite frozen node {g}")
        store.hf[g] = fresh_hf[row].copy()
        store.hs[g] = fresh_hs[row].copy()
        store.update_mark[g] = True
        store.update_count[g] += 1
    return len(fresh)


def identity_encode(batch: WorkBatch, dim: int = 2):
    """Deterministic stand-in encoder: hf = (id, level-ish), hs = -hf.

    Used by the schedule CLI and trace tests; independent of any model.
    """
    fresh = batch.fresh_global.astype(np.float64)
    hf = np.stack([fresh, np.full_like(fresh, float(batch.level))], axis=1)[:, :dim]
    if hf.shape[1] < dim:
        hf = np.pad(hf, ((0, 0), (0, dim - hf.shape[1])))
    return hf, -hf


def run_schedule(aig: Aig, plan: PartitionPlan, batch_plan: BatchPlan, encode,
                 dim: int = 2):
    """Run the level-ordered schedule: per batch pull -> encode -> push.

    ``encode(batch)`` returns (hf, hs) arrays for ``batch.fresh_global`` rows.
    Returns (store, meter, trace).
    """
    store = EmbeddingStore(node_count=aig.node_count, dim=dim)
    meter = MemoryMeter()
    trace = []
    for stage_idx, (level, cones) in enumerate(batch_plan.stages):
        batch = assemble_batch(aig, plan.k, level, stage_idx, cones)
        pulled = pull(store, batch)
        try:
            hf, hs = encode(batch)
        except Exception as exc:
            raise ScheduleError(f"encode failed on batch {stage_idx} (level {level}): {exc}") from exc
        n_fresh = push(store, batch, np.asarray(hf, dtype=np.float64),
                       np.asarray(hs, dtype=np.float64))
        meter.observe(len(batch.nodes), dim)
        trace.append({
            "level": int(level),
            "batch": stage_idx,
            "cones": [int(c.output_id) for c in cones],
            "pulled": int(pulled),
            "fresh": int(n_fresh),
            "online_nodes": int(len(batch.nodes)),
            "peak_online_so_far": int(meter.peak_online_nodes),
        })
    meter.offline_entries = store.offline_entries
    if not np.all(store.update_count == 1):
        bad = np.flatnonzero(store.update_count != 1)
        raise ScheduleError(f"process-once violated for nodes {bad[:8].tolist()}")
    if meter.peak_online_nodes > batch_plan.B * max_cone_size(plan.k):
        raise ScheduleError("memory bound violated")
    return store, meter, trace


def receptive_field_diagnostic(plan: PartitionPlan, aig: Aig,
                               max_nodes: int = 256) -> dict:
    """Containment rate of cone-restricted ancestor sets across sampled levels.

    For nodes in the overlap of consecutive sampled levels l-delta and l,
    checks whether the reachability set within the level-l cone union is
    contained in the one within the level-(l-delta) union.
    """
    from . import kernels

    indptr, preds = aig.pred_csr
    k = plan.k
    checked = 0
    contained = 0
    lvls = [l for l in plan.levels if l in plan.cones_by_level]
    for la, lb in zip(lvls, lvls[1:]):
        ua: set[int] = set()
        for c in plan.cones_by_level[la]:
            ua.update(int(v) for v in c.members)
        ub: set[int] = set()
        for c in plan.cones_by_level[lb]:
            ub.update(int(v) for v in c.members)
        overlap = sorted(ua & ub)[:max_nodes]
        for v in overlap:
            anc = set(int(u) for u in kernels.cone_members(indptr, preds, v, k))
            ra = anc & ua
            rb = anc & ub
            checked += 1
            if rb <= ra:
                contained += 1
    return {
        "pairs_checked": checked,
        "contained": contained,
        "containment_fraction": (contained / checked) if checked else 1.0,
    }
