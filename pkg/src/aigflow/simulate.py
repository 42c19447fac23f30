"""Logic-simulation oracle: every supervision label and evaluation ground
truth is derived here by exact Boolean evaluation (bit-parallel over packed
64-bit words), plus exact graph edit distance on small cones."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .aig import Aig, GateType
from .partition import Cone, PartitionPlan

EXHAUSTIVE_PI_LIMIT = 12
RANDOM_PATTERN_COUNT = 4096


class SimError(ValueError):
    pass


# ---------------------------------------------------------------------------
# patterns and responses


@dataclass
class PatternSet:
    pi_ids: np.ndarray            # ordered free PIs (constant node excluded)
    patterns: np.ndarray          # (P, n_pi) uint8 in {0, 1}
    mode: str                     # "exhaustive" | "random"
    seed: int | None = None

    @property
    def num_patterns(self) -> int:
        return self.patterns.shape[0]


def exhaustive_patterns(aig: Aig) -> PatternSet:
    pis = aig.pi_ids
    n = len(pis)
    if n > EXHAUSTIVE_PI_LIMIT:
        raise SimError(f"{n} PIs exceed the exhaustive limit of {EXHAUSTIVE_PI_LIMIT}")
    rows = np.arange(1 << n, dtype=np.uint64)
    cols = np.arange(n, dtype=np.uint64)
    patterns = ((rows[:, None] >> cols[None, :]) & np.uint64(1)).astype(np.uint8)
    return PatternSet(pi_ids=pis, patterns=patterns, mode="exhaustive")


def random_patterns(aig: Aig, n_patterns: int, seed: int) -> PatternSet:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51B]))
    pis = aig.pi_ids
    patterns = rng.integers(0, 2, size=(n_patterns, len(pis)), dtype=np.uint8)
    return PatternSet(pi_ids=pis, patterns=patterns, mode="random", seed=seed)


def patterns_for(aig: Aig, sim_mode: str, seed: int) -> PatternSet:
    """Policy: exhaustive when cheap, otherwise seeded random patterns."""
    if sim_mode == "exhaustive":
        return exhaustive_patterns(aig)
    if sim_mode.startswith("random"):
        n = int(sim_mode.split(":", 1)[1]) if ":" in sim_mode else RANDOM_PATTERN_COUNT
        return random_patterns(aig, n, seed)
    if sim_mode == "auto":
        if len(aig.pi_ids) <= EXHAUSTIVE_PI_LIMIT:
            return exhaustive_patterns(aig)
        return random_patterns(aig, RANDOM_PATTERN_COUNT, seed)
    raise SimError(f"unknown sim mode {sim_mode!r}")


@dataclass
class ResponseTable:
    """Per-node response bits packed little-endian into uint64 words."""

    words: np.ndarray             # (n_nodes, n_words) uint64
    num_patterns: int

    def bits(self, v: int) -> np.ndarray:
        row = self.words[v]
        out = np.zeros(self.num_patterns, dtype=np.uint8)
        for w, word in enumerate(row):
            lo = w * 64
            hi = min(lo + 64, self.num_patterns)
            idx = np.arange(hi - lo, dtype=np.uint64)
            out[lo:hi] = ((word >> idx) & np.uint64(1)).astype(np.uint8)
        return out

    def ones(self, v: int) -> int:
        return int(np.bitwise_count(self.words[v]).sum())


def _pack_columns(patterns: np.ndarray) -> np.ndarray:
    """Pack (P, n) 0/1 columns into (n, ceil(P/64)) uint64 rows."""
    p, n = patterns.shape
    n_words = (p + 63) // 64
    out = np.zeros((n, n_words), dtype=np.uint64)
    for w in range(n_words):
        chunk = patterns[w * 64:(w + 1) * 64]
        weights = (np.uint64(1) << np.arange(chunk.shape[0], dtype=np.uint64))
        out[:, w] = (chunk.astype(np.uint64) * weights[:, None]).sum(axis=0, dtype=np.uint64)
    return out


def simulate(aig: Aig, ps: PatternSet) -> ResponseTable:
    """One bit-parallel topological pass with exact Boolean semantics."""
    if not np.array_equal(ps.pi_ids, aig.pi_ids):
        raise SimError("pattern PI list does not match the circuit's PIs")
    p = ps.num_patterns
    if p == 0:
        raise SimError("empty pattern set")
    n_words = (p + 63) // 64
    words = np.zeros((aig.node_count, n_words), dtype=np.uint64)
    words[ps.pi_ids] = _pack_columns(ps.patterns)
    # constant node (if any) stays all-zero
    tail_bits = p - (n_words - 1) * 64
    tail_mask = np.uint64(0xFFFFFFFFFFFFFFFF) if tail_bits == 64 else np.uint64((1 << tail_bits) - 1)

    indptr, preds = aig.pred_csr
    fan0 = np.zeros(aig.node_count, dtype=np.int32)
    fan1 = np.zeros(aig.node_count, dtype=np.int32)
    for v in range(aig.node_count):
        fin = preds[indptr[v]:indptr[v + 1]]
        if len(fin) >= 1:
            fan0[v] = fin[0]
        if len(fin) == 2:
            fan1[v] = fin[1]
    order = np.argsort(aig.levels, kind="stable").astype(np.int32)
    topo = order[aig.gate_types[order] != GateType.PI]
    kernels.sim_words(aig.gate_types, fan0, fan1, topo, words, tail_mask)
    return ResponseTable(words=words, num_patterns=p)


def gate_prob(rt: ResponseTable) -> np.ndarray:
    """Fraction of 1-responses per node; exact under exhaustive patterns."""
    if rt.num_patterns == 0:
        raise SimError("zero patterns")
    ones = np.bitwise_count(rt.words).sum(axis=1)
    return ones.astype(np.float64) / float(rt.num_patterns)


# ---------------------------------------------------------------------------
# pairwise distances and samplers


def tt_pair_distance(ti: np.ndarray, tj: np.ndarray) -> float:
    """Normalized Hamming distance between two response bit-vectors."""
    ti = np.asarray(ti, dtype=np.uint8)
    tj = np.asarray(tj, dtype=np.uint8)
    if ti.shape != tj.shape:
        raise SimError("length mismatch")
    if ti.size == 0:
        raise SimError("empty vectors")
    return float(np.count_nonzero(ti != tj)) / ti.size


def _packed_distance(rt: ResponseTable, i: int, j: int) -> float:
    diff = int(np.bitwise_count(rt.words[i] ^ rt.words[j]).sum())
    return diff / rt.num_patterns


def sample_gate_tt_pairs(rt: ResponseTable, count: int, seed: int) -> list[tuple[int, int, float]]:
    """Seeded uniform node pairs with normalized truth-table distances."""
    n = rt.words.shape[0]
    if n < 2:
        raise SimError("need at least 2 nodes to sample pairs")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x77A1]))
    out = []
    for _ in range(count):
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n))
        out.append((i, j, _packed_distance(rt, i, j)))
    return out


def reachable(aig: Aig, src: int, dst: int) -> bool:
    """Path existence src -> dst over fan-out edges."""
    if src == dst:
        return True
    indptr, succs = aig.succ_csr
    stack = [src]
    seen = {src}
    while stack:
        v = stack.pop()
        for w in succs[indptr[v]:indptr[v + 1]]:
            w = int(w)
            if w == dst:
                return True
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def connection_label(aig: Aig, i: int, j: int) -> int:
    return 1 if (reachable(aig, i, j) or reachable(aig, j, i)) else 0


def sample_con_pairs(aig: Aig, count: int, seed: int) -> list[tuple[int, int, int]]:
    """Balanced (where feasible) connectivity pairs, label 1 iff a path exists
    in either direction."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    n = aig.node_count
    want_pos = count // 2
    pos: list[tuple[int, int, int]] = []
    neg: list[tuple[int, int, int]] = []
    attempts = 0
    while (len(pos) < want_pos or len(neg) < count - want_pos) and attempts < 40 * count:
        attempts += 1
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n))
        if i == j:
            continue
        lab = connection_label(aig, i, j)
        if lab and len(pos) < want_pos:
            pos.append((i, j, 1))
        elif not lab and len(neg) < count - want_pos:
            neg.append((i, j, 0))
    pairs = pos + neg
    order = rng.permutation(len(pairs))
    return [pairs[int(t)] for t in order]


# ---------------------------------------------------------------------------
# cone-level labels


def cone_support(aig: Aig, cone: Cone) -> np.ndarray:
    """Free inputs of a cone: member PIs plus members with any fan-in outside
    the cone. The constant node is driven, not free."""
    members = set(int(v) for v in cone.members)
    free = []
    for v in cone.members:
        v = int(v)
        if aig.gate_types[v] == GateType.PI:
            if aig.const0_id is not None and v == aig.const0_id:
                continue
            free.append(v)
        elif any(int(u) not in members for u in aig.fanins(v)):
            free.append(v)
    return np.array(sorted(free), dtype=np.int32)


def eval_cone(aig: Aig, cone: Cone, assignment: dict[int, int]) -> int:
    """Evaluate the cone output with support nodes driven by ``assignment``."""
    members = sorted(int(v) for v in cone.members)
    order = sorted(members, key=lambda v: (int(aig.levels[v]), v))
    val: dict[int, int] = {}
    for v in order:
        if v in assignment:
            val[v] = int(assignment[v])
            continue
        if aig.const0_id is not None and v == aig.const0_id:
            val[v] = 0
            continue
        fins = [int(u) for u in aig.fanins(v)]
        if any(u not in val for u in fins) or aig.gate_types[v] == GateType.PI:
            raise SimError(f"node {v} needs an assignment (free PI or boundary)")
        if aig.gate_types[v] == GateType.AND:
            val[v] = val[fins[0]] & val[fins[1]]
        else:
            val[v] = 1 - val[fins[0]]
    return val[cone.output_id]


def cone_truth_table(aig: Aig, cone: Cone) -> np.ndarray | None:
    """64-bit truth table of the cone output over its 6-element support, in
    ascending support-id bit order; None when the support size is not 6."""
    support = cone_support(aig, cone)
    if len(support) != 6:
        return None
    bits = np.zeros(64, dtype=np.uint8)
    for row in range(64):
        assignment = {int(support[j]): (row >> j) & 1 for j in range(6)}
        bits[row] = eval_cone(aig, cone, assignment)
    return bits


def cone_function_signature(aig: Aig, cone: Cone,
                            max_support: int = EXHAUSTIVE_PI_LIMIT):
    """(support_size, packed truth table bytes) or None if support too large.

    Two single-output cones are treated as functionally equivalent iff their
    signatures are equal (same support size, identical table over the
    canonical ascending-id input order).
    """
    support = cone_support(aig, cone)
    ns = len(support)
    if ns > max_support:
        return None
    rows = 1 << ns
    bits = np.zeros(rows, dtype=np.uint8)
    for row in range(rows):
        assignment = {int(support[j]): (row >> j) & 1 for j in range(ns)}
        bits[row] = eval_cone(aig, cone, assignment)
    return (ns, np.packbits(bits).tobytes())


def cone_size_depth(aig: Aig, cone: Cone) -> tuple[int, int]:
    """Size = member count; depth = longest path within the cone ending at the
    output node."""
    n = len(cone.members)
    dist = np.zeros(n, dtype=np.int64)
    indeg_order = np.argsort([int(aig.levels[v]) for v in cone.members], kind="stable")
    by_dst: dict[int, list[int]] = {}
    for s, d in cone.local_edges:
        by_dst.setdefault(int(d), []).append(int(s))
    for li in indeg_order:
        li = int(li)
        best = 0
        for s in by_dst.get(li, ()):
            best = max(best, dist[s] + 1)
        dist[li] = best
    out_local = cone.global_to_local[cone.output_id]
    return n, int(dist[out_local])


# ---------------------------------------------------------------------------
# exact graph edit distance (small cones)


@dataclass
class TypedGraph:
    types: list[int]
    edges: set[tuple[int, int]]

    @property
    def n(self) -> int:
        return len(self.types)


def typed_graph(aig: Aig, cone: Cone) -> TypedGraph:
    return TypedGraph(
        types=[int(aig.gate_types[v]) for v in cone.members],
        edges={(int(s), int(d)) for s, d in cone.local_edges},
    )


def ged(g1: TypedGraph, g2: TypedGraph, node_limit: int = 10) -> int | None:
    """Exact GED by branch-and-bound over node mappings.

    Unit costs: node insert/delete 1, substitution 1 iff gate types differ,
    edge insert/delete 1. Returns None when either graph exceeds
    ``node_limit`` (pair skipped).

    Edge costs accrue incrementally as both endpoints become decided, which
    prunes far better than leaf-only scoring."""
    if g1.n > node_limit or g2.n > node_limit:
        return None
    n1, n2 = g1.n, g2.n
    best = [n1 + n2 + len(g1.edges) + len(g2.edges)]  # delete all / insert all
    # same-type candidates first: reaching a good leaf early tightens pruning
    child_order = [sorted(range(n2), key=lambda j, i=i: g1.types[i] != g2.types[j])
                   for i in range(n1)]
    rem1_types = [[0, 0, 0] for _ in range(n1 + 1)]
    for i in range(n1 - 1, -1, -1):
        rem1_types[i] = rem1_types[i + 1].copy()
        rem1_types[i][g1.types[i]] += 1
    g2_type_total = [0, 0, 0]
    for t in g2.types:
        g2_type_total[t] += 1

    def type_bound(i: int, used: set[int]) -> int:
        """Remaining node ops: count imbalance plus unavoidable type mismatches."""
        avail = g2_type_total.copy()
        for j in used:
            avail[g2.types[j]] -= 1
        rem = rem1_types[i]
        n_rem = n1 - i
        n_avail = n2 - len(used)
        matchable = sum(min(rem[t], avail[t]) for t in range(3))
        return abs(n_rem - n_avail) + max(0, min(n_rem, n_avail) - matchable)

    def assign_cost(i: int, j: int | None, mapping: list[int | None],
                    inv: dict[int, int]) -> int:
        """Edge cost newly fixed by mapping g1 node i -> j (None deletes i)."""
        cost = 0
        for u in range(i):
            mu = mapping[u]
            if (u, i) in g1.edges:
                if mu is None or j is None or (mu, j) not in g2.edges:
                    cost += 1
            if (i, u) in g1.edges:
                if mu is None or j is None or (j, mu) not in g2.edges:
                    cost += 1
        if j is not None:
            for (x, y) in g2.edges:
                if x == j and y in inv and (i, inv[y]) not in g1.edges:
                    cost += 1
                elif y == j and x in inv and (inv[x], i) not in g1.edges:
                    cost += 1
                elif x == j and y == j:
                    cost += 1
        return cost

    def dfs(i: int, mapping: list[int | None], used: set[int], inv: dict[int, int],
            cost: int):
        if cost + type_bound(i, used) >= best[0]:
            return
        if i == n1:
            # unused g2 nodes are inserted along with their incident edges
            total = cost + (n2 - len(used))
            for (x, y) in g2.edges:
                if x not in used or y not in used:
                    total += 1
            if total < best[0]:
                best[0] = total
            return
        for j in child_order[i]:
            if j in used:
                continue
            sub = 0 if g1.types[i] == g2.types[j] else 1
            ec = assign_cost(i, j, mapping, inv)
            mapping.append(j)
            used.add(j)
            inv[j] = i
            dfs(i + 1, mapping, used, inv, cost + sub + ec)
            del inv[j]
            used.discard(j)
            mapping.pop()
        ec = assign_cost(i, None, mapping, inv)
        mapping.append(None)
        dfs(i + 1, mapping, used, inv, cost + 1 + ec)
        mapping.pop()

    dfs(0, [], set(), {}, 0)
    return int(best[0])


def ged_cones(aig_a: Aig, cone_a: Cone, aig_b: Aig, cone_b: Cone,
              node_limit: int = 10) -> int | None:
    return ged(typed_graph(aig_a, cone_a), typed_graph(aig_b, cone_b), node_limit)


def sample_ged_pairs(aig: Aig, plan: PartitionPlan, count: int, seed: int,
                     node_limit: int = 10) -> list[tuple[int, int, int]]:
    """Seeded cone pairs (by cone index into plan.all_cones()) within the same
    level, with exact GED; over-limit pairs are skipped."""
    cones = plan.all_cones()
    idx_by_level: dict[int, list[int]] = {}
    for i, c in enumerate(cones):
        idx_by_level.setdefault(c.output_level, []).append(i)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6ED]))
    eligible_levels = [l for l, ix in sorted(idx_by_level.items()) if len(ix) >= 2]
    out: list[tuple[int, int, int]] = []
    cache: dict[tuple[int, int], int | None] = {}
    attempts = 0
    while len(out) < count and attempts < 20 * count and eligible_levels:
        attempts += 1
        lvl = eligible_levels[int(rng.integers(0, len(eligible_levels)))]
        ix = idx_by_level[lvl]
        i = int(rng.integers(0, len(ix)))
        j = int(rng.integers(0, len(ix)))
        if i == j:
            continue
        a, b = ix[i], ix[j]
        key = (min(a, b), max(a, b))
        if key not in cache:
            # GED is symmetric, so one orientation serves both
            cache[key] = ged_cones(aig, cones[key[0]], aig, cones[key[1]], node_limit)
        d = cache[key]
        if d is None:
            continue
        out.append((a, b, d))
    return out


def sample_in_pairs(aig: Aig, plan: PartitionPlan, count: int, seed: int) -> list[tuple[int, int, int]]:
    """Balanced (gate, cone-index) membership pairs, label 1 iff member."""
    cones = plan.all_cones()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x17]))
    out: list[tuple[int, int, int]] = []
    want_pos = count // 2
    n_pos = 0
    attempts = 0
    while len(out) < count and attempts < 40 * count:
        attempts += 1
        ci = int(rng.integers(0, len(cones)))
        cone = cones[ci]
        if n_pos < want_pos:
            g = int(cone.members[int(rng.integers(0, len(cone.members)))])
            out.append((g, ci, 1))
            n_pos += 1
        else:
            g = int(rng.integers(0, aig.node_count))
            lab = 1 if g in cone.global_to_local else 0
            if lab:
                continue
            out.append((g, ci, 0))
    order = rng.permutation(len(out))
    return [out[int(t)] for t in order]


# ---------------------------------------------------------------------------
# label bundle


@dataclass
class LabelSet:
    gate_prob: np.ndarray                                # (n,) float64
    gate_tt_pairs: list[tuple[int, int, float]]
    con_pairs: list[tuple[int, int, int]]
    cone_size: list[int]
    cone_depth: list[int]
    cone_tt64: list[np.ndarray | None]
    graph_tt_pairs: list[tuple[int, int, float]] = field(default_factory=list)
    ged_pairs: list[tuple[int, int, int]] = field(default_factory=list)
    in_pairs: list[tuple[int, int, int]] = field(default_factory=list)
    seed: int = 0
    sim_mode: str = "auto"
    tt64_skipped: int = 0

    def to_payload(self) -> dict:
        return {
            "gate_prob": [float(p) for p in self.gate_prob],
            "gate_tt_pairs": [[i, j, float(d)] for i, j, d in self.gate_tt_pairs],
            "con_pairs": [[i, j, l] for i, j, l in self.con_pairs],
            "cones": [
                {
                    "id": idx,
                    "size": self.cone_size[idx],
                    "depth": self.cone_depth[idx],
                    **({"tt64": [int(b) for b in self.cone_tt64[idx]]}
                       if self.cone_tt64[idx] is not None else {}),
                }
                for idx in range(len(self.cone_size))
            ],
            "graph_tt_pairs": [[a, b, float(d)] for a, b, d in self.graph_tt_pairs],
            "ged_pairs": [[a, b, d] for a, b, d in self.ged_pairs],
            "in_pairs": [[g, c, l] for g, c, l in self.in_pairs],
            "seed": self.seed,
            "sim_mode": self.sim_mode,
            "tt64_skipped": self.tt64_skipped,
        }


def graph_tt_distance(ta: np.ndarray | None, tb: np.ndarray | None) -> float | None:
    if ta is None or tb is None:
        return None
    return tt_pair_distance(ta, tb)


def make_labels(aig: Aig, plan: PartitionPlan, seed: int = 0, sim_mode: str = "auto",
                n_gate_tt: int | None = None, n_con: int | None = None,
                n_ged: int | None = None, n_in: int | None = None,
                ged_node_limit: int = 10) -> LabelSet:
    """Assemble the full supervision bundle for one circuit."""
    ps = patterns_for(aig, sim_mode, seed)
    rt = simulate(aig, ps)
    probs = gate_prob(rt)
    cones = plan.all_cones()
    n_gate_tt = n_gate_tt if n_gate_tt is not None else 2 * aig.node_count
    n_con = n_con if n_con is not None else 2 * aig.node_count
    n_ged = n_ged if n_ged is not None else min(2 * len(cones), 64)
    n_in = n_in if n_in is not None else 2 * len(cones)

    size_l, depth_l, tt_l = [], [], []
    skipped = 0
    for c in cones:
        s, d = cone_size_depth(aig, c)
        size_l.append(s)
        depth_l.append(d)
        tt = cone_truth_table(aig, c)
        if tt is None:
            skipped += 1
        tt_l.append(tt)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x677]))
    gtt_pairs: list[tuple[int, int, float]] = []
    attempts = 0
    want = min(n_ged, max(0, len(cones) * (len(cones) - 1) // 2))
    while len(gtt_pairs) < want and attempts < 20 * max(1, want):
        attempts += 1
        a = int(rng.integers(0, len(cones)))
        b = int(rng.integers(0, len(cones)))
        if a == b:
            continue
        d = graph_tt_distance(tt_l[a], tt_l[b])
        if d is None:
            continue
        gtt_pairs.append((a, b, d))

    return LabelSet(
        gate_prob=probs,
        gate_tt_pairs=sample_gate_tt_pairs(rt, n_gate_tt, seed),
        con_pairs=sample_con_pairs(aig, n_con, seed),
        cone_size=size_l,
        cone_depth=depth_l,
        cone_tt64=tt_l,
        graph_tt_pairs=gtt_pairs,
        ged_pairs=sample_ged_pairs(aig, plan, n_ged, seed, ged_node_limit),
        in_pairs=sample_in_pairs(aig, plan, n_in, seed),
        seed=seed,
        sim_mode=ps.mode if ps.mode == "exhaustive" else f"random:{ps.num_patterns}",
        tt64_skipped=skipped,
    )
