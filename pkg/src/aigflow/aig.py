"""And-inverter graph core: AIGER parsing, leveling, fanout statistics.

The graph model is explicit-gate: primary inputs, 2-input AND gates and
1-input NOT gates are all nodes. Complemented AIGER literals are expanded
into NOT nodes during parsing (one node per distinct complemented literal).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class GateType(IntEnum):
    PI = 0
    AND = 1
    NOT = 2


IN_DEGREE = {GateType.PI: 0, GateType.AND: 2, GateType.NOT: 1}


class AigError(ValueError):
    """Malformed AIGER input or a structural contract violation."""


@dataclass
class FanoutStats:
    out_and: int
    out_not: int


@dataclass
class Diagnostic:
    kind: str  # "in_degree" | "cycle" | "dangling" | "duplicate_edge"
    node: int | None
    message: str


@dataclass
class Aig:
    """Explicit-gate DAG with deterministic node ids.

    Node id layout from parsing: declared PIs first (declaration order), then
    the constant-0 input if referenced, then AND gates in definition order,
    then synthesized NOT nodes in first-use order.
    """

    node_count: int
    gate_types: np.ndarray          # (n,) int8 of GateType values
    edges: np.ndarray               # (m, 2) int32, row (src, dst): src feeds dst
    outputs: list[int] = field(default_factory=list)  # declared output nodes
    const0_id: int | None = None
    levels: np.ndarray | None = None
    name: str = ""

    # derived, built lazily
    _pred_indptr: np.ndarray | None = None
    _preds: np.ndarray | None = None
    _succ_indptr: np.ndarray | None = None
    _succs: np.ndarray | None = None
    _po_ids: np.ndarray | None = None

    def __post_init__(self):
        self.gate_types = np.asarray(self.gate_types, dtype=np.int8)
        self.edges = np.asarray(self.edges, dtype=np.int32).reshape(-1, 2)

    # -- adjacency ---------------------------------------------------------

    def _build_adjacency(self):
        n = self.node_count
        src = self.edges[:, 0]
        dst = self.edges[:, 1]
        pred_counts = np.bincount(dst, minlength=n)
        succ_counts = np.bincount(src, minlength=n)
        self._pred_indptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(pred_counts, out=self._pred_indptr[1:])
        self._succ_indptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(succ_counts, out=self._succ_indptr[1:])
        order_by_dst = np.lexsort((src, dst))
        self._preds = src[order_by_dst].astype(np.int32)
        order_by_src = np.lexsort((dst, src))
        self._succs = dst[order_by_src].astype(np.int32)

    @property
    def pred_csr(self) -> tuple[np.ndarray, np.ndarray]:
        if self._pred_indptr is None:
            self._build_adjacency()
        return self._pred_indptr, self._preds

    @property
    def succ_csr(self) -> tuple[np.ndarray, np.ndarray]:
        if self._succ_indptr is None:
            self._build_adjacency()
        return self._succ_indptr, self._succs

    def fanins(self, v: int) -> np.ndarray:
        indptr, preds = self.pred_csr
        return preds[indptr[v]:indptr[v + 1]]

    def fanouts(self, v: int) -> np.ndarray:
        indptr, succs = self.succ_csr
        return succs[indptr[v]:indptr[v + 1]]

    # -- node groups -------------------------------------------------------

    @property
    def pi_ids(self) -> np.ndarray:
        """Free primary inputs (excludes the constant-0 node)."""
        ids = np.flatnonzero(self.gate_types == GateType.PI)
        if self.const0_id is not None:
            ids = ids[ids != self.const0_id]
        return ids.astype(np.int32)

    @property
    def po_ids(self) -> np.ndarray:
        """Nodes with out-degree 0."""
        if self._po_ids is None:
            indptr, _ = self.succ_csr
            deg = np.diff(indptr)
            self._po_ids = np.flatnonzero(deg == 0).astype(np.int32)
        return self._po_ids

    @property
    def max_level(self) -> int:
        if self.levels is None:
            raise AigError("levels not computed")
        return int(self.levels.max()) if self.node_count else 0

    def type_counts(self) -> dict[str, int]:
        return {
            "pi": int(np.sum(self.gate_types == GateType.PI)),
            "and": int(np.sum(self.gate_types == GateType.AND)),
            "not": int(np.sum(self.gate_types == GateType.NOT)),
        }


# ---------------------------------------------------------------------------
# parsing


def _parse_header(line: str) -> tuple[int, int, int, int, int]:
    parts = line.split()
    if len(parts) != 6 or parts[0] != "aag":
        raise AigError(f"malformed header: {line!r}")
    try:
        m, i, l, o, a = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise AigError(f"malformed header: {line!r}") from exc
    if min(m, i, l, o, a) < 0 or i + l + a > m:
        raise AigError(f"inconsistent header counts: {line!r}")
    return m, i, l, o, a


def parse_aiger(text: str, name: str = "") -> Aig:
    """Parse an ASCII AIGER ("aag") document into an explicit-gate Aig.

    Complemented literals become NOT nodes (deduplicated per literal);
    sequential circuits (latches) are rejected. Deterministic: identical text
    yields identical node ids.
    """
    lines = [ln.strip() for ln in text.strip().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise AigError("empty document")
    maxvar, n_in, n_latch, n_out, n_and = _parse_header(lines[0])
    if n_latch > 0:
        raise AigError("sequential circuits (latches) are not supported")
    body_len = n_in + n_out + n_and
    if len(lines) - 1 < body_len:
        raise AigError("truncated body")
    body = lines[1:1 + body_len]
    # remainder is the optional symbol table / comment section; ignored

    def lit_of(tok: str) -> int:
        try:
            lit = int(tok)
        except ValueError as exc:
            raise AigError(f"bad literal {tok!r}") from exc
        if lit < 0 or lit > 2 * maxvar + 1:
            raise AigError(f"literal out of range: {lit}")
        return lit

    in_lits = [lit_of(body[k]) for k in range(n_in)]
    out_lits = [lit_of(body[n_in + k]) for k in range(n_out)]
    and_rows = []
    for k in range(n_and):
        toks = body[n_in + n_out + k].split()
        if len(toks) != 3:
            raise AigError(f"malformed AND line: {body[n_in + n_out + k]!r}")
        and_rows.append(tuple(lit_of(t) for t in toks))

    for lit in in_lits:
        if lit == 0 or lit % 2 != 0:
            raise AigError(f"input literal must be a positive even literal: {lit}")
    if len({lit // 2 for lit in in_lits}) != n_in:
        raise AigError("duplicate input variable")

    var_of_input = {lit // 2 for lit in in_lits}
    var_of_and = {}
    for lhs, _, _ in and_rows:
        if lhs % 2 != 0 or lhs == 0:
            raise AigError(f"AND lhs must be a positive even literal: {lhs}")
        v = lhs // 2
        if v in var_of_input or v in var_of_and:
            raise AigError(f"variable {v} defined twice")
        var_of_and[v] = None

    used_lits = list(out_lits)
    for _, r0, r1 in and_rows:
        used_lits.append(r0)
        used_lits.append(r1)
    for lit in used_lits:
        v = lit // 2
        if v != 0 and v not in var_of_input and v not in var_of_and:
            raise AigError(f"literal {lit} references undefined variable {v}")
    uses_const = any(lit // 2 == 0 for lit in used_lits)

    # node id layout: PIs, (const0), ANDs, NOTs
    var_node: dict[int, int] = {}
    next_id = 0
    for lit in in_lits:
        var_node[lit // 2] = next_id
        next_id += 1
    const0_id = None
    if uses_const:
        const0_id = next_id
        var_node[0] = next_id
        next_id += 1
    for lhs, _, _ in and_rows:
        var_node[lhs // 2] = next_id
        next_id += 1

    not_node: dict[int, int] = {}  # var -> NOT-node id, first-use order
    gate_types = [GateType.PI] * (n_in + (1 if uses_const else 0)) + [GateType.AND] * n_and
    edges: list[tuple[int, int]] = []

    def node_of(lit: int) -> int:
        nonlocal next_id
        v = lit // 2
        if lit % 2 == 0:
            return var_node[v]
        if v not in not_node:
            not_node[v] = next_id
            gate_types.append(GateType.NOT)
            edges.append((var_node[v], next_id))
            next_id += 1
        return not_node[v]

    # first-use order follows the body: outputs section, then AND fanins
    output_nodes = [node_of(lit) for lit in out_lits]
    for lhs, r0, r1 in and_rows:
        dst = var_node[lhs // 2]
        s0 = node_of(r0)
        s1 = node_of(r1)
        if s0 == s1:
            raise AigError(f"AND {lhs} has duplicate fanin literal {r0}")
        edges.append((s0, dst))
        edges.append((s1, dst))

    aig = Aig(
        node_count=next_id,
        gate_types=np.array(gate_types, dtype=np.int8),
        edges=np.array(edges, dtype=np.int32).reshape(-1, 2),
        outputs=output_nodes,
        const0_id=const0_id,
        name=name,
    )
    compute_levels(aig)
    return aig


# ---------------------------------------------------------------------------
# structural attributes


def compute_levels(aig: Aig) -> np.ndarray:
    """Logic level per node: 0 for PIs, otherwise 1 + max over fanins.

    Single topological pass (Kahn); raises on a cycle.
    """
    n = aig.node_count
    indptr, preds = aig.pred_csr
    in_deg = np.diff(indptr).astype(np.int64)
    levels = np.zeros(n, dtype=np.int32)
    sindptr, succs = aig.succ_csr
    ready = [int(v) for v in np.flatnonzero(in_deg == 0)]
    remaining = in_deg.copy()
    seen = 0
    queue = list(ready)
    qi = 0
    while qi < len(queue):
        v = queue[qi]
        qi += 1
        seen += 1
        lv = levels[v]
        for w in succs[sindptr[v]:sindptr[v + 1]]:
            w = int(w)
            if levels[w] < lv + 1:
                levels[w] = lv + 1
            remaining[w] -= 1
            if remaining[w] == 0:
                queue.append(w)
    if seen != n:
        raise AigError("cycle detected")
    aig.levels = levels
    return levels


def topo_levels(aig: Aig) -> list[list[int]]:
    """Node ids grouped by level, ascending; ids ascending within a group."""
    if aig.levels is None:
        compute_levels(aig)
    groups: list[list[int]] = [[] for _ in range(aig.max_level + 1)]
    for v in range(aig.node_count):
        groups[aig.levels[v]].append(v)
    return groups


def fanout_stats(aig: Aig, v: int) -> FanoutStats:
    if not (0 <= v < aig.node_count):
        raise AigError(f"invalid node id {v}")
    outs = aig.fanouts(v)
    kinds = aig.gate_types[outs]
    return FanoutStats(
        out_and=int(np.sum(kinds == GateType.AND)),
        out_not=int(np.sum(kinds == GateType.NOT)),
    )


def fanout_count_arrays(aig: Aig) -> tuple[np.ndarray, np.ndarray]:
    """(out_and, out_not) counts for all nodes at once."""
    n = aig.node_count
    src = aig.edges[:, 0]
    dst_kind = aig.gate_types[aig.edges[:, 1]]
    out_and = np.bincount(src[dst_kind == GateType.AND], minlength=n)
    out_not = np.bincount(src[dst_kind == GateType.NOT], minlength=n)
    return out_and.astype(np.int64), out_not.astype(np.int64)


def validate(aig: Aig) -> list[Diagnostic]:
    """Structural diagnostics; empty list iff all invariants hold."""
    diags: list[Diagnostic] = []
    n = aig.node_count
    if aig.edges.size:
        bad = (aig.edges < 0) | (aig.edges >= n)
        for row in np.flatnonzero(bad.any(axis=1)):
            diags.append(Diagnostic("dangling", None,
                                    f"edge {tuple(aig.edges[row])} references an invalid id"))
    if len(aig.gate_types) != n:
        diags.append(Diagnostic("dangling", None, "gate_types length mismatch"))
        return diags
    ok_edges = aig.edges[((aig.edges >= 0) & (aig.edges < n)).all(axis=1)] if aig.edges.size else aig.edges
    pairs = {tuple(e) for e in ok_edges.tolist()}
    if len(pairs) != len(ok_edges):
        seen = set()
        for e in map(tuple, ok_edges.tolist()):
            if e in seen:
                diags.append(Diagnostic("duplicate_edge", None, f"duplicate edge {e}"))
            seen.add(e)
    in_deg = np.zeros(n, dtype=np.int64)
    for _, d in pairs:
        in_deg[d] += 1
    for v in range(n):
        want = IN_DEGREE[GateType(int(aig.gate_types[v]))]
        if in_deg[v] != want:
            diags.append(Diagnostic(
                "in_degree", v,
                f"node {v} ({GateType(int(aig.gate_types[v])).name}) has in-degree "
                f"{int(in_deg[v])}, expected {want}"))
    # cycle check over the deduplicated edge set
    succ: dict[int, list[int]] = {}
    indeg = dict.fromkeys(range(n), 0)
    for s, d in sorted(pairs):
        succ.setdefault(s, []).append(d)
        indeg[d] += 1
    queue = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    qi = 0
    while qi < len(queue):
        v = queue[qi]
        qi += 1
        seen += 1
        for w in succ.get(v, ()):
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    if seen != n:
        diags.append(Diagnostic("cycle", None, f"{n - seen} nodes participate in a cycle"))
    return diags


def stats(aig: Aig) -> dict:
    """Summary used by the `stats` CLI command."""
    if aig.levels is None:
        compute_levels(aig)
    return {
        "name": aig.name,
        "nodes": aig.node_count,
        "edges": int(len(aig.edges)),
        "pis": int(len(aig.pi_ids)),
        "pos": int(len(aig.po_ids)),
        "declared_outputs": len(aig.outputs),
        "max_level": aig.max_level,
        "type_counts": aig.type_counts(),
    }


# ---------------------------------------------------------------------------
# serialization back to AIGER text


def to_aiger_text(aig: Aig) -> str:
    """Serialize to ASCII AIGER, folding NOT nodes back into complemented
    literals. Raises for NOT-of-NOT chains, which AIGER cannot express.
    """
    types = aig.gate_types
    pi_list = [int(v) for v in np.flatnonzero(types == GateType.PI)]
    if aig.const0_id is not None:
        pi_list = [v for v in pi_list if v != aig.const0_id]
    and_list = [int(v) for v in np.flatnonzero(types == GateType.AND)]
    var_of: dict[int, int] = {}
    for i, v in enumerate(pi_list):
        var_of[v] = i + 1
    for j, v in enumerate(and_list):
        var_of[v] = len(pi_list) + j + 1

    def lit(v: int) -> int:
        v = int(v)
        if aig.const0_id is not None and v == aig.const0_id:
            return 0
        if types[v] == GateType.NOT:
            f = int(aig.fanins(v)[0])
            if types[f] == GateType.NOT:
                raise AigError("NOT-of-NOT chain is not expressible in AIGER")
            return lit(f) ^ 1
        return 2 * var_of[v]

    maxvar = len(pi_list) + len(and_list)
    out_nodes = aig.outputs if aig.outputs else [int(v) for v in aig.po_ids]
    lines = [f"aag {maxvar} {len(pi_list)} 0 {len(out_nodes)} {len(and_list)}"]
    lines += [str(2 * var_of[v]) for v in pi_list]
    lines += [str(lit(v)) for v in out_nodes]
    for v in and_list:
        f = sorted(int(u) for u in aig.fanins(v))
        # fanin literal order is not semantically meaningful; sort for determinism
        lines.append(f"{2 * var_of[v]} {lit(f[0])} {lit(f[1])}")
    return "\n".join(lines) + "\n"


def structural_signature(aig: Aig) -> tuple:
    """Canonical id-independent signature; equal for isomorphic Aigs.

    Hashes each node from PIs upward by (type, sorted fanin hashes) and
    returns the multiset of node signatures plus the output signature list.
    """
    if aig.levels is None:
        compute_levels(aig)
    sig = [None] * aig.node_count
    order = np.argsort(aig.levels, kind="stable")
    pi_counter = 0
    pis_sorted = list(aig.pi_ids)
    pi_rank = {int(v): i for i, v in enumerate(pis_sorted)}
    for v in order:
        v = int(v)
        t = int(aig.gate_types[v])
        if t == GateType.PI:
            if aig.const0_id is not None and v == aig.const0_id:
                sig[v] = ("const0",)
            else:
                sig[v] = ("pi", pi_rank[v])
            pi_counter += 1
        else:
            fan = sorted(sig[int(u)] for u in aig.fanins(v))
            sig[v] = (GateType(t).name, tuple(fan))
    node_multiset = tuple(sorted(map(repr, sig)))
    outs = tuple(repr(sig[int(v)]) for v in (aig.outputs or list(aig.po_ids)))
    return (node_multiset, outs)
