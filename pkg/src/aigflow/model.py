"""The network: structural encoding, GNN tokenizer producing disentangled
(hf, hs) streams, a GAT-based sparse transformer over original plus virtual
edges with a degree-1 fast path, a pooling transformer for cone embeddings,
and the task heads.

The two streams never share parameters: perturbing any hs-side tensor leaves
every functional-head output bit-identical, and vice versa.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import grad as G
from .aig import Aig, GateType, fanout_count_arrays
from .grad import ParamRegistry, Tensor
from .scheduler import WorkBatch


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    d: int = 32
    tokenizer_rounds: int = 1
    tx_depth: int = 3
    heads: int = 4
    pool_depth: int = 2
    leaky_slope: float = 0.2
    seed: int = 0
    use_fast_path: bool = True

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ModelError(f"embedding dim {self.d} not divisible by {self.heads} heads")
        for name in ("d", "tokenizer_rounds", "tx_depth", "heads", "pool_depth"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")

    @property
    def dh(self) -> int:
        return self.d // self.heads


@dataclass
class NodeState:
    hf: Tensor
    hs: Tensor


@dataclass
class ConeState:
    hf_s: Tensor
    hs_s: Tensor


@dataclass
class Streamed:
    """A tensor tagged with the stream it came from ("hf" or "hs")."""
    t: Tensor
    stream: str


# head name -> (input streams, input width factor, output dim, squash)
HEAD_SPECS: dict[str, tuple[tuple[str, ...], int, str]] = {
    "prob": (("hf",), 1, "sigmoid"),
    "gate_tt": (("hf", "hf"), 1, "sigmoid"),
    "con": (("hs", "hs"), 1, "sigmoid"),
    "tt": (("hf",), 64, "sigmoid"),
    "graph_tt": (("hf", "hf"), 1, "sigmoid"),
    "ged": (("hs", "hs"), 1, "softplus"),
    "size": (("hs",), 1, "softplus"),
    "depth": (("hs",), 1, "softplus"),
    "in": (("hs", "hs"), 1, "sigmoid"),
}


# ---------------------------------------------------------------------------
# parameter construction


def _glorot(rng, fin, fout):
    return rng.normal(0.0, np.sqrt(2.0 / (fin + fout)), size=(fin, fout))


def build_params(cfg: ModelConfig) -> ParamRegistry:
    """Deterministic parameter bank; identical seeds give identical tensors."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xDEC0]))
    p = ParamRegistry()
    d, dh = cfg.d, cfg.dh

    for nm in ("level", "and", "not"):
        p.register(f"se.w_{nm}", rng.normal(0.0, 1.0 / np.sqrt(d), size=d))
        p.register(f"se.b_{nm}", np.zeros(d))

    p.register("tok.pi_hf", rng.normal(0.0, 1.0 / np.sqrt(d), size=(1, d)))
    for stream in ("f", "s"):
        p.register(f"tok.{stream}.Wmsg", _glorot(rng, d, d))
        p.register(f"tok.{stream}.att", rng.normal(0.0, 1.0 / np.sqrt(d), size=d))
        p.register(f"tok.{stream}.Wval", _glorot(rng, d, d))
    for gate in ("and", "not"):
        p.register(f"tok.f.{gate}.W1", _glorot(rng, d, d))
        p.register(f"tok.f.{gate}.b1", np.zeros(d))
        p.register(f"tok.f.{gate}.W2", _glorot(rng, d, d))
        p.register(f"tok.f.{gate}.b2", np.zeros(d))
    p.register("tok.s.upd.W1", _glorot(rng, 2 * d, d))
    p.register("tok.s.upd.b1", np.zeros(d))
    p.register("tok.s.upd.W2", _glorot(rng, d, d))
    p.register("tok.s.upd.b2", np.zeros(d))

    def block(prefix: str):
        for h in range(cfg.heads):
            p.register(f"{prefix}.Wq{h}", _glorot(rng, d, dh))
            p.register(f"{prefix}.Wk{h}", _glorot(rng, d, dh))
            p.register(f"{prefix}.Wv{h}", _glorot(rng, d, dh))
        p.register(f"{prefix}.Wo", _glorot(rng, d, d))
        p.register(f"{prefix}.bo", np.zeros(d))
        p.register(f"{prefix}.ln1g", np.ones(d))
        p.register(f"{prefix}.ln1b", np.zeros(d))
        p.register(f"{prefix}.ffn.W1", _glorot(rng, d, 2 * d))
        p.register(f"{prefix}.ffn.b1", np.zeros(2 * d))
        p.register(f"{prefix}.ffn.W2", _glorot(rng, 2 * d, d))
        p.register(f"{prefix}.ffn.b2", np.zeros(d))
        p.register(f"{prefix}.ln2g", np.ones(d))
        p.register(f"{prefix}.ln2b", np.zeros(d))

    for stream in ("f", "s"):
        for i in range(cfg.tx_depth):
            block(f"tx.{stream}.{i}")
        p.register(f"pool.{stream}.token", rng.normal(0.0, 1.0 / np.sqrt(d), size=(1, d)))
        for i in range(cfg.pool_depth):
            block(f"pool.{stream}.{i}")

    for name, (streams, out_mult, _) in HEAD_SPECS.items():
        fin = d * len(streams)
        hid = d
        fout = out_mult
        p.register(f"head.{name}.W1", _glorot(rng, fin, hid))
        p.register(f"head.{name}.b1", np.zeros(hid))
        p.register(f"head.{name}.W2", _glorot(rng, hid, hid))
        p.register(f"head.{name}.b2", np.zeros(hid))
        p.register(f"head.{name}.W3", _glorot(rng, hid, fout))
        p.register(f"head.{name}.b3", np.zeros(fout))
    return p


def balancer_tap_names(cfg: ModelConfig) -> list[str]:
    """Output-projection weights of the final transformer block, both streams."""
    i = cfg.tx_depth - 1
    return [f"tx.f.{i}.Wo", f"tx.s.{i}.Wo"]


# ---------------------------------------------------------------------------
# node attributes and structural encoding


@dataclass
class NodeAttrs:
    levels: np.ndarray
    out_and: np.ndarray
    out_not: np.ndarray


def node_attrs(aig: Aig) -> NodeAttrs:
    oa, on = fanout_count_arrays(aig)
    return NodeAttrs(levels=aig.levels.astype(np.float64), out_and=oa.astype(np.float64),
                     out_not=on.astype(np.float64))


def structural_encoding(params: ParamRegistry, attrs: NodeAttrs,
                        node_ids: np.ndarray) -> Tensor:
    """SE rows for the given nodes: sum of three linear maps applied to
    log1p(level), log1p(out_and), log1p(out_not)."""
    rows = None
    for nm, col in (("level", attrs.levels), ("and", attrs.out_and), ("not", attrs.out_not)):
        part = G.outer_const(np.log1p(col[node_ids]), params[f"se.w_{nm}"])
        part = G.add(part, params[f"se.b_{nm}"])
        rows = part if rows is None else G.add(rows, part)
    return rows


# ---------------------------------------------------------------------------
# attention plumbing


def _mlp2(params: ParamRegistry, prefix: str, x: Tensor) -> Tensor:
    h = G.relu(G.add(G.matmul(x, params[f"{prefix}.W1"]), params[f"{prefix}.b1"]))
    return G.add(G.matmul(h, params[f"{prefix}.W2"]), params[f"{prefix}.b2"])


def _attend(params: ParamRegistry, prefix: str, x: Tensor, src: np.ndarray,
            dst: np.ndarray, n_nodes: int, cfg: ModelConfig, fast_path: bool,
            stats: dict | None):
    """One multi-head GAT aggregation over the given edges.

    Destinations with exactly one in-edge skip score computation and
    normalization when ``fast_path`` is set (their weight is fixed at 1).
    Returns the (n_nodes, d) aggregated rows (zero rows for isolated nodes).
    """
    in_deg = np.bincount(dst, minlength=n_nodes) if len(dst) else np.zeros(n_nodes, dtype=np.int64)
    if stats is not None:
        stats.setdefault("max_alpha_sum_err", 0.0)
    if fast_path and len(dst):
        deg1 = in_deg == 1
        fast_mask = deg1[dst]
    else:
        deg1 = np.zeros(n_nodes, dtype=bool)
        fast_mask = np.zeros(len(dst), dtype=bool)
    gen_mask = ~fast_mask
    src_g, dst_g = src[gen_mask], dst[gen_mask]
    src_f, dst_f = src[fast_mask], dst[fast_mask]
    gen_dsts = np.unique(dst_g)
    compact = {int(v): i for i, v in enumerate(gen_dsts)}
    seg_g = np.array([compact[int(v)] for v in dst_g], dtype=np.int64)
    inv_sqrt = 1.0 / np.sqrt(cfg.dh)

    head_outs = []
    for h in range(cfg.heads):
        v = G.matmul(x, params[f"{prefix}.Wv{h}"])
        pieces = []
        segs = []
        if len(src_g):
            q = G.matmul(x, params[f"{prefix}.Wq{h}"])
            k = G.matmul(x, params[f"{prefix}.Wk{h}"])
            scores = G.leaky_relu(
                G.scale(G.rowsum(G.mul(G.gather_rows(q, dst_g), G.gather_rows(k, src_g))),
                        inv_sqrt),
                cfg.leaky_slope)
            alpha = G.segment_softmax(scores, seg_g, len(gen_dsts))
            if stats is not None:
                sums = np.zeros(len(gen_dsts))
                np.add.at(sums, seg_g, alpha.values)
                stats["max_alpha_sum_err"] = max(
                    stats.get("max_alpha_sum_err", 0.0),
                    float(np.abs(sums - 1.0).max()) if len(sums) else 0.0)
            pieces.append(G.scale_rows(G.gather_rows(v, src_g), alpha))
            segs.append(dst_g)
        if len(src_f):
            pieces.append(G.gather_rows(v, src_f))
            segs.append(dst_f)
        if not pieces:
            head_outs.append(G.constant(np.zeros((n_nodes, cfg.dh))))
            continue
        allv = pieces[0] if len(pieces) == 1 else G.concat(pieces, axis=0)
        allseg = np.concatenate(segs)
        head_outs.append(G.segment_sum(allv, allseg, n_nodes))
    agg = G.concat(head_outs, axis=1)
    out = G.add(G.matmul(agg, params[f"{prefix}.Wo"]), params[f"{prefix}.bo"])
    if stats is not None:
        stats["skipped_destinations"] = int(deg1.sum())
    return out, in_deg


def _tx_block(params: ParamRegistry, prefix: str, x: Tensor, src, dst, n_nodes,
              cfg: ModelConfig, fast_path: bool, stats: dict | None) -> Tensor:
    """Attention + residual + LN, then FFN + residual + LN.

    Nodes with no in-edges pass through the attention stage unchanged but
    still receive the FFN refinement.
    """
    attn, in_deg = _attend(params, prefix, x, src, dst, n_nodes, cfg, fast_path, stats)
    y = G.layer_norm(G.add(x, attn), params[f"{prefix}.ln1g"], params[f"{prefix}.ln1b"])
    connected = in_deg > 0
    y = G.blend_rows(y, x, connected)
    f = _ffn(params, prefix, y)
    return G.layer_norm(G.add(y, f), params[f"{prefix}.ln2g"], params[f"{prefix}.ln2b"])


def _ffn(params: ParamRegistry, prefix: str, y: Tensor) -> Tensor:
    h = G.relu(G.add(G.matmul(y, params[f"{prefix}.ffn.W1"]), params[f"{prefix}.ffn.b1"]))
    return G.add(G.matmul(h, params[f"{prefix}.ffn.W2"]), params[f"{prefix}.ffn.b2"])


# ---------------------------------------------------------------------------
# tokenizer


def tokenize(params: ParamRegistry, cfg: ModelConfig, aig: Aig, batch: WorkBatch,
             attrs: NodeAttrs) -> tuple[Tensor, Tensor]:
    """Level-synchronous message passing over the batch's original edges.

    Fresh PIs initialize hf to the learned constant and hs to SE(v); fresh
    internal nodes aggregate fan-in messages with singleton-safe attention;
    frozen nodes contribute but are never rewritten.
    """
    nodes = batch.nodes
    n = len(nodes)
    d = cfg.d
    kinds = aig.gate_types[nodes]
    frozen = batch.frozen
    fresh_mask = ~frozen
    pi_mask = (kinds == GateType.PI) & fresh_mask

    se_all = structural_encoding(params, attrs, nodes)
    zeros = G.constant(np.zeros((n, d)))
    pulled_hf = G.constant(batch.pulled_hf)
    pulled_hs = G.constant(batch.pulled_hs)

    pi_tile = G.gather_rows(params["tok.pi_hf"], np.zeros(n, dtype=np.int64))
    hf = G.blend_rows(pi_tile, zeros, pi_mask)
    hf = G.blend_rows(pulled_hf, hf, frozen)
    hs = G.blend_rows(se_all, zeros, pi_mask)
    hs = G.blend_rows(pulled_hs, hs, frozen)

    levels = aig.levels[nodes]
    internal = fresh_mask & (kinds != GateType.PI)
    if not internal.any():
        return hf, hs
    src_all = batch.orig_edges[:, 0]
    dst_all = batch.orig_edges[:, 1]
    lvl_list = sorted(set(int(l) for l in levels[internal]))

    for _ in range(cfg.tokenizer_rounds):
        for lvl in lvl_list:
            dst_sel = np.flatnonzero(internal & (levels == lvl))
            emask = np.isin(dst_all, dst_sel)
            src_e, dst_e = src_all[emask], dst_all[emask]
            pos_of = {int(v): i for i, v in enumerate(dst_sel)}

            def level_msg(state: Tensor, stream: str) -> Tensor:
                if len(src_e) == 0:
                    return G.constant(np.zeros((len(dst_sel), d)))
                proj = G.matmul(state, params[f"tok.{stream}.Wmsg"])
                scores = G.leaky_relu(G.matvec(G.gather_rows(proj, src_e),
                                               params[f"tok.{stream}.att"]),
                                      cfg.leaky_slope)
                with_e = np.unique(dst_e)
                seg = np.array([np.searchsorted(with_e, v) for v in dst_e], dtype=np.int64)
                alpha = G.segment_softmax(scores, seg, len(with_e))
                vals = G.gather_rows(G.matmul(state, params[f"tok.{stream}.Wval"]), src_e)
                agg = G.segment_sum(G.scale_rows(vals, alpha), seg, len(with_e))
                rows_pos = np.array([pos_of[int(v)] for v in with_e], dtype=np.int64)
                return G.scatter_rows(agg, rows_pos, len(dst_sel))

            msg_f = level_msg(hf, "f")
            and_rows = kinds[dst_sel] == GateType.AND
            upd_and = _mlp2(params, "tok.f.and", msg_f)
            upd_not = _mlp2(params, "tok.f.not", msg_f)
            upd_f = G.blend_rows(upd_and, upd_not, and_rows)

            msg_s = level_msg(hs, "s")
            se_rows = G.gather_rows(se_all, dst_sel)
            upd_s = _mlp2(params, "tok.s.upd", G.concat([msg_s, se_rows], axis=1))

            lvl_mask = np.zeros(n, dtype=bool)
            lvl_mask[dst_sel] = True
            hf = G.blend_rows(G.scatter_rows(upd_f, dst_sel, n), hf, lvl_mask)
            hs = G.blend_rows(G.scatter_rows(upd_s, dst_sel, n), hs, lvl_mask)
    return hf, hs


# ---------------------------------------------------------------------------
# sparse transformer and pooling


def sparse_transformer(params: ParamRegistry, cfg: ModelConfig, batch: WorkBatch,
                       hf: Tensor, hs: Tensor, fast_path: bool | None = None,
                       stats: dict | None = None) -> tuple[Tensor, Tensor]:
    """tx_depth blocks per stream over original + virtual (pruned) edges.

    Frozen rows are restored after every block, so pulled embeddings stay
    bit-identical."""
    if fast_path is None:
        fast_path = cfg.use_fast_path
    n = len(batch.nodes)
    src = batch.aug_edges[:, 0]
    dst = batch.aug_edges[:, 1]
    frozen = batch.frozen
    pulled_hf = G.constant(batch.pulled_hf)
    pulled_hs = G.constant(batch.pulled_hs)
    for i in range(cfg.tx_depth):
        hf = _tx_block(params, f"tx.f.{i}", hf, src, dst, n, cfg, fast_path, stats)
        hf = G.blend_rows(pulled_hf, hf, frozen)
        hs = _tx_block(params, f"tx.s.{i}", hs, src, dst, n, cfg, fast_path, stats)
        hs = G.blend_rows(pulled_hs, hs, frozen)
    return hf, hs


def degree1_fast_path(params: ParamRegistry, cfg: ModelConfig, batch: WorkBatch,
                      hf: Tensor, hs: Tensor, stats: dict | None = None):
    """sparse_transformer with the in-degree-1 skip enabled; numerically
    identical to the general path."""
    if stats is None:
        stats = {}
    out = sparse_transformer(params, cfg, batch, hf, hs, fast_path=True, stats=stats)
    return out, stats


def pool_cone(params: ParamRegistry, cfg: ModelConfig, member_hf: Tensor,
              member_hs: Tensor, stats: dict | None = None) -> ConeState:
    """A learned pool token attends over cone member states (two blocks per
    stream); permutation-invariant because members are canonically sorted."""
    m = member_hf.shape[0]
    if m == 0:
        raise ModelError("empty cone")

    def run(stream: str, x_members: Tensor) -> Tensor:
        p = params[f"pool.{stream}.token"]
        for i in range(cfg.pool_depth):
            prefix = f"pool.{stream}.{i}"
            head_outs = []
            for h in range(cfg.heads):
                q = G.matmul(p, params[f"{prefix}.Wq{h}"])
                k = G.matmul(x_members, params[f"{prefix}.Wk{h}"])
                v = G.matmul(x_members, params[f"{prefix}.Wv{h}"])
                scores = G.leaky_relu(
                    G.scale(G.rowsum(G.mul(G.gather_rows(q, np.zeros(m, dtype=np.int64)), k)),
                            1.0 / np.sqrt(cfg.dh)),
                    cfg.leaky_slope)
                alpha = G.segment_softmax(scores, np.zeros(m, dtype=np.int64), 1)
                if stats is not None:
                    stats["max_alpha_sum_err"] = max(
                        stats.get("max_alpha_sum_err", 0.0),
                        abs(float(alpha.values.sum()) - 1.0))
                head_outs.append(G.segment_sum(G.scale_rows(v, alpha),
                                               np.zeros(m, dtype=np.int64), 1))
            attn = G.add(G.matmul(G.concat(head_outs, axis=1), params[f"{prefix}.Wo"]),
                         params[f"{prefix}.bo"])
            p = G.layer_norm(G.add(p, attn), params[f"{prefix}.ln1g"], params[f"{prefix}.ln1b"])
            p = G.layer_norm(G.add(p, _ffn(params, prefix, p)),
                             params[f"{prefix}.ln2g"], params[f"{prefix}.ln2b"])
        return p

    return ConeState(hf_s=run("f", member_hf), hs_s=run("s", member_hs))


# ---------------------------------------------------------------------------
# task heads


def apply_head(params: ParamRegistry, name: str, inputs: list[Streamed]) -> Tensor:
    """3-layer MLP head; rejects inputs wired from the wrong stream."""
    if name not in HEAD_SPECS:
        raise ModelError(f"unknown head {name!r}")
    streams, _, squash = HEAD_SPECS[name]
    if len(inputs) != len(streams):
        raise ModelError(f"head {name!r} takes {len(streams)} inputs, got {len(inputs)}")
    for want, got in zip(streams, inputs):
        if got.stream != want:
            raise ModelError(f"head {name!r} expects {want} stream, got {got.stream}")
    x = inputs[0].t if len(inputs) == 1 else G.concat([s.t for s in inputs], axis=1)
    h = G.relu(G.add(G.matmul(x, params[f"head.{name}.W1"]), params[f"head.{name}.b1"]))
    h = G.relu(G.add(G.matmul(h, params[f"head.{name}.W2"]), params[f"head.{name}.b2"]))
    out = G.add(G.matmul(h, params[f"head.{name}.W3"]), params[f"head.{name}.b3"])
    return G.sigmoid(out) if squash == "sigmoid" else G.softplus(out)


# ---------------------------------------------------------------------------
# batch encoding (ties tokenizer + transformer + pooling together)


@dataclass
class BatchEncoding:
    hf: Tensor
    hs: Tensor
    cone_states: list[ConeState]
    stats: dict = field(default_factory=dict)

    def fresh_values(self, batch: WorkBatch) -> tuple[np.ndarray, np.ndarray]:
        idx = batch.fresh_local
        return self.hf.values[idx].copy(), self.hs.values[idx].copy()


def encode_batch(params: ParamRegistry, cfg: ModelConfig, aig: Aig, batch: WorkBatch,
                 attrs: NodeAttrs, fast_path: bool | None = None,
                 collect_stats: bool = False, with_cones: bool = True) -> BatchEncoding:
    stats: dict | None = {} if collect_stats else None
    hf, hs = tokenize(params, cfg, aig, batch, attrs)
    hf, hs = sparse_transformer(params, cfg, batch, hf, hs, fast_path=fast_path, stats=stats)
    cone_states = []
    if with_cones:
        for locs in batch.cone_members_local:
            cone_states.append(pool_cone(params, cfg,
                                         G.gather_rows(hf, locs),
                                         G.gather_rows(hs, locs), stats=stats))
    return BatchEncoding(hf=hf, hs=hs, cone_states=cone_states, stats=stats or {})


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path_base: str, cfg: ModelConfig, params: ParamRegistry):
    """JSON manifest (config + shape/offset table) plus a little-endian
    float64 flat binary blob."""
    entries = []
    blobs = []
    offset = 0
    for name, t in params.items():
        arr = np.ascontiguousarray(t.values, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {"config": asdict(cfg), "dtype": "<f8", "params": entries,
                "total_bytes": offset}
    with open(path_base + ".json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(path_base + ".bin", "wb") as fh:
        fh.write(b"".join(blobs))


def load_checkpoint(path_base: str) -> tuple[ModelConfig, ParamRegistry]:
    with open(path_base + ".json") as fh:
        manifest = json.load(fh)
    cfg = ModelConfig(**manifest["config"])
    params = build_params(cfg)
    blob = open(path_base + ".bin", "rb").read()
    if len(blob) != manifest["total_bytes"]:
        raise ModelError("checkpoint blob size mismatch")
    names = set(params.names())
    seen = set()
    for entry in manifest["params"]:
        name, shape, off = entry["name"], tuple(entry["shape"]), entry["offset"]
        if name not in names:
            raise ModelError(f"unknown parameter {name!r} in checkpoint")
        t = params[name]
        if t.values.shape != shape:
            raise ModelError(f"shape mismatch for {name!r}: "
                             f"checkpoint {shape}, model {t.values.shape}")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        t.values = arr.astype(np.float64).copy()
        seen.add(name)
    if seen != names:
        raise ModelError(f"checkpoint missing parameters: {sorted(names - seen)[:4]}")
    return cfg, params
