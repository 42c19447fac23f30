"""Central-difference verification for every substrate op and every composed
model block. Inputs are sampled away from kinks (relu / |x| corners) so the
derivative exists at the checked points."""

from __future__ import annotations

import numpy as np

from . import grad as G
from .model import ModelConfig, build_params, node_attrs
from .partition import partition
from .scheduler import assemble_batch, build_batches, pull, EmbeddingStore
from .synth import random_dag_aig

TOL = 1e-4


def _away_from_zero(rng, shape, floor=0.1):
    x = rng.normal(size=shape)
    return np.sign(x) * (np.abs(x) + floor)


def check_ops(seed: int) -> dict[str, float]:
    """One grad_check per substrate op; returns per-op max relative error."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6C]))
    out: dict[str, float] = {}

    def run(name, make, wrt):
        out[name] = G.grad_check(make, wrt)

    a = G.leaf(rng.normal(size=(4, 3)))
    b = G.leaf(rng.normal(size=(3, 5)))
    run("matmul", lambda: G.tmean(G.matmul(a, b)), [a, b])

    c = G.leaf(rng.normal(size=(4, 3)))
    run("add", lambda: G.tmean(G.add(a, c)), [a, c])
    bias = G.leaf(rng.normal(size=3))
    run("add_bias", lambda: G.tmean(G.add(a, bias)), [a, bias])
    run("mul", lambda: G.tmean(G.mul(a, c)), [a, c])
    run("scale", lambda: G.tmean(G.scale(a, -1.7)), [a])

    vec = G.leaf(rng.normal(size=4))
    run("scale_rows", lambda: G.tmean(G.scale_rows(a, vec)), [a, vec])
    p = G.leaf(rng.normal(size=5))
    col = rng.normal(size=6)
    run("outer_const", lambda: G.tmean(G.outer_const(col, p)), [p])
    run("concat0", lambda: G.tmean(G.concat([a, c], axis=0)), [a, c])
    run("concat1", lambda: G.tmean(G.concat([a, c], axis=1)), [a, c])

    idx = np.array([0, 2, 2, 1, 3])
    run("gather_rows", lambda: G.tmean(G.gather_rows(a, idx)), [a])
    rows = G.leaf(rng.normal(size=(3, 4)))
    run("scatter_rows", lambda: G.tmean(G.scatter_rows(rows, np.array([4, 0, 2]), 6)), [rows])
    run("rowsum", lambda: G.tmean(G.rowsum(a)), [a])
    mv = G.leaf(rng.normal(size=3))
    run("matvec", lambda: G.tmean(G.matvec(a, mv)), [a, mv])
    run("sum", lambda: G.tsum(a), [a])
    run("mean", lambda: G.tmean(a), [a])

    seg = np.array([0, 0, 1, 1, 1, 2])
    e = G.leaf(rng.normal(size=(6, 3)))
    run("segment_sum", lambda: G.tmean(G.segment_sum(e, seg, 3)), [e])
    s = G.leaf(rng.normal(size=6))
    run("segment_softmax", lambda: G.tmean(
        G.segment_sum(G.scale_rows(e, G.segment_softmax(s, seg, 3)), seg, 3)), [s, e])

    x = G.leaf(_away_from_zero(rng, (5, 4)))
    run("relu", lambda: G.tmean(G.relu(x)), [x])
    run("leaky_relu", lambda: G.tmean(G.leaky_relu(x, 0.2)), [x])
    run("sigmoid", lambda: G.tmean(G.sigmoid(x)), [x])
    run("softplus", lambda: G.tmean(G.softplus(x)), [x])

    g = G.leaf(rng.normal(size=4))
    bb = G.leaf(rng.normal(size=4))
    run("layer_norm", lambda: G.tmean(G.layer_norm(x, g, bb)), [x, g, bb])

    target = x.values + _away_from_zero(rng, (5, 4), floor=0.3)
    run("l1_loss", lambda: G.l1_loss(x, target), [x])
    tgt01 = (rng.random((5, 4)) > 0.5).astype(np.float64)
    run("bce_loss", lambda: G.bce_loss(G.sigmoid(x), tgt01), [x])

    mask = np.array([True, False, True, False, True])
    other = G.leaf(rng.normal(size=(5, 4)))
    run("blend_rows", lambda: G.tmean(G.blend_rows(x, other, mask)), [x, other])
    return out


def check_blocks(seed: int) -> dict[str, float]:
    """Grad checks through the composed model: tokenizer + transformer +
    pooling + every head, probed at inputs and representative parameters."""
    from .model import (HEAD_SPECS, Streamed, apply_head, pool_cone,
                        sparse_transformer, structural_encoding, tokenize)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB10C]))
    cfg = ModelConfig(d=8, heads=2, tx_depth=2, pool_depth=1, seed=seed)
    params = build_params(cfg)
    aig = random_dag_aig(14, seed=seed + 3)
    plan = partition(aig, 2, 1)
    bp = build_batches(plan, 4, mode="eval")
    level, cones = bp.stages[-1]
    batch = assemble_batch(aig, plan.k, level, 0, cones)
    store = EmbeddingStore(node_count=aig.node_count, dim=cfg.d)
    pull(store, batch)
    attrs = node_attrs(aig)
    out: dict[str, float] = {}

    se_wrt = [params["se.w_level"], params["se.b_and"], params["se.w_not"]]
    out["structural_encoding"] = G.grad_check(
        lambda: G.tmean(structural_encoding(params, attrs, batch.nodes)), se_wrt)

    tok_wrt = [params["tok.pi_hf"], params["tok.f.Wmsg"], params["tok.f.and.W1"],
               params["tok.s.upd.W1"], params["tok.f.att"]]
    out["tokenizer"] = G.grad_check(
        lambda: G.tmean(G.add(*tokenize(params, cfg, aig, batch, attrs))), tok_wrt)

    def tx_scalar():
        hf, hs = tokenize(params, cfg, aig, batch, attrs)
        hf, hs = sparse_transformer(params, cfg, batch, hf, hs)
        return G.tmean(G.add(hf, hs))

    tx_wrt = [params["tx.f.0.Wq0"], params["tx.f.1.Wo"], params["tx.s.0.ffn.W1"],
              params["tx.s.1.ln2g"]]
    out["sparse_transformer"] = G.grad_check(tx_scalar, tx_wrt)

    members = G.leaf(rng.normal(size=(5, cfg.d)))
    members2 = G.leaf(rng.normal(size=(5, cfg.d)))
    pool_wrt = [members, params["pool.f.token"], params["pool.f.0.Wq0"],
                params["pool.s.0.Wo"]]
    out["pooling"] = G.grad_check(
        lambda: G.tmean(G.add(*(lambda cs: (cs.hf_s, cs.hs_s))(
            pool_cone(params, cfg, members, members2)))), pool_wrt)

    for name, (streams, _, _) in HEAD_SPECS.items():
        ins = [G.leaf(rng.normal(size=(3, cfg.d))) for _ in streams]

        def head_scalar(name=name, ins=ins, streams=streams):
            tagged = [Streamed(t, s) for t, s in zip(ins, streams)]
            return G.tmean(apply_head(params, name, tagged))

        out[f"head.{name}"] = G.grad_check(
            head_scalar, ins + [params[f"head.{name}.W1"], params[f"head.{name}.b3"]])
    return out


def run_gradcheck(seed: int = 0, seeds: int = 1) -> dict:
    """Aggregate report over one or more seeds; ``ok`` iff everything < TOL."""
    ops: dict[str, float] = {}
    blocks: dict[str, float] = {}
    for s in range(seed, seed + seeds):
        for k, v in check_ops(s).items():
            ops[k] = max(ops.get(k, 0.0), v)
        for k, v in check_blocks(s).items():
            blocks[k] = max(blocks.get(k, 0.0), v)
    worst = max(list(ops.values()) + list(blocks.values()))
    return {"ops": ops, "blocks": blocks, "max_rel_err": worst, "tol": TOL,
            "ok": bool(worst < TOL)}
