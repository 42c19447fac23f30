"""Acceptance suite: one test per criterion, each prints a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The smoke-training criteria (11/12) share one 50-epoch run.
"""

import time

import numpy as np
import pytest

import aigflow.grad as G
from aigflow.aig import GateType
from aigflow.gradcheck import run_gradcheck
from aigflow.model import (ModelConfig, build_params, encode_batch, node_attrs,
                           sparse_transformer, tokenize)
from aigflow.partition import cone_k, max_cone_size, partition
from aigflow.scheduler import (EmbeddingStore, assemble_batch, build_batches,
                               identity_encode, pull, push, run_schedule)
from aigflow.simulate import exhaustive_patterns, gate_prob, random_patterns, simulate
from aigflow.synth import and_tree, build_aig, duplicate, random_aig, random_dag_aig
from aigflow.training import (AdamState, BalancerState, CircuitBundle, balance,
                              build_lec_pairs, evaluate, lec_eval, tap_grad_norm,
                              train_epoch)

from conftest import load_corpus


def report(n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} — {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def corpus_all():
    return load_corpus()


@pytest.fixture(scope="module")
def smoke(corpus_all):
    """Criterion 11 training run, shared with criterion 12."""
    toys = sorted([a for a in corpus_all if a.name.startswith("toy")],
                  key=lambda a: a.name)
    assert len(toys) == 5 and all(a.node_count <= 500 for a in toys)
    t0 = time.perf_counter()
    bundles = [CircuitBundle.prepare(a, 4, 3, seed=0) for a in toys]
    cfg = ModelConfig(d=32, heads=4, tx_depth=3, pool_depth=2, seed=0)
    params = build_params(cfg)
    opt = AdamState(lr=1e-3)
    bal = BalancerState()
    first = None
    for epoch in range(50):
        rep = train_epoch(bundles[:4], params, cfg, opt, bal, B=128, seed=0,
                          epoch=epoch)
        if first is None:
            first = rep.losses.raw["prob"]
    wall_min = (time.perf_counter() - t0) / 60.0
    return {
        "cfg": cfg, "params": params, "bundles": bundles,
        "first_prob": first, "last_prob": rep.losses.raw["prob"],
        "wall_min": wall_min,
    }


def test_criterion_01_cone_bound(corpus_all):
    t0 = time.perf_counter()
    worst = 0
    for aig in corpus_all:
        k = 4
        plan = partition(aig, k, 3)
        for cone in plan.all_cones():
            assert len(cone.members) <= max_cone_size(k)
            worst = max(worst, len(cone.members))
    rng = np.random.default_rng(2024)
    for i in range(100):
        aig = random_dag_aig(int(rng.integers(12, 90)), seed=10_000 + i)
        k = int(rng.integers(1, 7))
        v = int(rng.integers(0, aig.node_count))
        cone = cone_k(aig, v, k)
        assert len(cone.members) <= max_cone_size(k)
    tree = and_tree(6)
    attained = all(
        len(cone_k(tree, tree.outputs[0], k).members) == max_cone_size(k)
        for k in (3, 4, 5))
    dt = time.perf_counter() - t0
    report(1, attained and dt < 10.0,
           f"cone bound held on corpus + 100 random DAGs, attained exactly on "
           f"binary trees; {dt:.1f}s")


def test_criterion_02_partition_coverage(corpus_all):
    t0 = time.perf_counter()
    fallback_counts = {}
    for aig in corpus_all:
        plan = partition(aig, 4, 3)
        assert plan.covered() == set(range(aig.node_count)), aig.name
        fallback_counts[aig.name] = len(plan.fallback_cones)
    families_zero = all(fallback_counts[n] == 0
                        for n in ("tower_15", "bintree_6", "comb_256x5"))
    dt = time.perf_counter() - t0
    report(2, families_zero and dt < 10.0,
           f"full coverage on every corpus circuit; fallback counts "
           f"{fallback_counts}; {dt:.1f}s")


def test_criterion_03_partition_calibration(corpus_by_name):
    aig = corpus_by_name["calib_b02"]
    assert (aig.node_count, aig.max_level, len(aig.po_ids)) == (47, 9, 4)
    plan = partition(aig, 8, 6)
    n = len(plan.all_cones())
    report(3, 4 <= n <= 8,
           f"47-node/level-9/4-PO circuit at (k=8, d=6) gives {n} cones "
           f"(target 6 +/- 2; out-degree-0 cones deduplicated by output id "
           f"against level-sampled cones)")


def test_criterion_04_process_once_and_immutability(corpus_all):
    t0 = time.perf_counter()
    for aig in corpus_all:
        plan = partition(aig, 4, 3)
        bp = build_batches(plan, 16, mode="eval")
        store = EmbeddingStore(node_count=aig.node_count, dim=2)
        snap = {}
        for idx, (lvl, cones) in enumerate(bp.stages):
            batch = assemble_batch(aig, plan.k, lvl, idx, cones)
            pull(store, batch)
            for li in np.flatnonzero(batch.frozen):
                g = int(batch.nodes[li])
                assert np.array_equal(batch.pulled_hf[li], snap[g][0]), aig.name
                assert np.array_equal(batch.pulled_hs[li], snap[g][1]), aig.name
            hf, hs = identity_encode(batch)
            push(store, batch, hf, hs)
            for row, g in enumerate(batch.fresh_global):
                snap[int(g)] = (hf[row].copy(), hs[row].copy())
        assert np.all(store.update_count == 1), aig.name
    dt = time.perf_counter() - t0
    report(4, dt < 30.0,
           f"update_count == 1 everywhere and frozen embeddings bit-identical "
           f"on all {len(corpus_all)} corpus circuits; {dt:.1f}s")


def test_criterion_05_sublinear_memory(corpus_all):
    largest = max(corpus_all, key=lambda a: a.node_count)
    assert largest.name == "comb_256x5"
    B, k, delta = 64, 4, 3
    peaks = {}
    for mult in (1, 2, 4):
        big = largest if mult == 1 else duplicate(largest, mult)
        plan = partition(big, k, delta)
        bp = build_batches(plan, B, mode="eval")
        _, meter, _ = run_schedule(big, plan, bp, identity_encode, dim=2)
        assert meter.peak_online_nodes <= B * max_cone_size(k)
        peaks[mult] = meter.peak_online_nodes
    report(5, len(set(peaks.values())) == 1,
           f"peak_online_nodes {peaks} identical across 1x/2x/4x duplications "
           f"of {largest.name} and within B*(2^(k+1)-1) = {B * max_cone_size(k)}")


def test_criterion_06_oracle_exactness(corpus_all):
    def enumeration(aig):
        pis = list(map(int, aig.pi_ids))
        order = np.argsort(aig.levels, kind="stable")
        ones = np.zeros(aig.node_count)
        for row in range(1 << len(pis)):
            vals = {}
            for j, pi in enumerate(pis):
                vals[pi] = (row >> j) & 1
            for v in order:
                v = int(v)
                t = aig.gate_types[v]
                if t == GateType.PI:
                    vals.setdefault(v, 0)  # constant node
                elif t == GateType.AND:
                    a, b = (int(u) for u in aig.fanins(v))
                    vals[v] = vals[a] & vals[b]
                else:
                    vals[v] = 1 - vals[int(aig.fanins(v)[0])]
                ones[v] += vals[v]
        return ones / (1 << len(pis))

    checked = []
    for aig in corpus_all:
        if len(aig.pi_ids) > 12:
            continue
        exact = gate_prob(simulate(aig, exhaustive_patterns(aig)))
        assert np.array_equal(exact, enumeration(aig)), aig.name
        approx = gate_prob(simulate(aig, random_patterns(aig, 4096, seed=1)))
        assert np.max(np.abs(exact - approx)) <= 0.05, aig.name
        checked.append(aig.name)
    report(6, len(checked) >= 5,
           f"exhaustive gate_prob exactly matches enumeration and 4096-pattern "
           f"mode stays within 0.05 on {checked}")


def test_criterion_07_gradient_correctness():
    t0 = time.perf_counter()
    rep = run_gradcheck(seed=0, seeds=10)
    dt = time.perf_counter() - t0
    report(7, rep["ok"] and dt < 120.0,
           f"all {len(rep['ops'])} ops and {len(rep['blocks'])} blocks pass at "
           f"max rel err {rep['max_rel_err']:.2e} over 10 seeds; {dt:.1f}s")


def test_criterion_08_fast_path_equivalence():
    cfg = ModelConfig(d=16, heads=4, tx_depth=2, pool_depth=1, seed=3)
    params = build_params(cfg)
    worst = 0.0
    cones_checked = 0
    skip_ok = True
    for seed in range(10):
        aig = random_aig(5, 60, seed=seed)
        plan = partition(aig, 4, 3)
        bp = build_batches(plan, 8, mode="eval")
        attrs = node_attrs(aig)
        store = EmbeddingStore(node_count=aig.node_count, dim=cfg.d)
        for idx, (lvl, cones) in enumerate(bp.stages):
            if cones_checked >= 50:
                break
            batch = assemble_batch(aig, plan.k, lvl, idx, cones)
            pull(store, batch)
            hf, hs = tokenize(params, cfg, aig, batch, attrs)
            s_f, s_s = sparse_transformer(params, cfg, batch, hf, hs, fast_path=False)
            hf2, hs2 = tokenize(params, cfg, aig, batch, attrs)
            stats = {}
            f_f, f_s = sparse_transformer(params, cfg, batch, hf2, hs2,
                                          fast_path=True, stats=stats)
            worst = max(worst,
                        float(np.max(np.abs(f_f.values - s_f.values))),
                        float(np.max(np.abs(f_s.values - s_s.values))))
            in_deg = np.bincount(batch.aug_edges[:, 1], minlength=len(batch.nodes))
            skip_ok = skip_ok and stats["skipped_destinations"] == int((in_deg == 1).sum())
            cones_checked += len(cones)
            push(store, batch, f_f.values[batch.fresh_local], f_s.values[batch.fresh_local])

    # chain-heavy wall-time direction: a brush of PI->NOT columns is all
    # degree-1 destinations
    types, edges = [], []
    for c in range(150):
        base = len(types)
        types += [GateType.PI, GateType.NOT]
        edges.append((base, base + 1))
    brush = build_aig(types, edges)
    plan = partition(brush, 2, 1)
    lvl, cones = build_batches(plan, 150, mode="eval").stages[0]
    batch = assemble_batch(brush, plan.k, lvl, 0, cones)
    pull(EmbeddingStore(node_count=brush.node_count, dim=cfg.d), batch)
    attrs = node_attrs(brush)

    def best_time(fast):
        best = float("inf")
        for _ in range(7):
            hf, hs = tokenize(params, cfg, brush, batch, attrs)
            t0 = time.perf_counter()
            sparse_transformer(params, cfg, batch, hf, hs, fast_path=fast)
            best = min(best, time.perf_counter() - t0)
        return best

    t_general = best_time(False)
    t_fast = best_time(True)
    report(8, worst < 1e-12 and skip_ok and cones_checked >= 50 and t_fast < t_general,
           f"max deviation {worst:.2e} over {cones_checked} cones, skip counts "
           f"exact, chain-heavy wall time {t_fast * 1e3:.2f}ms < general "
           f"{t_general * 1e3:.2f}ms")


def test_criterion_09_attention_normalization(corpus_by_name):
    aig = corpus_by_name["rand_mid"]
    cfg = ModelConfig(d=16, heads=4, tx_depth=2, pool_depth=2, seed=4)
    params = build_params(cfg)
    bundle_plan = partition(aig, 4, 3)
    attrs = node_attrs(aig)
    worst = 0.0
    for fast in (False, True):
        bp = build_batches(bundle_plan, 16, mode="eval")
        store = EmbeddingStore(node_count=aig.node_count, dim=cfg.d)
        for idx, (lvl, cones) in enumerate(bp.stages):
            batch = assemble_batch(aig, bundle_plan.k, lvl, idx, cones)
            pull(store, batch)
            enc = encode_batch(params, cfg, aig, batch, attrs,
                               fast_path=fast, collect_stats=True)
            worst = max(worst, enc.stats["max_alpha_sum_err"])
            push(store, batch, *enc.fresh_values(batch))
    report(9, worst <= 1e-12,
           f"per-destination attention weight sums within {worst:.2e} of 1 over "
           f"every head/block/batch of full schedule runs (both paths)")


def test_criterion_10_balancer_algebra():
    # synthetic two-task case with tap-gradient norms exactly 2 and 0.5
    w = G.leaf(np.array([[1.0, 1.0]]))
    state = BalancerState()
    losses = {"prob": G.tsum(G.scale(w, 2.0 / np.sqrt(2))),
              "con": G.tsum(G.scale(w, 0.5 / np.sqrt(2)))}
    _, weights, gnorms = balance(losses, state, [w])
    norm_ok = True
    for task in losses:
        G.reset_graph(losses[task])
        G.backward(losses[task])
        norm_ok = norm_ok and abs(tap_grad_norm([w]) * weights[task] - 1.0) < 1e-12

    state2 = BalancerState(beta=0.9)
    logged = []
    for step in range(10):
        g = 0.4 + 0.25 * step
        # d/dw of sum(g*w) is g per element; the 2-element tap gives norm g*sqrt(2)
        balance({"prob": G.tsum(G.scale(w, g))}, state2, [w])
        logged.append(g * np.sqrt(2))
    ema = logged[0]
    for g in logged[1:]:
        ema = 0.9 * ema + 0.1 * g
    traj_ok = state2.ema["prob"] == pytest.approx(ema, rel=1e-12)
    report(10, norm_ok and traj_ok,
           f"fresh-state balanced tap-gradient norms == 1 for norms "
           f"{{{gnorms['prob']:.1f}, {gnorms['con']:.2f}}}; 10-step EMA matches "
           f"the closed-form recurrence")


def test_criterion_11_smoke_training(smoke):
    ratio = smoke["last_prob"] / smoke["first_prob"]
    metrics = evaluate(smoke["params"], smoke["cfg"], smoke["bundles"][4:], B=128)
    ok = (ratio <= 0.5 and metrics["P_con"] > 0.5 and smoke["wall_min"] < 15.0)
    report(11, ok,
           f"50 epochs on 4 toy circuits: L_prob {smoke['first_prob']:.4f} -> "
           f"{smoke['last_prob']:.4f} (ratio {ratio:.2f} <= 0.5), held-out "
           f"P_con {metrics['P_con']:.3f} > 0.5, wall {smoke['wall_min']:.1f} min < 15")


def test_criterion_12_lec_desk_scale(smoke):
    pairs = build_lec_pairs(smoke["bundles"], seed=0)
    res = lec_eval(smoke["params"], smoke["cfg"], smoke["bundles"], pairs, B=128)
    rate_ok = 0.01 <= res["positive_rate"] <= 0.05
    ap_ok = res["AP"] > res["positive_rate"]
    report(12, rate_ok and ap_ok,
           f"{res['pairs']} pairs at {res['positive_rate'] * 100:.2f}% positive "
           f"rate; trained AP {res['AP']:.4f} > prevalence baseline "
           f"{res['positive_rate']:.4f} (PR-AUC {res['PR_AUC']:.4f})")


def test_criterion_13_train_determinism(tmp_path, capsys):
    from aigflow.cli import main as cli_main

    toy = str((tmp_path / "c.aag"))
    from aigflow.aig import to_aiger_text
    (tmp_path / "c.aag").write_text(to_aiger_text(random_aig(4, 30, seed=55)))
    argv = ["train", "--k", "4", "--delta", "3", "--dim", "16", "--depth", "2",
            "--heads", "4", "--pool-depth", "1", "--lr", "0.002", "--epochs", "2",
            "--seed", "9", "--batch", "16", toy]
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert cli_main(argv + ["--out", str(out)]) == 0
        capsys.readouterr()
        outs.append(out)
    same = all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
        for f in ("epochs.jsonl", "ckpt_final.json", "ckpt_final.bin"))
    report(13, same,
           "two `train` runs with identical config and seed produced "
           "byte-identical epoch reports and checkpoints")
