import numpy as np
import pytest

import aigflow.grad as G
from aigflow.model import ModelConfig, Streamed, apply_head, balancer_tap_names, build_params
from aigflow.scheduler import build_batches
from aigflow.synth import comb, random_aig
from aigflow.training import (ALL_TASKS, AdamState, BalancerState, CircuitBundle,
                              LossReport, TrainError, adam_step, average_precision,
                              balance, batch_task_losses, bench_mem_runtime,
                              build_lec_pairs, compute_losses, evaluate, lec_eval,
                              plain_sum, pr_auc, pr_points, tap_grad_norm, train_epoch)

SMALL = ModelConfig(d=16, heads=4, tx_depth=2, pool_depth=1, seed=1)


def small_bundle(seed=30, gates=70, k=4, delta=3):
    aig = random_aig(5, gates, seed=seed, name=f"c{seed}")
    return CircuitBundle.prepare(aig, k, delta, seed=0)


@pytest.fixture(scope="module")
def bundle():
    return small_bundle()


def first_training_batch(bundle, params, cfg):
    from aigflow.model import encode_batch, node_attrs
    from aigflow.scheduler import EmbeddingStore, assemble_batch, pull, push

    bp = build_batches(bundle.plan, 8, mode="eval")
    store = EmbeddingStore(node_count=bundle.aig.node_count, dim=cfg.d)
    results = []
    for idx, (lvl, cones) in enumerate(bp.stages):
        batch = assemble_batch(bundle.aig, bundle.plan.k, lvl, idx, cones)
        pull(store, batch)
        enc = encode_batch(params, cfg, bundle.aig, batch, bundle.attrs)
        results.append((batch, enc))
        push(store, batch, *enc.fresh_values(batch))
    return results


def test_loss_report_sums():
    raw = {t: 0.5 for t in ALL_TASKS}
    rep = LossReport(raw=raw, counts={t: 1 for t in ALL_TASKS})
    assert rep.L_func == pytest.approx(2.0)   # 4 functional components
    assert rep.L_stru == pytest.approx(2.5)   # 5 structural components
    assert rep.L_all == pytest.approx(4.5)
    assert rep.empty_tasks == []


def test_perfect_predictions_zero_loss():
    # heads rigged to emit the exact labels -> every component 0
    probs = np.array([0.25, 0.75])
    pred = G.constant(probs.reshape(-1, 1))
    assert G.l1_loss(pred, probs.reshape(-1, 1)).item() == 0.0
    tgt = np.array([[1.0], [0.0]])
    eps_loss = G.bce_loss(G.constant(np.clip(tgt, 1e-7, 1 - 1e-7)), tgt).item()
    assert eps_loss == pytest.approx(0.0, abs=1e-5)


def test_con_loss_half_everywhere_is_ln2(bundle):
    params = build_params(SMALL)
    params["head.con.W3"].values[:] = 0.0
    params["head.con.b3"].values[:] = 0.0
    batches = first_training_batch(bundle, params, SMALL)
    found = False
    for batch, enc in batches:
        losses, counts = batch_task_losses(params, bundle, batch, enc)
        if "con" in losses:
            found = True
            assert float(losses["con"].values) == pytest.approx(np.log(2), rel=1e-9)
    assert found


def test_batch_losses_match_recomputation(bundle):
    params = build_params(SMALL)
    batches = first_training_batch(bundle, params, SMALL)
    labels = bundle.labels
    checked = set()
    for batch, enc in batches:
        losses, counts = batch_task_losses(params, bundle, batch, enc)
        if "prob" in losses:
            pred = apply_head(params, "prob",
                              [Streamed(G.constant(enc.hf.values[batch.fresh_local]), "hf")])
            expect = float(np.mean(np.abs(pred.values[:, 0]
                                          - labels.gate_prob[batch.fresh_global])))
            assert float(losses["prob"].values) == pytest.approx(expect, rel=1e-12)
            checked.add("prob")
        if "size" in losses:
            cone_ids = [bundle.cone_index[id(c)] for c in batch.cones]
            hs_s = np.concatenate([cs.hs_s.values for cs in enc.cone_states])
            pred = apply_head(params, "size", [Streamed(G.constant(hs_s), "hs")])
            expect = float(np.mean(np.abs(pred.values[:, 0]
                                          - np.array([labels.cone_size[i] for i in cone_ids]))))
            assert float(losses["size"].values) == pytest.approx(expect, rel=1e-12)
            checked.add("size")
    assert {"prob", "size"} <= checked


def test_compute_losses_report(bundle):
    params = build_params(SMALL)
    batch, enc = first_training_batch(bundle, params, SMALL)[0]
    losses, counts = batch_task_losses(params, bundle, batch, enc)
    rep = compute_losses(losses, counts)
    assert rep.L_all == pytest.approx(sum(rep.raw.values()))
    for t in losses:
        assert rep.counts[t] > 0


# ---------------------------------------------------------------------------
# balancer


def test_balancer_all_ema_one_equals_plain_sum(bundle):
    params = build_params(SMALL)
    taps = [params[n] for n in balancer_tap_names(SMALL)]
    batch, enc = first_training_batch(bundle, params, SMALL)[0]
    losses, _ = batch_task_losses(params, bundle, batch, enc)
    state = BalancerState()
    total, weights, _ = balance(losses, state, taps)
    state_one = BalancerState()
    state_one.ema = {t: 1.0 for t in losses}
    total_one, w_one, _ = balance(losses, state_one, taps)
    # beta-decayed EMA after the probe: 0.9*1 + 0.1*g, so compare plain sum
    plain = plain_sum(losses)
    assert set(weights) == set(losses)
    assert float(plain.values) == pytest.approx(
        sum(float(losses[t].values) for t in losses), rel=1e-12)


def test_balancer_fresh_state_normalizes_tap_gradients():
    # two synthetic tasks with tap-gradient norms 2 and 0.5
    w = G.leaf(np.array([[1.0, 1.0]]))
    taps = [w]
    l1 = G.tsum(G.scale(w, 1.0))        # d l1/dw = 1 per element -> norm sqrt(2)
    state = BalancerState()
    losses = {"prob": G.tsum(G.scale(w, 2.0 / np.sqrt(2))),   # norm 2
              "con": G.tsum(G.scale(w, 0.5 / np.sqrt(2)))}    # norm 0.5
    total, weights, gnorms = balance(losses, state, taps)
    assert gnorms["prob"] == pytest.approx(2.0)
    assert gnorms["con"] == pytest.approx(0.5)
    # fresh state: EMA equals the instantaneous norm, so the balanced task
    # gradient at the tap has norm exactly 1
    for task in losses:
        G.reset_graph(losses[task])
        G.backward(losses[task])
        scaled = tap_grad_norm(taps) * weights[task]
        assert scaled == pytest.approx(1.0, rel=1e-12)


def test_balancer_ema_matches_closed_form_recurrence():
    state = BalancerState(beta=0.9)
    w = G.leaf(np.array([[1.0]]))
    logged = []
    for step in range(10):
        g = 0.5 + 0.3 * step
        losses = {"prob": G.tsum(G.scale(w, g))}
        balance(losses, state, [w])
        logged.append(g)
    ema = logged[0]
    for g in logged[1:]:
        ema = 0.9 * ema + 0.1 * g
    assert state.ema["prob"] == pytest.approx(ema, rel=1e-12)


def test_balancer_requires_tap():
    with pytest.raises(TrainError):
        balance({"prob": G.leaf(np.array(1.0))}, BalancerState(), [])


def test_balanced_weights_floored_by_eps():
    state = BalancerState(eps=1e-8)
    state.ema["prob"] = 0.0
    assert state.weight("prob") == pytest.approx(1e8)


# ---------------------------------------------------------------------------
# optimizer


def test_adam_lr_zero_is_strict_noop():
    params = build_params(SMALL)
    before = {n: t.values.copy() for n, t in params.items()}
    for t in params._params.values():
        t.grad = np.ones_like(t.values)
    opt = AdamState(lr=0.0)
    adam_step(opt, params)
    assert opt.step_count == 1
    assert opt.m == {} and opt.v == {}
    for n, t in params.items():
        assert np.array_equal(t.values, before[n])


def test_adam_step_moves_parameters():
    params = build_params(SMALL)
    before = params["head.prob.W1"].values.copy()
    for t in params._params.values():
        t.grad = np.ones_like(t.values)
    adam_step(AdamState(lr=1e-2), params)
    assert not np.array_equal(params["head.prob.W1"].values, before)


# ---------------------------------------------------------------------------
# the loop


def test_train_epoch_lr_zero_keeps_parameters_bit_identical(bundle):
    params = build_params(SMALL)
    before = {n: t.values.copy() for n, t in params.items()}
    opt = AdamState(lr=0.0)
    rep = train_epoch([bundle], params, SMALL, opt, None, B=8, seed=0, epoch=0)
    assert rep.steps > 0
    for n, t in params.items():
        assert np.array_equal(t.values, before[n]), n


def test_train_epoch_deterministic(bundle):
    def run():
        params = build_params(SMALL)
        opt = AdamState(lr=1e-3)
        bal = BalancerState()
        reports = [train_epoch([bundle], params, SMALL, opt, bal, B=8, seed=3, epoch=e)
                   for e in range(2)]
        return reports, {n: t.values.copy() for n, t in params.items()}

    (r1, p1), (r2, p2) = run(), run()
    for a, b in zip(r1, r2):
        assert a.losses.raw == b.losses.raw
    for n in p1:
        assert np.array_equal(p1[n], p2[n]), n


def test_smoke_training_prob_loss_halves():
    # tiny-circuit 50-step contract; the regime (30 nodes, lr 1e-2) was fixed
    # from the smoke run that established attainability (ratio ~0.34)
    aig = random_aig(3, 18, seed=31, name="tiny")
    bundle_small = CircuitBundle.prepare(aig, 4, 3, seed=0)
    params = build_params(SMALL)
    opt = AdamState(lr=1e-2)
    bal = BalancerState()
    first = None
    last = None
    epoch = 0
    steps_done = 0
    while steps_done < 50:
        rep = train_epoch([bundle_small], params, SMALL, opt, bal, B=8,
                          seed=0, epoch=epoch, max_steps=50 - steps_done)
        steps_done += rep.steps
        if first is None:
            first = rep.losses.raw["prob"]
        last = rep.losses.raw["prob"]
        epoch += 1
    assert last <= 0.5 * first, (first, last)


def test_evaluate_metrics_and_agreement(bundle):
    params = build_params(SMALL)
    m = evaluate(params, SMALL, [bundle], B=8)
    assert 0.0 <= m["P_con"] <= 1.0
    assert 0.0 <= m["P_in"] <= 1.0
    assert m["losses"]["L_all"] == pytest.approx(
        m["losses"]["L_func"] + m["losses"]["L_stru"], rel=1e-12)
    # constant-0.5 con head scores chance accuracy against balanced labels
    params["head.con.W3"].values[:] = 0.0
    params["head.con.b3"].values[:] = 0.0
    m2 = evaluate(params, SMALL, [bundle], B=8)
    labs = [l for _, _, l in bundle.labels.con_pairs]
    chance = max(np.mean(labs), 1 - np.mean(labs))
    assert m2["P_con"] == pytest.approx(chance, abs=1e-9)
    assert m2["losses"]["con"] == pytest.approx(np.log(2), rel=1e-9)


def test_evaluate_empty_set_rejected():
    with pytest.raises(TrainError):
        evaluate(build_params(SMALL), SMALL, [])


# ---------------------------------------------------------------------------
# ranking metrics and LEC


def test_average_precision_perfect_ranking():
    labels = np.array([1, 1, 0, 0, 0, 0])
    scores = np.array([0.9, 0.8, 0.4, 0.3, 0.2, 0.1])
    assert average_precision(labels, scores) == 1.0
    assert pr_auc(labels, scores) == pytest.approx(1.0)


def test_average_precision_chance_equals_prevalence():
    rng = np.random.default_rng(0)
    n = 40000
    labels = (rng.random(n) < 0.0129).astype(int)
    scores = rng.random(n)
    ap = average_precision(labels, scores)
    prevalence = labels.mean()
    assert ap == pytest.approx(prevalence, rel=0.35)


def test_pr_points_requires_positives():
    with pytest.raises(TrainError):
        pr_points(np.zeros(5, dtype=int), np.ones(5))


def test_oracle_score_classifier_ap_is_one():
    # score = 1 - true distance: equivalent pairs (distance 0) rank first
    labels = np.array([1, 0, 1, 0, 0])
    dist = np.array([0.0, 0.3, 0.0, 0.7, 0.1])
    assert average_precision(labels, 1.0 - dist) == 1.0


def test_lec_pairs_labels_and_rate(corpus_by_name):
    toys = [corpus_by_name[f"toy{i}"] for i in range(3)]
    bundles = [CircuitBundle.prepare(a, 4, 3, seed=0) for a in toys]
    pairs = build_lec_pairs(bundles, seed=0)
    assert pairs, "no LEC pairs generated"
    rate = np.mean([p.label for p in pairs])
    assert 0.005 <= rate <= 0.08
    from aigflow.simulate import cone_function_signature
    for p in pairs[:40]:
        b = bundles[p.bundle_idx]
        cones = b.plan.all_cones()
        sa = cone_function_signature(b.aig, cones[p.cone_a])
        sb = cone_function_signature(b.aig, cones[p.cone_b])
        assert p.label == (1 if sa == sb else 0)


def test_lec_eval_reports_metrics(corpus_by_name):
    bundles = [CircuitBundle.prepare(corpus_by_name["toy0"], 4, 3, seed=0)]
    pairs = build_lec_pairs(bundles, seed=0)
    if not pairs:
        pytest.skip("toy0 alone yields no pairs")
    params = build_params(SMALL)
    res = lec_eval(params, SMALL, bundles, pairs, B=8)
    assert 0.0 <= res["AP"] <= 1.0
    assert 0.0 <= res["PR_AUC"] <= 1.0
    assert res["pairs"] == len(pairs)


# ---------------------------------------------------------------------------
# scaling bench


def test_bench_peak_constant_on_comb():
    aig = comb(12, 5, name="bench_comb")
    cfg = ModelConfig(d=8, heads=2, tx_depth=1, pool_depth=1, seed=2)
    params = build_params(cfg)
    table = bench_mem_runtime(aig, cfg, params, k=4, delta=3, B=4, mults=(1, 2))
    assert table["peak_constant"]
    rows = table["rows"]
    assert rows[1]["nodes"] == 2 * rows[0]["nodes"]
    assert rows[1]["batches"] == 2 * rows[0]["batches"]
    assert rows[1]["fast_path_skips"] == 2 * rows[0]["fast_path_skips"]
