"""Multi-task losses, the gradient-norm loss balancer, Adam, the
schedule-driven training loop, evaluation metrics, desk-scale equivalence
checking, and the memory/runtime scaling benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import grad as G
from .aig import Aig
from .model import (BatchEncoding, ModelConfig, NodeAttrs, Streamed, apply_head,
                    balancer_tap_names, encode_batch, node_attrs)
from .grad import ParamRegistry, Tensor
from .partition import PartitionPlan, partition
from .scheduler import WorkBatch, build_batches, run_schedule
from .simulate import LabelSet, cone_function_signature, make_labels

FUNC_TASKS = ("prob", "gate_tt_pair", "graph_tt", "graph_tt_pair")
STRU_TASKS = ("con", "size", "depth", "ged_pair", "in")
ALL_TASKS = FUNC_TASKS + STRU_TASKS


class TrainError(RuntimeError):
    pass


@dataclass
class LossReport:
    raw: dict[str, float]
    counts: dict[str, int]
    balanced_weights: dict[str, float] | None = None

    @property
    def empty_tasks(self) -> list[str]:
        return [t for t in ALL_TASKS if self.counts.get(t, 0) == 0]

    @property
    def L_func(self) -> float:
        return sum(self.raw.get(t, 0.0) for t in FUNC_TASKS)

    @property
    def L_stru(self) -> float:
        return sum(self.raw.get(t, 0.0) for t in STRU_TASKS)

    @property
    def L_all(self) -> float:
        return self.L_func + self.L_stru

    def as_dict(self) -> dict:
        out = {t: self.raw.get(t, 0.0) for t in ALL_TASKS}
        out.update(L_func=self.L_func, L_stru=self.L_stru, L_all=self.L_all)
        return out


# ---------------------------------------------------------------------------
# per-batch task losses


@dataclass
class CircuitBundle:
    aig: Aig
    plan: PartitionPlan
    labels: LabelSet
    attrs: NodeAttrs
    cone_index: dict[int, int]        # id(cone) -> index into plan.all_cones()

    @classmethod
    def prepare(cls, aig: Aig, k: int, delta: int, seed: int = 0,
                sim_mode: str = "auto", ged_node_limit: int = 10) -> "CircuitBundle":
        plan = partition(aig, k, delta)
        labels = make_labels(aig, plan, seed=seed, sim_mode=sim_mode,
                             ged_node_limit=ged_node_limit)
        return cls(aig=aig, plan=plan, labels=labels, attrs=node_attrs(aig),
                   cone_index={id(c): i for i, c in enumerate(plan.all_cones())})


def batch_task_losses(params: ParamRegistry, bundle: CircuitBundle,
                      batch: WorkBatch, enc: BatchEncoding) -> tuple[dict[str, Tensor], dict[str, int]]:
    """Task losses over the batch's fresh nodes and cones.

    Pairwise tasks use precomputed label pairs whose endpoints are both online
    in this batch; tasks with no in-batch samples are omitted."""
    labels = bundle.labels
    g2l = batch.g2l
    losses: dict[str, Tensor] = {}
    counts: dict[str, int] = {}

    fresh = batch.fresh_local
    if len(fresh):
        pred = apply_head(params, "prob", [Streamed(G.gather_rows(enc.hf, fresh), "hf")])
        target = labels.gate_prob[batch.fresh_global].reshape(-1, 1)
        losses["prob"] = G.l1_loss(pred, target)
        counts["prob"] = len(fresh)

    def pair_rows(pairs, online_only=True):
        li, lj, lab = [], [], []
        for i, j, y in pairs:
            if i in g2l and j in g2l:
                li.append(g2l[i])
                lj.append(g2l[j])
                lab.append(y)
        return np.array(li, dtype=np.int64), np.array(lj, dtype=np.int64), np.array(lab)

    li, lj, dist = pair_rows(labels.gate_tt_pairs)
    if len(li):
        pred = apply_head(params, "gate_tt", [
            Streamed(G.gather_rows(enc.hf, li), "hf"),
            Streamed(G.gather_rows(enc.hf, lj), "hf")])
        losses["gate_tt_pair"] = G.l1_loss(pred, dist.reshape(-1, 1))
        counts["gate_tt_pair"] = len(li)

    li, lj, lab = pair_rows(labels.con_pairs)
    if len(li):
        pred = apply_head(params, "con", [
            Streamed(G.gather_rows(enc.hs, li), "hs"),
            Streamed(G.gather_rows(enc.hs, lj), "hs")])
        losses["con"] = G.bce_loss(pred, lab.astype(np.float64).reshape(-1, 1))
        counts["con"] = len(li)

    cone_ids = [bundle.cone_index[id(c)] for c in batch.cones]
    pos_of_cone = {ci: pos for pos, ci in enumerate(cone_ids)}
    if enc.cone_states:
        hs_s = G.concat([cs.hs_s for cs in enc.cone_states], axis=0)
        hf_s = G.concat([cs.hf_s for cs in enc.cone_states], axis=0)

        sizes = np.array([labels.cone_size[ci] for ci in cone_ids], dtype=np.float64)
        depths = np.array([labels.cone_depth[ci] for ci in cone_ids], dtype=np.float64)
        losses["size"] = G.l1_loss(apply_head(params, "size", [Streamed(hs_s, "hs")]),
                                   sizes.reshape(-1, 1))
        counts["size"] = len(cone_ids)
        losses["depth"] = G.l1_loss(apply_head(params, "depth", [Streamed(hs_s, "hs")]),
                                    depths.reshape(-1, 1))
        counts["depth"] = len(cone_ids)

        tt_pos = [pos for pos, ci in zip(range(len(cone_ids)), cone_ids)
                  if labels.cone_tt64[ci] is not None]
        if tt_pos:
            rows = np.array(tt_pos, dtype=np.int64)
            target = np.stack([labels.cone_tt64[cone_ids[p]] for p in tt_pos]).astype(np.float64)
            pred = apply_head(params, "tt", [Streamed(G.gather_rows(hf_s, rows), "hf")])
            losses["graph_tt"] = G.bce_loss(pred, target)
            counts["graph_tt"] = len(tt_pos)

        def cone_pair_rows(pairs):
            pa, pb, ys = [], [], []
            for a, b, y in pairs:
                if a in pos_of_cone and b in pos_of_cone:
                    pa.append(pos_of_cone[a])
                    pb.append(pos_of_cone[b])
                    ys.append(y)
            return (np.array(pa, dtype=np.int64), np.array(pb, dtype=np.int64),
                    np.array(ys, dtype=np.float64))

        pa, pb, ys = cone_pair_rows(labels.graph_tt_pairs)
        if len(pa):
            pred = apply_head(params, "graph_tt", [
                Streamed(G.gather_rows(hf_s, pa), "hf"),
                Streamed(G.gather_rows(hf_s, pb), "hf")])
            losses["graph_tt_pair"] = G.l1_loss(pred, ys.reshape(-1, 1))
            counts["graph_tt_pair"] = len(pa)

        pa, pb, ys = cone_pair_rows(labels.ged_pairs)
        if len(pa):
            pred = apply_head(params, "ged", [
                Streamed(G.gather_rows(hs_s, pa), "hs"),
                Streamed(G.gather_rows(hs_s, pb), "hs")])
            losses["ged_pair"] = G.l1_loss(pred, ys.reshape(-1, 1))
            counts["ged_pair"] = len(pa)

        gi, ci_pos, ys = [], [], []
        for g, ci, y in labels.in_pairs:
            if ci in pos_of_cone and g in g2l:
                gi.append(g2l[g])
                ci_pos.append(pos_of_cone[ci])
                ys.append(y)
        if gi:
            pred = apply_head(params, "in", [
                Streamed(G.gather_rows(enc.hs, np.array(gi, dtype=np.int64)), "hs"),
                Streamed(G.gather_rows(hs_s, np.array(ci_pos, dtype=np.int64)), "hs")])
            losses["in"] = G.bce_loss(pred, np.array(ys, dtype=np.float64).reshape(-1, 1))
            counts["in"] = len(gi)

    return losses, counts


def compute_losses(task_losses: dict[str, Tensor], counts: dict[str, int],
                   weights: dict[str, float] | None = None) -> LossReport:
    raw = {t: float(l.values) for t, l in task_losses.items()}
    return LossReport(raw=raw, counts=dict(counts), balanced_weights=weights)


# ---------------------------------------------------------------------------
# loss balancer


@dataclass
class BalancerState:
    beta: float = 0.9
    eps: float = 1e-8
    ema: dict[str, float] = field(default_factory=dict)

    def update(self, task: str, gnorm: float) -> float:
        if task not in self.ema:
            self.ema[task] = gnorm
        else:
            self.ema[task] = self.beta * self.ema[task] + (1.0 - self.beta) * gnorm
        return self.ema[task]

    def weight(self, task: str) -> float:
        return 1.0 / max(self.ema.get(task, 0.0), self.eps)


def tap_grad_norm(taps: list[Tensor]) -> float:
    total = 0.0
    for t in taps:
        if t.grad is not None:
            total += float((t.grad ** 2).sum())
    return float(np.sqrt(total))


def balance(task_losses: dict[str, Tensor], state: BalancerState,
            taps: list[Tensor]) -> tuple[Tensor, dict[str, float], dict[str, float]]:
    """Per-task gradient probe at the tap, EMA update, and the reweighted sum.

    Returns (balanced total, weights used, instantaneous tap-gradient norms).
    """
    if not taps:
        raise TrainError("balancer tap not registered")
    gnorms: dict[str, float] = {}
    for task in ALL_TASKS:
        if task not in task_losses:
            continue
        l = task_losses[task]
        G.reset_graph(l)
        G.backward(l)
        gnorms[task] = tap_grad_norm(taps)
        state.update(task, gnorms[task])
    weights = {task: state.weight(task) for task in task_losses}
    total = None
    for task in ALL_TASKS:
        if task not in task_losses:
            continue
        term = G.scale(task_losses[task], weights[task])
        total = term if total is None else G.add(total, term)
    return total, weights, gnorms


def plain_sum(task_losses: dict[str, Tensor]) -> Tensor:
    total = None
    for task in ALL_TASKS:
        if task not in task_losses:
            continue
        total = task_losses[task] if total is None else G.add(total, task_losses[task])
    return total


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(opt: AdamState, params: ParamRegistry):
    """One Adam update from the gradients currently stored on the parameters.

    lr == 0 is a strict no-op on parameters and moments; only the step count
    advances."""
    opt.step_count += 1
    if opt.lr == 0.0:
        return
    t = opt.step_count
    b1c = 1.0 - opt.beta1 ** t
    b2c = 1.0 - opt.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.values)
        m = opt.m.get(name)
        v = opt.v.get(name)
        if m is None:
            m = np.zeros_like(p.values)
            v = np.zeros_like(p.values)
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * (g * g)
        opt.m[name] = m
        opt.v[name] = v
        p.values = p.values - opt.lr * (m / b1c) / (np.sqrt(v / b2c) + opt.eps)


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class EpochReport:
    epoch: int
    losses: LossReport
    peak_online_nodes: int
    wall_ms: float
    steps: int

    def as_json_payload(self) -> dict:
        body = {"epoch": self.epoch, "peak_online_nodes": self.peak_online_nodes,
                "steps": self.steps}
        body.update(self.losses.as_dict())
        return body


def train_epoch(bundles: list[CircuitBundle], params: ParamRegistry, cfg: ModelConfig,
                opt: AdamState, balancer: BalancerState | None, B: int, seed: int,
                epoch: int, max_steps: int | None = None) -> EpochReport:
    """One pass over the circuits (batch size 1 at circuit granularity);
    one Adam step per mini-batch. Reported losses are raw (unbalanced)."""
    t0 = time.perf_counter()
    taps = [params[n] for n in balancer_tap_names(cfg)]
    order_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE0, epoch]))
    order = order_rng.permutation(len(bundles))
    sums = {t: 0.0 for t in ALL_TASKS}
    counts = {t: 0 for t in ALL_TASKS}
    peak = 0
    steps = 0

    for bi in order:
        bundle = bundles[int(bi)]
        bp = build_batches(bundle.plan, B, seed=int(seed * 1009 + epoch * 31 + int(bi)),
                           mode="train")

        def encode_and_step(batch: WorkBatch):
            nonlocal steps, peak
            if max_steps is not None and steps >= max_steps:
                with G.no_grad():
                    enc = encode_batch(params, cfg, bundle.aig, batch, bundle.attrs,
                                       with_cones=False)
                return enc.fresh_values(batch)
            enc = encode_batch(params, cfg, bundle.aig, batch, bundle.attrs)
            task_losses, task_counts = batch_task_losses(params, bundle, batch, enc)
            if task_losses:
                if balancer is not None:
                    total, _, _ = balance(task_losses, balancer, taps)
                else:
                    total = plain_sum(task_losses)
                G.reset_graph(total)
                G.backward(total)
                adam_step(opt, params)
                steps += 1
                for t, l in task_losses.items():
                    sums[t] += float(l.values) * task_counts[t]
                    counts[t] += task_counts[t]
            return enc.fresh_values(batch)

        _, meter, _ = run_schedule(bundle.aig, bundle.plan, bp, encode_and_step, dim=cfg.d)
        peak = max(peak, meter.peak_online_nodes)

    raw = {t: (sums[t] / counts[t] if counts[t] else 0.0) for t in ALL_TASKS}
    report = LossReport(raw=raw, counts=counts)
    return EpochReport(epoch=epoch, losses=report, peak_online_nodes=peak,
                       wall_ms=(time.perf_counter() - t0) * 1000.0, steps=steps)


# ---------------------------------------------------------------------------
# evaluation


def _schedule_states(params: ParamRegistry, cfg: ModelConfig, bundle: CircuitBundle,
                     B: int, collect_stats: bool = False):
    """Eval-mode schedule run; returns (store, cone state values, meter, stats)."""
    bp = build_batches(bundle.plan, B, mode="eval")
    cone_hf: dict[int, np.ndarray] = {}
    cone_hs: dict[int, np.ndarray] = {}
    agg_stats: dict = {}

    def encode(batch: WorkBatch):
        with G.no_grad():
            enc = encode_batch(params, cfg, bundle.aig, batch, bundle.attrs,
                               collect_stats=collect_stats)
        for cone, cs in zip(batch.cones, enc.cone_states):
            ci = bundle.cone_index[id(cone)]
            cone_hf[ci] = cs.hf_s.values[0].copy()
            cone_hs[ci] = cs.hs_s.values[0].copy()
        if collect_stats:
            agg_stats["max_alpha_sum_err"] = max(
                agg_stats.get("max_alpha_sum_err", 0.0),
                enc.stats.get("max_alpha_sum_err", 0.0))
            agg_stats["skipped_destinations"] = (
                agg_stats.get("skipped_destinations", 0)
                + enc.stats.get("skipped_destinations", 0))
        return enc.fresh_values(batch)

    store, meter, trace = run_schedule(bundle.aig, bundle.plan, bp, encode, dim=cfg.d)
    return store, cone_hf, cone_hs, meter, agg_stats


def evaluate(params: ParamRegistry, cfg: ModelConfig, bundles: list[CircuitBundle],
             B: int = 128) -> dict:
    """Post-schedule metrics over full label sets: P_tt, P_con, P_in and the
    raw losses, all recomputable from dumped predictions."""
    if not bundles:
        raise TrainError("empty eval set")
    tt_err = []
    con_hits = []
    in_hits = []
    sums = {t: 0.0 for t in ALL_TASKS}
    counts = {t: 0 for t in ALL_TASKS}

    for bundle in bundles:
        store, cone_hf, cone_hs, _, _ = _schedule_states(params, cfg, bundle, B)
        labels = bundle.labels
        hf_nodes = np.stack([store.hf[v] for v in range(bundle.aig.node_count)])
        hs_nodes = np.stack([store.hs[v] for v in range(bundle.aig.node_count)])
        with G.no_grad():
            hf_t = G.constant(hf_nodes)
            hs_t = G.constant(hs_nodes)

            pred = apply_head(params, "prob", [Streamed(hf_t, "hf")])
            sums["prob"] += float(np.abs(pred.values[:, 0] - labels.gate_prob).sum())
            counts["prob"] += bundle.aig.node_count

            if labels.gate_tt_pairs:
                li = np.array([i for i, _, _ in labels.gate_tt_pairs])
                lj = np.array([j for _, j, _ in labels.gate_tt_pairs])
                d = np.array([y for _, _, y in labels.gate_tt_pairs])
                p = apply_head(params, "gate_tt", [
                    Streamed(G.gather_rows(hf_t, li), "hf"),
                    Streamed(G.gather_rows(hf_t, lj), "hf")]).values[:, 0]
                sums["gate_tt_pair"] += float(np.abs(p - d).sum())
                counts["gate_tt_pair"] += len(d)

            if labels.con_pairs:
                li = np.array([i for i, _, _ in labels.con_pairs])
                lj = np.array([j for _, j, _ in labels.con_pairs])
                lab = np.array([y for _, _, y in labels.con_pairs], dtype=np.float64)
                p = apply_head(params, "con", [
                    Streamed(G.gather_rows(hs_t, li), "hs"),
                    Streamed(G.gather_rows(hs_t, lj), "hs")]).values[:, 0]
                pc = np.clip(p, G.BCE_EPS, 1 - G.BCE_EPS)
                sums["con"] += float(-(lab * np.log(pc) + (1 - lab) * np.log1p(-pc)).sum())
                counts["con"] += len(lab)
                con_hits.extend(((p >= 0.5).astype(int) == lab.astype(int)).tolist())

            n_cones = len(labels.cone_size)
            if n_cones:
                hf_s = G.constant(np.stack([cone_hf[ci] for ci in range(n_cones)]))
                hs_s = G.constant(np.stack([cone_hs[ci] for ci in range(n_cones)]))
                psize = apply_head(params, "size", [Streamed(hs_s, "hs")]).values[:, 0]
                pdepth = apply_head(params, "depth", [Streamed(hs_s, "hs")]).values[:, 0]
                sums["size"] += float(np.abs(psize - np.array(labels.cone_size)).sum())
                counts["size"] += n_cones
                sums["depth"] += float(np.abs(pdepth - np.array(labels.cone_depth)).sum())
                counts["depth"] += n_cones

                tt_ids = [ci for ci in range(n_cones) if labels.cone_tt64[ci] is not None]
                if tt_ids:
                    t64 = np.stack([labels.cone_tt64[ci] for ci in tt_ids]).astype(np.float64)
                    p = apply_head(params, "tt", [
                        Streamed(G.gather_rows(hf_s, np.array(tt_ids)), "hf")]).values
                    pc = np.clip(p, G.BCE_EPS, 1 - G.BCE_EPS)
                    sums["graph_tt"] += float(
                        -(t64 * np.log(pc) + (1 - t64) * np.log1p(-pc)).mean(axis=1).sum())
                    counts["graph_tt"] += len(tt_ids)
                    tt_err.extend(np.mean((p >= 0.5).astype(int) != t64.astype(int), axis=1).tolist())

                for task, head, pairs, stream_mat, stream in (
                        ("graph_tt_pair", "graph_tt", labels.graph_tt_pairs, hf_s, "hf"),
                        ("ged_pair", "ged", labels.ged_pairs, hs_s, "hs")):
                    if pairs:
                        pa = np.array([a for a, _, _ in pairs])
                        pb = np.array([b for _, b, _ in pairs])
                        ys = np.array([y for _, _, y in pairs], dtype=np.float64)
                        p = apply_head(params, head, [
                            Streamed(G.gather_rows(stream_mat, pa), stream),
                            Streamed(G.gather_rows(stream_mat, pb), stream)]).values[:, 0]
                        sums[task] += float(np.abs(p - ys).sum())
                        counts[task] += len(ys)

                if labels.in_pairs:
                    gi = np.array([g for g, _, _ in labels.in_pairs])
                    ci = np.array([c for _, c, _ in labels.in_pairs])
                    lab = np.array([y for _, _, y in labels.in_pairs], dtype=np.float64)
                    p = apply_head(params, "in", [
                        Streamed(G.gather_rows(hs_t, gi), "hs"),
                        Streamed(G.gather_rows(hs_s, ci), "hs")]).values[:, 0]
                    pc = np.clip(p, G.BCE_EPS, 1 - G.BCE_EPS)
                    sums["in"] += float(-(lab * np.log(pc) + (1 - lab) * np.log1p(-pc)).sum())
                    counts["in"] += len(lab)
                    in_hits.extend(((p >= 0.5).astype(int) == lab.astype(int)).tolist())

    raw = {t: (sums[t] / counts[t] if counts[t] else 0.0) for t in ALL_TASKS}
    report = LossReport(raw=raw, counts=counts)
    return {
        "P_tt": float(np.mean(tt_err)) if tt_err else None,
        "P_con": float(np.mean(con_hits)) if con_hits else None,
        "P_in": float(np.mean(in_hits)) if in_hits else None,
        "losses": report.as_dict(),
    }


# ---------------------------------------------------------------------------
# ranking metrics and desk-scale LEC


def pr_points(labels: np.ndarray, scores: np.ndarray):
    """Threshold-grouped precision/recall points, recall ascending."""
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise TrainError("no positive pairs in set")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    last_of_threshold = np.flatnonzero(np.diff(s, append=np.nan) != 0)
    precision = tp[last_of_threshold] / (tp[last_of_threshold] + fp[last_of_threshold])
    recall = tp[last_of_threshold] / n_pos
    return recall, precision


def average_precision(labels, scores) -> float:
    recall, precision = pr_points(labels, scores)
    r_prev = 0.0
    ap = 0.0
    for r, p in zip(recall, precision):
        ap += (r - r_prev) * p
        r_prev = r
    return float(ap)


def pr_auc(labels, scores) -> float:
    recall, precision = pr_points(labels, scores)
    rs = np.concatenate([[0.0], recall])
    ps = np.concatenate([[1.0], precision])
    return float(np.trapezoid(ps, rs))


@dataclass
class LecPair:
    bundle_idx: int
    cone_a: int
    cone_b: int
    label: int


def build_lec_pairs(bundles: list[CircuitBundle], seed: int = 0,
                    max_support: int = 12, max_pairs: int = 4000,
                    target_rate: tuple[float, float] = (0.01, 0.05)) -> list[LecPair]:
    """Single-output cone pairs labeled by exhaustive-simulation equivalence.

    Negatives are subsampled so the positive rate lands inside target_rate
    when possible (mirrors a rare-equivalence regime)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1EC]))
    pos: list[LecPair] = []
    neg: list[LecPair] = []
    for bi, bundle in enumerate(bundles):
        cones = bundle.plan.all_cones()
        sigs = [cone_function_signature(bundle.aig, c, max_support=max_support)
                for c in cones]
        idx = [i for i, s in enumerate(sigs) if s is not None]
        for a_pos in range(len(idx)):
            for b_pos in range(a_pos + 1, len(idx)):
                a, b = idx[a_pos], idx[b_pos]
                pair = LecPair(bi, a, b, 1 if sigs[a] == sigs[b] else 0)
                (pos if pair.label else neg).append(pair)
    if not pos or not neg:
        return []
    lo, hi = target_rate
    neg_sel = [neg[int(i)] for i in sorted(rng.permutation(len(neg))[:max_pairs])]
    # trim whichever side is over-represented until prevalence lands in band
    pos_cap = max(1, int(hi * len(neg_sel) / (1.0 - hi)))
    pos_sel = [pos[int(i)] for i in sorted(rng.permutation(len(pos))[:pos_cap])]
    neg_cap = int(len(pos_sel) * (1.0 - lo) / lo)
    neg_sel = neg_sel[:neg_cap]
    pairs = pos_sel + neg_sel
    order = rng.permutation(len(pairs))
    return [pairs[int(i)] for i in order]


def lec_eval(params: ParamRegistry, cfg: ModelConfig, bundles: list[CircuitBundle],
             pairs: list[LecPair], B: int = 128) -> dict:
    """Score = 1 - predicted truth-table distance; reports AP and PR-AUC."""
    if not pairs:
        raise TrainError("no pairs to evaluate")
    cone_hf_by_bundle: dict[int, dict[int, np.ndarray]] = {}
    for bi in sorted({p.bundle_idx for p in pairs}):
        _, cone_hf, _, _, _ = _schedule_states(params, cfg, bundles[bi], B)
        cone_hf_by_bundle[bi] = cone_hf
    ha = np.stack([cone_hf_by_bundle[p.bundle_idx][p.cone_a] for p in pairs])
    hb = np.stack([cone_hf_by_bundle[p.bundle_idx][p.cone_b] for p in pairs])
    labels = np.array([p.label for p in pairs], dtype=np.int64)
    with G.no_grad():
        dist = apply_head(params, "graph_tt", [
            Streamed(G.constant(ha), "hf"), Streamed(G.constant(hb), "hf")]).values[:, 0]
    scores = 1.0 - dist
    return {
        "pairs": len(pairs),
        "positive_rate": float(labels.mean()),
        "AP": average_precision(labels, scores),
        "PR_AUC": pr_auc(labels, scores),
    }


# ---------------------------------------------------------------------------
# memory / runtime scaling benchmark


def bench_mem_runtime(aig: Aig, cfg: ModelConfig, params: ParamRegistry,
                      k: int, delta: int, B: int, mults=(1, 2, 4)) -> dict:
    """Scaling table over disjoint duplications; heads are dropped (embedding
    computation only)."""
    from .synth import duplicate

    rows = []
    for mult in mults:
        big = aig if mult == 1 else duplicate(aig, mult)
        plan = partition(big, k, delta)
        attrs = node_attrs(big)
        bp = build_batches(plan, B, mode="eval")
        skip = 0

        def encode(batch: WorkBatch):
            nonlocal skip
            with G.no_grad():
                enc = encode_batch(params, cfg, big, batch, attrs,
                                   collect_stats=True, with_cones=False)
            skip += enc.stats.get("skipped_destinations", 0)
            return enc.fresh_values(batch)

        t0 = time.perf_counter()
        _, meter, trace = run_schedule(big, plan, bp, encode, dim=cfg.d)
        wall = time.perf_counter() - t0
        rows.append({
            "mult": mult,
            "nodes": big.node_count,
            "batches": len(trace),
            "peak_online_nodes": meter.peak_online_nodes,
            "wall_s": wall,
            "fast_path_skips": skip,
        })
    peaks = {r["peak_online_nodes"] for r in rows}
    return {
        "rows": rows,
        "peak_constant": len(peaks) == 1,
        "time_ratios": [rows[i]["wall_s"] / rows[0]["wall_s"] for i in range(len(rows))],
    }
