"""Command-line surface: reproducible pipelines over AIGER inputs.

Every command writes deterministic JSON artifacts (no timestamps in any
payload); identical inputs and seed give byte-identical outputs. Contract
violations exit nonzero with a machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from .aig import Aig, AigError, parse_aiger, stats
from .grad import SubstrateError
from .model import (ModelConfig, ModelError, build_params, load_checkpoint,
                    save_checkpoint)
from .partition import partition, plan_to_json
from .scheduler import ScheduleError, build_batches, identity_encode, run_schedule
from .simulate import SimError, make_labels
from .training import (AdamState, BalancerState, CircuitBundle, TrainError,
                       bench_mem_runtime, build_lec_pairs, evaluate, lec_eval,
                       train_epoch)

CONTRACT_ERRORS = (AigError, ScheduleError, SimError, ModelError, TrainError,
                   SubstrateError, FileNotFoundError, ValueError)


@dataclass
class RunConfig:
    k: int = 8
    delta: int = 6
    batch: int = 128
    dim: int = 32
    depth: int = 3
    heads: int = 4
    pool_depth: int = 2
    lr: float = 1e-4
    epochs: int = 10
    seed: int = 0
    sim: str = "auto"
    ged_limit: int = 10
    workers: int = 1
    balancer: bool = True

    def __post_init__(self):
        if self.delta >= self.k:
            raise AigError(f"delta ({self.delta}) must be smaller than k ({self.k})")
        if self.dim % self.heads != 0:
            raise ModelError(f"dim {self.dim} not divisible by heads {self.heads}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(d=self.dim, tx_depth=self.depth, heads=self.heads,
                           pool_depth=self.pool_depth, seed=self.seed)


def _dump(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def _emit(text: str, out: str | None, filename: str | None):
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / filename).write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> RunConfig:
    """Precedence: flags > config file > defaults; AIGFLOW_SEED fills in the
    seed when nothing else sets it."""
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(file_cfg) - known
        if unknown:
            raise AigError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_cfg)
    flag_map = {
        "k": "k", "delta": "delta", "batch": "batch", "dim": "dim",
        "depth": "depth", "heads": "heads", "pool_depth": "pool_depth",
        "lr": "lr", "epochs": "epochs", "seed": "seed", "sim": "sim",
        "ged_limit": "ged_limit", "workers": "workers",
    }
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if getattr(args, "no_balancer", False):
        values["balancer"] = False
    if "seed" not in values and os.environ.get("AIGFLOW_SEED"):
        values["seed"] = int(os.environ["AIGFLOW_SEED"])
    return RunConfig(**values)


def _read_circuits(paths: list[str]) -> list[Aig]:
    out = []
    for p in sorted(paths):
        path = Path(p)
        if path.is_dir():
            for f in sorted(path.glob("*.aag")):
                out.append(parse_aiger(f.read_text(), name=f.stem))
        else:
            out.append(parse_aiger(path.read_text(), name=path.stem))
    if not out:
        raise AigError("no input circuits")
    return out


def _prepare_bundles(aigs: list[Aig], cfg: RunConfig, workers: int = 1) -> list[CircuitBundle]:
    def prep(aig: Aig) -> CircuitBundle:
        return CircuitBundle.prepare(aig, cfg.k, cfg.delta, seed=cfg.seed,
                                     sim_mode=cfg.sim, ged_node_limit=cfg.ged_limit)

    if workers <= 1 or len(aigs) <= 1:
        return [prep(a) for a in aigs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(prep, aigs))  # input order preserved


# ---------------------------------------------------------------------------
# commands


def cmd_stats(args) -> int:
    aigs = _read_circuits(args.inputs)
    for aig in aigs:
        _emit(_dump(stats(aig)), args.out, f"{aig.name}.stats.json")
    return 0


def cmd_partition(args) -> int:
    cfg = _load_config(args)
    aigs = _read_circuits(args.inputs)
    for aig in aigs:
        plan = partition(aig, cfg.k, cfg.delta)
        _emit(plan_to_json(plan), args.out, f"{aig.name}.plan.json")
    return 0


def cmd_schedule(args) -> int:
    cfg = _load_config(args)
    aigs = _read_circuits(args.inputs)
    for aig in aigs:
        plan = partition(aig, cfg.k, cfg.delta)
        bp = build_batches(plan, cfg.batch, seed=cfg.seed, mode=args.mode)
        _, meter, trace = run_schedule(aig, plan, bp, lambda b: identity_encode(b, 2), dim=2)
        payload = {
            "circuit": aig.name,
            "k": cfg.k, "delta": cfg.delta, "batch": cfg.batch, "mode": args.mode,
            "peak_online_nodes": meter.peak_online_nodes,
            "offline_entries": meter.offline_entries,
            "trace": trace,
        }
        _emit(_dump(payload), args.out, f"{aig.name}.schedule.json")
    return 0


def cmd_labels(args) -> int:
    cfg = _load_config(args)
    aigs = _read_circuits(args.inputs)

    def build(aig: Aig):
        plan = partition(aig, cfg.k, cfg.delta)
        labels = make_labels(aig, plan, seed=cfg.seed, sim_mode=cfg.sim,
                             ged_node_limit=cfg.ged_limit)
        return aig.name, labels.to_payload()

    if cfg.workers > 1 and len(aigs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(build, aigs))
    else:
        results = [build(a) for a in aigs]
    for name, payload in results:
        _emit(_dump(payload), args.out, f"{name}.labels.json")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    aigs = _read_circuits(args.inputs)
    bundles = _prepare_bundles(aigs, cfg, cfg.workers)
    mcfg = cfg.model_config()
    params = build_params(mcfg)
    opt = AdamState(lr=cfg.lr)
    balancer = BalancerState() if cfg.balancer else None
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    report_lines = []
    for epoch in range(cfg.epochs):
        rep = train_epoch(bundles, params, mcfg, opt, balancer, B=cfg.batch,
                          seed=cfg.seed, epoch=epoch)
        metrics = evaluate(params, mcfg, bundles, B=cfg.batch)
        payload = rep.as_json_payload()
        payload.update(P_tt=metrics["P_tt"], P_con=metrics["P_con"],
                       P_in=metrics["P_in"])
        report_lines.append(_dump(payload))
        # wall time goes to the live stream only: the jsonl artifact stays
        # byte-reproducible for identical inputs and seed
        sys.stdout.write(_dump({**payload, "wall_ms": rep.wall_ms}))
        if args.ckpt_every and (epoch + 1) % args.ckpt_every == 0:
            save_checkpoint(str(out_dir / f"ckpt_{epoch + 1:04d}"), mcfg, params)
    (out_dir / "epochs.jsonl").write_text("".join(report_lines))
    save_checkpoint(str(out_dir / "ckpt_final"), mcfg, params)
    return 0


def _load_model(args):
    if not args.ckpt:
        raise TrainError("--ckpt is required")
    return load_checkpoint(args.ckpt)


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    mcfg, params = _load_model(args)
    aigs = _read_circuits(args.inputs)
    bundles = _prepare_bundles(aigs, cfg, cfg.workers)
    metrics = evaluate(params, mcfg, bundles, B=cfg.batch)
    _emit(_dump(metrics), args.out, "eval.json")
    return 0


def cmd_lec(args) -> int:
    cfg = _load_config(args)
    mcfg, params = _load_model(args)
    aigs = _read_circuits(args.inputs)
    bundles = _prepare_bundles(aigs, cfg, cfg.workers)
    pairs = build_lec_pairs(bundles, seed=cfg.seed)
    if not pairs:
        raise TrainError("no equivalence pairs could be generated")
    result = lec_eval(params, mcfg, bundles, pairs, B=cfg.batch)
    _emit(_dump(result), args.out, "lec.json")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    aigs = _read_circuits(args.inputs)
    mcfg, params = (_load_model(args) if args.ckpt
                    else (cfg.model_config(), build_params(cfg.model_config())))
    mults = tuple(int(m) for m in args.mults.split(","))
    for aig in aigs:
        table = bench_mem_runtime(aig, mcfg, params, cfg.k, cfg.delta, cfg.batch,
                                  mults=mults)
        _emit(_dump(table), args.out, f"{aig.name}.bench.json")
        if not table["peak_constant"]:
            raise ScheduleError("peak_online_nodes varies across duplications")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    cfg = _load_config(args)
    rep = run_gradcheck(seed=cfg.seed, seeds=args.seeds)
    _emit(_dump(rep), args.out, "gradcheck.json")
    return 0 if rep["ok"] else 1


def cmd_sweep_kd(args) -> int:
    cfg = _load_config(args)
    aigs = _read_circuits(args.inputs)
    rows = []
    for combo in args.grid.split(","):
        k_s, d_s = combo.split(":")
        k, delta = int(k_s), int(d_s)
        if delta >= k:
            raise AigError(f"grid entry {combo}: delta must be smaller than k")
        sub = RunConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(RunConfig)},
                           "k": k, "delta": delta})
        bundles = _prepare_bundles(aigs, sub, sub.workers)
        mcfg = sub.model_config()
        params = build_params(mcfg)
        opt = AdamState(lr=sub.lr)
        balancer = BalancerState() if sub.balancer else None
        peak = 0
        for epoch in range(sub.epochs):
            rep = train_epoch(bundles, params, mcfg, opt, balancer, B=sub.batch,
                              seed=sub.seed, epoch=epoch)
            peak = max(peak, rep.peak_online_nodes)
        metrics = evaluate(params, mcfg, bundles, B=sub.batch)
        rows.append({
            "k": k, "delta": delta,
            "peak_online_nodes": peak,
            "L_func": metrics["losses"]["L_func"],
            "L_stru": metrics["losses"]["L_stru"],
            "L_all": metrics["losses"]["L_all"],
        })
    _emit(_dump({"grid": rows}), args.out, "sweep_kd.json")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p: argparse.ArgumentParser, inputs=True):
    if inputs:
        p.add_argument("inputs", nargs="+", help="AIGER files or directories")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--k", type=int)
    p.add_argument("--delta", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--pool-depth", dest="pool_depth", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--sim", help="exhaustive | random:N | auto")
    p.add_argument("--ged-limit", dest="ged_limit", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--no-balancer", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aigflow")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stats", help="circuit summary JSON")
    _add_common(sp)
    sp.set_defaults(fn=cmd_stats)

    sp = sub.add_parser("partition", help="emit the cone partition plan")
    _add_common(sp)
    sp.set_defaults(fn=cmd_partition)

    sp = sub.add_parser("schedule", help="emit the level-ordered batch trace")
    _add_common(sp)
    sp.add_argument("--mode", choices=("train", "eval"), default="eval")
    sp.set_defaults(fn=cmd_schedule)

    sp = sub.add_parser("labels", help="write simulation-derived label files")
    _add_common(sp)
    sp.set_defaults(fn=cmd_labels)

    sp = sub.add_parser("train", help="train the model on the given circuits")
    _add_common(sp)
    sp.add_argument("--ckpt-every", type=int, default=0)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="metrics for a trained checkpoint")
    _add_common(sp)
    sp.add_argument("--ckpt", help="checkpoint path base (no extension)")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("lec", help="desk-scale equivalence-ranking evaluation")
    _add_common(sp)
    sp.add_argument("--ckpt")
    sp.set_defaults(fn=cmd_lec)

    sp = sub.add_parser("bench", help="memory/runtime scaling over duplications")
    _add_common(sp)
    sp.add_argument("--ckpt")
    sp.add_argument("--mults", default="1,2,4")
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    _add_common(sp, inputs=False)
    sp.add_argument("--seeds", type=int, default=1)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("sweep-kd", help="(k, delta) grid of train/eval runs")
    _add_common(sp)
    # default sweep varies overlap at fixed k and cone size at fixed overlap;
    # (8, 8) is not a valid entry because the partition requires delta < k
    sp.add_argument("--grid", default="8:6,8:4,10:8,6:4")
    sp.set_defaults(fn=cmd_sweep_kd)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CONTRACT_ERRORS as exc:
        sys.stderr.write(_dump({"error": type(exc).__name__, "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
