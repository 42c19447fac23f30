#!/usr/bin/env python3
"""Generate the bundled test corpus (deterministic; outputs are committed).

Families:
  calib_b02   47 nodes, max level 9, 4 PIs/POs; partitions into exactly 6
              cones at (k=8, delta=6)
  comb_256x5  256 disjoint alternating towers; per-level cones are equal-size
              and pairwise disjoint (scaling benchmark subject)
  tower_15    one alternating tower (chain family)
  bintree_6   complete AND tree of depth 6 (cone bound attained exactly)
  toy0..toy4  small two-copy random circuits for smoke training / LEC
  rand_mid    mid-size random circuit
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from aigflow.aig import GateType, to_aiger_text
from aigflow.partition import partition
from aigflow.synth import and_tree, alternating_tower, build_aig, comb, duplicate, random_aig

OUT = Path(__file__).resolve().parent.parent / "tests" / "corpus"


def calibration_circuit():
    """47-node, level-9, 4-PI/4-PO circuit that partitions into 6 cones.

    Layered pyramid on levels 1..7 (two designated low-level sinks), two
    nodes at level 8 and two NOT sinks at level 9."""
    types = [GateType.PI] * 4
    edges = []
    consumed = set()

    def add(kind, fanins):
        nid = len(types)
        types.append(kind)
        for f in fanins:
            edges.append((f, nid))
            consumed.add(f)
        return nid

    pis = [0, 1, 2, 3]
    level_nodes: dict[int, list[int]] = {0: pis}
    # per level: (total nodes, trailing sinks)  levels 1..7
    layout = {1: (8, 0), 2: (7, 0), 3: (6, 0), 4: (5, 0), 5: (4, 0), 6: (4, 1), 7: (5, 1)}
    spare: list[int] = []   # lower-level nodes still needing a consumer
    pi_rotation = list(pis)

    for lvl in range(1, 8):
        count, n_sink = layout[lvl]
        prev = level_nodes[lvl - 1]
        prev_sinks = layout.get(lvl - 1, (0, 0))[1]
        feedable = prev[:len(prev) - prev_sinks]
        prev_ands = [v for v in feedable if types[v] != GateType.NOT]
        n_not = count // 3
        n_and = count - n_not
        need = list(feedable)           # prev-level nodes awaiting a consumer
        nodes = []
        for i in range(n_and):
            mand = need.pop(0) if need else feedable[i % len(feedable)]
            second = None
            for pool in (need, spare):
                for cand in pool:
                    if cand != mand:
                        second = cand
                        pool.remove(cand)
                        break
                if second is not None:
                    break
            if second is None:
                second = pi_rotation[i % 4]
                if second == mand:
                    second = pi_rotation[(i + 1) % 4]
            nodes.append(add(GateType.AND, [mand, second]))
        for i in range(n_not):
            # inverters keep AIGER-expressible bases (AND or PI only)
            base = None
            for cand in need:
                if types[cand] != GateType.NOT:
                    base = cand
                    need.remove(cand)
                    break
            if base is None:
                base = prev_ands[i % len(prev_ands)]
            nodes.append(add(GateType.NOT, [base]))
        level_nodes[lvl] = nodes
        spare.extend(need)

    assert not spare, f"unconsumed low-level nodes: {spare}"
    l7 = level_nodes[7]
    top1 = add(GateType.AND, [l7[0], l7[1]])          # level 8
    top2 = add(GateType.AND, [l7[2], l7[3]])          # level 8
    add(GateType.NOT, [top1])                         # level-9 sink
    add(GateType.NOT, [top2])                         # level-9 sink
    aig = build_aig(types, edges, name="calib_b02")
    aig.outputs = [int(v) for v in aig.po_ids]
    return aig


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    circuits = []

    calib = calibration_circuit()
    assert calib.node_count == 47, calib.node_count
    assert calib.max_level == 9, calib.max_level
    assert len(calib.po_ids) == 4, calib.po_ids
    plan = partition(calib, 8, 6)
    assert len(plan.all_cones()) == 6, len(plan.all_cones())
    assert len(plan.fallback_cones) == 0
    assert plan.covered() == set(range(47))
    circuits.append(calib)

    circuits.append(comb(256, 5, name="comb_256x5"))
    circuits.append(alternating_tower(15, name="tower_15"))
    circuits.append(and_tree(6, name="bintree_6"))

    toy_cores = [(3, 28, 101), (3, 34, 102), (4, 30, 103), (3, 38, 104), (4, 36, 105)]
    for i, (n_pi, gates, seed) in enumerate(toy_cores):
        core = random_aig(n_pi, gates, seed=seed)
        toy = duplicate(core, 2, name=f"toy{i}")
        toy.outputs = [int(v) for v in toy.po_ids]
        circuits.append(toy)

    circuits.append(random_aig(8, 260, seed=777, name="rand_mid"))

    for aig in circuits:
        text = to_aiger_text(aig)
        (OUT / f"{aig.name}.aag").write_text(text)
        print(f"{aig.name}: nodes={aig.node_count} maxlvl={aig.max_level} "
              f"pis={len(aig.pi_ids)} pos={len(aig.po_ids)}")


if __name__ == "__main__":
    main()
