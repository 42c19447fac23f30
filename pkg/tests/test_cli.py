import json

import pytest

from aigflow.cli import main

from conftest import CORPUS


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def corpus_file(name):
    return str(CORPUS / f"{name}.aag")


def test_stats_command(capsys):
    code, out, err = run(capsys, "stats", corpus_file("calib_b02"))
    assert code == 0
    payload = json.loads(out)
    assert payload["nodes"] == 47
    assert payload["max_level"] == 9


def test_partition_command_levels(capsys):
    code, out, _ = run(capsys, "partition", "--k", "8", "--delta", "6",
                       corpus_file("calib_b02"))
    assert code == 0
    payload = json.loads(out)
    assert payload["levels"] == [8]
    assert len(payload["cones"]) == 6


def test_partition_stride_arithmetic(capsys):
    code, out, _ = run(capsys, "partition", "--k", "4", "--delta", "3",
                       corpus_file("rand_mid"))
    payload = json.loads(out)
    maxlvl = max(c["level"] for c in payload["cones"])
    assert payload["levels"][0] == 4
    assert all(b - a == 3 for a, b in zip(payload["levels"], payload["levels"][1:]))
    assert payload["levels"][-1] <= maxlvl


def test_partition_rejects_bad_stride(capsys):
    code, out, err = run(capsys, "partition", "--k", "4", "--delta", "4",
                         corpus_file("calib_b02"))
    assert code != 0
    payload = json.loads(err)
    assert payload["error"] == "AigError"
    assert "delta" in payload["message"]


def test_schedule_command_trace(capsys):
    code, out, _ = run(capsys, "schedule", "--k", "4", "--delta", "3",
                       "--batch", "4", corpus_file("tower_15"))
    assert code == 0
    payload = json.loads(out)
    trace = payload["trace"]
    assert payload["offline_entries"] == 31
    assert sum(t["fresh"] for t in trace) == 31
    levels = [t["level"] for t in trace]
    assert levels == sorted(levels)


def test_labels_command_writes_file(tmp_path, capsys):
    code, _, _ = run(capsys, "labels", "--k", "4", "--delta", "3",
                     "--seed", "1", "--out", str(tmp_path), corpus_file("toy0"))
    assert code == 0
    payload = json.loads((tmp_path / "toy0.labels.json").read_text())
    for key in ("gate_prob", "gate_tt_pairs", "con_pairs", "cones", "ged_pairs",
                "in_pairs", "seed", "sim_mode"):
        assert key in payload
    assert payload["sim_mode"] == "exhaustive"


def test_labels_workers_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "labels", "--k", "4", "--delta", "3", "--seed", "1",
        "--workers", "1", "--out", str(a), corpus_file("toy0"), corpus_file("toy1"))
    run(capsys, "labels", "--k", "4", "--delta", "3", "--seed", "1",
        "--workers", "3", "--out", str(b), corpus_file("toy0"), corpus_file("toy1"))
    for name in ("toy0", "toy1"):
        assert (a / f"{name}.labels.json").read_bytes() == \
               (b / f"{name}.labels.json").read_bytes()


def test_gradcheck_command(tmp_path, capsys):
    code, _, _ = run(capsys, "gradcheck", "--seed", "7", "--out", str(tmp_path))
    assert code == 0
    payload = json.loads((tmp_path / "gradcheck.json").read_text())
    assert payload["ok"] is True
    assert payload["max_rel_err"] < 1e-4


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 6, "delta": 2}))
    code, out, _ = run(capsys, "partition", "--config", str(cfg),
                       corpus_file("calib_b02"))
    assert code == 0
    assert json.loads(out)["k"] == 6
    # flag overrides the file
    code, out, _ = run(capsys, "partition", "--config", str(cfg), "--k", "8",
                       "--delta", "6", corpus_file("calib_b02"))
    assert json.loads(out)["k"] == 8


def test_env_seed_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("AIGFLOW_SEED", "123")
    code, _, _ = run(capsys, "labels", "--k", "4", "--delta", "3",
                     "--out", str(tmp_path), corpus_file("toy0"))
    assert code == 0
    payload = json.loads((tmp_path / "toy0.labels.json").read_text())
    assert payload["seed"] == 123


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(capsys, "partition", "--config", str(cfg),
                       corpus_file("calib_b02"))
    assert code != 0
    assert "bogus" in json.loads(err)["message"]


def test_partition_reproducible_bytes(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "partition", "--k", "4", "--delta", "3", "--out", str(a),
        corpus_file("rand_mid"))
    run(capsys, "partition", "--k", "4", "--delta", "3", "--out", str(b),
        corpus_file("rand_mid"))
    assert (a / "rand_mid.plan.json").read_bytes() == (b / "rand_mid.plan.json").read_bytes()


@pytest.mark.slow
def test_train_eval_roundtrip_and_determinism(tmp_path, capsys):
    toy = corpus_file("toy0")
    common = ["--k", "4", "--delta", "3", "--dim", "16", "--depth", "2",
              "--heads", "4", "--pool-depth", "1", "--lr", "0.002",
              "--epochs", "2", "--seed", "5", "--batch", "16"]
    outs = []
    for sub in ("r1", "r2"):
        out_dir = tmp_path / sub
        code, _, err = run(capsys, "train", *common, "--out", str(out_dir), toy)
        assert code == 0, err
        outs.append(out_dir)
    assert (outs[0] / "epochs.jsonl").read_bytes() == (outs[1] / "epochs.jsonl").read_bytes()
    assert (outs[0] / "ckpt_final.bin").read_bytes() == (outs[1] / "ckpt_final.bin").read_bytes()
    assert (outs[0] / "ckpt_final.json").read_bytes() == (outs[1] / "ckpt_final.json").read_bytes()

    code, out, err = run(capsys, "eval", *common, "--ckpt",
                         str(outs[0] / "ckpt_final"), toy)
    assert code == 0, err
    payload = json.loads(out)
    assert "P_con" in payload and "losses" in payload


@pytest.mark.slow
def test_bench_command(capsys):
    # comb: 256 equal disjoint cones per level, so full batches of 64 give an
    # exact memory plateau across duplications
    code, out, _ = run(capsys, "bench", "--k", "4", "--delta", "3", "--batch", "64",
                       "--dim", "8", "--depth", "1", "--heads", "2",
                       "--pool-depth", "1", "--mults", "1,2", corpus_file("comb_256x5"))
    assert code == 0
    payload = json.loads(out)
    assert payload["peak_constant"] is True
    assert len(payload["rows"]) == 2
    assert payload["rows"][1]["batches"] == 2 * payload["rows"][0]["batches"]


def test_bench_reports_violation_when_batches_underfilled(capsys):
    # a single tower has one cone per level: duplication widens the batch, the
    # plateau contract cannot hold, and the command reports it as an error
    code, _, err = run(capsys, "bench", "--k", "4", "--delta", "3", "--batch", "8",
                       "--dim", "8", "--depth", "1", "--heads", "2",
                       "--pool-depth", "1", "--mults", "1,2", corpus_file("tower_15"))
    assert code == 1
    assert json.loads(err)["error"] == "ScheduleError"


@pytest.mark.slow
def test_sweep_kd_command(tmp_path, capsys):
    code, _, err = run(capsys, "sweep-kd", "--grid", "4:3,6:4", "--epochs", "1",
                       "--dim", "8", "--depth", "1", "--heads", "2",
                       "--pool-depth", "1", "--batch", "16", "--lr", "0.001",
                       "--seed", "2", "--out", str(tmp_path), corpus_file("toy0"))
    assert code == 0, err
    rows = json.loads((tmp_path / "sweep_kd.json").read_text())["grid"]
    assert [(r["k"], r["delta"]) for r in rows] == [(4, 3), (6, 4)]
    for r in rows:
        assert r["peak_online_nodes"] > 0
        assert r["L_all"] == pytest.approx(r["L_func"] + r["L_stru"], rel=1e-12)


def test_sweep_kd_rejects_invalid_grid_entry(capsys):
    code, _, err = run(capsys, "sweep-kd", "--grid", "8:8", corpus_file("toy0"))
    assert code == 1
    assert "delta" in json.loads(err)["message"]


@pytest.mark.slow
def test_lec_command(tmp_path, capsys):
    toy = corpus_file("toy0")
    common = ["--k", "4", "--delta", "3", "--dim", "16", "--depth", "2",
              "--heads", "4", "--pool-depth", "1", "--epochs", "1",
              "--lr", "0.001", "--seed", "3", "--batch", "16"]
    out_dir = tmp_path / "train"
    assert run(capsys, "train", *common, "--out", str(out_dir), toy)[0] == 0
    code, out, err = run(capsys, "lec", *common, "--ckpt",
                         str(out_dir / "ckpt_final"), toy, corpus_file("toy1"))
    assert code == 0, err
    payload = json.loads(out)
    assert 0.0 <= payload["AP"] <= 1.0
    assert payload["pairs"] > 0
