import json
import os

import pytest

from scorepose.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VERIFY, main


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def run(*argv):
    return main(list(argv))


def test_usage_error_exit_code(capsys):
    assert run("definitely-not-a-command") == EXIT_USAGE
    assert run("gen-scenes") == EXIT_USAGE  # missing required args
    capsys.readouterr()


def test_runtime_error_exit_code(tmp_path, capsys):
    code = run(
        "train", "--scenes", str(tmp_path / "missing.json"),
        "--seed", "0", "--checkpoint", str(tmp_path / "c.json"),
    )
    assert code == EXIT_RUNTIME
    capsys.readouterr()


def test_gen_scenes_deterministic_and_no_overwrite(tmp_path, capsys):
    out1 = str(tmp_path / "a.json")
    out2 = str(tmp_path / "b.json")
    args = ["gen-scenes", "--n", "4", "--seed", "3", "--descriptor-dim", "8",
            "--symmetry", "bimodal"]
    assert run(*args, "--out", out1) == EXIT_OK
    assert run(*args, "--out", out2) == EXIT_OK
    assert read_bytes(out1) == read_bytes(out2)
    assert run(*args, "--out", out1) == EXIT_RUNTIME  # refuses overwrite
    assert run(*args, "--out", out1, "--force") == EXIT_OK
    capsys.readouterr()


def test_train_estimate_sweep_determinism(tmp_path, capsys):
    scenes = str(tmp_path / "scenes.json")
    assert run(
        "gen-scenes", "--n", "2", "--seed", "7", "--descriptor-dim", "8",
        "--symmetry", "none", "--out", scenes,
    ) == EXIT_OK

    ck1, ck2 = str(tmp_path / "c1.json"), str(tmp_path / "c2.json")
    targs = ["train", "--scenes", scenes, "--mode", "score", "--epochs", "2",
             "--steps-per-epoch", "3", "--batch", "16", "--width", "16",
             "--blocks", "1", "--seed", "5"]
    assert run(*targs, "--checkpoint", ck1) == EXIT_OK
    assert run(*targs, "--checkpoint", ck2) == EXIT_OK
    assert read_bytes(ck1) == read_bytes(ck2)

    e1, e2 = str(tmp_path / "e1"), str(tmp_path / "e2")
    eargs = ["estimate", "--scenes", scenes, "--checkpoint", ck1,
             "--inits", "random:2", "--seed", "1",
             "--stage1-iters", "5", "--stage2-iters", "5"]
    assert run(*eargs, "--out", e1) == EXIT_OK
    assert run(*eargs, "--out", e2) == EXIT_OK
    for name in ("trajectories.csv", "trajectories.json", "metrics.csv",
                 "metrics.json", "metrics.txt"):
        assert read_bytes(os.path.join(e1, name)) == read_bytes(
            os.path.join(e2, name)
        ), name

    s1, s2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    sargs = ["sweep", "--scenes", scenes, "--scene-id", "0", "--samples", "2",
             "--seed", "2", "--score-field"]
    assert run(*sargs, "--out", s1) == EXIT_OK
    assert run(*sargs, "--out", s2) == EXIT_OK
    for name in ("grid.csv", "grid.json", "score_field.csv", "score_field.json"):
        assert read_bytes(os.path.join(s1, name)) == read_bytes(
            os.path.join(s2, name)
        ), name
    capsys.readouterr()


def test_estimate_with_oracle_score(tmp_path, capsys):
    scenes = str(tmp_path / "scenes.json")
    run("gen-scenes", "--n", "2", "--seed", "9", "--descriptor-dim", "8",
        "--symmetry", "none", "--out", scenes)
    out = str(tmp_path / "est")
    code = run(
        "estimate", "--scenes", scenes, "--oracle-score", "--inits", "random:2",
        "--stage1-iters", "30", "--stage2-iters", "30", "--out", out,
    )
    assert code == EXIT_OK
    metrics = json.load(open(os.path.join(out, "metrics.json")))
    assert metrics["recall_rot"]["30.0"] == 1.0
    capsys.readouterr()


def test_multiview_command_determinism(tmp_path, capsys):
    scenes = str(tmp_path / "scenes.json")
    run("gen-scenes", "--n", "2", "--seed", "11", "--descriptor-dim", "8",
        "--symmetry", "bimodal", "--out", scenes)
    m1, m2 = str(tmp_path / "m1"), str(tmp_path / "m2")
    margs = ["multiview", "--scenes", scenes, "--views", "3",
             "--ablation", "full", "--n-scenes", "2", "--seed", "0"]
    assert run(*margs, "--out", m1) == EXIT_OK
    assert run(*margs, "--out", m2) == EXIT_OK
    name = "multiview_full_3.json"
    assert read_bytes(os.path.join(m1, name)) == read_bytes(os.path.join(m2, name))
    report = json.load(open(os.path.join(m1, name)))
    assert report["n_views"] == 3
    assert 0.0 <= report["view_recall_at_15"] <= 1.0
    capsys.readouterr()


def test_verify_subsets_pass(capsys):
    assert run("verify", "--check", "decay") == EXIT_OK
    assert run("verify", "--check", "lemma2") == EXIT_OK
    assert run("verify", "--check", "gradients") == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_bench_command(tmp_path, capsys):
    from scorepose.landscape import GeneratorParams
    from scorepose.optimizer import Stage1Config, Stage2Config
    from scorepose.runio import ExperimentConfig, save_config
    from scorepose.scorenet import TrainConfig

    cfg = ExperimentConfig(
        seed=21,
        n_scenes=3,
        descriptor_dim=8,
        generator=GeneratorParams(symmetry_mode="bimodal"),
        train=TrainConfig(epochs=1, steps_per_epoch=2, batch_size=8, seed=0),
        stage1=Stage1Config(iters=10, seed=2),
        stage2=Stage2Config(iters=10),
        score_source="oracle",
        bench_trial_counts=(1, 2),
    )
    cfg_path = str(tmp_path / "cfg.json")
    save_config(cfg, cfg_path)
    b1, b2 = str(tmp_path / "b1"), str(tmp_path / "b2")
    assert run("bench", "--config", cfg_path, "--out", b1) == EXIT_OK
    assert run("bench", "--config", cfg_path, "--out", b2) == EXIT_OK
    for name in ("bench.csv", "bench.json"):
        assert read_bytes(os.path.join(b1, name)) == read_bytes(os.path.join(b2, name))
    rows = json.load(open(os.path.join(b1, "bench.json")))["rows"]
    assert {r["method"] for r in rows} == {"two_stage", "stage2_only"}
    assert os.path.exists(os.path.join(b1, "timings.txt"))
    capsys.readouterr()
