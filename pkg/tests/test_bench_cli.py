import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ppcnet.bench import (METHODS, TIMING_COLUMNS, BenchSetup, benchmark_queries, goal_hash, parse_waypoints,
                          read_csv, run_benchmark, write_report)
from ppcnet.cli import main
from ppcnet.dataset import CollisionDataset, PlannerDataset
from ppcnet.env import load_env, reference_env
from ppcnet.expert import is_feasible
from ppcnet.neural import init_mlp, save_checkpoint


@pytest.fixture(scope="module")
def nets(tmp_path_factory):
    """Untrained planner and checkers: enough to exercise the plumbing."""
    d = tmp_path_factory.mktemp("nets")
    env = reference_env("arm")
    rng = np.random.default_rng(0)
    limits = np.vstack([env.joint_limits] * 2)
    planner = init_mlp([8, 16, 4], rng, input_bounds=limits, dropout=0.1, output_bounds=env.joint_limits, skip=True)
    checker = init_mlp([8, 16, 1], rng, input_bounds=limits, head="logit")
    checker.biases[-1][:] = 5.0  # says "free" everywhere, so patching does the work
    save_checkpoint(planner, d / "planner.ckpt")
    save_checkpoint(checker, d / "checker.ckpt")
    return d


def non_timing(rows):
    return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in rows]


def test_bench_bi_rrt_ten_queries(tmp_path, capsys):
    assert main(["bench", "--n", "10", "--methods", "bi-rrt", "--out", str(tmp_path)]) == 0
    report = read_csv(tmp_path / "report.csv")
    legs = read_csv(tmp_path / "queries.csv")
    assert len(report) == 1 and report[0]["method"] == "bi-rrt" and report[0]["queries"] == "10"
    assert len(legs) == 20
    assert [r["leg"] for r in legs[:2]] == ["pick", "place"]
    assert (tmp_path / "report.csv").read_text().startswith("# note: failed legs are excluded")
    ET.fromstring((tmp_path / "times.svg").read_text())


def test_bench_deterministic_non_timing_columns(tmp_path, nets):
    args = ["bench", "--n", "4", "--seed", "3", "--methods", "bi-rrt,ppcnet-population,mpnet-ablation",
            "--planner", str(nets / "planner.ckpt"), "--checker-population", str(nets / "checker.ckpt")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("report.csv", "queries.csv"):
        a, b = read_csv(tmp_path / "a" / name), read_csv(tmp_path / "b" / name)
        assert non_timing(a) == non_timing(b)


def test_same_queries_for_every_method():
    env = reference_env("arm")
    g1, g2 = benchmark_queries(env, 5, 7), benchmark_queries(env, 5, 7)
    assert goal_hash(g1) == goal_hash(g2)
    assert goal_hash(benchmark_queries(env, 5, 8)) != goal_hash(g1)
    report = run_benchmark(env, ["bi-rrt", "informed-rrt*"], 2, 7,
                           BenchSetup(informed=BenchSetup().informed.__class__(max_iterations=100)))
    assert report.goal_hash == goal_hash(g1[:2])
    for method in ("bi-rrt", "informed-rrt*"):
        starts = [r.path[0] for r in report.legs if r.method == method and r.success and r.leg == "place"]
        for s in starts:
            assert any(np.array_equal(s, g) for g in g1[:2])


def test_report_std_matches_rows_and_paths_replay(tmp_path):
    env = reference_env("arm")
    report = run_benchmark(env, ["bi-rrt"], 8, 1)
    write_report(report, tmp_path)
    legs = [r for r in read_csv(tmp_path / "queries.csv") if r["success"] == "1"]
    summary = read_csv(tmp_path / "report.csv")[0]
    times = np.array([float(r["time"]) for r in legs])
    lengths = np.array([float(r["length"]) for r in legs])
    assert abs(times.std(ddof=1) - float(summary["time_std"])) < 1e-9
    assert abs(lengths.std(ddof=1) - float(summary["length_std"])) < 1e-9
    assert abs(lengths.mean() - float(summary["length_mean"])) < 1e-9
    for r in legs:
        assert is_feasible(env, parse_waypoints(r["waypoints"]), 0.1)


def test_learned_methods_need_checkpoints():
    env = reference_env("arm")
    for method in ("ppcnet-binary", "ppcnet-population", "mpnet-ablation"):
        with pytest.raises(ValueError):
            run_benchmark(env, [method], 1, 0)
    with pytest.raises(ValueError):
        run_benchmark(env, ["bi-rrt"], 0, 0)


def test_cli_unknown_method_and_missing_files(tmp_path, nets, capsys):
    assert main(["bench", "--n", "1", "--methods", "a-star", "--out", str(tmp_path)]) == 2
    assert main(["bench", "--n", "1", "--methods", "ppcnet-binary", "--out", str(tmp_path)]) == 2
    assert main(["inspect", str(tmp_path / "nope")]) == 2
    assert main(["plan", "--planner", str(tmp_path / "nope"), "--checker", str(nets / "checker.ckpt"),
                 "--goal", "0,0,0,0"]) == 2
    assert main(["bench", "--n", "1", "--env", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_plan_degenerate_query(nets, capsys):
    env = reference_env("arm")
    home = ",".join(repr(float(v)) for v in env.home)
    code = main(["plan", "--planner", str(nets / "planner.ckpt"), "--checker", str(nets / "checker.ckpt"),
                 "--start", home, "--goal", home])
    assert code == 0
    rows = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    assert len(rows) == 2


def test_cli_plan_rejects_bad_vector(nets):
    assert main(["plan", "--planner", str(nets / "planner.ckpt"), "--checker", str(nets / "checker.ckpt"),
                 "--goal", "1,2"]) == 2


def test_cli_gen_env_and_inspect(tmp_path, nets, capsys):
    assert main(["gen-env", "--name", "point", "--out", str(tmp_path / "p.yaml")]) == 0
    assert load_env(tmp_path / "p.yaml").digest() == reference_env("point").digest()
    assert main(["inspect", str(tmp_path / "p.yaml")]) == 0
    assert main(["inspect", str(nets / "planner.ckpt")]) == 0
    out = capsys.readouterr().out
    assert "environment" in out and "layers [8, 16, 4]" in out


def test_cli_gen_data_and_train_checker(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("T: 2\ncheckers_unused: 1\n")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2
    cfg.write_text("T: 2\nchecker_hidden: [8]\nchecker_fit: {epochs: 1, batch_size: 64, lr: 0.001}\n")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    assert len(PlannerDataset.load(tmp_path / "d" / "planner.D")) > 0
    assert len(CollisionDataset.load(tmp_path / "d" / "collision.C")) > 0
    assert main(["train-checker", "--config", str(cfg), "--data", str(tmp_path / "d" / "collision.C"),
                 "--mode", "population", "--out", str(tmp_path / "c.ckpt")]) == 0
    assert main(["inspect", str(tmp_path / "d" / "collision.C")]) == 0
    assert "collision dataset" in capsys.readouterr().out


def test_methods_constant():
    assert METHODS == ("bi-rrt", "informed-rrt*", "ppcnet-binary", "ppcnet-population", "mpnet-ablation")
