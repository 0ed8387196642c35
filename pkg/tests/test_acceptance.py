"""End-to-end acceptance criteria at their stated tolerances.

Each test records a one-line verdict through the ``acceptance`` fixture; the
lines are printed in the terminal summary.  Criteria 5 to 9 share one training
run (defaults, fixed seed) and one benchmark pair.
"""

import time

import numpy as np
import pytest

from oracles import population_labels_scan
from ppcnet.bench import TIMING_COLUMNS, parse_waypoints, read_csv
from ppcnet.cli import main
from ppcnet.dataset import CollisionDataset
from ppcnet.env import random_goal_conf, reference_env
from ppcnet.expert import BiRRTParams, Status, birrt_plan, geometric_steer, is_feasible, path_length
from ppcnet.inference import OracleChecker, learned_steer
from ppcnet.neural import forward, save_checkpoint, sigmoid
from ppcnet.postprocess import binary_state_contraction, post_process, resample
from ppcnet.training import TrainConfig, run_training, test_policy, train_checker
from test_neural import grad_check, small_net

pytestmark = pytest.mark.slow

STEP = 0.1745
BENCH_N = 500
BENCH_SEED = 2024
BENCH_METHODS = "bi-rrt,ppcnet-binary,ppcnet-population"


def verdict(acceptance, n, ok, detail):
    acceptance[n] = (bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="module")
def env():
    return reference_env("arm")


@pytest.fixture(scope="module")
def expert_paths(env):
    rng = np.random.default_rng(404)
    paths = []
    for g in random_goal_conf(env, 250, rng):
        for a, b in ((env.home, g), (g, env.place)):
            paths.append(birrt_plan(env, a, b, BiRRTParams(), rng).path)
    return paths


@pytest.fixture(scope="module")
def trained(env, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    cfg = TrainConfig()
    result = run_training(env, cfg, out)
    binary = train_checker(env, result.C, cfg, np.random.default_rng(cfg.seed + 1), label_mode="binary")
    save_checkpoint(binary, out / "collision_binary.ckpt")
    return cfg, result, binary, out


@pytest.fixture(scope="module")
def bench_runs(trained, tmp_path_factory):
    _, _, _, out = trained
    dirs = []
    for name in ("a", "b"):
        d = tmp_path_factory.mktemp(f"bench_{name}")
        code = main(["bench", "--n", str(BENCH_N), "--seed", str(BENCH_SEED), "--methods", BENCH_METHODS,
                     "--planner", str(out / "planner.ckpt"),
                     "--checker-binary", str(out / "collision_binary.ckpt"),
                     "--checker-population", str(out / "collision_population.ckpt"), "--out", str(d)])
        assert code == 0
        dirs.append(d)
    return dirs


def test_criterion_1_steer_oracle_equivalence(env, acceptance):
    rng = np.random.default_rng(1)
    a = rng.uniform(env.lower, env.upper, size=(1000, env.dof))
    b = np.clip(a + rng.normal(0, 0.8, size=a.shape), env.lower, env.upper)
    checker = OracleChecker(env, 0.1)
    t0 = time.perf_counter()
    mismatches = 0
    for x, y in zip(a, b):
        ok, q = learned_steer(checker, x, y, 0.5, 0.1)
        g, status, _ = geometric_steer(env, x, y, 0.1, 0.1)
        mismatches += (not np.array_equal(q, g)) or ok != (status is not Status.TRAPPED)
    elapsed = time.perf_counter() - t0
    verdict(acceptance, 1, mismatches == 0 and elapsed < 10.0,
            f"{mismatches} mismatches on 1000 segments in {elapsed:.2f}s (< 10s)")


def test_criterion_2_population_labels_exact(env, acceptance):
    rng = np.random.default_rng(2)
    C = CollisionDataset(env.dof)
    for g in random_goal_conf(env, 300, rng):
        for a, b in ((env.home, g), (g, env.place)):
            C.append_collision_events(birrt_plan(env, a, b, BiRRTParams(), rng).events)
        if len(C) >= 20_000:
            break
    store = CollisionDataset(env.dof)
    store.append(C.starts[:20_000], C.ends[:20_000], C.free[:20_000])
    assert len(store) == 20_000
    details, ok = [], True
    for radius in (TrainConfig().radius, 0.4):
        t0 = time.perf_counter()
        store.label_all_population(radius)
        elapsed = time.perf_counter() - t0
        expected = population_labels_scan(store.starts, store.ends, store.free, radius)
        diff = int(np.sum(store.population != expected))
        ok &= diff == 0 and elapsed < 60.0
        details.append(f"r={radius}: {diff} differences, {elapsed:.2f}s")
    verdict(acceptance, 2, ok, "20000 samples; " + "; ".join(details) + " (< 60s)")


def test_criterion_3_gradients(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(20):
        skip = bool(i % 2)
        planner = small_net(rng, skip=skip, dropout=0.2 if i % 4 == 3 else 0.0)
        X = rng.uniform(-np.pi, np.pi, size=(6, 4))
        seed = i if planner.dropout > 0 else None
        worst = max(worst, grad_check(planner, X, rng.uniform(-np.pi, np.pi, size=(6, 2)), "planner", seed))
        checker = small_net(rng, head="logit")
        labels = rng.random(6) if i % 2 else (rng.random(6) < 0.5).astype(float)
        worst = max(worst, grad_check(checker, X, labels, "collision"))
    verdict(acceptance, 3, worst < 1e-4, f"worst relative error {worst:.2e} over 20 nets x 2 losses (< 1e-4)")


def test_criterion_4_post_processing(env, expert_paths, acceptance):
    assert len(expert_paths) == 500
    bsc_bad = resample_len_err = 0.0
    bsc_fail = 0
    max_step = 0.0
    raw_len, pp_len = [], []
    for p in expert_paths:
        short = binary_state_contraction(env, p, 0.1)
        if not is_feasible(env, short, 0.1) or path_length(short) > path_length(p) + 1e-12:
            bsc_fail += 1
        rs = resample(short, STEP)
        resample_len_err = max(resample_len_err, abs(path_length(rs) - path_length(short)))
        max_step = max(max_step, float(np.linalg.norm(np.diff(rs, axis=0), axis=1).max()))
        out = post_process(env, p, 0.1, STEP)
        raw_len.append(path_length(p))
        pp_len.append(path_length(out))
    ok = bsc_fail == 0 and resample_len_err <= 1e-9 and max_step <= STEP + 1e-12 and np.mean(pp_len) <= np.mean(raw_len)
    verdict(acceptance, 4, ok,
            f"BSC failures {bsc_fail}/500; resample length error {resample_len_err:.1e} (<= 1e-9); "
            f"max step {max_step:.6f} (<= {STEP}); mean length {np.mean(pp_len):.3f} post vs {np.mean(raw_len):.3f} raw")


def test_criterion_5_training(env, trained, acceptance):
    cfg, result, _, _ = trained
    ev = test_policy(env, result.planner, result.checker, cfg, 200, np.random.default_rng(5))
    rounds = len(result.reports)
    ok = rounds <= 30 and ev.success_rate >= 0.85 and result.elapsed <= 1800.0
    verdict(acceptance, 5, ok,
            f"{rounds} rounds (<= 30, converged={result.converged}); TestPolicy success {100 * ev.success_rate:.1f}% "
            f"over 200 fresh queries (>= 85%); run {result.elapsed / 60:.1f} min (<= 30)")


def test_criterion_6_benchmark_direction(bench_runs, acceptance):
    rows = {r["method"]: r for r in read_csv(bench_runs[0] / "report.csv")}
    birrt, pop, binary = rows["bi-rrt"], rows["ppcnet-population"], rows["ppcnet-binary"]
    t_ratio = float(pop["time_mean"]) / float(birrt["time_mean"])
    l_pop, l_bin, l_rrt = float(pop["length_mean"]), float(binary["length_mean"]), float(birrt["length_mean"])
    s_pop, s_bin = float(pop["success_rate"]), float(binary["success_rate"])
    ok = t_ratio <= 0.5 and l_pop <= l_rrt and l_bin <= l_rrt and s_pop >= s_bin - 2.0
    verdict(acceptance, 6, ok,
            f"time ratio population/bi-rrt {t_ratio:.3f} (<= 0.5); length population {l_pop:.3f}, "
            f"binary {l_bin:.3f} vs bi-rrt {l_rrt:.3f}; success population {s_pop:.1f}% vs binary {s_bin:.1f}% "
            f"(>= binary - 2pp); bi-rrt success {float(birrt['success_rate']):.1f}%")


def test_criterion_7_collision_net_quality(env, trained, acceptance):
    _, result, binary, _ = trained
    rng = np.random.default_rng(777)
    H = CollisionDataset(env.dof)
    for g in random_goal_conf(env, 100, rng):
        for a, b in ((env.home, g), (g, env.place)):
            H.append_collision_events(birrt_plan(env, a, b, BiRRTParams(), rng).events)
    X, free = H.inputs(), H.free
    details, ok = [], True
    for name, net in (("population", result.checker), ("binary", binary)):
        p = sigmoid(forward(net, X))
        acc = float(np.mean((p > 0.5) == free))
        predicted_free = p > 0.8
        false_free = float(np.sum(predicted_free & ~free) / max(1, np.sum(predicted_free)))
        ok &= acc >= 0.95 and false_free <= 0.03
        details.append(f"{name}: accuracy {100 * acc:.2f}% (>= 95), false-free {100 * false_free:.2f}% (<= 3)")
    verdict(acceptance, 7, ok, f"{len(H)} held-out segments; " + "; ".join(details))


def test_criterion_8_reported_paths_feasible(env, bench_runs, acceptance):
    checked = bad = 0
    for d in bench_runs:
        for r in read_csv(d / "queries.csv"):
            if r["success"] != "1":
                continue
            checked += 1
            bad += not is_feasible(env, parse_waypoints(r["waypoints"]), 0.1)
    verdict(acceptance, 8, checked > 0 and bad == 0, f"{checked - bad}/{checked} successful paths pass is_feasible")


def test_criterion_9_bench_determinism(bench_runs, acceptance):
    diffs = 0
    for name in ("report.csv", "queries.csv"):
        a, b = (read_csv(d / name) for d in bench_runs)
        strip = [[{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in rows] for rows in (a, b)]
        diffs += len(a) != len(b) or sum(x != y for x, y in zip(*strip))
    verdict(acceptance, 9, diffs == 0, f"{diffs} differing rows in non-timing columns across two seeded runs")
