"""Command-line entry point: ``ppcnet <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import METHODS, BenchSetup, run_benchmark, write_report
from .dataset import CollisionDataset, DatasetFormatError, PlannerDataset
from .env import EnvSpecError, Environment, load_env, reference_env, save_env
from .inference import NetChecker, NetPolicy, make_expert, ppcnet_plan
from .neural import CHECKPOINT_MAGIC, CheckpointError, load_checkpoint, save_checkpoint
from .training import TrainConfig, generate_initial_demos, load_config, run_training, train_checker

log = logging.getLogger("ppcnet")


class CliError(Exception):
    pass


def _env(args) -> Environment:
    if args.env is None:
        return reference_env("arm")
    if not Path(args.env).exists():
        raise CliError(f"environment file not found: {args.env}")
    return load_env(args.env)


def _config(args) -> TrainConfig:
    cfg = TrainConfig() if args.config is None else load_config(_existing(args.config))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {p}")
    return p


def _vector(text: str, dim: int) -> np.ndarray:
    try:
        q = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise CliError(f"not a comma-separated vector: {text!r}") from exc
    if len(q) != dim:
        raise CliError(f"expected {dim} values, got {len(q)}")
    return q


def cmd_gen_env(args) -> int:
    env = reference_env(args.name)
    save_env(env, args.out)
    print(f"wrote {args.out} ({env.name}, digest {env.digest()})")
    return 0


def cmd_gen_data(args) -> int:
    env, cfg = _env(args), _config(args)
    D, C, failures = generate_initial_demos(env, cfg, np.random.default_rng(cfg.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    D.save(out / "planner.D", env.digest())
    C.save(out / "collision.C", env.digest())
    print(f"planner samples {len(D)}, collision records {len(C)}, expert failures {failures}")
    return 0


def cmd_train(args) -> int:
    env, cfg = _env(args), _config(args)
    result = run_training(env, cfg, args.out)
    last = result.reports[-1]
    print(f"rounds {len(result.reports)}, success {last.success_rate:.3f}, "
          f"converged {result.converged}, {result.elapsed:.0f}s")
    return 0


def cmd_train_checker(args) -> int:
    env, cfg = _env(args), _config(args)
    C = CollisionDataset.load(_existing(args.data))
    init = load_checkpoint(_existing(args.init)) if args.init else None
    net = train_checker(env, C, cfg, np.random.default_rng(cfg.seed), label_mode=args.mode, init=init)
    save_checkpoint(net, args.out)
    print(f"wrote {args.out} ({args.mode} labels, {len(C)} records)")
    return 0


def cmd_plan(args) -> int:
    env, cfg = _env(args), _config(args)
    start = _vector(args.start, env.dof) if args.start else env.home
    goal = _vector(args.goal, env.dof)
    planner = load_checkpoint(_existing(args.planner))
    checker = load_checkpoint(_existing(args.checker))
    rng = np.random.default_rng(cfg.seed)
    result = ppcnet_plan(env, NetPolicy(planner, env, cfg.max_step), NetChecker(checker),
                         make_expert(env, cfg.expert, rng), start, goal, cfg.plan_params, rng)
    if not result.success:
        print(f"no path found after {result.iterations} iterations", file=sys.stderr)
        return 1
    for q in result.path:
        print(" ".join(format(v, ".6f") for v in q))
    print(f"# length {result.length:.4f} rad, {result.elapsed * 1e3:.1f} ms, "
          f"{result.patches_attempted} patches", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    env, cfg = _env(args), _config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise CliError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
    setup = BenchSetup(expert=cfg.expert, plan=cfg.plan_params, max_step=cfg.max_step)
    if args.planner:
        setup.planner = load_checkpoint(_existing(args.planner))
    for mode, path in (("binary", args.checker_binary), ("population", args.checker_population)):
        if path:
            setup.checkers[mode] = load_checkpoint(_existing(path))
    report = run_benchmark(env, methods, args.n, cfg.seed, setup)
    paths = write_report(report, args.out)
    for s in report.summaries:
        print(f"{s.method:18s} success {s.success_rate:5.1f}%  time {s.time_mean:.4f}s  "
              f"length {s.length_mean:.3f}  patch {s.patch_rate:.1f}%")
    print(f"wrote {paths['report']}, {paths['queries']}, {paths['chart']}")
    return 0


def cmd_inspect(args) -> int:
    path = _existing(args.path)
    with open(path, "rb") as fh:
        head = fh.readline()
    if head.startswith(CHECKPOINT_MAGIC):
        net = load_checkpoint(path)
        n = sum(p.size for p in net.params())
        print(f"network: layers {net.layer_sizes}, head {net.head}, dropout {net.dropout}, "
              f"skip {net.skip}, parameters {n}")
    elif head.startswith(b"# ppcnet-dataset"):
        if b"kind=planner" in head:
            D = PlannerDataset.load(path)
            steps = np.linalg.norm(D.next - D.current, axis=1)
            print(f"planner dataset: {len(D)} samples, dim {D.dim}, "
                  f"mean step {steps.mean() if len(D) else float('nan'):.4f}")
        else:
            C = CollisionDataset.load(path)
            labelled = ~np.isnan(C.population)
            print(f"collision dataset: {len(C)} records, dim {C.dim}, "
                  f"free {C.free.mean() if len(C) else float('nan'):.3f}, "
                  f"population-labelled {labelled.sum()}")
    else:
        env = load_env(path)
        print(f"environment {env.name}: robot {env.robot}, dof {env.dof}, {len(env.circles)} circles, "
              f"{len(env.rects)} rectangles, digest {env.digest()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppcnet", description="Learned path planning with a learned collision checker.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--env", help="environment YAML (default: bundled planar arm)")
        if config:
            sp.add_argument("--config", help="training/planning config YAML")
            sp.add_argument("--seed", type=int, help="override the config seed")

    sp = sub.add_parser("gen-env", help="write a bundled environment to YAML")
    sp.add_argument("--name", default="arm", choices=["arm", "point"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_env)

    sp = sub.add_parser("gen-data", help="run the expert for the initial demonstrations")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="run the full DAGGER training loop")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("train-checker", help="fit a collision network on a stored collision dataset")
    common(sp)
    sp.add_argument("--data", required=True, help="collision dataset file")
    sp.add_argument("--mode", choices=["binary", "population"], default="binary")
    sp.add_argument("--init", help="checkpoint to warm-start from")
    sp.add_argument("--out", required=True, help="output checkpoint")
    sp.set_defaults(func=cmd_train_checker)

    sp = sub.add_parser("plan", help="answer one query and print the waypoints")
    common(sp)
    sp.add_argument("--planner", required=True, help="planner checkpoint")
    sp.add_argument("--checker", required=True, help="collision checkpoint")
    sp.add_argument("--start", help="comma-separated start (default: home)")
    sp.add_argument("--goal", required=True, help="comma-separated goal")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("bench", help="benchmark planners on random pick-and-place queries")
    common(sp)
    sp.add_argument("--n", type=int, default=500, help="number of queries")
    sp.add_argument("--methods", default=",".join(METHODS), help="comma-separated list")
    sp.add_argument("--planner", help="planner checkpoint")
    sp.add_argument("--checker-binary", help="binary-label collision checkpoint")
    sp.add_argument("--checker-population", help="population-label collision checkpoint")
    sp.add_argument("--out", required=True, help="output directory for report.csv, queries.csv, times.svg")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("inspect", help="print statistics of a dataset, checkpoint or environment")
    sp.add_argument("path")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (CliError, EnvSpecError, DatasetFormatError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
