"""End-to-end training: expert demonstrations, DAGGER rounds, checker retraining."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .dataset import CollisionDataset, PlannerDataset
from .env import Environment, is_config_free, random_goal_conf, segments_free_batch
from .expert import BiRRTParams, birrt_plan, path_length
from .inference import (NetChecker, NetPolicy, OracleChecker, PlanParams, generate, make_expert,
                        ppcnet_plan)
from .neural import MLP, AdamState, FitConfig, fit, init_mlp, save_checkpoint
from .postprocess import post_process

log = logging.getLogger(__name__)

LEGS = ("pick", "pick-place")


@dataclass
class TrainConfig:
    T: int = 500
    T_prime: int = 50
    S: int = 200
    zeta: float = 0.9
    dagger_rounds_max: int = 30
    legs: str = "pick-place"
    expert: BiRRTParams = field(default_factory=BiRRTParams)
    resample_step: float = 0.1745
    s_max: int = 100
    threshold: float = 0.8
    label_mode: str = "population"
    radius: float = 0.05
    planner_hidden: list[int] = field(default_factory=lambda: [128, 128, 128, 128])
    checker_hidden: list[int] = field(default_factory=lambda: [128, 128, 128, 128])
    planner_dropout: float = 0.1
    checker_dropout: float = 0.1
    planner_fit: FitConfig = field(default_factory=lambda: FitConfig(epochs=60, batch_size=256, lr=1e-3))
    checker_fit: FitConfig = field(default_factory=lambda: FitConfig(epochs=10, batch_size=256, lr=1e-3))
    checker_refit: FitConfig = field(default_factory=lambda: FitConfig(epochs=2, batch_size=256, lr=1e-3))
    warm_start_planner: bool = False
    warm_start_checker: bool = True
    rollout_checker_data: bool = True
    test_queries: int = 500
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError("zeta must lie in (0, 1]")
        for name in ("T", "T_prime", "S", "dagger_rounds_max", "s_max", "test_queries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.label_mode not in ("binary", "population"):
            raise ValueError(f"unknown label_mode {self.label_mode!r}")
        if self.legs not in LEGS:
            raise ValueError(f"legs must be one of {LEGS}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    @property
    def resolution(self) -> float:
        return self.expert.resolution

    @property
    def plan_params(self) -> PlanParams:
        return PlanParams(self.s_max, self.threshold, self.resolution)

    @property
    def max_step(self) -> float:
        return 2.0 * self.resample_step

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        if "expert" in d:
            d["expert"] = BiRRTParams(**d["expert"])
        for key in ("planner_fit", "checker_fit", "checker_refit"):
            if key in d:
                d[key] = FitConfig(**d[key])
        return cls(**d)


def load_config(path: str | Path) -> TrainConfig:
    with open(path) as fh:
        return TrainConfig.from_dict(yaml.safe_load(fh))


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False, default_flow_style=None)


@dataclass
class RoundReport:
    round: int
    n_planner: int
    n_collision: int
    success_rate: float
    mean_path_length: float
    mean_plan_time: float
    patch_rate: float
    sampled_states: int
    elapsed: float


def _legs(env: Environment, goals: np.ndarray, legs: str) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for g in goals:
        out.append((env.home, g))
        if legs == "pick-place":
            out.append((g, env.place))
    return out


def expert_demos(env: Environment, queries, cfg: TrainConfig, rng: np.random.Generator
                 ) -> tuple[PlannerDataset, CollisionDataset, int]:
    """Run the expert on (start, goal) pairs; post-processed paths go to D, raw events to C."""
    D = PlannerDataset(env.dof)
    C = CollisionDataset(env.dof)
    failures = 0
    for start, goal in queries:
        result = birrt_plan(env, start, goal, cfg.expert, rng)
        C.append_collision_events(result.events)
        if not result.success:
            failures += 1
            continue
        path = post_process(env, result.path, cfg.resolution, cfg.resample_step)
        D.append_demonstration(path, goal)
    return D, C, failures


def generate_initial_demos(env: Environment, cfg: TrainConfig, rng: np.random.Generator
                           ) -> tuple[PlannerDataset, CollisionDataset, int]:
    goals = random_goal_conf(env, cfg.T, rng)
    return expert_demos(env, _legs(env, goals, cfg.legs), cfg, rng)


@dataclass
class Attempt:
    states: np.ndarray
    goal: np.ndarray
    success: bool
    checked_starts: np.ndarray
    checked_ends: np.ndarray


def rollout_policy(env: Environment, policy, checker, queries, cfg: TrainConfig,
                   rng: np.random.Generator) -> list[Attempt]:
    """Run the learned planner (no patching) on every query and keep what it visited."""
    attempts = []
    for start, goal in queries:
        record: list = []
        path, closed, _ = generate(env, policy, checker, start, goal, cfg.plan_params, rng, record)
        success = closed and bool(np.all(segments_free_batch(env, path[:-1], path[1:], cfg.resolution)))
        states = path[:-1] if closed else path
        if record:
            cs = np.concatenate([r[0] for r in record])
            ce = np.concatenate([r[1] for r in record])
        else:
            cs = ce = np.zeros((0, env.dof))
        attempts.append(Attempt(states, np.asarray(goal, dtype=float), success, cs, ce))
    return attempts


def sample_states(attempts: list[Attempt], S: int, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Uniformly pick S visited states (without replacement) with their goals."""
    pool = [(s, a.goal) for a in attempts for s in a.states]
    if len(pool) <= S:
        return pool
    idx = rng.choice(len(pool), size=S, replace=False)
    return [pool[i] for i in sorted(idx)]


def _new_planner(env: Environment, cfg: TrainConfig, rng) -> MLP:
    n = env.dof
    return init_mlp([2 * n, *cfg.planner_hidden, n], rng,
                    input_bounds=np.vstack([env.joint_limits, env.joint_limits]),
                    dropout=cfg.planner_dropout, output_bounds=env.joint_limits, skip=True)


def _new_checker(env: Environment, cfg: TrainConfig, rng) -> MLP:
    n = env.dof
    return init_mlp([2 * n, *cfg.checker_hidden, 1], rng,
                    input_bounds=np.vstack([env.joint_limits, env.joint_limits]),
                    dropout=cfg.checker_dropout, head="logit")


def train_policy(env: Environment, D: PlannerDataset, cfg: TrainConfig, rng, init: MLP | None = None) -> MLP:
    net = init.copy() if init is not None else _new_planner(env, cfg, rng)
    fit(net, D.inputs(), D.next, "planner", cfg.planner_fit, rng)
    return net


def train_checker(env: Environment, C: CollisionDataset, cfg: TrainConfig, rng,
                  label_mode: str | None = None, init: MLP | None = None) -> MLP:
    """Fit the collision network on C with binary or population targets.

    A fresh network uses ``cfg.checker_fit``; a warm start from ``init`` uses
    the shorter ``cfg.checker_refit`` schedule.
    """
    mode = label_mode or cfg.label_mode
    if mode == "population" and np.any(np.isnan(C.population)):
        C.label_all_population(cfg.radius)
    net = init.copy() if init is not None else _new_checker(env, cfg, rng)
    schedule = cfg.checker_fit if init is None else cfg.checker_refit
    fit(net, C.inputs(), C.labels(mode), "collision", schedule, rng)
    return net


@dataclass
class PolicyEvaluation:
    success_rate: float
    mean_path_length: float
    mean_plan_time: float
    patch_rate: float


def test_policy(env: Environment, planner: MLP, checker: MLP, cfg: TrainConfig, n_queries: int,
                rng: np.random.Generator) -> PolicyEvaluation:
    """Full planning (patching allowed) on fresh queries.

    A query is one planning problem; with ``legs="pick-place"`` the queries
    alternate between home -> goal and goal -> place.  A query succeeds when
    a feasible path is returned.
    """
    policy = NetPolicy(planner, env, cfg.max_step)
    net_checker = NetChecker(checker)
    expert = make_expert(env, cfg.expert, rng)
    per_goal = 2 if cfg.legs == "pick-place" else 1
    goals = random_goal_conf(env, -(-n_queries // per_goal), rng)
    ok, lengths, times, patched = [], [], [], 0
    for start, goal in _legs(env, goals, cfg.legs)[:n_queries]:
        res = ppcnet_plan(env, policy, net_checker, expert, start, goal, cfg.plan_params, rng)
        ok.append(res.success)
        patched += res.patches_attempted > 0
        if res.success:
            lengths.append(res.length)
            times.append(res.elapsed)
    return PolicyEvaluation(
        success_rate=float(np.mean(ok)),
        mean_path_length=float(np.mean(lengths)) if lengths else float("nan"),
        mean_plan_time=float(np.mean(times)) if times else float("nan"),
        patch_rate=patched / n_queries,
    )


test_policy.__test__ = False  # not a pytest test despite the name


@dataclass
class TrainingState:
    env: Environment
    cfg: TrainConfig
    D: PlannerDataset
    C: CollisionDataset
    planner: MLP | None = None
    checker: MLP | None = None
    reports: list[RoundReport] = field(default_factory=list)


def dagger_round(state: TrainingState, index: int, rng: np.random.Generator) -> RoundReport:
    """One iteration of the training loop; mutates ``state``."""
    env, cfg = state.env, state.cfg
    t0 = time.perf_counter()
    marks = [t0]
    state.planner = train_policy(env, state.D, cfg, rng,
                                 init=state.planner if cfg.warm_start_planner else None)
    marks.append(time.perf_counter())

    goals = random_goal_conf(env, cfg.T_prime, rng)
    queries = _legs(env, goals, cfg.legs)
    policy = NetPolicy(state.planner, env, cfg.max_step)
    checker = NetChecker(state.checker) if state.checker is not None else OracleChecker(env, cfg.resolution)
    attempts = rollout_policy(env, policy, checker, queries, cfg, rng)

    if cfg.rollout_checker_data:
        starts = np.concatenate([a.checked_starts for a in attempts])
        ends = np.concatenate([a.checked_ends for a in attempts])
        state.C.append(starts, ends, segments_free_batch(env, starts, ends, cfg.resolution))

    marks.append(time.perf_counter())
    sampled = sample_states(attempts, cfg.S, rng)
    # the expert cannot start inside an obstacle; states the learned checker
    # let through into collision are dropped here
    sampled = [(s, g) for s, g in sampled if is_config_free(env, s)]
    D_i, C_i, _ = expert_demos(env, sampled, cfg, rng)
    state.D.extend(D_i)
    state.C.extend(C_i)
    marks.append(time.perf_counter())

    if cfg.label_mode == "population":
        state.C.label_all_population(cfg.radius)
    state.checker = train_checker(env, state.C, cfg, rng,
                                  init=state.checker if cfg.warm_start_checker else None)
    marks.append(time.perf_counter())

    ev = test_policy(env, state.planner, state.checker, cfg, cfg.test_queries, rng)
    marks.append(time.perf_counter())
    log.debug("round %d phases (s): policy %.1f, rollout %.1f, expert %.1f, checker %.1f, test %.1f",
              index, *np.diff(marks))
    report = RoundReport(index, len(state.D), len(state.C), ev.success_rate,
                         ev.mean_path_length, ev.mean_plan_time, ev.patch_rate, len(sampled),
                         time.perf_counter() - t0)
    state.reports.append(report)
    return report


@dataclass
class TrainResult:
    planner: MLP
    checker: MLP
    reports: list[RoundReport]
    D: PlannerDataset
    C: CollisionDataset
    elapsed: float
    converged: bool


def run_training(env: Environment, cfg: TrainConfig, out_dir: str | Path | None = None) -> TrainResult:
    """The full loop: initial demos, then DAGGER rounds until success exceeds zeta."""
    t0 = time.perf_counter()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.dagger_rounds_max + 1)
    rng0 = np.random.default_rng(seeds[0])
    D, C, failures = generate_initial_demos(env, cfg, rng0)
    log.info("initial demos: |D|=%d |C|=%d expert failures=%d (%.1fs)",
             len(D), len(C), failures, time.perf_counter() - t0)
    state = TrainingState(env, cfg, D, C)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    converged = False
    for i in range(1, cfg.dagger_rounds_max + 1):
        report = dagger_round(state, i, np.random.default_rng(seeds[i]))
        log.info("round %d: |D|=%d |C|=%d success=%.3f patch=%.3f time=%.4fs (%.1fs)",
                 report.round, report.n_planner, report.n_collision, report.success_rate,
                 report.patch_rate, report.mean_plan_time, report.elapsed)
        if out is not None:
            _write_round(out, state, report)
        if report.success_rate > cfg.zeta:
            converged = True
            break
    if out is not None:
        save_checkpoint(state.planner, out / "planner.ckpt")
        save_checkpoint(state.checker, out / f"collision_{cfg.label_mode}.ckpt")
        D.save(out / "planner.D", env.digest())
        C.save(out / "collision.C", env.digest())
        save_config(cfg, out / "config.yaml")
    return TrainResult(state.planner, state.checker, state.reports, state.D, state.C,
                       time.perf_counter() - t0, converged)


def _write_round(out: Path, state: TrainingState, report: RoundReport) -> None:
    log_path = out / "rounds.csv"
    row = asdict(report)
    new = not log_path.exists()
    with open(log_path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(row))
        if new:
            writer.writeheader()
        writer.writerow(row)
    rd = out / f"round_{report.round:02d}"
    rd.mkdir(exist_ok=True)
    save_checkpoint(state.planner, rd / "planner.ckpt")
    save_checkpoint(state.checker, rd / f"collision_{state.cfg.label_mode}.ckpt")
