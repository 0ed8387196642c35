"""Benchmark harness: the same pick-and-place queries posed to every method.

Each query is two legs, home -> pick and pick -> place.  Failed legs are left
out of the time and length means; a query succeeds only when both legs do.
"""

from __future__ import annotations

import csv
import hashlib
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import InformedRRTStarParams, informed_rrtstar_plan
from .env import Environment, random_goal_conf
from .expert import BiRRTParams, birrt_plan, path_length
from .inference import NetChecker, NetPolicy, OracleChecker, PlanParams, make_expert, ppcnet_plan
from .neural import MLP

METHODS = ("bi-rrt", "informed-rrt*", "ppcnet-binary", "ppcnet-population", "mpnet-ablation")
LEG_NAMES = ("pick", "place")
TIMING_COLUMNS = {"time", "time_mean", "time_std", "query_time_mean", "query_time_std"}

NOTE = ("failed legs are excluded from time and length means; std uses ddof=1; "
        "query columns sum both legs of fully successful queries")


@dataclass
class BenchSetup:
    """Everything the methods need besides the queries."""
    expert: BiRRTParams = field(default_factory=BiRRTParams)
    informed: InformedRRTStarParams = field(default_factory=InformedRRTStarParams)
    plan: PlanParams = field(default_factory=PlanParams)
    max_step: float = 2 * 0.1745
    planner: MLP | None = None
    checkers: dict[str, MLP] = field(default_factory=dict)  # label mode -> collision net


@dataclass
class LegRecord:
    method: str
    query: int
    leg: str
    success: bool
    time: float
    length: float
    iterations: int
    patched: bool
    path: np.ndarray | None

    def row(self) -> dict:
        wp = "" if self.path is None else ";".join(",".join(format(v, ".17g") for v in q) for q in self.path)
        return {"method": self.method, "query": self.query, "leg": self.leg, "success": int(self.success),
                "time": repr(self.time), "length": format(self.length, ".17g"),
                "iterations": self.iterations, "patched": int(self.patched), "waypoints": wp}


@dataclass
class MethodSummary:
    method: str
    queries: int
    success_rate: float  # percent of queries with both legs solved
    leg_success_rate: float
    patch_rate: float  # percent of legs that needed an expert patch
    time_mean: float
    time_std: float
    length_mean: float
    length_std: float
    query_time_mean: float
    query_time_std: float
    query_length_mean: float
    query_length_std: float


@dataclass
class BenchmarkReport:
    seed: int
    goal_hash: str
    summaries: list[MethodSummary]
    legs: list[LegRecord]

    def summary(self, method: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)


def _mean_std(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return float("nan"), float("nan")
    return float(np.mean(x)), float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def benchmark_queries(env: Environment, n_queries: int, seed: int) -> np.ndarray:
    return random_goal_conf(env, n_queries, np.random.default_rng(seed))


def goal_hash(goals: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(goals, dtype="<f8").tobytes()).hexdigest()[:16]


def method_rng(seed: int, method: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(method.encode())])


def _planner_for(env: Environment, method: str, setup: BenchSetup, rng):
    """Return a function (start, goal) -> (path | None, elapsed, iterations, patched)."""
    if method == "bi-rrt":
        def run(a, b):
            r = birrt_plan(env, a, b, setup.expert, rng)
            return r.path, r.elapsed, r.iterations, False
        return run
    if method == "informed-rrt*":
        def run(a, b):
            r = informed_rrtstar_plan(env, a, b, setup.informed, rng)
            return r.path, r.elapsed, r.iterations, False
        return run
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if setup.planner is None:
        raise ValueError(f"{method} needs a planner checkpoint")
    if method == "mpnet-ablation":
        checker = OracleChecker(env, setup.plan.resolution)
    else:
        mode = method.split("-", 1)[1]
        if mode not in setup.checkers:
            raise ValueError(f"{method} needs a {mode} collision checkpoint")
        checker = NetChecker(setup.checkers[mode])
    policy = NetPolicy(setup.planner, env, setup.max_step)
    expert = make_expert(env, setup.expert, rng)

    def run(a, b):
        r = ppcnet_plan(env, policy, checker, expert, a, b, setup.plan, rng)
        return r.path, r.elapsed, r.iterations, r.patches_attempted > 0
    return run


def summarize(method: str, legs: list[LegRecord], n_queries: int) -> MethodSummary:
    ok = [r for r in legs if r.success]
    t_mean, t_std = _mean_std([r.time for r in ok])
    l_mean, l_std = _mean_std([r.length for r in ok])
    by_query: dict[int, list[LegRecord]] = {}
    for r in legs:
        by_query.setdefault(r.query, []).append(r)
    full = [rs for rs in by_query.values() if all(r.success for r in rs)]
    qt_mean, qt_std = _mean_std([sum(r.time for r in rs) for rs in full])
    ql_mean, ql_std = _mean_std([sum(r.length for r in rs) for rs in full])
    return MethodSummary(
        method, n_queries,
        success_rate=100.0 * len(full) / n_queries,
        leg_success_rate=100.0 * len(ok) / len(legs),
        patch_rate=100.0 * sum(r.patched for r in legs) / len(legs),
        time_mean=t_mean, time_std=t_std, length_mean=l_mean, length_std=l_std,
        query_time_mean=qt_mean, query_time_std=qt_std,
        query_length_mean=ql_mean, query_length_std=ql_std,
    )


def run_benchmark(env: Environment, methods, n_queries: int, seed: int,
                  setup: BenchSetup | None = None) -> BenchmarkReport:
    setup = setup or BenchSetup()
    if n_queries < 1:
        raise ValueError("n_queries must be at least 1")
    goals = benchmark_queries(env, n_queries, seed)
    legs_all: list[LegRecord] = []
    summaries = []
    for method in methods:
        run = _planner_for(env, method, setup, method_rng(seed, method))
        records = []
        for qi, g in enumerate(goals):
            for name, (a, b) in zip(LEG_NAMES, ((env.home, g), (g, env.place))):
                path, elapsed, iters, patched = run(a, b)
                length = path_length(path) if path is not None else float("nan")
                records.append(LegRecord(method, qi, name, path is not None, elapsed, length,
                                         iters, patched, path))
        summaries.append(summarize(method, records, n_queries))
        legs_all.extend(records)
    return BenchmarkReport(seed, goal_hash(goals), summaries, legs_all)


def write_report(report: BenchmarkReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.csv", "queries": out / "queries.csv", "chart": out / "times.svg"}
    with open(paths["report"], "w", newline="") as fh:
        fh.write(f"# note: {NOTE}\n# seed={report.seed} goals={report.goal_hash}\n")
        rows = [asdict(s) for s in report.summaries]
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()})
    with open(paths["queries"], "w", newline="") as fh:
        rows = [r.row() for r in report.legs]
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    paths["chart"].write_text(times_svg(report.summaries))
    return paths


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def parse_waypoints(text: str) -> np.ndarray | None:
    if not text:
        return None
    return np.array([[float(v) for v in q.split(",")] for q in text.split(";")])


def times_svg(summaries: list[MethodSummary], width: int = 640, height: int = 320) -> str:
    """Bar chart of mean leg planning time with one-std whiskers."""
    pad_l, pad_b, pad_t = 60, 60, 20
    plot_w, plot_h = width - pad_l - 20, height - pad_b - pad_t
    vals = [(s.method, s.time_mean, s.time_std) for s in summaries]
    top = max([m + (sd if np.isfinite(sd) else 0) for _, m, sd in vals if np.isfinite(m)] or [1.0]) * 1.1
    slot = plot_w / max(len(vals), 1)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + plot_h}" stroke="black"/>',
             f'<line x1="{pad_l}" y1="{pad_t + plot_h}" x2="{pad_l + plot_w}" y2="{pad_t + plot_h}" stroke="black"/>',
             f'<text x="12" y="{pad_t + plot_h / 2:.1f}" font-size="12" '
             f'transform="rotate(-90 12 {pad_t + plot_h / 2:.1f})">mean time (s)</text>',
             f'<text x="{pad_l - 6}" y="{pad_t + 4}" font-size="10" text-anchor="end">{top:.3g}</text>']
    for i, (name, mean, std) in enumerate(vals):
        x = pad_l + i * slot + 0.2 * slot
        w = 0.6 * slot
        cx = x + w / 2
        if np.isfinite(mean):
            h = plot_h * mean / top
            parts.append(f'<rect x="{x:.1f}" y="{pad_t + plot_h - h:.1f}" width="{w:.1f}" height="{h:.1f}" fill="#4a7bb7"/>')
            if np.isfinite(std) and std > 0:
                y1 = pad_t + plot_h - plot_h * (mean + std) / top
                y0 = pad_t + plot_h - plot_h * max(mean - std, 0.0) / top
                parts.append(f'<line x1="{cx:.1f}" y1="{y0:.1f}" x2="{cx:.1f}" y2="{y1:.1f}" stroke="black"/>')
        parts.append(f'<text x="{cx:.1f}" y="{pad_t + plot_h + 16}" font-size="11" text-anchor="middle">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
