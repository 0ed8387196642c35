"""Bi-directional RRT (RRT-Connect) expert.

Besides the path, the expert records every segment it collision-checked,
free or not.  Those records become the collision dataset.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple

import numpy as np

from .env import Environment, config_free_batch, interpolate, is_config_free, n_steps, sample_uniform, segments_free_batch


class Status(Enum):
    TRAPPED = "trapped"
    ADVANCED = "advanced"
    REACHED = "reached"


class CollisionEvent(NamedTuple):
    start: np.ndarray
    end: np.ndarray
    free: bool


class EventLog:
    """Append-only store of checked segments, kept as arrays."""

    def __init__(self, dim: int):
        self.dim = dim
        self._starts: list[np.ndarray] = []
        self._ends: list[np.ndarray] = []
        self._free: list[np.ndarray] = []
        self._n = 0

    def add(self, starts: np.ndarray, ends: np.ndarray, free: np.ndarray) -> None:
        if len(starts) == 0:
            return
        self._starts.append(np.asarray(starts, dtype=float).reshape(-1, self.dim))
        self._ends.append(np.asarray(ends, dtype=float).reshape(-1, self.dim))
        self._free.append(np.asarray(free, dtype=bool).reshape(-1))
        self._n += len(self._free[-1])

    def extend(self, other: "EventLog") -> None:
        if len(other):
            self.add(other.starts, other.ends, other.free)

    def _cat(self, parts, shape):
        return np.concatenate(parts) if parts else np.zeros(shape)

    @property
    def starts(self) -> np.ndarray:
        return self._cat(self._starts, (0, self.dim))

    @property
    def ends(self) -> np.ndarray:
        return self._cat(self._ends, (0, self.dim))

    @property
    def free(self) -> np.ndarray:
        return self._cat(self._free, (0,)).astype(bool)

    def __len__(self) -> int:
        return self._n

    def __iter__(self) -> Iterator[CollisionEvent]:
        for a, b, f in zip(self.starts, self.ends, self.free):
            yield CollisionEvent(a, b, bool(f))


@dataclass
class BiRRTParams:
    max_iterations: int = 1000
    max_time: float = 5.0
    resolution: float = 0.1
    step: float | None = None  # steer increment; defaults to resolution

    @property
    def step_size(self) -> float:
        return self.resolution if self.step is None else self.step


@dataclass
class ExpertResult:
    path: np.ndarray | None  # (N, n) waypoints, None on failure
    events: EventLog
    iterations: int
    elapsed: float
    oracle_calls: int = 0
    cost_history: list[float] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.path is not None


class Tree:
    """Growing tree of configurations with parent links; node 0 is the root."""

    def __init__(self, root: np.ndarray, capacity: int = 256):
        self.nodes = np.empty((capacity, len(root)))
        self.nodes[0] = root
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.size = 1

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.size == len(self.nodes):
            self.nodes = np.concatenate([self.nodes, np.empty_like(self.nodes)])
            self.parent = np.concatenate([self.parent, np.full(len(self.parent), -1, dtype=np.int64)])
        self.nodes[self.size] = q
        self.parent[self.size] = parent
        self.size += 1
        return self.size - 1

    def nearest(self, q: np.ndarray) -> int:
        # argmin returns the lowest index among ties
        d = np.sum((self.nodes[: self.size] - q) ** 2, axis=1)
        return int(np.argmin(d))

    def branch(self, i: int) -> np.ndarray:
        """Configurations from the root to node i."""
        idx = []
        while i >= 0:
            idx.append(i)
            i = int(self.parent[i])
        return self.nodes[idx[::-1]].copy()


def geometric_steer(env: Environment, q_from, q_to, step: float, resolution: float
                    ) -> tuple[np.ndarray, Status, EventLog]:
    """Advance from ``q_from`` toward ``q_to`` in equal increments of at most ``step``.

    Each increment is checked with the oracle at ``resolution`` and logged.
    Checking stops at the first blocked increment.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    q_from = np.asarray(q_from, dtype=float)
    q_to = np.asarray(q_to, dtype=float)
    log = EventLog(env.dof)
    k = n_steps(float(np.linalg.norm(q_to - q_from)), step)
    if k == 0:
        return q_to.copy(), Status.REACHED, log
    pts = interpolate(q_from, q_to, k)
    if step <= resolution:
        # every increment is checked at its two endpoints only
        ok = config_free_batch(env, pts)
        inc_free = ok[:-1] & ok[1:]
    else:
        inc_free = segments_free_batch(env, pts[:-1], pts[1:], resolution)
    blocked = np.flatnonzero(~inc_free)
    if len(blocked) == 0:
        log.add(pts[:-1], pts[1:], inc_free)
        return q_to.copy(), Status.REACHED, log
    j = int(blocked[0])
    log.add(pts[: j + 1], pts[1 : j + 2], inc_free[: j + 1])
    return pts[j].copy(), (Status.TRAPPED if j == 0 else Status.ADVANCED), log


def birrt_plan(env: Environment, start, goal, params: BiRRTParams | None = None,
               rng: np.random.Generator | None = None) -> ExpertResult:
    """RRT-Connect between ``start`` and ``goal``.

    A direct connection is tried first.  Then the two trees alternate: one
    extends toward a uniform sample, the other greedily connects to the new
    node.  All steer events from both trees land in ``result.events``.
    """
    params = params or BiRRTParams()
    rng = rng if rng is not None else np.random.default_rng()
    t0 = time.perf_counter()
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if not (is_config_free(env, start) and is_config_free(env, goal)):
        raise ValueError("start and goal must be collision-free")
    step, res = params.step_size, params.resolution
    events = EventLog(env.dof)
    calls = 0

    def steer(a, b):
        nonlocal calls
        q, status, log = geometric_steer(env, a, b, step, res)
        events.extend(log)
        calls += len(log)
        return q, status

    def done(path, it):
        return ExpertResult(path, events, it, time.perf_counter() - t0, calls)

    if np.array_equal(start, goal):
        return done(np.stack([start, goal]), 0)
    _, status = steer(start, goal)
    if status is Status.REACHED:
        return done(np.stack([start, goal]), 0)

    ta, tb = Tree(start), Tree(goal)
    a_is_start = True
    for it in range(1, params.max_iterations + 1):
        if time.perf_counter() - t0 > params.max_time:
            return done(None, it - 1)
        q_rand = sample_uniform(env, rng)
        near = ta.nearest(q_rand)
        q_new, status = steer(ta.nodes[near], q_rand)
        if status is not Status.TRAPPED:
            i_new = ta.add(q_new, near)
            near_b = tb.nearest(q_new)
            q_c, status_c = steer(tb.nodes[near_b], q_new)
            if status_c is not Status.TRAPPED:
                i_c = tb.add(q_c, near_b)
                if status_c is Status.REACHED:
                    first = ta.branch(i_new)
                    second = tb.branch(i_c)[::-1][1:]  # drop the shared meeting node
                    path = np.concatenate([first, second])
                    if not a_is_start:
                        path = path[::-1]
                    path[0], path[-1] = start, goal
                    return done(path, it)
        ta, tb = tb, ta
        a_is_start = not a_is_start
    return done(None, params.max_iterations)


def is_feasible(env: Environment, path, resolution: float) -> bool:
    """True iff every consecutive segment of ``path`` passes the oracle."""
    path = np.asarray(path, dtype=float)
    if len(path) < 2:
        raise ValueError("a path needs at least two waypoints")
    return bool(np.all(segments_free_batch(env, path[:-1], path[1:], resolution)))


def path_length(path) -> float:
    path = np.asarray(path, dtype=float)
    if len(path) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))

