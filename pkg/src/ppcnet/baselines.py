"""Informed RRT*: asymptotically optimal comparison planner.

After the first solution, samples are drawn from the prolate hyperspheroid
whose foci are start and goal and whose transverse diameter is the best cost
so far; no point outside it can shorten the path.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .env import Environment, is_config_free, sample_uniform, segments_free_batch
from .expert import EventLog, ExpertResult, Status, geometric_steer


@dataclass
class InformedRRTStarParams:
    max_iterations: int = 1000
    max_time: float = 10.0
    gamma: float = 500.0
    goal_probability: float = 0.1
    resolution: float = 0.05
    step: float = 0.5


class CostedTree:
    """Tree with cost-to-root per node; children lists keep rewiring cheap."""

    def __init__(self, root: np.ndarray, capacity: int = 512):
        self.nodes = np.empty((capacity, len(root)))
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.cost = np.zeros(capacity)
        self.children: list[list[int]] = [[]]
        self.nodes[0] = root
        self.size = 1

    def __len__(self) -> int:
        return self.size

    def add(self, q, parent: int) -> int:
        if self.size == len(self.nodes):
            grow = len(self.nodes)
            self.nodes = np.concatenate([self.nodes, np.empty_like(self.nodes[:grow])])
            self.parent = np.concatenate([self.parent, np.full(grow, -1, dtype=np.int64)])
            self.cost = np.concatenate([self.cost, np.zeros(grow)])
        i = self.size
        self.nodes[i] = q
        self.parent[i] = parent
        self.cost[i] = self.cost[parent] + float(np.linalg.norm(q - self.nodes[parent]))
        self.children.append([])
        self.children[parent].append(i)
        self.size += 1
        return i

    def nearest(self, q) -> int:
        return int(np.argmin(np.linalg.norm(self.nodes[: self.size] - q, axis=1)))

    def near(self, q, radius: float) -> np.ndarray:
        d = np.linalg.norm(self.nodes[: self.size] - q, axis=1)
        return np.flatnonzero(d <= radius)

    def rewire(self, i: int, new_parent: int) -> None:
        old = int(self.parent[i])
        self.children[old].remove(i)
        self.children[new_parent].append(i)
        self.parent[i] = new_parent
        new_cost = self.cost[new_parent] + float(np.linalg.norm(self.nodes[i] - self.nodes[new_parent]))
        delta = new_cost - self.cost[i]
        stack = [i]
        while stack:
            j = stack.pop()
            self.cost[j] += delta
            stack.extend(self.children[j])

    def branch(self, i: int) -> np.ndarray:
        idx = []
        while i >= 0:
            idx.append(i)
            i = int(self.parent[i])
        return self.nodes[idx[::-1]].copy()


def sample_unit_ball(dim: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(dim)
    return x / np.linalg.norm(x) * rng.random() ** (1.0 / dim)


def _rotation_to_world(start, goal) -> np.ndarray:
    a1 = (goal - start) / np.linalg.norm(goal - start)
    M = np.outer(a1, np.eye(len(start))[0])
    U, _, Vt = np.linalg.svd(M)
    d = np.ones(len(start))
    d[-1] = np.linalg.det(U) * np.linalg.det(Vt)
    return U @ np.diag(d) @ Vt


class Hyperspheroid:
    """Prolate hyperspheroid with foci ``start`` and ``goal``; rotation computed once."""

    def __init__(self, start, goal):
        self.start = np.asarray(start, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        self.c_min = float(np.linalg.norm(self.goal - self.start))
        self.center = 0.5 * (self.start + self.goal)
        self.rotation = _rotation_to_world(self.start, self.goal) if self.c_min > 0 else None

    def sample(self, c_best: float, rng: np.random.Generator) -> np.ndarray:
        """Uniform sample from {x : |x-start| + |x-goal| <= c_best}."""
        if c_best < self.c_min - 1e-9:
            raise ValueError("c_best cannot be below the start-goal distance")
        c_best = max(c_best, self.c_min)
        ball = sample_unit_ball(len(self.start), rng)
        if self.rotation is None:
            return self.center + 0.5 * c_best * ball
        radii = np.full(len(self.start), 0.5 * math.sqrt(max(c_best**2 - self.c_min**2, 0.0)))
        radii[0] = 0.5 * c_best
        return self.rotation @ (radii * ball) + self.center


def sample_informed(start, goal, c_best: float, rng: np.random.Generator) -> np.ndarray:
    return Hyperspheroid(start, goal).sample(c_best, rng)


def informed_rrtstar_plan(env: Environment, start, goal, params: InformedRRTStarParams | None = None,
                          rng: np.random.Generator | None = None) -> ExpertResult:
    """RRT* with informed sampling; returns the best path when the budget runs out."""
    params = params or InformedRRTStarParams()
    rng = rng if rng is not None else np.random.default_rng()
    t0 = time.perf_counter()
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if not (is_config_free(env, start) and is_config_free(env, goal)):
        raise ValueError("start and goal must be collision-free")
    events = EventLog(env.dof)
    calls = 0
    history: list[float] = []
    if np.array_equal(start, goal):
        return ExpertResult(np.stack([start, goal]), events, 0, 0.0, 0, [0.0])

    res, step = params.resolution, params.step
    n = env.dof
    tree = CostedTree(start)
    goal_links: dict[int, float] = {}  # node -> distance to goal over a free edge
    best_cost, best_node = math.inf, -1
    ellipse = Hyperspheroid(start, goal)

    def free(a_list, b):
        nonlocal calls
        calls += len(a_list)
        return segments_free_batch(env, a_list, np.repeat(b[None], len(a_list), axis=0), res)

    def draw():
        if rng.random() < params.goal_probability:
            return goal.copy()
        if math.isinf(best_cost):
            return sample_uniform(env, rng)
        for _ in range(100):
            x = ellipse.sample(best_cost, rng)
            if env.within_limits(x):
                return x
        return sample_uniform(env, rng)

    it = 0
    for it in range(1, params.max_iterations + 1):
        if time.perf_counter() - t0 > params.max_time:
            it -= 1
            break
        x_rand = draw()
        nearest = tree.nearest(x_rand)
        x_new, status, log = geometric_steer(env, tree.nodes[nearest], x_rand, step, res)
        events.extend(log)
        calls += len(log)
        if status is Status.TRAPPED:
            history.append(best_cost)
            continue
        N = len(tree) + 1
        radius = min(params.gamma * (math.log(N) / N) ** (1.0 / n), step)
        near = tree.near(x_new, radius)
        near = near[near != nearest]
        parent = nearest
        c_new = tree.cost[nearest] + float(np.linalg.norm(x_new - tree.nodes[nearest]))
        near_ok = np.zeros(0, dtype=bool)
        if len(near):
            d_near = np.linalg.norm(tree.nodes[near] - x_new, axis=1)
            near_ok = free(tree.nodes[near], x_new)
            via = np.where(near_ok, tree.cost[near] + d_near, math.inf)
            j = int(np.argmin(via))
            if via[j] < c_new:
                parent, c_new = int(near[j]), float(via[j])
        i_new = tree.add(x_new, parent)
        for k, ok in zip(near, near_ok):
            if ok and k != parent:
                d = float(np.linalg.norm(tree.nodes[k] - x_new))
                if tree.cost[i_new] + d < tree.cost[k] - 1e-12:
                    tree.rewire(int(k), i_new)
        d_goal = float(np.linalg.norm(goal - x_new))
        if d_goal == 0.0:
            goal_links[i_new] = 0.0
        elif d_goal <= step and free(x_new[None], goal)[0]:
            goal_links[i_new] = d_goal
        if goal_links:
            ids = np.fromiter(goal_links, dtype=np.int64)
            totals = tree.cost[ids] + np.fromiter(goal_links.values(), dtype=float)
            j = int(np.argmin(totals))
            if totals[j] < best_cost:
                best_cost, best_node = float(totals[j]), int(ids[j])
        history.append(best_cost)

    elapsed = time.perf_counter() - t0
    if best_node < 0:
        return ExpertResult(None, events, it, elapsed, calls, history)
    path = tree.branch(best_node)
    if goal_links[best_node] > 0.0:
        path = np.vstack([path, goal])
    path[-1] = goal
    return ExpertResult(path, events, it, elapsed, calls, history)
