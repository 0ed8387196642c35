"""Sequential path generation with a learned planner and a learned collision checker.

The planner proposes the next configuration; the checker approves the move
sub-segment by sub-segment.  Whenever the target is directly reachable the
path is closed and verified with the exact oracle; spans the oracle rejects
are re-planned by the expert and spliced in.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .env import Environment, interpolate, n_steps, segments_free_batch
from .expert import BiRRTParams, ExpertResult, birrt_plan, path_length
from .neural import INFER, MLP, STOCHASTIC, forward, sigmoid


class CollisionChecker(Protocol):
    calls: int

    def __call__(self, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
        """P(collision-free) for each segment."""


class NetChecker:
    """Collision network evaluated deterministically."""

    def __init__(self, net: MLP):
        if net.head != "logit":
            raise ValueError("collision checker needs a logit-head network")
        self.net = net
        self.calls = 0

    def __call__(self, starts, ends):
        return sigmoid(forward(self.net, np.hstack([starts, ends]), INFER))


class OracleChecker:
    """Stand-in checker that answers with the exact oracle (1.0 free, 0.0 blocked)."""

    def __init__(self, env: Environment, resolution: float):
        self.env = env
        self.resolution = resolution
        self.calls = 0

    def __call__(self, starts, ends):
        return segments_free_batch(self.env, starts, ends, self.resolution).astype(float)


class Policy(Protocol):
    def __call__(self, current: np.ndarray, target: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Propose the next configuration."""


class NetPolicy:
    """Planner network queried with inference-time dropout.

    Proposals are clamped to the joint limits and to a maximum step length.
    """

    def __init__(self, net: MLP, env: Environment, max_step: float, stochastic: bool = True):
        self.net = net
        self.env = env
        self.max_step = max_step
        self.mode = STOCHASTIC if stochastic and net.dropout > 0 else INFER

    def __call__(self, current, target, rng):
        q = forward(self.net, np.concatenate([current, target]), self.mode, rng)
        step = q - current
        norm = float(np.linalg.norm(step))
        if norm > self.max_step:
            q = current + step * (self.max_step / norm)
        return self.env.clip(q)


Expert = Callable[[np.ndarray, np.ndarray], ExpertResult]


def make_expert(env: Environment, params: BiRRTParams, rng: np.random.Generator) -> Expert:
    return lambda a, b: birrt_plan(env, a, b, params, rng)


@dataclass
class PlanResult:
    path: np.ndarray | None
    elapsed: float
    iterations: int
    patches_attempted: int = 0
    patches_succeeded: int = 0
    checker_calls: int = 0
    oracle_calls: int = 0

    @property
    def success(self) -> bool:
        return self.path is not None

    @property
    def length(self) -> float:
        return path_length(self.path) if self.path is not None else float("nan")


def _steer(checker, q_from, q_to, threshold, resolution, record=None):
    q_from = np.asarray(q_from, dtype=float)
    q_to = np.asarray(q_to, dtype=float)
    k = n_steps(float(np.linalg.norm(q_to - q_from)), resolution)
    if k == 0:
        return True, q_to.copy()
    pts = interpolate(q_from, q_to, k)
    # one batched evaluation; calls are counted as if checked in order
    ok = checker(pts[:-1], pts[1:]) > threshold
    rejected = np.flatnonzero(~ok)
    used = k if len(rejected) == 0 else int(rejected[0]) + 1
    checker.calls += used
    if record is not None:
        record.append((pts[:used], pts[1 : used + 1]))
    if len(rejected) == 0:
        return True, q_to.copy()
    j = int(rejected[0])
    if j == 0:
        return False, q_from.copy()
    return True, pts[j].copy()


def learned_steer(checker: CollisionChecker, q_from, q_to, threshold: float, resolution: float
                  ) -> tuple[bool, np.ndarray]:
    """Advance along q_from -> q_to while the checker's P(free) exceeds ``threshold``.

    The segment is cut into equal sub-segments no longer than ``resolution``.
    Returns ``(False, q_from)`` if the first sub-segment is rejected, otherwise
    ``(True, q)`` with q the tail of the last approved sub-segment (``q_to``
    itself when every sub-segment passes).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return _steer(checker, q_from, q_to, threshold, resolution)


def find_in_collision_segments(env: Environment, path, resolution: float) -> list[tuple[int, int]]:
    """Index pairs (first, last) of waypoints bounding each maximal run of blocked segments."""
    path = np.asarray(path, dtype=float)
    free = segments_free_batch(env, path[:-1], path[1:], resolution)
    spans = []
    i = 0
    while i < len(free):
        if free[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(free) and not free[j + 1]:
            j += 1
        spans.append((i, j + 1))
        i = j + 1
    return spans


def patch(path, spans: list[tuple[int, int]], expert: Expert) -> tuple[np.ndarray | None, int]:
    """Replace every span with an expert detour.

    Returns the patched path (None if any expert call fails) and the number of
    expert calls made.
    """
    path = np.asarray(path, dtype=float)
    pieces = []
    cursor = 0
    calls = 0
    for first, last in spans:
        result = expert(path[first], path[last])
        calls += 1
        if not result.success:
            return None, calls
        pieces.append(path[cursor:first])
        pieces.append(result.path)
        cursor = last + 1
    pieces.append(path[cursor:])
    return np.concatenate(pieces), calls


@dataclass
class PlanParams:
    s_max: int = 100
    threshold: float = 0.8
    resolution: float = 0.1


def generate(env: Environment, policy: Policy, checker: CollisionChecker, q_start, q_target,
             params: PlanParams, rng: np.random.Generator, record: list | None = None
             ) -> tuple[np.ndarray, bool, int]:
    """The learned part of planning: waypoints until the target is steered to.

    Returns the waypoints, whether the target was reached, and the iterations
    used.  Sub-segments checked while stepping toward the policy's proposals
    are appended to ``record``, as is the closing straight-to-target move; the
    repeated probes toward the target that fall short are not.
    """
    q_start = np.asarray(q_start, dtype=float)
    q_target = np.asarray(q_target, dtype=float)
    path = [q_start]
    current = q_start
    res, thr = params.resolution, params.threshold
    for it in range(1, params.s_max + 1):
        probe = [] if record is not None else None
        ok, reached = _steer(checker, current, q_target, thr, res, probe)
        if ok and np.array_equal(reached, q_target):
            if record is not None:
                record.extend(probe)
            path.append(q_target.copy())
            return np.array(path), True, it
        q_next = policy(current, q_target, rng)
        ok, reached = _steer(checker, current, q_next, thr, res, record)
        if ok and not np.array_equal(reached, current):
            path.append(reached)
            current = reached
    return np.array(path), False, params.s_max


def ppcnet_plan(env: Environment, policy: Policy, checker: CollisionChecker, expert: Expert | None,
                q_start, q_target, params: PlanParams, rng: np.random.Generator) -> PlanResult:
    """Plan from ``q_start`` to ``q_target``.

    Each iteration first tries to steer straight to the target; otherwise the
    policy proposes a waypoint and the steer toward it decides how far to
    move.  A closed path is verified with the oracle, and rejected spans are
    re-planned by ``expert`` (no patching when it is None).
    """
    t0 = time.perf_counter()
    checker.calls = 0
    path, closed, it = generate(env, policy, checker, q_start, q_target, params, rng)

    def result(p, attempted=0, succeeded=0, oracle=0):
        return PlanResult(p, time.perf_counter() - t0, it, attempted, succeeded, checker.calls, oracle)

    if not closed:
        return result(None)
    spans = find_in_collision_segments(env, path, params.resolution)
    oracle = len(path) - 1
    if not spans:
        return result(path, oracle=oracle)
    if expert is None:
        return result(None, oracle=oracle)
    patched, calls = patch(path, spans, expert)
    if patched is None:
        return result(None, calls, calls - 1, oracle)
    return result(patched, calls, calls, oracle)
