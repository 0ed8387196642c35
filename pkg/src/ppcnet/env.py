"""Planar robot environments and the exact geometric collision oracle.

Two robot kinds are supported:

* ``point``: a point in the plane; the configuration is its (x, y) position.
* ``planar-arm``: a serial chain of capsule links rooted at the origin; the
  configuration is the vector of joint angles in radians.

Distances in configuration space are plain Euclidean (no angle wrapping).
All collision routines are vectorized over a batch of configurations.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

POINT = "point"
ARM = "planar-arm"

# Segment discretization tolerates float noise in length/step ratios.
_STEP_EPS = 1e-9


class EnvSpecError(ValueError):
    """Malformed environment definition."""


class SamplingError(RuntimeError):
    """Rejection sampling ran out of attempts."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True, eq=False)
class Environment:
    name: str
    robot: str
    joint_limits: np.ndarray  # (n, 2)
    circles: np.ndarray  # (m, 3): cx, cy, r
    rects: np.ndarray  # (k, 4): xmin, ymin, xmax, ymax
    bin_region: np.ndarray  # (4,)
    home: np.ndarray
    place: np.ndarray
    link_lengths: np.ndarray = field(default_factory=lambda: np.zeros(0))
    half_width: float = 0.0

    def __post_init__(self):
        if self.robot not in (POINT, ARM):
            raise EnvSpecError(f"unknown robot kind {self.robot!r}")
        lim = self.joint_limits
        if lim.ndim != 2 or lim.shape[1] != 2 or np.any(lim[:, 0] >= lim[:, 1]):
            raise EnvSpecError("joint_limits must be a list of [lo, hi] with lo < hi")
        if self.robot == POINT and self.dof != 2:
            raise EnvSpecError("point robot must have dof 2")
        if self.robot == ARM and len(self.link_lengths) != self.dof:
            raise EnvSpecError("link_lengths must have one entry per joint")
        b = self.bin_region
        if b.shape != (4,) or not (b[2] > b[0] and b[3] > b[1]):
            raise EnvSpecError("bin_region must have positive area")
        for name in ("home", "place"):
            q = getattr(self, name)
            if q.shape != (self.dof,):
                raise EnvSpecError(f"{name} has wrong dimension")
            if not self.within_limits(q):
                raise EnvSpecError(f"{name} is outside the joint limits")
            if not is_config_free(self, q):
                raise EnvSpecError(f"{name} is in collision")
        for arr in (self.joint_limits, self.circles, self.rects, self.bin_region,
                    self.home, self.place, self.link_lengths):
            arr.setflags(write=False)

    @property
    def dof(self) -> int:
        return self.joint_limits.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.joint_limits[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.joint_limits[:, 1]

    def within_limits(self, q) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))

    def clip(self, q) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "robot": self.robot,
            "dof": self.dof,
            "joint_limits": self.joint_limits.tolist(),
        }
        if self.robot == ARM:
            d["link_lengths"] = self.link_lengths.tolist()
            d["link_half_width"] = float(self.half_width)
        d["obstacles"] = {
            "circles": [{"center": c[:2].tolist(), "radius": float(c[2])} for c in self.circles],
            "rectangles": [{"min": r[:2].tolist(), "max": r[2:].tolist()} for r in self.rects],
        }
        d["bin_region"] = {"min": self.bin_region[:2].tolist(), "max": self.bin_region[2:].tolist()}
        d["home"] = self.home.tolist()
        d["place"] = self.place.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        try:
            robot = d["robot"]
            limits = np.asarray(d["joint_limits"], dtype=float)
            if "dof" in d and int(d["dof"]) != limits.shape[0]:
                raise EnvSpecError("dof does not match joint_limits")
            obstacles = d.get("obstacles") or {}
            circles = [c["center"] + [c["radius"]] for c in obstacles.get("circles") or []]
            rects = [r["min"] + r["max"] for r in obstacles.get("rectangles") or []]
            kwargs = {}
            if robot == ARM:
                kwargs["link_lengths"] = np.asarray(d["link_lengths"], dtype=float)
                kwargs["half_width"] = float(d["link_half_width"])
            return cls(
                name=str(d.get("name", "unnamed")),
                robot=robot,
                joint_limits=limits,
                circles=np.asarray(circles, dtype=float).reshape(-1, 3),
                rects=np.asarray(rects, dtype=float).reshape(-1, 4),
                bin_region=np.asarray(d["bin_region"]["min"] + d["bin_region"]["max"], dtype=float),
                home=np.asarray(d["home"], dtype=float),
                place=np.asarray(d["place"], dtype=float),
                **kwargs,
            )
        except (KeyError, TypeError) as exc:
            raise EnvSpecError(f"bad environment definition: {exc!r}") from exc

    def digest(self) -> str:
        """Short content hash, used to tie datasets to the environment."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_env(path: str | Path) -> Environment:
    with open(path) as fh:
        return Environment.from_dict(yaml.safe_load(fh))


def save_env(env: Environment, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(env.to_dict(), fh, sort_keys=False, default_flow_style=None)


def reference_env(name: str = "arm") -> Environment:
    """Load one of the bundled environments (``arm`` or ``point``)."""
    path = Path(__file__).parent / "envs" / f"{name}.yaml"
    if not path.exists():
        raise FileNotFoundError(f"no bundled environment named {name!r}")
    return load_env(path)


# -- kinematics ----------------------------------------------------------


def link_points(env: Environment, Q: np.ndarray) -> np.ndarray:
    """Joint positions of the arm for a batch of configurations, shape (B, n+1, 2)."""
    Q = np.atleast_2d(Q)
    theta = np.cumsum(Q, axis=1)
    steps = np.stack([np.cos(theta), np.sin(theta)], axis=-1) * env.link_lengths[:, None]
    pts = np.zeros((Q.shape[0], Q.shape[1] + 1, 2))
    pts[:, 1:] = np.cumsum(steps, axis=1)
    return pts


def _check_dim(env: Environment, Q: np.ndarray) -> None:
    if Q.shape[-1] != env.dof:
        raise ValueError(f"configuration has dimension {Q.shape[-1]}, environment expects {env.dof}")


def forward_kinematics(env: Environment, q) -> np.ndarray:
    """World-frame robot geometry.

    For the arm, returns an (n, 2, 2) array of capsule axis endpoints, one row
    per link.  For the point robot, returns the (1, 2) point.
    """
    q = np.asarray(q, dtype=float)
    _check_dim(env, q)
    if env.robot == POINT:
        return q.reshape(1, 2).copy()
    pts = link_points(env, q[None])[0]
    return np.stack([pts[:-1], pts[1:]], axis=1)


def end_effector(env: Environment, Q: np.ndarray) -> np.ndarray:
    """Tip position for a batch of configurations, shape (B, 2)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if env.robot == POINT:
        return Q.copy()
    return link_points(env, Q)[:, -1]


# -- geometry helpers (broadcasting over leading axes) ---------------------


def _point_segment_dist(P, A, B):
    d = B - A
    dd = np.sum(d * d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.sum((P - A) * d, axis=-1) / dd
    t = np.where(dd > 0, np.clip(t, 0.0, 1.0), 0.0)
    closest = A + t[..., None] * d
    return np.linalg.norm(P - closest, axis=-1)


def _point_rect_dist(P, R):
    dx = np.maximum(np.maximum(R[..., 0] - P[..., 0], P[..., 0] - R[..., 2]), 0.0)
    dy = np.maximum(np.maximum(R[..., 1] - P[..., 1], P[..., 1] - R[..., 3]), 0.0)
    return np.hypot(dx, dy)


def _segment_hits_rect(A, B, R):
    """Liang-Barsky clipping test: does segment AB touch rectangle R."""
    d = B - A
    shape = np.broadcast_shapes(A.shape[:-1], R.shape[:-1])
    t0 = np.zeros(shape)
    t1 = np.ones(shape)
    hit = np.ones(shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for ax in (0, 1):
            p, dp = A[..., ax], d[..., ax]
            lo, hi = R[..., ax], R[..., ax + 2]
            par = dp == 0.0
            ta = (lo - p) / dp
            tb = (hi - p) / dp
            tmin = np.where(par, -np.inf, np.minimum(ta, tb))
            tmax = np.where(par, np.inf, np.maximum(ta, tb))
            hit &= ~(par & ((p < lo) | (p > hi)))
            t0 = np.maximum(t0, tmin)
            t1 = np.minimum(t1, tmax)
    return hit & (t0 <= t1)


def _segment_rect_dist(A, B, R):
    corners = np.stack(
        [R[..., [0, 1]], R[..., [2, 1]], R[..., [2, 3]], R[..., [0, 3]]], axis=-2
    )  # (..., 4, 2)
    d = np.minimum(_point_rect_dist(A, R), _point_rect_dist(B, R))
    cd = _point_segment_dist(corners, A[..., None, :], B[..., None, :]).min(axis=-1)
    d = np.minimum(d, cd)
    return np.where(_segment_hits_rect(A, B, R), 0.0, d)


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _segment_segment_dist(A, B, C, D):
    d1, d2 = _cross(C, D, A), _cross(C, D, B)
    d3, d4 = _cross(A, B, C), _cross(A, B, D)
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
    d = np.minimum(
        np.minimum(_point_segment_dist(A, C, D), _point_segment_dist(B, C, D)),
        np.minimum(_point_segment_dist(C, A, B), _point_segment_dist(D, A, B)),
    )
    return np.where(crossing, 0.0, d)


# -- collision oracle ----------------------------------------------------


def config_free_batch(env: Environment, Q) -> np.ndarray:
    """Exact collision test for a batch of configurations; True where free."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    _check_dim(env, Q)
    free = np.ones(Q.shape[0], dtype=bool)
    if Q.shape[0] == 0:
        return free

    if env.robot == POINT:
        P = Q[:, None, :]
        if len(env.circles):
            c = env.circles[None]
            free &= ~np.any(np.hypot(*(P - c[..., :2]).transpose(2, 0, 1)) <= c[..., 2], axis=1)
        if len(env.rects):
            R = env.rects[None]
            inside = (P[..., 0] >= R[..., 0]) & (P[..., 0] <= R[..., 2]) & \
                     (P[..., 1] >= R[..., 1]) & (P[..., 1] <= R[..., 3])
            free &= ~np.any(inside, axis=1)
        return free

    pts = link_points(env, Q)
    A, B = pts[:, :-1], pts[:, 1:]  # (Bt, n, 2)
    hw = env.half_width
    if len(env.circles):
        c = env.circles[None, None]  # (1, 1, m, 3)
        dist = _point_segment_dist(c[..., :2], A[:, :, None], B[:, :, None])
        free &= ~np.any(dist < c[..., 2] + hw, axis=(1, 2))
    if len(env.rects):
        R = env.rects[None, None]
        dist = _segment_rect_dist(A[:, :, None], B[:, :, None], R)
        free &= ~np.any(dist < hw, axis=(1, 2))
    n = env.dof
    pairs = [(i, j) for i in range(n) for j in range(i + 2, n)]
    if pairs:
        I = np.array([p[0] for p in pairs])
        J = np.array([p[1] for p in pairs])
        dist = _segment_segment_dist(A[:, I], B[:, I], A[:, J], B[:, J])
        free &= ~np.any(dist < 2 * hw, axis=1)
    return free


def is_config_free(env: Environment, q) -> bool:
    q = np.asarray(q, dtype=float)
    _check_dim(env, q)
    return bool(config_free_batch(env, q[None])[0])


def n_steps(length: float, step: float) -> int:
    """Number of equal sub-segments needed so none exceeds ``step``."""
    if length <= 0.0:
        return 0
    return max(1, math.ceil(length / step - _STEP_EPS))


def interpolate(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """k+1 evenly spaced points from a to b inclusive; endpoints are exact copies."""
    if k == 0:
        return a[None].copy()
    t = (np.arange(k + 1) / k)[:, None]
    pts = a + t * (b - a)
    pts[0] = a
    pts[-1] = b
    return pts


def discretize(a, b, resolution: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return interpolate(a, b, n_steps(float(np.linalg.norm(b - a)), resolution))


def is_segment_free(env: Environment, a, b, resolution: float) -> bool:
    """Fixed-step feasibility of the straight joint-space segment a -> b."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    return bool(np.all(config_free_batch(env, discretize(a, b, resolution))))


def segments_free_batch(env: Environment, starts: np.ndarray, ends: np.ndarray, resolution: float) -> np.ndarray:
    """Vectorized ``is_segment_free`` over many segments (same sample points)."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    m = len(starts)
    if m == 0:
        return np.zeros(0, dtype=bool)
    delta = ends - starts
    lengths = np.linalg.norm(delta, axis=1)
    k = np.where(lengths > 0, np.maximum(1, np.ceil(lengths / resolution - _STEP_EPS)), 0).astype(np.int64)
    counts = k + 1
    owner = np.repeat(np.arange(m), counts)
    offsets = np.cumsum(counts) - counts
    i = np.arange(len(owner)) - offsets[owner]
    t = i / np.maximum(k, 1)[owner]
    pts = starts[owner] + t[:, None] * delta[owner]
    last = offsets + k
    pts[offsets] = starts
    pts[last] = ends
    ok = config_free_batch(env, pts)
    bad = np.zeros(m, dtype=bool)
    np.logical_or.at(bad, owner, ~ok)
    return ~bad


# -- sampling ------------------------------------------------------------


def sample_uniform(env: Environment, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    shape = (env.dof,) if size is None else (size, env.dof)
    return rng.uniform(env.lower, env.upper, size=shape)


def sample_free_config(env: Environment, rng: np.random.Generator, max_attempts: int = 10_000) -> np.ndarray:
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    for _ in range(max_attempts):
        q = sample_uniform(env, rng)
        if is_config_free(env, q):
            return q
    raise SamplingError(f"no free configuration after {max_attempts} attempts")


def in_region(points: np.ndarray, region: np.ndarray) -> np.ndarray:
    return (points[..., 0] >= region[0]) & (points[..., 0] <= region[2]) & \
           (points[..., 1] >= region[1]) & (points[..., 1] <= region[3])


def random_goal_conf(env: Environment, count: int, rng: np.random.Generator,
                     max_attempts: int = 200_000, batch: int = 512) -> np.ndarray:
    """Rejection-sample ``count`` free configurations with the tip inside the bin.

    Candidates are drawn in batches for speed; each goal consumes at most
    ``max_attempts`` candidates.  Returns an array of shape (count, n).
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    goals = []
    for index in range(count):
        tried = 0
        found = None
        while found is None and tried < max_attempts:
            m = min(batch, max_attempts - tried)
            Q = sample_uniform(env, rng, m)
            tried += m
            ok = in_region(end_effector(env, Q), env.bin_region)
            if not ok.any():
                continue
            cand = np.flatnonzero(ok)
            free = config_free_batch(env, Q[cand])
            if free.any():
                found = Q[cand[np.argmax(free)]]
        if found is None:
            raise SamplingError(f"goal {index}: no valid bin configuration after {max_attempts} attempts", index)
        goals.append(found)
    return np.array(goals)
