"""Demonstration clean-up: binary state contraction followed by resampling."""

from __future__ import annotations

import numpy as np

from .env import Environment, discretize, interpolate, is_segment_free, n_steps, segments_free_batch
from .expert import is_feasible


class InfeasiblePathError(ValueError):
    """A post-processing input was not collision-free."""


def binary_state_contraction(env: Environment, path, resolution: float) -> np.ndarray:
    """Drop redundant waypoints with a greedy anchor walk.

    From each anchor the last waypoint is tried first; on failure the
    connectable index is found by bisection between the anchor and the last
    waypoint, and the anchor jumps there.  The result is a subsequence of the
    input with every consecutive pair oracle-free.
    """
    path = np.asarray(path, dtype=float)
    if len(path) < 2:
        raise ValueError("a path needs at least two waypoints")
    if not is_feasible(env, path, resolution):
        raise InfeasiblePathError("binary state contraction needs a feasible path")
    last = len(path) - 1
    keep = [0]
    i = 0
    while i < last:
        if is_segment_free(env, path[i], path[last], resolution):
            keep.append(last)
            break
        lo, hi = i + 1, last  # lo is connectable (feasible input), hi is not
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if is_segment_free(env, path[i], path[mid], resolution):
                lo = mid
            else:
                hi = mid
        keep.append(lo)
        i = lo
    return path[keep].copy()


def resample(path, step: float) -> np.ndarray:
    """Split every segment into equal pieces no longer than ``step``.

    Original waypoints are kept; the inserted ones lie on the segments, so the
    total length does not change.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    path = np.asarray(path, dtype=float)
    out = [path[:1]]
    for a, b in zip(path[:-1], path[1:]):
        k = n_steps(float(np.linalg.norm(b - a)), step)
        if k == 0:
            out.append(b[None])
        else:
            out.append(interpolate(a, b, k)[1:])
    return np.concatenate(out)


def post_process(env: Environment, path, resolution: float, step: float) -> np.ndarray:
    """Contraction, then resampling, with the result still oracle-feasible.

    Fixed-step checks are not continuous: splitting a free segment moves the
    sample points, so a piece can fail where the whole passed.  Such a segment
    is instead split at its own check points (spacing <= ``resolution``),
    which are known to be free.
    """
    short = binary_state_contraction(env, path, resolution)
    out = [short[:1]]
    for a, b in zip(short[:-1], short[1:]):
        pieces = resample(np.stack([a, b]), step)
        if len(pieces) > 2 and not np.all(segments_free_batch(env, pieces[:-1], pieces[1:], resolution)):
            pieces = discretize(a, b, resolution)
        out.append(pieces[1:])
    return np.concatenate(out)
