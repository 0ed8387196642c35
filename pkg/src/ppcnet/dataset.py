"""Planner demonstrations and collision records, with population labels.

The population label of a collision record is the fraction of collision-free
records among all records whose segment centers lie within a radius of its
own center (itself included).  Neighbor queries go through a KD-tree over the
segment centers.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .expert import EventLog

SCHEMA_VERSION = 1


class DatasetFormatError(ValueError):
    pass


class PlannerSample(NamedTuple):
    current: np.ndarray
    goal: np.ndarray
    next: np.ndarray


class CollisionSample(NamedTuple):
    start: np.ndarray
    end: np.ndarray
    free: bool
    population_label: float  # nan when unset


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def _read_header(lines: list[str], kind: str) -> dict:
    if not lines or not lines[0].startswith("# ppcnet-dataset"):
        raise DatasetFormatError("missing dataset header")
    fields = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    if fields.get("kind") != kind:
        raise DatasetFormatError(f"expected a {kind} dataset, found {fields.get('kind')}")
    if int(fields.get("schema", -1)) != SCHEMA_VERSION:
        raise DatasetFormatError(f"unsupported schema {fields.get('schema')}")
    return fields


class PlannerDataset:
    """State/goal/next-state triples taken from expert paths."""

    def __init__(self, dim: int):
        self.dim = dim
        self.current = np.zeros((0, dim))
        self.goal = np.zeros((0, dim))
        self.next = np.zeros((0, dim))

    def __len__(self) -> int:
        return len(self.current)

    def __getitem__(self, i: int) -> PlannerSample:
        return PlannerSample(self.current[i], self.goal[i], self.next[i])

    def append_demonstration(self, path, goal) -> int:
        path = np.asarray(path, dtype=float)
        if path.ndim != 2 or len(path) < 2:
            raise ValueError("a demonstration needs at least two waypoints")
        if path.shape[1] != self.dim:
            raise ValueError("dimension mismatch")
        k = len(path) - 1
        self.current = np.concatenate([self.current, path[:-1]])
        self.goal = np.concatenate([self.goal, np.repeat(np.asarray(goal, dtype=float)[None], k, axis=0)])
        self.next = np.concatenate([self.next, path[1:]])
        return k

    def extend(self, other: "PlannerDataset") -> None:
        self.current = np.concatenate([self.current, other.current])
        self.goal = np.concatenate([self.goal, other.goal])
        self.next = np.concatenate([self.next, other.next])

    def inputs(self) -> np.ndarray:
        return np.hstack([self.current, self.goal])

    def save(self, path: str | Path, env_hash: str = "-") -> None:
        with open(path, "w") as fh:
            fh.write(f"# ppcnet-dataset schema={SCHEMA_VERSION} kind=planner dim={self.dim} env={env_hash}\n")
            for c, g, n in zip(self.current, self.goal, self.next):
                fh.write(f"{self.dim} {_fmt(c)} {_fmt(g)} {_fmt(n)}\n")

    @classmethod
    def load(cls, path: str | Path) -> "PlannerDataset":
        lines = Path(path).read_text().splitlines()
        header = _read_header(lines, "planner")
        dim = int(header["dim"])
        ds = cls(dim)
        rows = [line.split() for line in lines[1:] if line.strip()]
        if not rows:
            return ds
        if any(len(r) != 1 + 3 * dim or int(r[0]) != dim for r in rows):
            raise DatasetFormatError(f"{path}: malformed planner record")
        arr = np.array([[float(x) for x in r[1:]] for r in rows])
        ds.current, ds.goal, ds.next = arr[:, :dim], arr[:, dim : 2 * dim], arr[:, 2 * dim :]
        return ds


class SegmentIndex:
    """KD-tree over segment centers; payload is the record id (row number)."""

    def __init__(self, centers: np.ndarray):
        self.centers = centers
        self.tree = cKDTree(centers)

    def __len__(self) -> int:
        return len(self.centers)

    def query_radius(self, point, radius: float) -> np.ndarray:
        return np.sort(np.asarray(self.tree.query_ball_point(point, radius), dtype=np.int64))

    def count_radius(self, points, radius: float) -> np.ndarray:
        return np.asarray(self.tree.query_ball_point(points, radius, return_length=True), dtype=np.int64)


class CollisionDataset:
    """Checked segments with oracle verdicts and optional population labels.

    The KD-tree index is rebuilt on demand after the store changes.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.starts = np.zeros((0, dim))
        self.ends = np.zeros((0, dim))
        self.free = np.zeros(0, dtype=bool)
        self.population = np.zeros(0)
        self._index: SegmentIndex | None = None

    def __len__(self) -> int:
        return len(self.free)

    def __getitem__(self, i: int) -> CollisionSample:
        return CollisionSample(self.starts[i], self.ends[i], bool(self.free[i]), float(self.population[i]))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.starts + self.ends)

    @property
    def index(self) -> SegmentIndex:
        if self._index is None or len(self._index) != len(self):
            self._index = SegmentIndex(self.centers)
        return self._index

    def append(self, starts, ends, free) -> int:
        starts = np.asarray(starts, dtype=float).reshape(-1, self.dim)
        ends = np.asarray(ends, dtype=float).reshape(-1, self.dim)
        free = np.asarray(free, dtype=bool).reshape(-1)
        if not (len(starts) == len(ends) == len(free)):
            raise ValueError("starts, ends and labels differ in length")
        self.starts = np.concatenate([self.starts, starts])
        self.ends = np.concatenate([self.ends, ends])
        self.free = np.concatenate([self.free, free])
        self.population = np.concatenate([self.population, np.full(len(free), np.nan)])
        self._index = None
        return len(free)

    def append_collision_events(self, events: EventLog) -> int:
        return self.append(events.starts, events.ends, events.free)

    def extend(self, other: "CollisionDataset") -> None:
        self.append(other.starts, other.ends, other.free)
        self.population[len(self) - len(other):] = other.population

    def population_label(self, i: int, radius: float) -> float:
        if radius <= 0:
            raise ValueError("radius must be positive")
        ids = self.index.query_radius(self.centers[i], radius)
        return float(np.count_nonzero(self.free[ids]) / len(ids))

    def label_all_population(self, radius: float) -> None:
        """Set the population label of every record."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        if len(self) == 0:
            return
        centers = self.centers
        total = self.index.count_radius(centers, radius)
        free_centers = centers[self.free]
        if len(free_centers):
            n_free = SegmentIndex(free_centers).count_radius(centers, radius)
        else:
            n_free = np.zeros(len(self), dtype=np.int64)
        self.population = n_free / total

    def labels(self, mode: str) -> np.ndarray:
        """Training targets, P(collision-free), for ``binary`` or ``population`` mode."""
        if mode == "binary":
            return self.free.astype(float)
        if mode == "population":
            if np.any(np.isnan(self.population)):
                raise ValueError("population labels are not computed for every record")
            return self.population.copy()
        raise ValueError(f"unknown label mode {mode!r}")

    def inputs(self) -> np.ndarray:
        return np.hstack([self.starts, self.ends])

    def save(self, path: str | Path, env_hash: str = "-") -> None:
        with open(path, "w") as fh:
            fh.write(f"# ppcnet-dataset schema={SCHEMA_VERSION} kind=collision dim={self.dim} env={env_hash}\n")
            for a, b, f, p in zip(self.starts, self.ends, self.free, self.population):
                fh.write(f"{_fmt(a)} {_fmt(b)} {int(f)} {format(float(p), '.17g')}\n")

    @classmethod
    def load(cls, path: str | Path) -> "CollisionDataset":
        lines = Path(path).read_text().splitlines()
        header = _read_header(lines, "collision")
        dim = int(header["dim"])
        ds = cls(dim)
        rows = [line.split() for line in lines[1:] if line.strip()]
        if not rows:
            return ds
        if any(len(r) != 2 * dim + 2 for r in rows):
            raise DatasetFormatError(f"{path}: malformed collision record")
        arr = np.array([[float(x) for x in r] for r in rows])
        ds.append(arr[:, :dim], arr[:, dim : 2 * dim], arr[:, 2 * dim] > 0.5)
        ds.population = arr[:, 2 * dim + 1].copy()
        return ds


def dataset_env_hash(path: str | Path) -> str:
    with open(path) as fh:
        first = fh.readline()
    fields = dict(tok.split("=", 1) for tok in first.split()[2:])
    return fields.get("env", "-")
