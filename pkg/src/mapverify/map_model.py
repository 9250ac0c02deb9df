"""Lanelet network with 3D bounds and the elevation measures used by the verifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

MIN_SEGMENT_XY = 1e-6
DEFAULT_SAMPLES = 64
DEFAULT_OVERLAP_RADIUS = 1.5


class GeometryError(ValueError):
    """A point, polyline or lanelet violates its construction invariants."""


class NetworkError(ValueError):
    """A lanelet network is inconsistent; ``lanelet_id`` names the offender."""

    def __init__(self, message: str, lanelet_id: int | None = None):
        super().__init__(message)
        self.lanelet_id = lanelet_id


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise GeometryError(f"non-finite coordinate {name}={value!r}")


@dataclass(frozen=True)
class Polyline3:
    points: tuple[Point3, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.points, tuple):
            object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise GeometryError("polyline needs at least 2 points")
        for i, (p, q) in enumerate(zip(self.points, self.points[1:])):
            if math.hypot(q.x - p.x, q.y - p.y) <= MIN_SEGMENT_XY:
                raise GeometryError(f"zero-run segment between points {i} and {i + 1}")

    @classmethod
    def from_coords(cls, coords: Iterable[Sequence[float]]) -> Polyline3:
        return cls(tuple(Point3(float(x), float(y), float(z)) for x, y, z in coords))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> Polyline3:
        return cls.from_coords(arr.tolist())

    @cached_property
    def array(self) -> np.ndarray:
        """The points as an (N, 3) float array; treat as read-only."""
        arr = np.array([(p.x, p.y, p.z) for p in self.points], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def stations(self) -> np.ndarray:
        """Cumulative xy arc length at every vertex, starting at 0."""
        seg = np.hypot(np.diff(self.array[:, 0]), np.diff(self.array[:, 1]))
        return np.concatenate(([0.0], np.cumsum(seg)))

    @property
    def xy_length(self) -> float:
        return float(self.stations[-1])

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Lanelet:
    id: int
    left_bound: Polyline3
    right_bound: Polyline3
    successors: tuple[int, ...] = ()
    predecessors: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "successors", tuple(self.successors))
        object.__setattr__(self, "predecessors", tuple(self.predecessors))
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id <= 0:
            raise NetworkError(f"lanelet id must be a positive integer, got {self.id!r}")
        for kind, refs in (("successor", self.successors), ("predecessor", self.predecessors)):
            if len(set(refs)) != len(refs):
                raise NetworkError(f"lanelet {self.id}: duplicate {kind} reference", self.id)
            if self.id in refs:
                raise NetworkError(f"lanelet {self.id}: lists itself as {kind}", self.id)


@dataclass(frozen=True)
class LaneletNetwork:
    """Validated, immutable collection of lanelets kept in ascending id order."""

    lanelets: tuple[Lanelet, ...] = ()
    _by_id: dict[int, Lanelet] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.lanelets, key=lambda l: l.id))
        object.__setattr__(self, "lanelets", ordered)
        by_id: dict[int, Lanelet] = {}
        for lanelet in ordered:
            if lanelet.id in by_id:
                raise NetworkError(f"duplicate lanelet id {lanelet.id}", lanelet.id)
            by_id[lanelet.id] = lanelet
        object.__setattr__(self, "_by_id", by_id)
        for lanelet in ordered:
            for ref in lanelet.successors + lanelet.predecessors:
                if ref not in by_id:
                    raise NetworkError(f"lanelet {lanelet.id} references missing lanelet {ref}", lanelet.id)
            for succ in lanelet.successors:
                if lanelet.id not in by_id[succ].predecessors:
                    raise NetworkError(
                        f"link asymmetry: {succ} is a successor of {lanelet.id} "
                        f"but does not list it as predecessor",
                        lanelet.id,
                    )
            for pred in lanelet.predecessors:
                if lanelet.id not in by_id[pred].successors:
                    raise NetworkError(
                        f"link asymmetry: {pred} is a predecessor of {lanelet.id} "
                        f"but does not list it as successor",
                        lanelet.id,
                    )

    def __getitem__(self, lanelet_id: int) -> Lanelet:
        return self._by_id[lanelet_id]

    def __contains__(self, lanelet_id: object) -> bool:
        return lanelet_id in self._by_id

    def __iter__(self) -> Iterator[Lanelet]:
        return iter(self.lanelets)

    def __len__(self) -> int:
        return len(self.lanelets)

    @property
    def ids(self) -> list[int]:
        return [l.id for l in self.lanelets]


def link_lanelets(lanelets: Iterable[Lanelet]) -> LaneletNetwork:
    """Build a network from lanelets whose successor lists are authoritative.

    Predecessor lists are recomputed so link symmetry holds by construction.
    """
    lanelets = list(lanelets)
    preds: dict[int, list[int]] = {l.id: [] for l in lanelets}
    for l in sorted(lanelets, key=lambda l: l.id):
        for s in l.successors:
            if s not in preds:
                raise NetworkError(f"lanelet {l.id} references missing lanelet {s}", l.id)
            preds[s].append(l.id)
    return LaneletNetwork(tuple(
        Lanelet(l.id, l.left_bound, l.right_bound, l.successors, tuple(preds[l.id]))
        for l in lanelets
    ))


@dataclass(frozen=True)
class OverlapResult:
    overlaps: bool
    min_gap: float


def resample(p: Polyline3, n: int) -> Polyline3:
    """Resample to ``n`` points equally spaced in xy arc length; z follows linearly."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return Polyline3.from_array(_resampled_array(p, n))


def _resampled_array(p: Polyline3, n: int) -> np.ndarray:
    arr = p.array
    s = p.stations
    targets = np.linspace(0.0, s[-1], n)
    out = np.column_stack([np.interp(targets, s, arr[:, k]) for k in range(3)])
    out[0] = arr[0]
    out[-1] = arr[-1]
    return out


def centerline_array(l: Lanelet, n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("n must be >= 2")
    return 0.5 * (_resampled_array(l.left_bound, n) + _resampled_array(l.right_bound, n))


def centerline(l: Lanelet, n: int) -> Polyline3:
    """Pointwise midpoint of both bounds after resampling each to ``n`` points."""
    return Polyline3.from_array(centerline_array(l, n))


def _max_abs_grade(arr: np.ndarray) -> float:
    run = np.hypot(np.diff(arr[:, 0]), np.diff(arr[:, 1]))
    rise = np.abs(np.diff(arr[:, 2]))
    return float(np.max(rise / run))


def max_abs_grade(p: Polyline3) -> float:
    """Largest per-segment |dz| / xy run."""
    return _max_abs_grade(p.array)


def boundary_step(a: Lanelet, b: Lanelet, n: int = DEFAULT_SAMPLES) -> float:
    """Elevation jump from the end of ``a``'s centerline to the start of ``b``'s."""
    return abs(float(centerline_array(a, n)[-1, 2]) - float(centerline_array(b, n)[0, 2]))


def _overlap(ca: np.ndarray, cb: np.ndarray, radius: float) -> OverlapResult:
    dx = ca[:, None, 0] - cb[None, :, 0]
    dy = ca[:, None, 1] - cb[None, :, 1]
    close = np.hypot(dx, dy) <= radius
    if not close.any():
        return OverlapResult(False, math.inf)
    dz = np.abs(ca[:, None, 2] - cb[None, :, 2])
    return OverlapResult(True, float(dz[close].min()))


def xy_overlap_clearance(
    a: Lanelet, b: Lanelet, radius: float = DEFAULT_OVERLAP_RADIUS, n: int = DEFAULT_SAMPLES
) -> OverlapResult:
    """Sample-pair overlap test between two centerlines.

    A pair of samples overlaps when their xy distance is within ``radius``;
    ``min_gap`` is the smallest vertical distance over overlapping pairs and
    +inf when there are none.
    """
    if a.id == b.id:
        raise ValueError("clearance needs two distinct lanelets")
    if radius <= 0:
        raise ValueError("radius must be positive")
    return _overlap(centerline_array(a, n), centerline_array(b, n), radius)
