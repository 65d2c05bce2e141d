"""Domain types shared across the tracking pipeline.

Everything here is immutable after construction: array fields are copied and
flagged read-only so instances can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

# slack for float round-off in bbox containment checks
_BBOX_TOL = 1e-9


def _frozen(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class InstanceObservation:
    """One segmented cell instance in one frame.

    Coordinates are in voxels. ``points`` may be empty when only the
    tabulated features are available (e.g. read from a feature table).
    """

    frame_index: int
    instance_id: int
    centroid: np.ndarray
    bbox_min: np.ndarray
    bbox_extent: np.ndarray
    volume: float
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def __post_init__(self):
        object.__setattr__(self, "centroid", _frozen(self.centroid, (3,)))
        object.__setattr__(self, "bbox_min", _frozen(self.bbox_min, (3,)))
        object.__setattr__(self, "bbox_extent", _frozen(self.bbox_extent, (3,)))
        object.__setattr__(self, "points", _frozen(self.points, (-1, 3)))
        object.__setattr__(self, "volume", float(self.volume))

    @classmethod
    def from_points(cls, frame_index: int, instance_id: int, points,
                    volume: float | None = None) -> "InstanceObservation":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("from_points needs at least one point")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return cls(frame_index, instance_id, pts.mean(axis=0), lo, hi - lo,
                   float(len(pts)) if volume is None else volume, pts)

    @property
    def bbox_max(self) -> np.ndarray:
        return self.bbox_min + self.bbox_extent

    def __eq__(self, other):
        if not isinstance(other, InstanceObservation):
            return NotImplemented
        return (self.frame_index == other.frame_index
                and self.instance_id == other.instance_id
                and self.volume == other.volume
                and np.array_equal(self.centroid, other.centroid)
                and np.array_equal(self.bbox_min, other.bbox_min)
                and np.array_equal(self.bbox_extent, other.bbox_extent)
                and np.array_equal(self.points, other.points))

    __hash__ = None


@dataclass(frozen=True)
class FrameObservations:
    frame_index: int
    instances: dict[int, InstanceObservation]

    def __post_init__(self):
        # canonical order: ascending instance id
        object.__setattr__(self, "instances",
                           dict(sorted(self.instances.items())))

    @classmethod
    def from_list(cls, frame_index: int,
                  instances: Iterable[InstanceObservation]) -> "FrameObservations":
        mapping: dict[int, InstanceObservation] = {}
        for obs in instances:
            if obs.instance_id in mapping:
                raise ValueError(
                    f"duplicate instance id {obs.instance_id} in frame {frame_index}")
            mapping[obs.instance_id] = obs
        return cls(frame_index, mapping)

    @property
    def ids(self) -> list[int]:
        return list(self.instances)

    def centroids(self) -> np.ndarray:
        if not self.instances:
            return np.empty((0, 3))
        return np.stack([o.centroid for o in self.instances.values()])

    def __len__(self) -> int:
        return len(self.instances)

    def __getitem__(self, instance_id: int) -> InstanceObservation:
        return self.instances[instance_id]


@dataclass(frozen=True)
class Sequence:
    frames: list[FrameObservations]
    frame_interval: float = 10.0

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, t: int) -> FrameObservations:
        return self.frames[t]


@dataclass(frozen=True, eq=False)
class Track:
    """A trajectory: first/last frame, per-frame centroids and parent label (0 = none)."""

    track_id: int
    t_init: int
    t_fin: int
    centroids: np.ndarray
    parent_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "centroids", _frozen(self.centroids, (-1, 3)))
        if self.t_fin < self.t_init:
            raise ValueError(f"track {self.track_id}: t_fin < t_init")
        if len(self.centroids) != self.t_fin - self.t_init + 1:
            raise ValueError(
                f"track {self.track_id}: expected {self.t_fin - self.t_init + 1} "
                f"centroids, got {len(self.centroids)}")
        if self.parent_id == self.track_id:
            raise ValueError(f"track {self.track_id} is its own parent")

    def __eq__(self, other):
        if not isinstance(other, Track):
            return NotImplemented
        return ((self.track_id, self.t_init, self.t_fin, self.parent_id)
                == (other.track_id, other.t_init, other.t_fin, other.parent_id)
                and np.array_equal(self.centroids, other.centroids))

    __hash__ = None

    @property
    def frames(self) -> range:
        return range(self.t_init, self.t_fin + 1)


class DivisionEvent(NamedTuple):
    parent_track: int
    daughter_a: int
    daughter_b: int
    frame_of_daughters: int


@dataclass(frozen=True)
class GroundTruthLineage:
    """Reference tracks and divisions.

    ``id_maps[t][instance_id]`` gives the reference track label of every
    instance. When omitted, instance ids are taken to be the track labels,
    the convention of label-image ground truth.
    ``daughter_a`` of each event is the daughter that continues the parent's
    identity when generating classifier training labels.
    """

    tracks: list[Track]
    division_events: list[DivisionEvent]
    id_maps: dict[int, dict[int, int]] | None = None

    def track_by_id(self) -> dict[int, Track]:
        return {tr.track_id: tr for tr in self.tracks}

    def label_of(self, frame: int, instance_id: int) -> int:
        if self.id_maps is None:
            return instance_id
        return self.id_maps[frame][instance_id]


def validate_sequence(seq: Sequence) -> list[str]:
    """Return human-readable invariant violations; empty when ``seq`` is valid."""
    problems: list[str] = []
    if not seq.frame_interval > 0:
        problems.append(f"frame_interval must be positive, got {seq.frame_interval}")
    for pos, frame in enumerate(seq.frames):
        if frame.frame_index != pos:
            problems.append(
                f"frame at position {pos} has index {frame.frame_index}; "
                "indices must be contiguous from 0")
        for key, obs in frame.instances.items():
            where = f"frame {frame.frame_index}, instance {key}"
            if obs.instance_id != key:
                problems.append(f"{where}: keyed under {key} but id is {obs.instance_id}")
            if obs.instance_id < 1:
                problems.append(f"{where}: instance id must be positive")
            if obs.frame_index != frame.frame_index:
                problems.append(f"{where}: observation claims frame {obs.frame_index}")
            if np.any(obs.bbox_extent < 0):
                problems.append(f"{where}: negative bbox extent")
            if not obs.volume > 0:
                problems.append(f"{where}: volume must be positive, got {obs.volume}")
            lo = obs.bbox_min - _BBOX_TOL
            hi = obs.bbox_max + _BBOX_TOL
            if np.any(obs.centroid < lo) or np.any(obs.centroid > hi):
                problems.append(f"{where}: centroid outside bounding box")
            if len(obs.points):
                if np.any(obs.points < lo) or np.any(obs.points > hi):
                    problems.append(f"{where}: points outside bounding box")
                if obs.volume != len(obs.points):
                    problems.append(
                        f"{where}: volume mismatch, volume={obs.volume:g} "
                        f"but {len(obs.points)} points")
    return problems
