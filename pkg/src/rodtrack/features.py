"""Per-instance features, history-augmented association features, and k-NN candidates."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence as Seq

import numpy as np

from .model import FrameObservations, InstanceObservation

FEATURE_DIM = 9


class Projection(str, Enum):
    CONSTANT_POSITION = "constant_position"
    CONSTANT_VELOCITY = "constant_velocity"


def feature_length(r: int) -> int:
    return FEATURE_DIM * (r + 2)


def instance_feature(obs: InstanceObservation) -> np.ndarray:
    """[centroid xyz, bbox_min xyz, bbox_extent xyz]."""
    return np.concatenate([obs.centroid, obs.bbox_min, obs.bbox_extent])


def build_history(track_so_far: Seq[np.ndarray], candidate: np.ndarray, r: int) -> np.ndarray:
    """Concatenate the last ``r + 1`` features of a track with a candidate's.

    Short histories are left-padded by repeating the earliest feature given.
    """
    if r < 0:
        raise ValueError("history depth r must be >= 0")
    if len(track_so_far) == 0:
        raise ValueError("track history must be nonempty")
    past = list(track_so_far[-(r + 1):])
    past = [past[0]] * (r + 1 - len(past)) + past
    return np.concatenate(past + [candidate])


@dataclass
class CandidateAssociation:
    source_id: int
    target_id: int
    feature: np.ndarray
    distance: float          # to the projected source location
    rank: int                # 0 = nearest
    score: float | None = None


def generate_candidates(frame_t: FrameObservations, frame_t1: FrameObservations,
                        n_candidates: int = 4,
                        projection: Projection | str = Projection.CONSTANT_POSITION,
                        prev_displacement: Mapping[int, np.ndarray] | None = None,
                        histories: Mapping[int, Seq[np.ndarray]] | None = None,
                        r: int = 2) -> list[CandidateAssociation]:
    """Nearest ``n_candidates`` targets in ``frame_t1`` for every source in ``frame_t``.

    ``histories[i]`` is the feature chain of source ``i`` ending at frame t;
    missing entries fall back to the source's current feature alone.
    Output is sorted by (source_id, rank).
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    projection = Projection(projection)
    if len(frame_t1) == 0 or len(frame_t) == 0:
        return []
    prev_displacement = prev_displacement or {}
    histories = histories or {}

    target_ids = np.array(frame_t1.ids)
    target_xyz = frame_t1.centroids()
    target_feats = {j: instance_feature(frame_t1[j]) for j in frame_t1.ids}
    k = min(n_candidates, len(target_ids))

    out: list[CandidateAssociation] = []
    for i, obs in frame_t.instances.items():
        where = obs.centroid
        if projection is Projection.CONSTANT_VELOCITY and i in prev_displacement:
            where = where + np.asarray(prev_displacement[i], dtype=float)
        dist = np.linalg.norm(target_xyz - where, axis=1)
        order = np.lexsort((target_ids, dist))[:k]
        past = histories.get(i)
        if past is None or len(past) == 0:
            past = [instance_feature(obs)]
        for rank, col in enumerate(order):
            j = int(target_ids[col])
            out.append(CandidateAssociation(
                i, j, build_history(past, target_feats[j], r), float(dist[col]), rank))
    return out


def feature_matrix(candidates: Seq[CandidateAssociation]) -> np.ndarray:
    if not candidates:
        return np.empty((0, 0))
    return np.stack([c.feature for c in candidates])
