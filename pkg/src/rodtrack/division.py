"""Division detection among unmatched instances.

A daughter of a rod-shaped cell sits end-to-end with its sibling, so the
sibling's centre lies on the daughter's major axis. For an unmatched instance
X the neighbour whose mean position has the smallest component across X's
principal axis (projection value, PV) is taken as the sibling X'. The split
is confirmed when X' kept the parent's identity and its volume dropped to
about half of that parent's volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence as Seq

import numpy as np

from .matching import MatchResult
from .model import DivisionEvent, FrameObservations, InstanceObservation, Sequence

DEFAULT_BAND = (0.35, 0.65)
# neighbourhood radius as a multiple of X's length along its major axis
DEFAULT_NEIGHBORHOOD_SCALE = 1.5


class DegenerateGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PrincipalFrame:
    centroid: np.ndarray
    axes: np.ndarray            # rows v1, v2, v3
    singular_values: np.ndarray

    @property
    def major(self) -> np.ndarray:
        return self.axes[0]

    @property
    def minor(self) -> np.ndarray:
        return self.axes[1:]


def principal_frame(points) -> PrincipalFrame:
    """Principal axes of a point set from the SVD of its centred coordinates.

    Each axis is signed so that its largest-magnitude component is positive.
    A rank-1 (collinear) set is accepted: v2 and v3 are then an arbitrary
    orthonormal pair, but the plane they span, and hence any projection
    value, is still well defined.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateGeometryError(f"need at least 3 points, got {len(pts)}")
    center = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - center, full_matrices=False)
    if s[0] <= 1e-12 * max(1.0, float(np.abs(pts).max())):
        raise DegenerateGeometryError("points are coincident")
    axes = vt.copy()
    for row in axes:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PrincipalFrame(center, axes, s)


def major_length(frame: PrincipalFrame, points) -> float:
    proj = (np.asarray(points, dtype=float) - frame.centroid) @ frame.major
    return float(proj.max() - proj.min())


def projection_value(frame_of_x: PrincipalFrame, neighbor_points) -> float:
    """Norm of the neighbour's mean offset from X's centre, projected on (v2, v3)."""
    pts = np.asarray(neighbor_points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("neighbour has no points")
    mean = pts.mean(axis=0) - frame_of_x.centroid
    return float(np.linalg.norm(frame_of_x.minor @ mean))


def _neighbor_points(obs: InstanceObservation) -> np.ndarray:
    return obs.points if len(obs.points) else obs.centroid[None, :]


def neighborhood(x: InstanceObservation, frame: FrameObservations,
                 scale: float = DEFAULT_NEIGHBORHOOD_SCALE) -> tuple[float, dict[int, float]]:
    """Search radius around X and the projection value of every instance inside it."""
    if len(x.points) == 0:
        raise DegenerateGeometryError(f"instance {x.instance_id} has no points")
    pf = principal_frame(x.points)
    radius = scale * major_length(pf, x.points)
    pvs = {}
    for iid, other in frame.instances.items():
        if iid == x.instance_id:
            continue
        if np.linalg.norm(other.centroid - x.centroid) <= radius:
            pvs[iid] = projection_value(pf, _neighbor_points(other))
    return radius, pvs


def find_sibling(x: InstanceObservation, frame: FrameObservations,
                 scale: float = DEFAULT_NEIGHBORHOOD_SCALE) -> int | None:
    _, pvs = neighborhood(x, frame, scale)
    if not pvs:
        return None
    return min(pvs, key=lambda iid: (pvs[iid], iid))


def confirm_division(sibling_now_volume: float, sibling_prev_volume: float,
                     band: tuple[float, float] = DEFAULT_BAND) -> bool:
    if sibling_now_volume <= 0 or sibling_prev_volume <= 0:
        raise ValueError("volumes must be positive")
    lo, hi = band
    return lo <= sibling_now_volume / sibling_prev_volume <= hi


@dataclass
class DivisionUpdate:
    events: list[DivisionEvent] = field(default_factory=list)
    # instance id in frame t+1 -> fresh track id
    relabel: dict[int, int] = field(default_factory=dict)
    next_id: int = 1


def detect_divisions_frame(frame_t: FrameObservations, frame_t1: FrameObservations,
                           match: MatchResult, ids_t: Mapping[int, int],
                           ids_t1: Mapping[int, int], next_id: int,
                           consumed_parents: set[int] | None = None,
                           band: tuple[float, float] = DEFAULT_BAND,
                           scale: float = DEFAULT_NEIGHBORHOOD_SCALE) -> DivisionUpdate:
    """Division events for one frame pair, given the match and provisional ids.

    ``consumed_parents`` is updated in place so a parent track splits at most once.
    """
    consumed = consumed_parents if consumed_parents is not None else set()
    update = DivisionUpdate(next_id=next_id)
    source_of = {t: s for s, t in match.matched_pairs}
    orphan_sources = [s for s in match.unmatched_sources if ids_t[s] not in consumed]
    handled: set[int] = set()

    for x_id in match.unmatched_targets:
        if x_id in handled:
            continue
        x = frame_t1[x_id]
        try:
            radius, pvs = neighborhood(x, frame_t1, scale)
        except DegenerateGeometryError:
            continue
        if not pvs:
            continue
        sib = min(pvs, key=lambda iid: (pvs[iid], iid))
        if sib in handled:
            continue
        sib_obs = frame_t1[sib]

        if sib in source_of:
            parent_inst = source_of[sib]
            parent_track = ids_t[parent_inst]
            if parent_track in consumed:
                continue
            if not confirm_division(sib_obs.volume, frame_t[parent_inst].volume, band):
                continue
            fresh = update.next_id
            update.next_id += 1
            update.relabel[sib] = fresh
            daughters = sorted((fresh, ids_t1[x_id]))
        else:
            # both daughters unmatched: look for a terminated track between them
            mid = 0.5 * (x.centroid + sib_obs.centroid)
            near = [(float(np.linalg.norm(frame_t[s].centroid - mid)), s) for s in orphan_sources
                    if ids_t[s] not in consumed]
            near = [(d, s) for d, s in near if d <= radius]
            if not near:
                continue
            _, parent_inst = min(near)
            parent_track = ids_t[parent_inst]
            prev = frame_t[parent_inst].volume
            if not (confirm_division(sib_obs.volume, prev, band)
                    and confirm_division(x.volume, prev, band)):
                continue
            daughters = sorted((ids_t1[x_id], ids_t1[sib]))
        consumed.add(parent_track)
        handled.update((x_id, sib))
        update.events.append(DivisionEvent(parent_track, daughters[0], daughters[1],
                                           frame_t1.frame_index))
    return update


def detect_divisions(seq: Sequence, matches: Seq[MatchResult],
                     id_maps: Seq[Mapping[int, int]],
                     band: tuple[float, float] = DEFAULT_BAND,
                     scale: float = DEFAULT_NEIGHBORHOOD_SCALE
                     ) -> tuple[list[DivisionEvent], list[dict[int, int]]]:
    """Run detection over a whole sweep of precomputed matches.

    ``matches[t]`` links frame t to t+1. Returns the events and relabelled id
    maps; a relabelled sibling's new id is carried forward to later frames.
    """
    maps = [dict(m) for m in id_maps]
    next_id = 1 + max((tid for m in maps for tid in m.values()), default=0)
    consumed: set[int] = set()
    events: list[DivisionEvent] = []
    for t, match in enumerate(matches):
        upd = detect_divisions_frame(seq[t], seq[t + 1], match, maps[t], maps[t + 1],
                                     next_id, consumed, band, scale)
        next_id = upd.next_id
        events.extend(upd.events)
        for inst, fresh in upd.relabel.items():
            old = maps[t + 1][inst]
            for later in maps[t + 1:]:
                for k, v in later.items():
                    if v == old:
                        later[k] = fresh
    return events, maps
