"""Online frame-by-frame tracking: candidates, scores, matching, ids, divisions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .division import (DEFAULT_BAND, DEFAULT_NEIGHBORHOOD_SCALE,
                       detect_divisions_frame)
from .features import Projection, feature_length, generate_candidates, instance_feature
from .matching import AssignmentProblem, MatchResult, match_conflict_sweep
from .model import DivisionEvent, FrameObservations, Sequence, Track
from .scorer import DistanceScorer, NeuralScorer, ScorerError, ScorerModel, score


@dataclass
class TrackerConfig:
    r: int = 2
    n_candidates: int = 4
    projection: Projection = Projection.CONSTANT_POSITION
    tau_min: float = 0.0
    division_band: tuple[float, float] = DEFAULT_BAND
    neighborhood_scale: float = DEFAULT_NEIGHBORHOOD_SCALE
    detect_divisions: bool = True

    def __post_init__(self):
        self.projection = Projection(self.projection)
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not 0.0 <= self.tau_min < 1.0:
            raise ValueError("tau_min must lie in [0, 1)")


@dataclass
class TrackingResult:
    tracks: list[Track]
    id_maps: list[dict[int, int]]       # per frame: instance id -> track id
    events: list[DivisionEvent]
    matches: list[MatchResult] = field(default_factory=list)

    def track_by_id(self) -> dict[int, Track]:
        return {tr.track_id: tr for tr in self.tracks}


def assign_ids(match: MatchResult, prev_ids: Mapping[int, int],
               next_id: int) -> tuple[dict[int, int], int]:
    """Matched targets inherit their source's track; the rest get fresh ids in instance order."""
    ids = {t: prev_ids[s] for s, t in match.matched_pairs}
    for t in sorted(match.unmatched_targets):
        ids[t] = next_id
        next_id += 1
    return dict(sorted(ids.items())), next_id


def median_nn_spacing(frame: FrameObservations) -> float:
    """Median distance from each instance to its nearest neighbour (1.0 if undefined)."""
    xyz = frame.centroids()
    if len(xyz) < 2:
        return 1.0
    d = np.linalg.norm(xyz[:, None, :] - xyz[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    spacing = float(np.median(d.min(axis=1)))
    return spacing if spacing > 0 else 1.0


def check_model(model: ScorerModel, cfg: TrackerConfig) -> None:
    if isinstance(model, NeuralScorer) and model.input_dim != feature_length(cfg.r):
        raise ScorerError(
            f"model dimension mismatch: tracker with r={cfg.r} needs "
            f"{feature_length(cfg.r)} inputs, model has {model.input_dim}")


def track_sequence(seq: Sequence, model: ScorerModel,
                   cfg: TrackerConfig | None = None) -> TrackingResult:
    cfg = cfg or TrackerConfig()
    check_model(model, cfg)
    if len(seq) == 0:
        return TrackingResult([], [], [])

    next_id = 1
    first = {}
    for iid in seq[0].ids:
        first[iid] = next_id
        next_id += 1
    id_maps: list[dict[int, int]] = [first]
    # per track: recent features (oldest first) and last frame-to-frame displacement
    history: dict[int, list[np.ndarray]] = {tid: [instance_feature(seq[0][i])]
                                            for i, tid in first.items()}
    motion: dict[int, np.ndarray] = {}
    parents: dict[int, int] = {}
    events: list[DivisionEvent] = []
    matches: list[MatchResult] = []
    consumed: set[int] = set()

    for t in range(len(seq) - 1):
        frame_t, frame_t1 = seq[t], seq[t + 1]
        ids_t = id_maps[t]
        hist = {i: history[ids_t[i]] for i in frame_t.ids}
        disp = {i: motion[ids_t[i]] for i in frame_t.ids if ids_t[i] in motion}
        cands = generate_candidates(frame_t, frame_t1, cfg.n_candidates, cfg.projection,
                                    disp, hist, cfg.r)
        scale = median_nn_spacing(frame_t) if isinstance(model, DistanceScorer) else None
        scored = [c for c in score(model, cands, scale) if c.score >= cfg.tau_min]
        problem = AssignmentProblem.from_candidates(
            ((c.source_id, c.target_id, c.score) for c in scored),
            sources=frame_t.ids, targets=frame_t1.ids)
        match = match_conflict_sweep(problem)
        matches.append(match)
        ids_t1, next_id = assign_ids(match, ids_t, next_id)

        if cfg.detect_divisions:
            upd = detect_divisions_frame(frame_t, frame_t1, match, ids_t, ids_t1, next_id,
                                         consumed, cfg.division_band, cfg.neighborhood_scale)
            next_id = upd.next_id
            ids_t1.update(upd.relabel)
            for ev in upd.events:
                parents[ev.daughter_a] = ev.parent_track
                parents[ev.daughter_b] = ev.parent_track
            events.extend(upd.events)
        id_maps.append(ids_t1)

        continuing = set(ids_t.values())
        for iid, tid in ids_t1.items():
            feat = instance_feature(frame_t1[iid])
            if tid in continuing and tid in history:
                prev_xyz = history[tid][-1][:3]
                motion[tid] = feat[:3] - prev_xyz
                history[tid] = (history[tid] + [feat])[-(cfg.r + 1):]
            else:
                history[tid] = [feat]
        for tid in continuing - set(ids_t1.values()):
            history.pop(tid, None)
            motion.pop(tid, None)

    return TrackingResult(build_tracks(seq, id_maps, parents), id_maps, events, matches)


def build_tracks(seq: Sequence, id_maps: list[Mapping[int, int]],
                 parents: Mapping[int, int]) -> list[Track]:
    spans: dict[int, list[tuple[int, np.ndarray]]] = {}
    for t, ids in enumerate(id_maps):
        for iid, tid in ids.items():
            spans.setdefault(tid, []).append((t, seq[t][iid].centroid))
    tracks = []
    for tid in sorted(spans):
        entries = sorted(spans[tid], key=lambda e: e[0])
        tracks.append(Track(tid, entries[0][0], entries[-1][0],
                            np.stack([c for _, c in entries]), parents.get(tid, 0)))
    return tracks
