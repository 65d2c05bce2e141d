"""Text formats for sequences, tracks, events, label maps and run configs.

Feature table (``features.csv``)::

    t,id,cx,cy,cz,bx,by,bz,ex,ey,ez,vol
    0,1,225.31,224.978,76.1048,219.554,220.102,72.9949,11.6452,9.79384,6.17394,283

Reals use 6 significant digits (``%.6g``). Point clouds are one file per
frame, ``frame_0000.csv`` etc., header ``id,x,y,z``. Track files hold one
``L B E P`` line per track (label, first frame, last frame, parent label or
0), ascending by label, frames 0-based. Event files hold
``parent childA childB frame`` lines. Label maps hold ``t id label`` lines
tying each instance to the track it was assigned. Configs are flat
``key = value`` lines with ``#`` comments.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Sequence as Seq

import numpy as np

from .model import (DivisionEvent, FrameObservations, GroundTruthLineage,
                    InstanceObservation, Sequence, Track)

FEATURE_HEADER = "t,id,cx,cy,cz,bx,by,bz,ex,ey,ez,vol"
POINTS_HEADER = "id,x,y,z"


class FormatError(ValueError):
    """Malformed input file; message carries the path and line number."""


def _g(v: float) -> str:
    return f"{v:.6g}"


def _fail(path, lineno: int, msg: str):
    raise FormatError(f"{path}:{lineno}: {msg}")


# --- feature tables and point clouds ---------------------------------------

def format_features(seq: Sequence) -> str:
    lines = [FEATURE_HEADER]
    for frame in seq.frames:
        for iid, obs in frame.instances.items():
            vals = [*obs.centroid, *obs.bbox_min, *obs.bbox_extent, obs.volume]
            lines.append(f"{frame.frame_index},{iid}," + ",".join(_g(v) for v in vals))
    return "\n".join(lines) + "\n"


def point_file_name(t: int) -> str:
    return f"frame_{t:04d}.csv"


def format_points(frame: FrameObservations) -> str:
    lines = [POINTS_HEADER]
    for iid, obs in frame.instances.items():
        for p in obs.points:
            lines.append(f"{iid},{_g(p[0])},{_g(p[1])},{_g(p[2])}")
    return "\n".join(lines) + "\n"


def write_sequence(seq: Sequence, features_path: str | Path,
                   points_dir: str | Path | None = None) -> None:
    Path(features_path).write_text(format_features(seq), encoding="utf-8")
    if points_dir is not None:
        pdir = Path(points_dir)
        pdir.mkdir(parents=True, exist_ok=True)
        for frame in seq.frames:
            (pdir / point_file_name(frame.frame_index)).write_text(
                format_points(frame), encoding="utf-8")


def _read_points(path: Path) -> dict[int, np.ndarray]:
    rows: dict[int, list[list[float]]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != POINTS_HEADER:
            _fail(path, 1, f"expected header {POINTS_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                _fail(path, lineno, "expected 4 comma-separated fields")
            try:
                rows.setdefault(int(parts[0]), []).append([float(v) for v in parts[1:]])
            except ValueError as exc:
                _fail(path, lineno, str(exc))
    return {k: np.array(v) for k, v in rows.items()}


def read_sequence(features_path: str | Path, points_dir: str | Path | None = None,
                  frame_interval: float = 10.0) -> Sequence:
    """Load a feature table, attaching point clouds when ``points_dir`` is given."""
    path = Path(features_path)
    per_frame: dict[int, list[tuple]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != FEATURE_HEADER:
            _fail(path, 1, f"expected header {FEATURE_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 12:
                _fail(path, lineno, f"expected 12 fields, got {len(parts)}")
            try:
                t, iid = int(parts[0]), int(parts[1])
                vals = [float(v) for v in parts[2:]]
            except ValueError as exc:
                _fail(path, lineno, str(exc))
            if t < 0 or iid < 1:
                _fail(path, lineno, "frame must be >= 0 and id >= 1")
            per_frame.setdefault(t, []).append((lineno, iid, vals))
    n_frames = max(per_frame) + 1 if per_frame else 0
    frames = []
    for t in range(n_frames):
        pts = {}
        if points_dir is not None:
            ppath = Path(points_dir) / point_file_name(t)
            if ppath.exists():
                pts = _read_points(ppath)
        seen: dict[int, InstanceObservation] = {}
        for lineno, iid, v in per_frame.get(t, []):
            if iid in seen:
                _fail(path, lineno, f"duplicate id {iid} in frame {t}")
            seen[iid] = InstanceObservation(t, iid, v[0:3], v[3:6], v[6:9], v[9],
                                            pts.get(iid, np.empty((0, 3))))
        frames.append(FrameObservations(t, seen))
    return Sequence(frames, frame_interval)


# --- tracks, events, label maps --------------------------------------------

def format_tracks(tracks: Iterable[Track]) -> str:
    return "".join(f"{tr.track_id} {tr.t_init} {tr.t_fin} {tr.parent_id}\n"
                   for tr in sorted(tracks, key=lambda tr: tr.track_id))


def write_tracks(tracks: Iterable[Track], path: str | Path) -> None:
    Path(path).write_text(format_tracks(tracks), encoding="utf-8")


def _int_rows(path: str | Path, width: int, what: str) -> list[tuple[int, list[int]]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != width:
                _fail(path, lineno, f"malformed {what} line: expected {width} integers")
            try:
                rows.append((lineno, [int(p) for p in parts]))
            except ValueError:
                _fail(path, lineno, f"malformed {what} line: non-integer field")
    return rows


def read_track_table(path: str | Path) -> list[tuple[int, int, int, int]]:
    """Raw ``(L, B, E, P)`` rows, checked for shape and ordering only."""
    out = []
    last = 0
    for lineno, (label, begin, end, parent) in _int_rows(path, 4, "track"):
        if label < 1 or begin < 0 or end < begin or parent < 0 or parent == label:
            _fail(path, lineno, "invalid track line")
        if label <= last:
            _fail(path, lineno, "labels must be strictly ascending")
        last = label
        out.append((label, begin, end, parent))
    return out


def read_tracks(path: str | Path, seq: Sequence | None = None,
                label_map: Seq[Mapping[int, int]] | None = None) -> list[Track]:
    """Tracks from a track file; centroids come from ``seq`` when given (else zeros).

    ``label_map[t][instance_id]`` names the track of each instance; without it
    instance ids are the track labels.
    """
    table = read_track_table(path)
    where: dict[tuple[int, int], np.ndarray] = {}
    if seq is not None:
        for frame in seq.frames:
            for iid, obs in frame.instances.items():
                label = iid if label_map is None else label_map[frame.frame_index][iid]
                where[(frame.frame_index, label)] = obs.centroid
    tracks = []
    for label, begin, end, parent in table:
        if seq is not None:
            try:
                cents = np.stack([where[(t, label)] for t in range(begin, end + 1)])
            except KeyError as exc:
                raise FormatError(f"{path}: track {label} has no instance at frame "
                                  f"{exc.args[0][0]}") from None
        else:
            cents = np.zeros((end - begin + 1, 3))
        tracks.append(Track(label, begin, end, cents, parent))
    return tracks


def format_events(events: Iterable[DivisionEvent]) -> str:
    return "".join(f"{e.parent_track} {e.daughter_a} {e.daughter_b} {e.frame_of_daughters}\n"
                   for e in events)


def write_events(events: Iterable[DivisionEvent], path: str | Path) -> None:
    Path(path).write_text(format_events(events), encoding="utf-8")


def read_events(path: str | Path) -> list[DivisionEvent]:
    return [DivisionEvent(*vals) for _, vals in _int_rows(path, 4, "event")]


def format_label_map(id_maps: Seq[Mapping[int, int]]) -> str:
    return "".join(f"{t} {iid} {label}\n"
                   for t, ids in enumerate(id_maps) for iid, label in sorted(ids.items()))


def write_label_map(id_maps: Seq[Mapping[int, int]], path: str | Path) -> None:
    Path(path).write_text(format_label_map(id_maps), encoding="utf-8")


def read_label_map(path: str | Path) -> list[dict[int, int]]:
    maps: dict[int, dict[int, int]] = {}
    for lineno, (t, iid, label) in _int_rows(path, 3, "label"):
        frame = maps.setdefault(t, {})
        if iid in frame:
            _fail(path, lineno, f"instance {iid} labelled twice in frame {t}")
        frame[iid] = label
    n = max(maps) + 1 if maps else 0
    return [maps.get(t, {}) for t in range(n)]


def read_lineage(tracks_path: str | Path, seq: Sequence) -> GroundTruthLineage:
    """Reference lineage from a track file whose labels are the instance ids of ``seq``.

    Daughters of each parent are listed smallest label first; that daughter
    is the one training labels treat as continuing the parent.
    """
    from .metrics import events_from_tracks
    tracks = read_tracks(tracks_path, seq)
    return GroundTruthLineage(tracks, events_from_tracks(tracks))


# --- flat configs -----------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                _fail(path, lineno, "expected 'key = value'")
            key, value = (s.strip() for s in text.split("=", 1))
            if not key:
                _fail(path, lineno, "empty key")
            if key in out:
                _fail(path, lineno, f"duplicate key {key!r}")
            out[key] = value
    return out
