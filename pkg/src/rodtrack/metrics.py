"""Lineage-graph tracking accuracy (AOGM / TRA) and Division-F1.

Graphs are compared under a fixed vertex correspondence (both built over the
same instances), so only edge edits are counted: ED adds a missing edge, EA
deletes a redundant one, EC retags an edge whose kind (track link vs parent
link) is wrong.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence as Seq

from .model import DivisionEvent, GroundTruthLineage, Track

TRACK_LINK = "track"
PARENT_LINK = "parent"

Vertex = tuple[int, int]        # (frame, label)


class MetricError(ValueError):
    pass


@dataclass
class LineageGraph:
    vertices: set[Vertex] = field(default_factory=set)
    edges: dict[tuple[Vertex, Vertex], str] = field(default_factory=dict)

    def track_links(self) -> int:
        return sum(1 for tag in self.edges.values() if tag == TRACK_LINK)

    def parent_links(self) -> int:
        return sum(1 for tag in self.edges.values() if tag == PARENT_LINK)


@dataclass
class AogmBreakdown:
    ED: int
    EA: int
    EC: int
    w_ED: float = 1.0
    w_EA: float = 1.0
    w_EC: float = 1.0

    @property
    def aogm(self) -> float:
        return self.w_ED * self.ED + self.w_EA * self.EA + self.w_EC * self.EC


def build_graph(tracks: Iterable[Track] | GroundTruthLineage) -> LineageGraph:
    """Vertices per (frame, track) occupancy; track links along tracks, parent links at splits.

    Accepts a list of tracks, a ``TrackingResult`` or a ``GroundTruthLineage``.
    """
    if hasattr(tracks, "tracks"):
        tracks = tracks.tracks
    tracks = list(tracks)
    by_id = {tr.track_id: tr for tr in tracks}
    g = LineageGraph()
    for tr in tracks:
        for t in tr.frames:
            g.vertices.add((t, tr.track_id))
        for t in range(tr.t_init, tr.t_fin):
            g.edges[((t, tr.track_id), (t + 1, tr.track_id))] = TRACK_LINK
    for tr in tracks:
        if tr.parent_id:
            parent = by_id.get(tr.parent_id)
            if parent is None:
                raise MetricError(f"track {tr.track_id} names missing parent {tr.parent_id}")
            if parent.t_fin + 1 != tr.t_init:
                raise MetricError(
                    f"track {tr.track_id} starts at {tr.t_init} but parent "
                    f"{parent.track_id} ends at {parent.t_fin}")
            g.edges[((parent.t_fin, parent.track_id), (tr.t_init, tr.track_id))] = PARENT_LINK
    return g


def correspondence_from_id_maps(computed_ids: Seq[Mapping[int, int]],
                                reference_ids: Seq[Mapping[int, int]] | None = None
                                ) -> dict[Vertex, Vertex]:
    """Map computed (frame, track) vertices to reference ones through shared instance ids.

    ``reference_ids=None`` means instance ids are the reference labels.
    """
    corr: dict[Vertex, Vertex] = {}
    for t, ids in enumerate(computed_ids):
        for iid, tid in ids.items():
            ref = iid if reference_ids is None else reference_ids[t][iid]
            corr[(t, tid)] = (t, ref)
    return corr


def aogm(computed: LineageGraph, reference: LineageGraph,
         correspondence: Mapping[Vertex, Vertex] | None = None,
         weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> AogmBreakdown:
    """Edge edit counts turning ``computed`` into ``reference``.

    ``correspondence`` maps computed vertices onto reference vertices and must
    be a bijection between the two vertex sets (identity when omitted).
    """
    if correspondence is None:
        correspondence = {v: v for v in computed.vertices}
    mapped = {correspondence[v] for v in computed.vertices if v in correspondence}
    if (len(mapped) != len(computed.vertices)
            or len(set(correspondence[v] for v in computed.vertices)) != len(computed.vertices)
            or mapped != reference.vertices):
        raise MetricError("vertex correspondence is not a bijection between the graphs")
    moved = {(correspondence[u], correspondence[v]): tag
             for (u, v), tag in computed.edges.items()}
    ref = reference.edges
    ec = sum(1 for e, tag in moved.items() if e in ref and ref[e] != tag)
    ed = sum(1 for e in ref if e not in moved)
    ea = sum(1 for e in moved if e not in ref)
    return AogmBreakdown(ed, ea, ec, *weights)


def aogm_zero(reference: LineageGraph, w_ed: float = 1.0) -> float:
    return w_ed * len(reference.edges)


def tra(computed: LineageGraph, reference: LineageGraph,
        correspondence: Mapping[Vertex, Vertex] | None = None,
        weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> float:
    """1 - min(AOGM, AOGM_0) / AOGM_0, AOGM_0 being the cost of adding every reference edge."""
    if not reference.edges:
        raise MetricError("TRA is undefined for a reference graph without edges")
    cost = aogm(computed, reference, correspondence, weights).aogm
    base = aogm_zero(reference, weights[0])
    return 1.0 - min(cost, base) / base


@dataclass
class DivisionScore:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        if self.tp == 0:
            return 0.0
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r)


def division_f1(detected: Iterable[DivisionEvent], gt: Iterable[DivisionEvent],
                tol: int = 1, parent_label: Mapping[int, int] | None = None,
                match_identity: bool = True) -> DivisionScore:
    """Match detected to reference divisions one-to-one within ``tol`` frames.

    With ``match_identity`` a pair must also agree on the parent:
    ``parent_label`` translates a detected parent track into the reference
    label space (identity when omitted). Pairs are taken greedily by
    increasing frame distance, then earlier reference frame.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    det = sorted(DivisionEvent(*e) for e in detected)
    ref = sorted(DivisionEvent(*e) for e in gt)
    pairs = []
    for i, d in enumerate(det):
        parent = parent_label.get(d.parent_track, None) if parent_label is not None else d.parent_track
        for j, g in enumerate(ref):
            gap = abs(d.frame_of_daughters - g.frame_of_daughters)
            if gap > tol:
                continue
            if match_identity and parent != g.parent_track:
                continue
            pairs.append((gap, g.frame_of_daughters, j, i))
    pairs.sort()
    used_d: set[int] = set()
    used_g: set[int] = set()
    for _, _, j, i in pairs:
        if i in used_d or j in used_g:
            continue
        used_d.add(i)
        used_g.add(j)
    tp = len(used_d)
    return DivisionScore(tp, len(det) - tp, len(ref) - tp)


def events_from_tracks(tracks: Iterable[Track]) -> list[DivisionEvent]:
    """Recover divisions from parent pointers: each parent with its daughters, smallest ids first."""
    children: dict[int, list[Track]] = {}
    for tr in tracks:
        if tr.parent_id:
            children.setdefault(tr.parent_id, []).append(tr)
    out = []
    for parent, kids in sorted(children.items()):
        kids = sorted(kids, key=lambda tr: tr.track_id)
        if len(kids) < 2:
            raise MetricError(f"parent {parent} has a single daughter")
        for a, b in zip(kids[0::2], kids[1::2]):
            out.append(DivisionEvent(parent, a.track_id, b.track_id, a.t_init))
    return out


def parent_label_map(computed_tracks: Iterable[Track],
                     correspondence: Mapping[Vertex, Vertex]) -> dict[int, int]:
    """Reference label of each computed track's last vertex."""
    return {tr.track_id: correspondence[(tr.t_fin, tr.track_id)][1] for tr in computed_tracks
            if (tr.t_fin, tr.track_id) in correspondence}


@dataclass
class EvaluationReport:
    breakdown: AogmBreakdown
    aogm0: float
    tra: float
    division: DivisionScore

    def as_dict(self) -> dict[str, float]:
        return {"TRA": self.tra, "ED": self.breakdown.ED, "EA": self.breakdown.EA,
                "EC": self.breakdown.EC, "AOGM": self.breakdown.aogm, "AOGM_0": self.aogm0,
                "precision": self.division.precision, "recall": self.division.recall,
                "f1": self.division.f1}

    def render(self) -> str:
        b, d = self.breakdown, self.division
        lines = [
            "Tracking evaluation",
            f"  TRA {self.tra:.4f}  (AOGM {b.aogm:g} of AOGM_0 {self.aogm0:g}; "
            f"missing {b.ED}, redundant {b.EA}, retagged {b.EC})",
            f"  Division-F1 {d.f1:.4f}  (TP {d.tp}, FP {d.fp}, FN {d.fn})",
            "",
        ]
        lines += [f"{k}={_fmt(v)}" for k, v in self.as_dict().items()]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, int) or float(v).is_integer():
        return str(int(v))
    return f"{v:.6f}"


def evaluate(computed_tracks: Seq[Track], reference_tracks: Seq[Track],
             correspondence: Mapping[Vertex, Vertex] | None = None,
             computed_events: Seq[DivisionEvent] | None = None,
             reference_events: Seq[DivisionEvent] | None = None,
             tol: int = 1, match_identity: bool = True,
             weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> EvaluationReport:
    g_c = build_graph(computed_tracks)
    g_r = build_graph(reference_tracks)
    if correspondence is None:
        correspondence = {v: v for v in g_c.vertices}
    breakdown = aogm(g_c, g_r, correspondence, weights)
    score_tra = tra(g_c, g_r, correspondence, weights)
    det = computed_events if computed_events is not None else events_from_tracks(computed_tracks)
    ref = reference_events if reference_events is not None else events_from_tracks(reference_tracks)
    div = division_f1(det, ref, tol, parent_label_map(computed_tracks, correspondence),
                      match_identity)
    return EvaluationReport(breakdown, aogm_zero(g_r, weights[0]), score_tra, div)


def evaluate_result(result, lineage: GroundTruthLineage, tol: int = 1) -> EvaluationReport:
    """Score a ``TrackingResult`` against a reference lineage over the same instances."""
    ref_ids = lineage.id_maps
    corr = correspondence_from_id_maps(result.id_maps, ref_ids)
    return evaluate(result.tracks, lineage.tracks, corr, result.events,
                    lineage.division_events, tol)
