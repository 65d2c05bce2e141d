"""Synthetic colonies of growing, dividing rod-shaped cells.

Cells are spherocylinders (a segment of half-length ``max(length/2 - radius, 0)``
swept by a sphere of ``radius``), so ``length`` is the tip-to-tip length and
two daughters of half the length tile the parent exactly. Length grows
exponentially; a cell splits once it reaches its division threshold, and
overlaps are relaxed by pairwise push-apart. Each frame is observed as a
uniform point sample of every cell, with point count proportional to volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (DivisionEvent, FrameObservations, GroundTruthLineage,
                    InstanceObservation, Sequence, Track)

MAX_POPULATION = 10_000
RELAX_ITERATIONS = 50
RELAX_FACTOR = 0.9


@dataclass
class CellAgent:
    centroid: np.ndarray
    orientation: np.ndarray
    length: float
    radius: float
    track_id: int
    parent_id: int = 0
    # multiplicative factor on the division length, fixed at birth
    threshold_scale: float = 1.0

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=float).copy()
        o = np.asarray(self.orientation, dtype=float)
        self.orientation = o / np.linalg.norm(o)
        if self.length < self.radius:
            raise ValueError("agent length must be at least its radius")

    @property
    def half_segment(self) -> float:
        return max(self.length / 2.0 - self.radius, 0.0)

    @property
    def geometric_volume(self) -> float:
        return spherocylinder_volume(self.length, self.radius)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        h = self.half_segment * self.orientation
        return self.centroid - h, self.centroid + h

    def copy(self) -> "CellAgent":
        return replace(self, centroid=self.centroid.copy(),
                       orientation=self.orientation.copy())


def spherocylinder_volume(length: float, radius: float) -> float:
    seg = 2.0 * max(length / 2.0 - radius, 0.0)
    return math.pi * radius ** 2 * seg + 4.0 / 3.0 * math.pi * radius ** 3


@dataclass
class SimConfig:
    seed_count: int = 1
    frames: int = 40
    frame_interval_s: float = 10.0
    growth_rate: float = 0.007          # 1/s; ~10-frame doubling at 10 s/frame
    division_length: float = 24.0
    division_noise_deg: float = 5.0
    domain_extent: tuple[float, float, float] = (450.0, 450.0, 150.0)
    points_per_cell: int = 200          # points for a cell of half division length
    rng_seed: int = 0
    radius: float = 3.0
    # seeds start uniformly in [0.5, 0.95) x division_length unless fixed here
    seed_length: float | None = None
    division_jitter: bool = True
    # seeds are scattered in this fraction of the domain around its centre
    seed_spread: float = 0.1

    def validate(self) -> None:
        if self.seed_count < 1:
            raise ValueError("seed_count must be >= 1")
        if self.frames < 2:
            raise ValueError("frames >= 2 required")
        if not self.frame_interval_s > 0:
            raise ValueError("frame_interval_s must be positive")
        if not self.growth_rate > 0:
            raise ValueError("growth_rate must be positive")
        if self.division_noise_deg < 0:
            raise ValueError("division_noise_deg must be >= 0")
        if self.points_per_cell < 30:
            raise ValueError("points_per_cell must be >= 30")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if len(self.domain_extent) != 3 or min(self.domain_extent) <= 0:
            raise ValueError("domain_extent must be three positive numbers")
        if self.division_length / 2.0 < self.radius:
            raise ValueError("division_length must be at least twice the radius")
        if self.seed_length is not None:
            if not self.radius <= self.seed_length < self.division_length:
                raise ValueError(
                    "seed_length must lie in [radius, division_length)")
        expected = self.seed_count * math.exp(
            self.growth_rate * self.frame_interval_s * (self.frames - 1))
        if expected > MAX_POPULATION:
            raise ValueError(
                f"expected final population {expected:.0f} exceeds {MAX_POPULATION}")

    @property
    def point_density(self) -> float:
        return self.points_per_cell / spherocylinder_volume(
            self.division_length / 2.0, self.radius)


@dataclass
class SimulationRun:
    config: SimConfig
    agents: list[list[CellAgent]]       # snapshot per frame
    sequence: Sequence
    lineage: GroundTruthLineage
    events: list[DivisionEvent] = field(default_factory=list)


def _orthonormal_basis(axis: np.ndarray) -> np.ndarray:
    """Rows: axis, u, w forming a right-handed orthonormal basis."""
    a = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(a, helper)
    u /= np.linalg.norm(u)
    w = np.cross(a, u)
    return np.stack([a, u, w])


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    while np.linalg.norm(v) < 1e-12:
        v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _perturb(direction: np.ndarray, max_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Tilt ``direction`` by a uniform angle in [0, max_deg] about a random perpendicular."""
    angle = math.radians(rng.uniform(0.0, max_deg)) if max_deg > 0 else 0.0
    _, u, w = _orthonormal_basis(direction)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    perp = math.cos(phi) * u + math.sin(phi) * w
    out = math.cos(angle) * direction + math.sin(angle) * perp
    return out / np.linalg.norm(out)


def sample_rod_points(agent: CellAgent, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of ``n`` points inside the agent's spherocylinder."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h, r = agent.half_segment, agent.radius
    box = np.array([h + r, r, r])
    kept: list[np.ndarray] = []
    have = 0
    while have < n:
        batch = max(2 * (n - have), 64)
        local = rng.uniform(-box, box, size=(batch, 3))
        along = np.clip(local[:, 0], -h, h)
        d2 = (local[:, 0] - along) ** 2 + local[:, 1] ** 2 + local[:, 2] ** 2
        inside = local[d2 <= r * r]
        kept.append(inside)
        have += len(inside)
    local = np.concatenate(kept)[:n]
    return agent.centroid + local @ _orthonormal_basis(agent.orientation)


def _segment_closest(p1, q1, p2, q2):
    """Vectorised closest points between segment batches [p1,q1] and [p2,q2].

    Returns the closest points on each segment, shape (k, 3) each.
    """
    eps = 1e-12
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b

    s = np.where(denom > eps, np.clip((b * f - c * e) / np.where(denom > eps, denom, 1.0), 0, 1), 0.0)
    s = np.where(a <= eps, 0.0, s)
    t = np.where(e > eps, (b * s + f) / np.where(e > eps, e, 1.0), 0.0)

    # t outside [0,1]: clamp and recompute s
    t_lo = t < 0
    t_hi = t > 1
    t = np.clip(t, 0, 1)
    s_re = np.where(a > eps, np.clip((b * t - c) / np.where(a > eps, a, 1.0), 0, 1), 0.0)
    s = np.where(t_lo | t_hi, s_re, s)
    # degenerate first segment: s = 0, t from projection
    t = np.where(a <= eps, np.where(e > eps, np.clip(f / np.where(e > eps, e, 1.0), 0, 1), 0.0), t)
    # degenerate second segment: t = 0, s from projection
    s = np.where((e <= eps) & (a > eps), np.clip(-c / np.where(a > eps, a, 1.0), 0, 1), s)
    return p1 + d1 * s[:, None], p2 + d2 * t[:, None]


def _relax(agents: list[CellAgent], rng: np.random.Generator) -> None:
    """Push overlapping pairs apart until axes are at least 0.9 (r_i + r_j) apart."""
    n = len(agents)
    if n < 2:
        return
    radii = np.array([a.radius for a in agents])
    halves = np.array([a.half_segment for a in agents])
    orient = np.stack([a.orientation for a in agents])
    centers = np.stack([a.centroid for a in agents])
    iu, ju = np.triu_indices(n, k=1)
    contact = radii[iu] + radii[ju]
    reach = halves[iu] + halves[ju] + contact
    for _ in range(RELAX_ITERATIONS):
        cdist = np.linalg.norm(centers[iu] - centers[ju], axis=1)
        near = cdist < reach
        if not near.any():
            break
        i, j = iu[near], ju[near]
        ci, cj = centers[i], centers[j]
        hi = (halves[i])[:, None] * orient[i]
        hj = (halves[j])[:, None] * orient[j]
        pi, pj = _segment_closest(ci - hi, ci + hi, cj - hj, cj + hj)
        gap = pi - pj
        dist = np.linalg.norm(gap, axis=1)
        need = contact[near]
        if np.all(dist >= RELAX_FACTOR * need):
            break
        over = dist < need
        if not over.any():
            break
        i, j, gap, dist, need = i[over], j[over], gap[over], dist[over], need[over]
        direction = np.empty_like(gap)
        ok = dist > 1e-9
        direction[ok] = gap[ok] / dist[ok, None]
        # coincident closest points: fall back to centroid offset, then random
        for k in np.flatnonzero(~ok):
            v = centers[i[k]] - centers[j[k]]
            if np.linalg.norm(v) < 1e-9:
                v = _random_unit(rng)
            direction[k] = v / np.linalg.norm(v)
        push = 0.5 * (need - dist)[:, None] * direction
        shift = np.zeros_like(centers)
        np.add.at(shift, i, push)
        np.add.at(shift, j, -push)
        centers = centers + shift
    for agent, c in zip(agents, centers):
        agent.centroid = c


def min_axis_clearance(agents: list[CellAgent]) -> float:
    """Smallest ratio of axis distance to (r_i + r_j) over all pairs (inf for < 2 agents)."""
    n = len(agents)
    if n < 2:
        return math.inf
    iu, ju = np.triu_indices(n, k=1)
    ends = [a.endpoints() for a in agents]
    p = np.stack([e[0] for e in ends])
    q = np.stack([e[1] for e in ends])
    pi, pj = _segment_closest(p[iu], q[iu], p[ju], q[ju])
    radii = np.array([a.radius for a in agents])
    return float(np.min(np.linalg.norm(pi - pj, axis=1) / (radii[iu] + radii[ju])))


def _threshold_scale(config: SimConfig, rng: np.random.Generator) -> float:
    if not config.division_jitter:
        return 1.0
    shift = int(rng.integers(-1, 2))
    return math.exp(config.growth_rate * config.frame_interval_s * shift)


def _seed_agents(config: SimConfig, rng: np.random.Generator) -> list[CellAgent]:
    extent = np.asarray(config.domain_extent, dtype=float)
    agents = []
    for k in range(config.seed_count):
        center = extent / 2.0 + rng.uniform(-0.5, 0.5, size=3) * extent * config.seed_spread
        if config.seed_length is None:
            length = config.division_length * rng.uniform(0.5, 0.95)
        else:
            length = config.seed_length
        agents.append(CellAgent(center, _random_unit(rng), max(length, config.radius),
                                config.radius, track_id=k + 1,
                                threshold_scale=_threshold_scale(config, rng)))
    _relax(agents, rng)
    return agents


def _step(agents: list[CellAgent], config: SimConfig, rng: np.random.Generator,
          next_id: int, frame: int, events: list[DivisionEvent]) -> tuple[list[CellAgent], int]:
    grow = math.exp(config.growth_rate * config.frame_interval_s)
    out: list[CellAgent] = []
    for agent in agents:
        if agent.length >= config.division_length * agent.threshold_scale:
            quarter = agent.length / 4.0
            daughters = []
            for sign in (1.0, -1.0):
                d = CellAgent(agent.centroid + sign * quarter * agent.orientation,
                              _perturb(agent.orientation, config.division_noise_deg, rng),
                              agent.length / 2.0, agent.radius, track_id=next_id,
                              parent_id=agent.track_id,
                              threshold_scale=_threshold_scale(config, rng))
                next_id += 1
                daughters.append(d)
            events.append(DivisionEvent(agent.track_id, daughters[0].track_id,
                                        daughters[1].track_id, frame))
            out.extend(daughters)
        else:
            grown = agent.copy()
            grown.length = agent.length * grow
            out.append(grown)
    _relax(out, rng)
    return out, next_id


def _observe(agents: list[CellAgent], frame: int, config: SimConfig,
             rng: np.random.Generator) -> FrameObservations:
    density = config.point_density
    observations = []
    for agent in agents:
        n = max(1, int(round(density * agent.geometric_volume)))
        pts = sample_rod_points(agent, n, rng)
        observations.append(InstanceObservation.from_points(frame, agent.track_id, pts))
    return FrameObservations.from_list(frame, observations)


def run_simulation(config: SimConfig) -> SimulationRun:
    """Simulate and keep the per-frame agent states alongside the observations."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    agents = _seed_agents(config, rng)
    next_id = config.seed_count + 1
    events: list[DivisionEvent] = []
    history: list[list[CellAgent]] = []
    frames: list[FrameObservations] = []
    for t in range(config.frames):
        if t > 0:
            agents, next_id = _step(agents, config, rng, next_id, t, events)
        history.append([a.copy() for a in agents])
        frames.append(_observe(agents, t, config, rng))
    seq = Sequence(frames, config.frame_interval_s)
    lineage = lineage_from_sequence(seq, {a.track_id: a.parent_id
                                          for snap in history for a in snap}, events)
    return SimulationRun(config, history, seq, lineage, events)


def lineage_from_sequence(seq: Sequence, parents: dict[int, int],
                          events: list[DivisionEvent]) -> GroundTruthLineage:
    """Build reference tracks from a sequence whose instance ids are track labels."""
    spans: dict[int, list] = {}
    for frame in seq.frames:
        for iid, obs in frame.instances.items():
            spans.setdefault(iid, []).append((frame.frame_index, obs.centroid))
    tracks = []
    for label in sorted(spans):
        entries = spans[label]
        tracks.append(Track(label, entries[0][0], entries[-1][0],
                            np.stack([c for _, c in entries]), parents.get(label, 0)))
    return GroundTruthLineage(tracks, list(events))


def simulate(config: SimConfig) -> tuple[Sequence, GroundTruthLineage]:
    run = run_simulation(config)
    return run.sequence, run.lineage
