import numpy as np
import pytest

from rodtrack.model import FrameObservations, InstanceObservation, Sequence
from rodtrack.simulate import CellAgent, SimConfig, run_simulation, sample_rod_points


def rod(center, axis, length, frame=0, iid=1, radius=1.0, n=400, seed=0):
    """Instance sampled from a spherocylinder."""
    agent = CellAgent(np.asarray(center, float), np.asarray(axis, float), length, radius, iid)
    pts = sample_rod_points(agent, n, np.random.default_rng(seed))
    return InstanceObservation.from_points(frame, iid, pts)


def point_cell(frame, iid, xyz, volume=10.0):
    """Feature-only instance: a unit box around ``xyz``."""
    xyz = np.asarray(xyz, float)
    return InstanceObservation(frame, iid, xyz, xyz - 0.5, [1.0, 1.0, 1.0], volume)


def frames_of(*layouts):
    """Sequence from per-frame dicts {id: xyz} of feature-only cells."""
    return Sequence([FrameObservations.from_list(t, [point_cell(t, i, p) for i, p in lay.items()])
                     for t, lay in enumerate(layouts)])


# one seed that divides exactly once, at frame 3
ONE_DIVISION = dict(seed_count=1, frames=8, seed_length=22.0, division_length=24.0,
                    division_jitter=False, rng_seed=11)


@pytest.fixture(scope="session")
def one_division_run():
    return run_simulation(SimConfig(**ONE_DIVISION))


@pytest.fixture(scope="session")
def colony_run():
    return run_simulation(SimConfig(seed_count=3, frames=30, rng_seed=5))
