"""Find the sibling of a freshly split rod among lateral neighbours."""

import numpy as np

from rodtrack import FrameObservations, InstanceObservation, principal_frame, projection_value
from rodtrack.division import find_sibling

rng = np.random.default_rng(0)


def rod(center, axis, length, iid, n=300):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    s = rng.uniform(-length / 2, length / 2, n)
    pts = center + s[:, None] * axis + rng.normal(scale=0.4, size=(n, 3))
    return InstanceObservation.from_points(0, iid, pts)


x = rod(np.zeros(3), (1, 0, 0), 10, iid=1)
frame = FrameObservations.from_list(0, [
    x,
    rod((11, 0.3, 0), (1, 0.05, 0), 10, iid=2),   # the other half, along the axis
    rod((0, 9, 0), (0.2, 1, 0), 10, iid=3),       # side neighbour
    rod((1, -8, 3), (1, 0, 1), 10, iid=4),        # side neighbour
])
pf = principal_frame(x.points)
for iid in frame.ids[1:]:
    print(f"neighbour {iid}: projection value {projection_value(pf, frame[iid].points):.3f}")
print(f"chosen sibling: {find_sibling(x, frame)}")
