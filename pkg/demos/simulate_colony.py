"""Grow a small colony and print how its population and lineage develop."""

import numpy as np

from rodtrack import SimConfig, run_simulation

run = run_simulation(SimConfig(seed_count=2, frames=30, rng_seed=3))
seq, gt = run.sequence, run.lineage

for t in range(0, len(seq), 5):
    frame = seq[t]
    vols = np.array([frame[i].volume for i in frame.ids])
    print(f"frame {t:2d}: {len(frame.ids):3d} cells, mean volume {vols.mean():7.1f}")

print(f"{len(gt.tracks)} tracks, {len(gt.division_events)} divisions")
for ev in gt.division_events[:5]:
    print(f"  track {ev.parent_track} -> {ev.daughter_a}, {ev.daughter_b} at frame {ev.frame_of_daughters}")
