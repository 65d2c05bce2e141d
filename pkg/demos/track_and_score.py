"""Track a simulated colony with the distance baseline and a trained network, then score both."""

from rodtrack import (DistanceScorer, SimConfig, TrackerConfig, TrainConfig, TrainingSet,
                      evaluate_result, make_training_pairs, simulate, track_sequence, train)

train_runs = [simulate(SimConfig(seed_count=1, frames=40, rng_seed=s)) for s in range(100, 110)]
data = TrainingSet.concatenate([make_training_pairs(seq, gt, r=2) for seq, gt in train_runs])
model, _ = train(data, TrainConfig(epochs=60))

seq, gt = simulate(SimConfig(seed_count=1, frames=40, rng_seed=0))
for name, scorer in (("distance baseline", DistanceScorer()), ("trained network", model)):
    rep = evaluate_result(track_sequence(seq, scorer, TrackerConfig(r=2)), gt)
    print(f"{name:18s} TRA {rep.tra:.4f}  division F1 {rep.division.f1:.4f}")
