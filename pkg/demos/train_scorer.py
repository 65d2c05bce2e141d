"""Train the association network on simulated colonies and watch the loss fall."""

from rodtrack import SimConfig, TrainConfig, TrainingSet, make_training_pairs, simulate, train

runs = [simulate(SimConfig(seed_count=2, frames=30, rng_seed=s)) for s in range(4)]
data = TrainingSet.concatenate([make_training_pairs(seq, gt, r=2) for seq, gt in runs])
print(f"{len(data.labels)} candidate pairs, {int(data.labels.sum())} positive, "
      f"{data.features.shape[1]} features each")

model, history = train(data, TrainConfig(epochs=20))
for epoch in (0, 4, 9, 19):
    print(f"epoch {epoch + 1:2d}: weighted loss {history[epoch]:.4f}")
