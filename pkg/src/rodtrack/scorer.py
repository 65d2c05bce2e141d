"""Association scores for candidate links.

Two scorers share one entry point, :func:`score`:

* :class:`DistanceScorer` maps the projected displacement ``d`` to
  ``1 / (1 + d / s)``.
* :class:`NeuralScorer` is a small fully connected network
  (input -> 64 -> 32 -> 1, tanh hidden layers, sigmoid output) over the
  z-scored spatiotemporal feature, trained with weighted binary cross-entropy.
  By default positions are first re-expressed relative to the source's
  centroid at frame t, which makes scores independent of where in the field
  of view a colony sits.

Model files are JSON; see :func:`save_model` for the layout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence as Seq

import numpy as np

from .features import (FEATURE_DIM, CandidateAssociation, Projection,
                       feature_length, feature_matrix, generate_candidates,
                       instance_feature)
from .model import GroundTruthLineage, Sequence

MODEL_FORMAT = "rodtrack-scorer"
MODEL_VERSION = 1


class ScorerError(ValueError):
    pass


@dataclass
class DistanceScorer:
    """Training-free baseline. ``scale=None`` means a per-frame scale is supplied at call time."""

    scale: float | None = None
    kind: str = field(default="distance_baseline", init=False)

    def predict_distances(self, distances: np.ndarray, scale: float | None = None) -> np.ndarray:
        s = self.scale if self.scale is not None else scale
        if s is None or not s > 0:
            raise ScorerError("distance baseline needs a positive scale")
        return 1.0 / (1.0 + np.asarray(distances, dtype=float) / s)


@dataclass(eq=False)
class NeuralScorer:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    relative: bool = True
    version: int = MODEL_VERSION
    kind: str = field(default="neural", init=False)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.std = np.asarray(self.std, dtype=float).reshape(-1)
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ScorerError("weights and biases must pair up")
        if self.weights[-1].shape[1] != 1:
            raise ScorerError("output layer must have a single unit")
        for w, w_next in zip(self.weights, self.weights[1:]):
            if w.shape[1] != w_next.shape[0]:
                raise ScorerError("layer shapes do not chain")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ScorerError("bias length does not match layer width")
        if self.mean.shape != (self.input_dim,) or self.std.shape != (self.input_dim,):
            raise ScorerError("normalisation vectors must match the input width")
        if np.any(self.std <= 0):
            raise ScorerError("standard deviations must be positive")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def r(self) -> int:
        return self.input_dim // FEATURE_DIM - 2

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "NeuralScorer":
        return NeuralScorer([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                            self.mean.copy(), self.std.copy(), self.relative, self.version)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Raw features to network input: optional anchoring, then z-scoring."""
        x = np.atleast_2d(x)
        if self.relative:
            x = anchor_positions(x)
        return (x - self.mean) / self.std

    def logits(self, z: np.ndarray) -> np.ndarray:
        """Network core on already-normalised input."""
        h = z
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
        return (h @ self.weights[-1] + self.biases[-1])[:, 0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ScorerError(
                f"feature length mismatch: model expects {self.input_dim}, got {x.shape[1]}")
        # row-by-row keeps batch and single-item results bit-identical
        return np.array([_sigmoid(self.logits(self.normalize(row[None, :]))[0]) for row in x])

    def __eq__(self, other):
        if not isinstance(other, NeuralScorer):
            return NotImplemented
        return (len(self.weights) == len(other.weights)
                and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters()))
                and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.std, other.std)
                and self.relative == other.relative)


ScorerModel = DistanceScorer | NeuralScorer


def anchor_positions(x: np.ndarray) -> np.ndarray:
    """Subtract the source's frame-t centroid from every centroid and bbox_min column.

    The frame-t slot is the second to last; extents are left alone.
    """
    x = np.array(x, dtype=float, ndmin=2)
    slots = x.shape[1] // FEATURE_DIM
    ref = x[:, (slots - 2) * FEATURE_DIM:(slots - 2) * FEATURE_DIM + 3].copy()
    for k in range(slots):
        base = k * FEATURE_DIM
        x[:, base:base + 3] -= ref
        x[:, base + 3:base + 6] -= ref
    return x


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softplus(z):
    return np.logaddexp(0.0, z)


def score(model: ScorerModel, candidates: Seq[CandidateAssociation],
          scale: float | None = None) -> list[CandidateAssociation]:
    """Return copies of ``candidates`` with ``score`` filled in."""
    if not candidates:
        return []
    if isinstance(model, DistanceScorer):
        values = model.predict_distances([c.distance for c in candidates], scale)
    else:
        feats = feature_matrix(candidates)
        values = model.predict(feats)
    return [replace(c, score=float(v)) for c, v in zip(candidates, values)]


# --- training -------------------------------------------------------------

@dataclass
class TrainingSet:
    features: np.ndarray
    labels: np.ndarray
    # (frame t, source_id, target_id) per row
    keys: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if len(self.features) != len(self.labels):
            raise ScorerError("features and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def concatenate(cls, parts: Seq["TrainingSet"]) -> "TrainingSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls(np.empty((0, 0)), np.empty(0))
        return cls(np.concatenate([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]),
                   [k for p in parts for k in p.keys])


@dataclass
class TrainConfig:
    hidden: tuple[int, ...] = (64, 32)
    learning_rate: float = 1e-3
    epochs: int = 60
    batch_size: int = 64
    rng_seed: int = 0
    # None: negatives per positive in the training set (= N_i - 1 with full candidate lists)
    pos_weight: float | None = None
    relative: bool = True


def init_model(input_dim: int, hidden: Seq[int] = (64, 32), rng_seed: int = 0,
               mean: np.ndarray | None = None, std: np.ndarray | None = None,
               relative: bool = True) -> NeuralScorer:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(rng_seed)
    sizes = [input_dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NeuralScorer(weights, biases,
                        np.zeros(input_dim) if mean is None else mean,
                        np.ones(input_dim) if std is None else std, relative)


def bce_loss(y_hat, y, weights=None) -> float:
    """Weighted sum of binary cross-entropy terms, -sum w [y log p + (1 - y) log(1 - p)]."""
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = np.where(y > 0, y * np.log(y_hat), 0.0)
        neg = np.where(y < 1, (1 - y) * np.log1p(-y_hat), 0.0)
    return float(-np.sum(w * (pos + neg)))


def loss_and_gradients(model: NeuralScorer, z: np.ndarray, y: np.ndarray,
                       sample_weights: np.ndarray | None = None,
                       normalizer: float | None = None) -> tuple[float, list[np.ndarray]]:
    """Weighted BCE on normalised inputs ``z`` and its gradients, ordered like ``parameters()``.

    The loss is divided by ``normalizer`` (default 1, i.e. a plain sum).
    """
    z = np.atleast_2d(z)
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.ones_like(y) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    norm = 1.0 if normalizer is None else normalizer

    acts = [z]
    h = z
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ W + b)
        acts.append(h)
    logit = (h @ model.weights[-1] + model.biases[-1])[:, 0]
    # log p = -softplus(-s), log(1 - p) = -softplus(s)
    loss = float(np.sum(w * (y * _softplus(-logit) + (1 - y) * _softplus(logit))) / norm)

    delta = (w * (_sigmoid(logit) - y) / norm)[:, None]
    grads: list[np.ndarray] = []
    for layer in range(len(model.weights) - 1, -1, -1):
        a_in = acts[layer]
        grads.append(delta.sum(axis=0))
        grads.append(a_in.T @ delta)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (1.0 - acts[layer] ** 2)
    grads.reverse()
    return loss, grads


def _check_trainable(dataset: TrainingSet) -> None:
    if len(dataset) == 0:
        raise ScorerError("empty training set")
    classes = set(np.unique(dataset.labels).tolist())
    if not classes <= {0.0, 1.0}:
        raise ScorerError("labels must be 0 or 1")
    if classes != {0.0, 1.0}:
        raise ScorerError("training set must contain both classes")


def normalization_stats(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def train(dataset: TrainingSet, hyper: TrainConfig | None = None) -> tuple[NeuralScorer, list[float]]:
    """Fit a :class:`NeuralScorer` with minibatch Adam; returns the model and per-epoch mean loss."""
    hyper = hyper or TrainConfig()
    _check_trainable(dataset)
    x = dataset.features
    y = dataset.labels
    mean, std = normalization_stats(anchor_positions(x) if hyper.relative else x)
    model = init_model(x.shape[1], hyper.hidden, hyper.rng_seed, mean, std, hyper.relative)
    if hyper.epochs <= 0:
        return model, []

    n_pos = float(y.sum())
    pos_weight = hyper.pos_weight if hyper.pos_weight is not None else (len(y) - n_pos) / n_pos
    w = np.where(y > 0, pos_weight, 1.0)
    z = model.normalize(x)

    rng = np.random.default_rng(hyper.rng_seed + 1)
    params = model.parameters()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    for _ in range(hyper.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            _, grads = loss_and_gradients(model, z[idx], y[idx], w[idx], w[idx].sum())
            step += 1
            for p, g, a, b in zip(params, grads, m1, m2):
                a *= beta1
                a += (1 - beta1) * g
                b *= beta2
                b += (1 - beta2) * g * g
                a_hat = a / (1 - beta1 ** step)
                b_hat = b / (1 - beta2 ** step)
                p -= hyper.learning_rate * a_hat / (np.sqrt(b_hat) + eps)
        loss, _ = loss_and_gradients(model, z, y, w, w.sum())
        history.append(loss)
    return model, history


def gradient_check(model: NeuralScorer, sample: tuple[np.ndarray, float],
                   step: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest relative gap between backprop and central differences over all parameters.

    The sample is pushed through the stored normalisation first. Relative error
    is ``|a - n| / max(|a|, |n|, floor)``, so gradients below ``floor`` are
    compared absolutely.
    """
    feat, label = sample
    z = model.normalize(np.atleast_2d(np.asarray(feat, dtype=float)))
    y = np.array([float(label)])
    _, grads = loss_and_gradients(model, z, y)
    probe = model.copy()
    worst = 0.0
    for p, g in zip(probe.parameters(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + step
            up, _ = loss_and_gradients(probe, z, y)
            flat[k] = keep - step
            down, _ = loss_and_gradients(probe, z, y)
            flat[k] = keep
            numeric = (up - down) / (2 * step)
            rel = abs(numeric - gflat[k]) / max(abs(numeric), abs(gflat[k]), floor)
            worst = max(worst, rel)
    return worst


# --- training data from reference lineages ---------------------------------

def _label_index(seq: Sequence, gt: GroundTruthLineage) -> list[dict[int, int]]:
    """Per frame: reference label -> instance id."""
    out = []
    for frame in seq.frames:
        out.append({gt.label_of(frame.frame_index, iid): iid for iid in frame.ids})
    return out


def labelled_candidates(seq: Sequence, gt: GroundTruthLineage, t: int, r: int = 2,
                        n_candidates: int = 4,
                        projection: Projection | str = Projection.CONSTANT_POSITION,
                        _index: list[dict[int, int]] | None = None
                        ) -> tuple[list[CandidateAssociation], np.ndarray]:
    """Candidates for frame pair (t, t+1) built from reference histories, with 0/1 labels.

    A source's positive target is the instance carrying its label in t+1, or,
    when it divides, the event's ``daughter_a``.
    """
    index = _index if _index is not None else _label_index(seq, gt)
    frame_t, frame_t1 = seq[t], seq[t + 1]
    inheritor = {ev.parent_track: ev.daughter_a for ev in gt.division_events
                 if ev.frame_of_daughters == t + 1}

    histories: dict[int, list[np.ndarray]] = {}
    displacement: dict[int, np.ndarray] = {}
    truth: dict[int, int | None] = {}
    for iid in frame_t.ids:
        label = gt.label_of(t, iid)
        chain = []
        for back in range(t - r, t + 1):
            if back >= 0 and label in index[back]:
                chain.append(instance_feature(seq[back][index[back][label]]))
            else:
                chain = []          # only the contiguous run ending at t counts
        histories[iid] = chain
        if t >= 1 and label in index[t - 1]:
            displacement[iid] = frame_t[iid].centroid - seq[t - 1][index[t - 1][label]].centroid
        nxt = label if label in index[t + 1] else inheritor.get(label)
        truth[iid] = index[t + 1].get(nxt) if nxt is not None else None

    cands = generate_candidates(frame_t, frame_t1, n_candidates, projection,
                                displacement, histories, r)
    labels = np.array([1.0 if truth[c.source_id] == c.target_id else 0.0 for c in cands])
    return cands, labels


def make_training_pairs(seq: Sequence, gt: GroundTruthLineage, r: int = 2,
                        n_candidates: int = 4,
                        projection: Projection | str = Projection.CONSTANT_POSITION) -> TrainingSet:
    index = _label_index(seq, gt)
    feats, labels, keys = [], [], []
    for t in range(len(seq) - 1):
        cands, y = labelled_candidates(seq, gt, t, r, n_candidates, projection, index)
        for c, label in zip(cands, y):
            feats.append(c.feature)
            labels.append(label)
            keys.append((t, c.source_id, c.target_id))
    if not feats:
        return TrainingSet(np.empty((0, feature_length(r))), np.empty(0), [])
    return TrainingSet(np.stack(feats), np.array(labels), keys)


# --- model files ------------------------------------------------------------

def save_model(model: ScorerModel, path: str | Path) -> None:
    """Write a model as JSON.

    Layout: ``{"format": "rodtrack-scorer", "version": 1, "kind": ...}`` plus,
    for ``distance_baseline``, ``"scale"`` (number or null); for ``neural``,
    ``"input_dim"``, ``"r"``, ``"relative"`` (bool), ``"mean"``, ``"std"``
    (lists) and ``"layers"``,
    a list of ``{"weight": [[...]], "bias": [...]}`` with weight shape
    (fan_in, fan_out). Floats are written with round-trip precision.
    """
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def model_to_json(model: ScorerModel) -> str:
    doc: dict = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": model.kind}
    if isinstance(model, DistanceScorer):
        doc["scale"] = model.scale
    else:
        doc["input_dim"] = model.input_dim
        doc["r"] = model.r
        doc["relative"] = model.relative
        doc["mean"] = model.mean.tolist()
        doc["std"] = model.std.tolist()
        doc["layers"] = [{"weight": w.tolist(), "bias": b.tolist()}
                         for w, b in zip(model.weights, model.biases)]
    return json.dumps(doc, indent=1) + "\n"


def load_model(path: str | Path) -> ScorerModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScorerError(f"{path}: not a model file ({exc})") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise ScorerError(f"{path}: unknown model format {doc.get('format')!r}")
    if doc.get("version") != MODEL_VERSION:
        raise ScorerError(f"{path}: unsupported model version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind == "distance_baseline":
        return DistanceScorer(doc.get("scale"))
    if kind == "neural":
        layers = doc["layers"]
        model = NeuralScorer([np.array(l["weight"], dtype=float).reshape(len(l["weight"]), -1)
                              for l in layers],
                             [l["bias"] for l in layers], doc["mean"], doc["std"],
                             bool(doc.get("relative", False)))
        if model.input_dim != doc["input_dim"]:
            raise ScorerError(f"{path}: input_dim disagrees with layer shapes")
        return model
    raise ScorerError(f"{path}: unknown scorer kind {kind!r}")
