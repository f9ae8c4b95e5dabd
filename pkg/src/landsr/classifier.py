"""Land-cover classifier: an SCG-trained feed-forward net over patch features.

The default architecture is 24 -> 24 (sigmoid) -> 3 linear logits, trained
full-batch with softmax cross-entropy. Classification is one label per
non-overlapping 2x2 block, so class maps are half the scene size at every
upscale level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .raster import (
    DEFAULT_CLASS_NAMES,
    DEFAULT_PALETTE,
    ClassMap,
    FeatureSet,
    MultispectralScene,
    RasterError,
    extract_features,
)
from .optim import scg_minimize

_CLASSIFY_CHUNK = 1 << 18


@dataclass
class MlpModel:
    """Dense classifier; the last layer emits one logit per class."""

    layers: list[nnet.DenseLayer]
    activations: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))

    def __post_init__(self):
        if not self.activations:
            self.activations = ["sigmoid"] * (len(self.layers) - 1) + ["linear"]
        if len(self.activations) != len(self.layers):
            raise ValueError("one activation per layer required")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        if self.layers[-1].out_dim != len(self.class_names):
            raise ValueError("final layer width must equal the class count")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("negative counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def recall(self, cls: int) -> float:
        row = self.counts[cls].sum()
        return float(self.counts[cls, cls]) / row if row else 0.0


def _forward_batch(x: np.ndarray, layers, activations) -> np.ndarray:
    """Row-wise forward pass; x is (n, d)."""
    h = x
    for layer, act in zip(layers, activations):
        h = nnet.apply_activation(act, h @ layer.weights.T + layer.biases)
    return h


def mlp_loss_grad(params: np.ndarray, template, activations,
                  x: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy over the batch and its packed gradient."""
    layers = nnet.unpack_params(params, template)
    n = x.shape[0]

    caches = []
    h = x
    for layer, act in zip(layers, activations):
        z = h @ layer.weights.T + layer.biases
        caches.append((h, z))
        h = nnet.apply_activation(act, z)
    logits = h

    m = logits.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
    loss = float((lse[:, 0] - logits[np.arange(n), labels]).mean())

    dz = np.exp(logits - lse)
    dz[np.arange(n), labels] -= 1.0
    dz /= n

    grads = []
    upstream = dz
    for layer, act, (h_in, z) in zip(layers[::-1], activations[::-1], caches[::-1]):
        if act != "linear":
            upstream = upstream * nnet.activation_grad(act, z)
        gw = upstream.T @ h_in
        gb = upstream.sum(axis=0)
        upstream = upstream @ layer.weights
        grads.append((gw, gb))

    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads[::-1]])
    return loss, flat


def train_classifier(data: FeatureSet, hidden_dims=(24,), max_iter: int = 500,
                     grad_tol: float = 1e-6, seed: int = 0):
    """Train the classifier on labeled features with scaled conjugate gradient.

    Returns (MlpModel, loss trace). The objective is the mean cross-entropy
    over the full training set, so the run is deterministic given the seed.
    """
    if data.labels is None:
        raise RasterError("training data has no labels")
    n_classes = len(data.class_names)
    present = np.unique(data.labels)
    missing = sorted(set(range(n_classes)) - set(present.tolist()))
    if missing:
        names = [data.class_names[c] for c in missing]
        raise RasterError(f"classes absent from training data: {names}")

    rng = np.random.default_rng(seed)
    dims = [data.dim, *hidden_dims, n_classes]
    layers = [nnet.init_dense_layer(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
    activations = ["sigmoid"] * len(hidden_dims) + ["linear"]

    x, labels = data.features, data.labels

    def objective(params):
        return mlp_loss_grad(params, layers, activations, x, labels)

    final, trace = scg_minimize(objective, nnet.pack_params(layers),
                                max_iter=max_iter, grad_tol=grad_tol)
    model = MlpModel(nnet.unpack_params(final, layers), list(activations),
                     list(data.class_names))
    return model, trace


def classify_features(model: MlpModel, features: FeatureSet) -> np.ndarray:
    """Argmax class index per feature vector; ties go to the lowest index."""
    if features.dim != model.in_dim:
        raise RasterError(
            f"feature dim {features.dim} does not match model input {model.in_dim}"
        )
    x = features.features
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], _CLASSIFY_CHUNK):
        chunk = x[start : start + _CLASSIFY_CHUNK]
        logits = _forward_batch(chunk, model.layers, model.activations)
        out[start : start + chunk.shape[0]] = np.argmax(logits, axis=1)
    return out


def classify_scene(model: MlpModel, scene: MultispectralScene,
                   palette: dict[int, int] | None = None) -> ClassMap:
    """Label every non-overlapping 2x2 block of the scene.

    The result is floor(w/2) x floor(h/2); large scenes are processed in
    horizontal strips to bound memory, which does not change the output.
    """
    if model.in_dim != 4 * len(scene.bands):
        raise RasterError(
            f"model expects {model.in_dim} inputs, scene provides "
            f"{4 * len(scene.bands)} (bands={len(scene.bands)})"
        )
    if scene.height < 2 or scene.width < 2:
        raise RasterError("scene too small for one 2x2 block")
    hh, ww = scene.height // 2, scene.width // 2
    labels = np.empty((hh, ww), dtype=np.int64)
    rows_per_strip = max(1, _CLASSIFY_CHUNK // max(ww, 1))
    for b0 in range(0, hh, rows_per_strip):
        b1 = min(b0 + rows_per_strip, hh)
        strip = MultispectralScene(
            [type(band)(band.band_id, band.samples[2 * b0 : 2 * b1, : 2 * ww])
             for band in scene.bands]
        )
        feats = extract_features(strip, "pooled2x2")
        labels[b0:b1, :] = classify_features(model, feats).reshape(b1 - b0, ww)
    return ClassMap(labels, dict(palette or DEFAULT_PALETTE), list(model.class_names))


def evaluate(predictions, truth):
    """Tally a confusion matrix and overall accuracy.

    Returns (ConfusionMatrix, accuracy); rows are true classes, columns
    predicted ones.
    """
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if predictions.shape != truth.shape:
        raise RasterError("predictions and truth differ in length")
    n_classes = int(max(predictions.max(initial=0), truth.max(initial=0))) + 1
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth, predictions), 1)
    cm = ConfusionMatrix(counts)
    return cm, cm.accuracy


def save_classifier(model: MlpModel, path) -> None:
    nnet.save_model(path, model.layers, meta={
        "kind": "classifier",
        "activations": list(model.activations),
        "class_names": list(model.class_names),
    })


def load_classifier(path) -> MlpModel:
    layers, meta = nnet.load_model(path)
    if meta.get("kind") != "classifier":
        raise ValueError("model file does not hold a classifier")
    return MlpModel(layers, list(meta["activations"]), list(meta["class_names"]))
