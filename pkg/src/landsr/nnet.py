"""Minimal neural-network substrate: conv/dense layers with exact gradients.

Everything is plain float64 numpy. Convolution is cross-correlation (no
kernel flip); 3-D feature tensors are (channels, height, width) arrays.
Gradients are hand-derived and checked against finite differences in the
test suite, so keep forward and backward in sync when touching either.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

MODEL_FORMAT = "landsr-model-v1"

ACTIVATIONS = ("sigmoid", "relu", "linear")

# Cap on the scratch im2col buffer; larger inputs are processed in row strips.
_MAX_COL_BYTES = 96 * 1024 * 1024


class ShapeError(ValueError):
    """Operands with incompatible shapes."""


@dataclass
class ConvLayer:
    """2-D convolution layer: weights (out, in, k, k), biases (out,)."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ShapeError("conv weights must be (out, in, k, k) with square kernels")
        if self.kernel_size % 2 != 1:
            raise ShapeError("kernel size must be odd")
        if self.biases.shape != (self.out_channels,):
            raise ShapeError("conv biases must be (out_channels,)")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


@dataclass
class DenseLayer:
    """Fully connected layer: weights (out, in), biases (out,)."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError("dense weights must be (out, in)")
        if self.biases.shape != (self.out_dim,):
            raise ShapeError("dense biases must be (out_dim,)")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


def init_conv_layer(in_channels: int, out_channels: int, kernel_size: int,
                    rng: np.random.Generator) -> ConvLayer:
    """Gaussian init with std 1/sqrt(fan_in), zero biases."""
    fan_in = in_channels * kernel_size * kernel_size
    w = rng.normal(0.0, 1.0 / np.sqrt(fan_in),
                   size=(out_channels, in_channels, kernel_size, kernel_size))
    return ConvLayer(w, np.zeros(out_channels))


def init_dense_layer(in_dim: int, out_dim: int, rng: np.random.Generator) -> DenseLayer:
    """Gaussian init with std 1/sqrt(fan_in), zero biases."""
    w = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))
    return DenseLayer(w, np.zeros(out_dim))


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return sigmoid(z)
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    """d activation / d z, evaluated at pre-activation z."""
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        s = sigmoid(z)
        return s * (1.0 - s)
    raise ValueError(f"unknown activation {name!r}")


# ---------------------------------------------------------------------------
# 2-D convolution (cross-correlation)
# ---------------------------------------------------------------------------


def _pad_input(x: np.ndarray, k: int, padding: str) -> np.ndarray:
    if padding == "same_replicate":
        p = (k - 1) // 2
        return np.pad(x, ((0, 0), (p, p), (p, p)), mode="edge") if p else x
    if padding == "valid":
        if x.shape[1] < k or x.shape[2] < k:
            raise ShapeError("input smaller than kernel under valid padding")
        return x
    raise ValueError(f"unknown padding {padding!r}")


def _im2col(xp: np.ndarray, k: int) -> np.ndarray:
    """(C, H, W) padded input -> (C*k*k, Ho*Wo) patch matrix."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    c, ho, wo = win.shape[:3]
    return win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)


def conv2d_forward(x: np.ndarray, layer: ConvLayer, padding: str = "same_replicate") -> np.ndarray:
    """Cross-correlate (C, H, W) input with the layer's kernels plus bias.

    ``same_replicate`` keeps the spatial size via edge replication; ``valid``
    shrinks each side by (k - 1) / 2. Large inputs are processed in row
    strips so scratch memory stays bounded; the result is identical.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError("input must be (channels, height, width)")
    if x.shape[0] != layer.in_channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels, layer expects {layer.in_channels}"
        )
    k = layer.kernel_size
    xp = _pad_input(x, k, padding)
    ho, wo = xp.shape[1] - k + 1, xp.shape[2] - k + 1
    w2 = layer.weights.reshape(layer.out_channels, -1)

    row_bytes = layer.in_channels * k * k * wo * 8
    strip = max(1, min(ho, _MAX_COL_BYTES // max(row_bytes, 1)))
    out = np.empty((layer.out_channels, ho, wo))
    for y0 in range(0, ho, strip):
        y1 = min(y0 + strip, ho)
        cols = _im2col(xp[:, y0 : y1 + k - 1, :], k)
        out[:, y0:y1, :] = (w2 @ cols).reshape(layer.out_channels, y1 - y0, wo)
    out += layer.biases[:, None, None]
    return out


def conv2d_backward(x: np.ndarray, layer: ConvLayer, upstream: np.ndarray,
                    padding: str = "same_replicate"):
    """Gradients of conv2d_forward w.r.t. input, weights and biases.

    Returns (input_grad, weight_grad, bias_grad) for the given upstream
    gradient of shape (out_channels, Ho, Wo).
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    k = layer.kernel_size
    xp = _pad_input(x, k, padding)
    ho, wo = xp.shape[1] - k + 1, xp.shape[2] - k + 1
    if upstream.shape != (layer.out_channels, ho, wo):
        raise ShapeError(
            f"upstream gradient shape {upstream.shape} does not match "
            f"forward output {(layer.out_channels, ho, wo)}"
        )
    g2 = upstream.reshape(layer.out_channels, -1)
    cols = _im2col(xp, k)

    bias_grad = upstream.sum(axis=(1, 2))
    weight_grad = (g2 @ cols.T).reshape(layer.weights.shape)

    # Scatter the column-space gradient back onto the padded input.
    gcols = (layer.weights.reshape(layer.out_channels, -1).T @ g2).reshape(
        layer.in_channels, k, k, ho, wo
    )
    gpad = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            gpad[:, i : i + ho, j : j + wo] += gcols[:, i, j]

    if padding == "valid":
        input_grad = gpad
    else:
        input_grad = _fold_padding(gpad, (k - 1) // 2)
    return input_grad, weight_grad, bias_grad


def _fold_padding(gpad: np.ndarray, p: int) -> np.ndarray:
    """Collapse a replicate-padded gradient back onto the unpadded grid.

    Every padded cell was a copy of its nearest edge cell, so its gradient
    adds to that cell. Works on (..., H + 2p, W + 2p) arrays.
    """
    if p == 0:
        return gpad
    h = gpad.shape[-2] - 2 * p
    w = gpad.shape[-1] - 2 * p
    rows = gpad[..., p : p + h, :].copy()
    rows[..., 0, :] += gpad[..., :p, :].sum(axis=-2)
    rows[..., -1, :] += gpad[..., p + h :, :].sum(axis=-2)
    out = rows[..., :, p : p + w].copy()
    out[..., :, 0] += rows[..., :, :p].sum(axis=-1)
    out[..., :, -1] += rows[..., :, p + w :].sum(axis=-1)
    return out


def _im2col_batch(xp: np.ndarray, k: int) -> np.ndarray:
    """(N, C, H, W) padded stack -> (C*k*k, N*Ho*Wo) patch matrix."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    n, c, ho, wo = win.shape[:4]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)


def conv2d_forward_batch(x: np.ndarray, layer: ConvLayer,
                         padding: str = "same_replicate") -> np.ndarray:
    """conv2d_forward over an (N, C, H, W) stack in one matrix product.

    Identical per sample to conv2d_forward; meant for batches of small
    training patches where per-sample calls would be overhead-bound.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError("input must be (batch, channels, height, width)")
    if x.shape[1] != layer.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels, layer expects {layer.in_channels}"
        )
    k = layer.kernel_size
    if padding == "same_replicate":
        p = (k - 1) // 2
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="edge") if p else x
    elif padding == "valid":
        if x.shape[2] < k or x.shape[3] < k:
            raise ShapeError("input smaller than kernel under valid padding")
        xp = x
    else:
        raise ValueError(f"unknown padding {padding!r}")
    n = x.shape[0]
    ho, wo = xp.shape[2] - k + 1, xp.shape[3] - k + 1
    w2 = layer.weights.reshape(layer.out_channels, -1)
    cols = _im2col_batch(xp, k)
    out = (w2 @ cols).reshape(layer.out_channels, n, ho, wo).transpose(1, 0, 2, 3)
    return out + layer.biases[None, :, None, None]


def conv2d_backward_batch(x: np.ndarray, layer: ConvLayer, upstream: np.ndarray,
                          padding: str = "same_replicate"):
    """Batch version of conv2d_backward for an (N, C, H, W) input stack.

    Weight and bias gradients are summed over the batch; the input
    gradient keeps the batch axis.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    k = layer.kernel_size
    p = (k - 1) // 2 if padding == "same_replicate" else 0
    xp = (np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="edge") if p else x)
    n = x.shape[0]
    ho, wo = xp.shape[2] - k + 1, xp.shape[3] - k + 1
    if upstream.shape != (n, layer.out_channels, ho, wo):
        raise ShapeError(
            f"upstream gradient shape {upstream.shape} does not match "
            f"forward output {(n, layer.out_channels, ho, wo)}"
        )
    g2 = upstream.transpose(1, 0, 2, 3).reshape(layer.out_channels, -1)
    cols = _im2col_batch(xp, k)

    bias_grad = upstream.sum(axis=(0, 2, 3))
    weight_grad = (g2 @ cols.T).reshape(layer.weights.shape)

    gcols = (layer.weights.reshape(layer.out_channels, -1).T @ g2).reshape(
        layer.in_channels, k, k, n, ho, wo
    )
    gpad = np.zeros_like(xp.transpose(1, 0, 2, 3))
    for i in range(k):
        for j in range(k):
            gpad[:, :, i : i + ho, j : j + wo] += gcols[:, i, j]
    gpad = gpad.transpose(1, 0, 2, 3)

    return _fold_padding(gpad, p), weight_grad, bias_grad


# ---------------------------------------------------------------------------
# Dense layers
# ---------------------------------------------------------------------------


def dense_forward(x: np.ndarray, layer: DenseLayer, activation: str = "linear") -> np.ndarray:
    """activation(W x + b) for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.in_dim,):
        raise ShapeError(f"input dim {x.shape} does not match layer in_dim {layer.in_dim}")
    return apply_activation(activation, layer.weights @ x + layer.biases)


def dense_backward(x: np.ndarray, layer: DenseLayer, upstream: np.ndarray,
                   activation: str = "linear"):
    """Gradients of dense_forward: (input_grad, weight_grad, bias_grad)."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != (layer.in_dim,):
        raise ShapeError(f"input dim {x.shape} does not match layer in_dim {layer.in_dim}")
    if upstream.shape != (layer.out_dim,):
        raise ShapeError("upstream gradient does not match layer out_dim")
    z = layer.weights @ x + layer.biases
    gz = upstream * activation_grad(activation, z)
    return layer.weights.T @ gz, np.outer(gz, x), gz.copy()


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max()
    e = np.exp(z - m)
    return e / e.sum()


def softmax_cross_entropy(logits: np.ndarray, label: int):
    """Stable cross-entropy loss and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("non-finite logits")
    label = int(label)
    if label < 0 or label >= z.size:
        raise ValueError(f"label {label} out of range for {z.size} classes")
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    loss = lse - z[label]
    grad = np.exp(z - lse)
    grad[label] -= 1.0
    return float(loss), grad


def mse_loss(prediction: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements; grad = 2 (pred - target) / N."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ShapeError(f"shape mismatch {prediction.shape} vs {target.shape}")
    diff = prediction - target
    n = diff.size
    return float((diff * diff).sum() / n), 2.0 * diff / n


# ---------------------------------------------------------------------------
# Flat parameter vectors
# ---------------------------------------------------------------------------
# Layout: layers in order; per layer, weights (row-major) then biases.


def param_count(layers) -> int:
    return sum(layer.weights.size + layer.biases.size for layer in layers)


def pack_params(layers) -> np.ndarray:
    """Flatten layer parameters into one vector (documented layout)."""
    parts = []
    for layer in layers:
        parts.append(layer.weights.ravel())
        parts.append(layer.biases.ravel())
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def unpack_params(vector: np.ndarray, template) -> list:
    """Rebuild layers with the template's geometry from a flat vector."""
    vector = np.asarray(vector, dtype=np.float64)
    expected = param_count(template)
    if vector.shape != (expected,):
        raise ShapeError(f"parameter vector has {vector.size} entries, expected {expected}")
    layers = []
    pos = 0
    for layer in template:
        nw, nb = layer.weights.size, layer.biases.size
        w = vector[pos : pos + nw].reshape(layer.weights.shape).copy()
        b = vector[pos + nw : pos + nw + nb].copy()
        pos += nw + nb
        layers.append(type(layer)(w, b))
    return layers


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _layer_spec(layer) -> dict:
    if isinstance(layer, ConvLayer):
        return {
            "kind": "conv",
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
            "kernel_size": layer.kernel_size,
        }
    if isinstance(layer, DenseLayer):
        return {"kind": "dense", "in_dim": layer.in_dim, "out_dim": layer.out_dim}
    raise TypeError(f"unsupported layer type {type(layer)!r}")


def _layer_from_spec(spec: dict):
    if spec["kind"] == "conv":
        k, ci, co = spec["kernel_size"], spec["in_channels"], spec["out_channels"]
        return ConvLayer(np.zeros((co, ci, k, k)), np.zeros(co))
    if spec["kind"] == "dense":
        return DenseLayer(np.zeros((spec["out_dim"], spec["in_dim"])), np.zeros(spec["out_dim"]))
    raise ValueError(f"unknown layer kind {spec['kind']!r}")


def save_model(path, layers, meta: dict | None = None) -> None:
    """Persist layers (geometry + flat parameters) as versioned JSON."""
    doc = {
        "format": MODEL_FORMAT,
        "layers": [_layer_spec(layer) for layer in layers],
        "params": pack_params(layers).tolist(),
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path):
    """Load layers saved by save_model. Returns (layers, meta)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    template = [_layer_from_spec(s) for s in doc["layers"]]
    layers = unpack_params(np.array(doc["params"], dtype=np.float64), template)
    return layers, doc.get("meta", {})
