"""Three-layer super-resolution network: build, train, and apply per band.

The network refines an already bicubic-upscaled image; it never resizes.
Default geometry is 9x9 -> 3x3 -> 1x1 kernels producing 64 and 32 feature
maps, relu on the first two layers and a linear head, with edge-replicate
padding so output size equals input size. Inference on large rasters is
tiled with a receptive-field halo, which is exact and keeps memory flat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .interp import upscale_bicubic
from .metrics import downsample_block_mean
from .optim import SgdConfig, scg_minimize, sgd_train
from .raster import BandRaster, RasterError

DEFAULT_KERNELS = (9, 3, 1)
DEFAULT_FEATURE_MAPS = (64, 32)
DEFAULT_ACTIVATIONS = ("relu", "relu", "linear")

_TILE_SIZE = 384


@dataclass
class SrcnnModel:
    """Per-band super-resolution network (single input/output channel)."""

    layers: list[nnet.ConvLayer]
    activations: tuple[str, ...] = DEFAULT_ACTIVATIONS
    padding: str = "same_replicate"

    def __post_init__(self):
        if len(self.layers) != len(self.activations):
            raise ValueError("one activation per layer required")
        if self.layers[0].in_channels != 1 or self.layers[-1].out_channels != 1:
            raise ValueError("model must map one channel to one channel")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(
                    f"channel chain broken: {a.out_channels} -> {b.in_channels}"
                )

    @property
    def halo(self) -> int:
        """Receptive-field radius of the stacked layers."""
        return sum((layer.kernel_size - 1) // 2 for layer in self.layers)


def build_srcnn(kernel_sizes=DEFAULT_KERNELS, feature_maps=DEFAULT_FEATURE_MAPS,
                seed: int = 0, activations=DEFAULT_ACTIVATIONS,
                padding: str = "same_replicate", init: str = "identity") -> SrcnnModel:
    """Construct a model with the given geometry.

    ``init="identity"`` threads a pass-through path through the stack
    (delta kernel on the first map of each layer, zero weights from the
    remaining maps into the head), so the untrained network reproduces its
    input exactly and training starts from the interpolation baseline
    instead of from noise. Valid whenever inputs are non-negative, which
    holds for image data; relu passes the identity path unchanged.
    ``init="random"`` is plain Gaussian init with std 1/sqrt(fan_in).
    """
    if len(kernel_sizes) != len(feature_maps) + 1:
        raise ValueError("need one kernel size per layer and one fewer feature map")
    if init not in ("identity", "random"):
        raise ValueError(f"unknown init {init!r}")
    rng = np.random.default_rng(seed)
    channels = [1, *feature_maps, 1]
    layers = [
        nnet.init_conv_layer(channels[i], channels[i + 1], kernel_sizes[i], rng)
        for i in range(len(kernel_sizes))
    ]
    if init == "identity":
        for i, layer in enumerate(layers):
            c = (layer.kernel_size - 1) // 2
            layer.weights[0] = 0.0
            layer.weights[0, 0, c, c] = 1.0
            if i == len(layers) - 1:
                # Zero head weights from the feature maps: the stack is the
                # exact identity at init, and gradients still reach them.
                layer.weights[0, 1:] = 0.0
    return SrcnnModel(layers, tuple(activations), padding)


def _stack_forward(model: SrcnnModel, x: np.ndarray) -> np.ndarray:
    h = x
    for layer, act in zip(model.layers, model.activations):
        h = nnet.apply_activation(act, nnet.conv2d_forward(h, layer, model.padding))
    return h


def srcnn_forward(model: SrcnnModel, upscaled_input: BandRaster) -> BandRaster:
    """Refine an already-upscaled band; output is clamped to [0, 1].

    Rasters larger than the internal tile size are processed tile by tile
    with a halo of the model's receptive radius, which reproduces the
    whole-image result exactly (edge replication only ever happens at true
    image borders).
    """
    h, w = upscaled_input.height, upscaled_input.width
    samples = upscaled_input.samples
    if model.padding == "valid" and (h < 2 * model.halo + 1 or w < 2 * model.halo + 1):
        raise RasterError("input smaller than the network's receptive field")
    if max(h, w) <= _TILE_SIZE + 2 * model.halo:
        out = _stack_forward(model, samples[None, :, :])[0]
        return BandRaster(upscaled_input.band_id, np.clip(out, 0.0, 1.0))

    if model.padding != "same_replicate":
        raise RasterError("tiled inference requires same_replicate padding")
    halo = model.halo
    out = np.empty((h, w))
    for y0 in range(0, h, _TILE_SIZE):
        y1 = min(y0 + _TILE_SIZE, h)
        ys0, ys1 = max(0, y0 - halo), min(h, y1 + halo)
        for x0 in range(0, w, _TILE_SIZE):
            x1 = min(x0 + _TILE_SIZE, w)
            xs0, xs1 = max(0, x0 - halo), min(w, x1 + halo)
            tile = _stack_forward(model, samples[None, ys0:ys1, xs0:xs1])[0]
            out[y0:y1, x0:x1] = tile[y0 - ys0 : y1 - ys0, x0 - xs0 : x1 - xs0]
    return BandRaster(upscaled_input.band_id, np.clip(out, 0.0, 1.0))


def upscale_srcnn(model: SrcnnModel, raster: BandRaster, factor: int) -> BandRaster:
    """Bicubic-upscale by an integer factor, then refine with the network."""
    return srcnn_forward(model, upscale_bicubic(raster, factor))


# ---------------------------------------------------------------------------
# Training-set synthesis
# ---------------------------------------------------------------------------


@dataclass
class SrPairSet:
    """Co-located (degraded, target) single-channel patch pairs."""

    degraded: np.ndarray  # (n, patch, patch)
    target: np.ndarray  # (n, patch, patch)
    patch_size: int = field(default=0)

    def __post_init__(self):
        if self.degraded.shape != self.target.shape:
            raise ValueError("degraded and target stacks must share shapes")
        if self.degraded.ndim != 3:
            raise ValueError("patch stacks must be (n, h, w)")
        if not self.patch_size:
            self.patch_size = self.degraded.shape[1]

    def __len__(self) -> int:
        return self.degraded.shape[0]


def make_training_pairs(raster: BandRaster, factor: int, patch_size: int,
                        stride: int, seed: int = 0) -> SrPairSet:
    """Self-supervised pairs: block-mean downsample then bicubic re-upscale.

    The degraded channel is the round trip at the original size; pairs are
    co-located patches on a stride grid, shuffled by ``seed``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    hc = (raster.height // factor) * factor
    wc = (raster.width // factor) * factor
    if hc < patch_size or wc < patch_size:
        raise RasterError(
            f"raster {raster.width}x{raster.height} too small for "
            f"{patch_size}px patches at factor {factor}"
        )
    crop = BandRaster(raster.band_id, raster.samples[:hc, :wc])
    degraded = upscale_bicubic(downsample_block_mean(crop, factor), factor)

    ys = range(0, hc - patch_size + 1, stride)
    xs = range(0, wc - patch_size + 1, stride)
    deg, tgt = [], []
    for y in ys:
        for x in xs:
            deg.append(degraded.samples[y : y + patch_size, x : x + patch_size])
            tgt.append(crop.samples[y : y + patch_size, x : x + patch_size])
    deg = np.stack(deg)
    tgt = np.stack(tgt)
    order = np.random.default_rng(seed).permutation(len(deg))
    return SrPairSet(deg[order], tgt[order], patch_size)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _pack_grads(grads) -> np.ndarray:
    parts = []
    for gw, gb in grads:
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return np.concatenate(parts)


def srcnn_loss_grad(params: np.ndarray, model: SrcnnModel,
                    degraded: np.ndarray, target: np.ndarray):
    """Mean pixel MSE over a stack of pairs and its packed gradient.

    The whole stack goes through the batched conv ops at once; all
    patches must share one size, which make_training_pairs guarantees.
    """
    layers = nnet.unpack_params(params, model.layers)
    inputs, zs = [], []
    h = degraded[:, None, :, :]
    for layer, act in zip(layers, model.activations):
        z = nnet.conv2d_forward_batch(h, layer, model.padding)
        inputs.append(h)
        zs.append(z)
        h = nnet.apply_activation(act, z)
    loss, g = nnet.mse_loss(h, target[:, None, :, :])

    grads = []
    for layer, act, xin, z in zip(layers[::-1], model.activations[::-1],
                                  inputs[::-1], zs[::-1]):
        g = g * nnet.activation_grad(act, z)
        g, gw, gb = nnet.conv2d_backward_batch(xin, layer, g, model.padding)
        grads.append((gw, gb))
    return loss, _pack_grads(grads[::-1])


def train_srcnn(pairs: SrPairSet, config: SgdConfig, init_seed: int = 0,
                model: SrcnnModel | None = None,
                kernel_sizes=DEFAULT_KERNELS, feature_maps=DEFAULT_FEATURE_MAPS):
    """Fit the network to the pair set by mini-batch SGD on the MSE.

    Returns (model, per-epoch mean loss trace). Fully deterministic for
    fixed (pairs, config, init_seed).
    """
    if len(pairs) == 0:
        raise ValueError("empty training pair set")
    if model is None:
        model = build_srcnn(kernel_sizes, feature_maps, seed=init_seed)

    def objective(params, idx):
        return srcnn_loss_grad(params, model, pairs.degraded[idx], pairs.target[idx])

    final, trace = sgd_train(objective, nnet.pack_params(model.layers), config, len(pairs))
    trained = SrcnnModel(nnet.unpack_params(final, model.layers),
                         model.activations, model.padding)
    return trained, trace


def train_srcnn_scg(pairs: SrPairSet, max_iter: int = 100, init_seed: int = 0,
                    model: SrcnnModel | None = None,
                    kernel_sizes=DEFAULT_KERNELS,
                    feature_maps=DEFAULT_FEATURE_MAPS):
    """Fit the network by full-batch scaled conjugate gradient.

    Non-default alternative to the SGD trainer. The whole pair set is one
    deterministic objective, so every step is accepted or rejected against
    the true training loss; descent from the identity init is monotone and
    needs no learning-rate tuning. Cost per iteration grows with the pair
    count; meant for desk-scale sets. Returns (model, loss trace).
    """
    if len(pairs) == 0:
        raise ValueError("empty training pair set")
    if model is None:
        model = build_srcnn(kernel_sizes, feature_maps, seed=init_seed)

    def objective(params):
        return srcnn_loss_grad(params, model, pairs.degraded, pairs.target)

    final, trace = scg_minimize(objective, nnet.pack_params(model.layers),
                                max_iter=max_iter)
    trained = SrcnnModel(nnet.unpack_params(final, model.layers),
                         model.activations, model.padding)
    return trained, trace


def save_srcnn(model: SrcnnModel, path) -> None:
    nnet.save_model(path, model.layers, meta={
        "kind": "srcnn",
        "activations": list(model.activations),
        "padding": model.padding,
    })


def load_srcnn(path) -> SrcnnModel:
    layers, meta = nnet.load_model(path)
    if meta.get("kind") != "srcnn":
        raise ValueError("model file does not hold a super-resolution network")
    return SrcnnModel(layers, tuple(meta["activations"]), meta["padding"])
