"""Synthetic multispectral scenes with exact ground truth.

Desk-scale stand-in for a real acquisition: each class gets a distinct
per-band mean signature plus seeded Gaussian noise, and the river class
includes branches only one or two pixels across, the features most easily
destroyed by 2x2 pooling. The generator also provides block-level truth
at any upscale level so classification quality can be scored exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import (
    DEFAULT_CLASS_NAMES,
    DEFAULT_PALETTE,
    BandRaster,
    ClassMap,
    MultispectralScene,
    RasterError,
)

# Per-class mean intensity per band (6 bands). Kept well inside [0, 1] so
# Gaussian noise rarely clips. Rivers are dark, light forest bright,
# deep forest in between with its own spectral shape.
DEFAULT_CLASS_MEANS = np.array(
    [
        [0.42, 0.38, 0.35, 0.62, 0.50, 0.40],  # deep_forest
        [0.72, 0.75, 0.70, 0.82, 0.78, 0.74],  # light_forest
        [0.18, 0.20, 0.16, 0.15, 0.17, 0.15],  # river
    ]
)

DEEP_FOREST, LIGHT_FOREST, RIVER = 0, 1, 2


@dataclass
class SceneLayout:
    """Paint-order description of a synthetic scene.

    ``regions`` are ((x, y, w, h), class) rectangles painted first and must
    cover the frame; ``river_lines`` are (x, y, length, thickness, axis)
    strokes painted on top, axis 0 horizontal and 1 vertical.
    """

    width: int
    height: int
    regions: list = field(default_factory=list)
    river_lines: list = field(default_factory=list)


def default_layout(width: int = 128, height: int = 128) -> SceneLayout:
    """Two forest halves, a wide river body, and thin river branches.

    Branch rows and columns are staggered by steps coprime to 3 so the
    1-2 px strokes land on every alignment relative to a 3x downsampling
    grid; a learned upscaler then cannot succeed by memorizing one phase.
    """
    if width < 32 or height < 32:
        raise RasterError("default layout needs at least a 32x32 frame")
    half = width // 2
    body_h = max(8, height // 8)
    body_y = height - height // 4
    regions = [
        ((0, 0, half, height), DEEP_FOREST),
        ((half, 0, width - half, height), LIGHT_FOREST),
        ((0, body_y, width, min(body_h, height - body_y)), RIVER),
    ]
    branch_bottom = 2 + height // 2
    river_lines = []
    row = max(4, height // 12)
    for i in range(5):
        if row > branch_bottom - 4:
            break
        river_lines.append((0, row, width, 1 + i % 2, 0))
        row += 11
    col = max(4, width // 8)
    for i in range(4):
        if col > width - 8:
            break
        river_lines.append((col, 2, height // 2, 2 - i % 2, 1))
        col += 26
    return SceneLayout(width, height, regions, river_lines)


def paint_truth(layout: SceneLayout) -> np.ndarray:
    """Rasterize the layout into a per-pixel label grid."""
    labels = np.full((layout.height, layout.width), -1, dtype=np.int64)
    for (x, y, w, h), cls in layout.regions:
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > layout.width or y + h > layout.height:
            raise RasterError(f"region ({x},{y},{w},{h}) outside the frame")
        labels[y : y + h, x : x + w] = cls
    if (labels < 0).any():
        raise RasterError("layout regions do not cover the frame")
    for x, y, length, thickness, axis in layout.river_lines:
        if axis == 0:
            labels[y : y + thickness, x : x + length] = RIVER
        else:
            labels[y : y + length, x : x + thickness] = RIVER
    return labels


def make_synthetic_scene(layout: SceneLayout, noise_level: float, seed: int,
                         class_means: np.ndarray | None = None,
                         band_ids=("B1", "B2", "B3", "B4", "B5", "B7")):
    """Generate a scene plus its exact pixel-level truth map.

    Each pixel draws its per-band intensity from the class signature plus
    seeded Gaussian noise, clipped to [0, 1]. Returns
    (MultispectralScene, ClassMap).
    """
    if noise_level < 0:
        raise RasterError("noise level must be >= 0")
    means = DEFAULT_CLASS_MEANS if class_means is None else np.asarray(class_means)
    truth = paint_truth(layout)
    if truth.max() >= means.shape[0]:
        raise RasterError("layout uses a class with no mean signature")
    rng = np.random.default_rng(seed)
    bands = []
    for b, band_id in enumerate(band_ids):
        base = means[truth, b]
        if noise_level > 0:
            base = base + rng.normal(0.0, noise_level, size=base.shape)
        bands.append(BandRaster(band_id, np.clip(base, 0.0, 1.0)))
    return MultispectralScene(bands), ClassMap(truth, dict(DEFAULT_PALETTE),
                                               list(DEFAULT_CLASS_NAMES))


def default_training_regions(layout: SceneLayout):
    """Pure-class rectangles matching default_layout, for label_regions.

    The forest rectangles sit in the band below the vertical branches and
    above the river body; the river rectangle sits inside the body. All
    three avoid every branch stroke, so the labels are exact.
    """
    w, h = layout.width, layout.height
    half = w // 2
    body_y = h - h // 4
    body_h = min(max(8, h // 8), h - body_y)
    branch_bottom = 2 + h // 2
    y0, y1 = branch_bottom + 2, body_y - 2
    if y1 - y0 < 4 or body_h < 4:
        raise RasterError("frame too small for clean training regions")
    deep = (4, y0, half - 8, y1 - y0)
    light = (half + 4, y0, w - half - 8, y1 - y0)
    river = (4, body_y + 1, w - 8, body_h - 2)
    return [(deep, DEEP_FOREST), (light, LIGHT_FOREST), (river, RIVER)]


def block_truth(truth: ClassMap, scale: int, block: int = 2) -> np.ndarray:
    """Truth labels for classifier blocks of a ``scale``-times upscaled scene.

    The pixel truth is replicated ``scale``-fold (a label grid upscales by
    nearest neighbour), then each ``block`` x ``block`` cell takes the
    majority label. Ties go to the highest class index so one-pixel river
    branches stay visible in the truth instead of being absorbed by the
    surrounding forest.
    """
    if scale < 1 or block < 1:
        raise RasterError("scale and block must be >= 1")
    up = np.repeat(np.repeat(truth.labels, scale, axis=0), scale, axis=1)
    hh, ww = up.shape[0] // block, up.shape[1] // block
    cells = up[: hh * block, : ww * block].reshape(hh, block, ww, block)
    n_classes = int(truth.labels.max()) + 1
    counts = np.stack(
        [(cells == c).sum(axis=(1, 3)) for c in range(n_classes)], axis=0
    )
    # argmax over reversed class order implements highest-index tie-breaking
    return (n_classes - 1) - np.argmax(counts[::-1], axis=0)
