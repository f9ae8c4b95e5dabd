"""Raster data model, PGM/manifest I/O, 2x2 pooling and patch feature extraction.

Intensities live in [0, 1] as float64; on disk every band is an 8-bit
binary PGM (P5, maxval 255) and a scene is a JSON manifest pointing at
its band files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

DEFAULT_CLASS_NAMES = ["deep_forest", "light_forest", "river"]
# deep forest = ash gray, light forest = white, river = black
DEFAULT_PALETTE = {0: 128, 1: 255, 2: 0}

FEATURE_MODES = ("pooled2x2", "patch3x3")


class RasterError(ValueError):
    """Invalid raster data or incompatible raster operands."""


@dataclass
class BandRaster:
    """Single-band image. ``samples`` is (height, width) float64 in [0, 1]."""

    band_id: str
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise RasterError(f"band {self.band_id!r}: samples must be 2-D")
        if self.samples.shape[0] < 1 or self.samples.shape[1] < 1:
            raise RasterError(f"band {self.band_id!r}: empty raster")
        if not np.isfinite(self.samples).all():
            raise RasterError(f"band {self.band_id!r}: non-finite samples")
        lo, hi = self.samples.min(), self.samples.max()
        if lo < 0.0 or hi > 1.0:
            raise RasterError(
                f"band {self.band_id!r}: samples outside [0, 1] (min {lo}, max {hi})"
            )

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass
class MultispectralScene:
    """Co-registered stack of bands sharing one pixel grid."""

    bands: list[BandRaster]

    def __post_init__(self):
        if not self.bands:
            raise RasterError("scene has no bands")
        w, h = self.bands[0].width, self.bands[0].height
        for b in self.bands:
            if (b.width, b.height) != (w, h):
                raise RasterError(
                    f"band {b.band_id!r} is {b.width}x{b.height}, expected {w}x{h}"
                )
        ids = [b.band_id for b in self.bands]
        if len(set(ids)) != len(ids):
            raise RasterError(f"duplicate band ids in {ids}")

    @property
    def width(self) -> int:
        return self.bands[0].width

    @property
    def height(self) -> int:
        return self.bands[0].height

    def band(self, band_id: str) -> BandRaster:
        for b in self.bands:
            if b.band_id == band_id:
                return b
        raise KeyError(band_id)


@dataclass
class FeatureSet:
    """Patch feature vectors, optionally labeled with class indices."""

    features: np.ndarray  # (n, d)
    labels: np.ndarray | None = None  # (n,) int, values in [0, n_classes)
    class_names: list[str] = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise RasterError("features must be a 2-D (n, d) array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise RasterError("labels length must match feature count")
            if self.labels.size and self.labels.max() >= len(self.class_names):
                raise RasterError("label exceeds class count")
            if self.labels.size and self.labels.min() < 0:
                raise RasterError("negative label")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class ClassMap:
    """Grid of class labels plus the gray palette used to render them."""

    labels: np.ndarray  # (height, width) int
    palette: dict[int, int] = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    class_names: list[str] = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 2:
            raise RasterError("class map labels must be 2-D")
        for c in np.unique(self.labels):
            if int(c) not in self.palette:
                raise RasterError(f"label {c} has no palette entry")

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


# ---------------------------------------------------------------------------
# PGM (P5) I/O
# ---------------------------------------------------------------------------


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM file into a (height, width) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        if data[pos : pos + 1].isspace():
            pos += 1
        elif data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) < 4:
        raise RasterError(f"{path}: truncated PGM header")
    if tokens[0] != b"P5":
        raise RasterError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise RasterError(f"{path}: unsupported pixel depth (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos : pos + width * height]
    if len(raw) != width * height:
        raise RasterError(f"{path}: pixel payload truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write a (height, width) uint8 array as binary PGM, maxval 255."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise RasterError("PGM pixels must be 2-D")
    if pixels.dtype != np.uint8:
        if pixels.min() < 0 or pixels.max() > 255:
            raise RasterError("pixel values outside 8-bit range")
        pixels = pixels.astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def quantize(samples: np.ndarray) -> np.ndarray:
    """Map [0, 1] float samples to uint8 by rounding v * 255."""
    return np.clip(np.rint(np.asarray(samples) * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Scene manifests
# ---------------------------------------------------------------------------


def load_scene(manifest_path) -> MultispectralScene:
    """Load a scene from a JSON manifest.

    The manifest lists ``width``, ``height`` and ``bands: [{id, path}]``;
    band paths are relative to the manifest file. 8-bit samples are mapped
    to [0, 1] by v / 255.
    """
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))
    width, height = int(manifest["width"]), int(manifest["height"])
    bands = []
    for entry in manifest["bands"]:
        pixels = read_pgm(os.path.join(base, entry["path"]))
        if pixels.shape != (height, width):
            raise RasterError(
                f"band {entry['id']!r} is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"manifest says {width}x{height}"
            )
        bands.append(BandRaster(entry["id"], pixels / 255.0))
    return MultispectralScene(bands)


def write_scene(scene: MultispectralScene, manifest_path) -> None:
    """Write a scene as one PGM per band plus a JSON manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(base, exist_ok=True)
    entries = []
    for b in scene.bands:
        fname = f"{b.band_id}.pgm"
        write_pgm(os.path.join(base, fname), quantize(b.samples))
        entries.append({"id": b.band_id, "path": fname})
    manifest = {"width": scene.width, "height": scene.height, "bands": entries}
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Pooling and feature extraction
# ---------------------------------------------------------------------------


def pool_2x2(raster: BandRaster) -> BandRaster:
    """Mean-pool a band over non-overlapping 2x2 blocks (floor semantics)."""
    h, w = raster.height, raster.width
    if h < 2 or w < 2:
        raise RasterError("raster smaller than 2x2 cannot be pooled")
    hh, ww = h // 2, w // 2
    blocks = raster.samples[: 2 * hh, : 2 * ww].reshape(hh, 2, ww, 2)
    return BandRaster(raster.band_id, blocks.mean(axis=(1, 3)))


def _pooled_block_features(band: np.ndarray) -> np.ndarray:
    """Per non-overlapping 2x2 block: the 4 pixel values, row-major."""
    h, w = band.shape
    hh, ww = h // 2, w // 2
    blocks = band[: 2 * hh, : 2 * ww].reshape(hh, 2, ww, 2)
    return blocks.transpose(0, 2, 1, 3).reshape(hh * ww, 4)


def _patch3_features(band: np.ndarray) -> np.ndarray:
    """Per interior pixel: its 3x3 neighborhood, row-major."""
    win = np.lib.stride_tricks.sliding_window_view(band, (3, 3))
    n = win.shape[0] * win.shape[1]
    return win.reshape(n, 9)


def extract_features(scene: MultispectralScene, mode: str = "pooled2x2") -> FeatureSet:
    """Turn a scene into patch feature vectors.

    ``pooled2x2`` emits one vector per non-overlapping 2x2 block (d = 4 * bands),
    ``patch3x3`` one vector per interior pixel from its 3x3 neighborhood
    (d = 9 * bands). Entries are ordered band-major, then row-major within
    the block; vectors are ordered row-major by block/pixel index.
    """
    if mode not in FEATURE_MODES:
        raise RasterError(f"unknown feature mode {mode!r}")
    if mode == "pooled2x2":
        if scene.height < 2 or scene.width < 2:
            raise RasterError("scene too small for 2x2 pooling")
        per_band = [_pooled_block_features(b.samples) for b in scene.bands]
    else:
        if scene.height < 3 or scene.width < 3:
            raise RasterError("scene too small for 3x3 patches")
        per_band = [_patch3_features(b.samples) for b in scene.bands]
    return FeatureSet(np.concatenate(per_band, axis=1))


def crop_scene(scene: MultispectralScene, x: int, y: int, w: int, h: int) -> MultispectralScene:
    """Crop every band to the rectangle (x, y, w, h)."""
    if w < 1 or h < 1:
        raise RasterError("empty crop rectangle")
    if x < 0 or y < 0 or x + w > scene.width or y + h > scene.height:
        raise RasterError(
            f"rectangle ({x},{y},{w},{h}) outside {scene.width}x{scene.height} scene"
        )
    return MultispectralScene(
        [BandRaster(b.band_id, b.samples[y : y + h, x : x + w]) for b in scene.bands]
    )


def label_regions(
    scene: MultispectralScene,
    regions,
    mode: str = "pooled2x2",
    class_names: list[str] | None = None,
) -> FeatureSet:
    """Build a labeled FeatureSet from rectangular training regions.

    ``regions`` is a list of ((x, y, w, h), class_index) pairs. Each
    rectangle is cropped from the scene, run through extract_features,
    and tagged with its class; overlapping rectangles contribute
    independently.
    """
    if class_names is None:
        class_names = list(DEFAULT_CLASS_NAMES)
    if not regions:
        raise RasterError("empty region list")
    chunks, labels = [], []
    for (x, y, w, h), cls in regions:
        cls = int(cls)
        if cls < 0 or cls >= len(class_names):
            raise RasterError(f"class index {cls} out of range")
        feats = extract_features(crop_scene(scene, x, y, w, h), mode)
        chunks.append(feats.features)
        labels.append(np.full(len(feats), cls, dtype=np.int64))
    return FeatureSet(np.concatenate(chunks), np.concatenate(labels), class_names)


def read_region_file(path, class_names: list[str] | None = None):
    """Parse a JSON region file into label_regions input.

    The file holds ``regions: [{x, y, w, h, class}]`` with class given by
    name; an optional ``class_names`` list overrides the default ordering.
    Returns (regions, class_names).
    """
    with open(path) as fh:
        doc = json.load(fh)
    names = doc.get("class_names") or class_names or list(DEFAULT_CLASS_NAMES)
    regions = []
    for r in doc["regions"]:
        cls = r["class"]
        idx = names.index(cls) if isinstance(cls, str) else int(cls)
        regions.append(((int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"])), idx))
    return regions, names


# ---------------------------------------------------------------------------
# Class map I/O
# ---------------------------------------------------------------------------


def write_class_map(class_map: ClassMap, path) -> None:
    """Render a class map as an 8-bit PGM using its palette."""
    lut = np.zeros(max(class_map.palette) + 1, dtype=np.uint8)
    for cls, gray in class_map.palette.items():
        lut[cls] = gray
    write_pgm(path, lut[class_map.labels])


def read_class_map(path, palette: dict[int, int] | None = None,
                   class_names: list[str] | None = None) -> ClassMap:
    """Read a palette-rendered class map back into labels.

    The palette must be injective (the default is) for the round trip to
    be exact.
    """
    if palette is None:
        palette = dict(DEFAULT_PALETTE)
    inverse = {gray: cls for cls, gray in palette.items()}
    if len(inverse) != len(palette):
        raise RasterError("palette is not invertible")
    pixels = read_pgm(path)
    labels = np.zeros(pixels.shape, dtype=np.int64)
    seen = np.zeros(pixels.shape, dtype=bool)
    for gray, cls in inverse.items():
        mask = pixels == gray
        labels[mask] = cls
        seen |= mask
    if not seen.all():
        bad = np.unique(pixels[~seen])
        raise RasterError(f"pixel values {bad.tolist()} not in palette")
    return ClassMap(labels, dict(palette),
                    list(class_names) if class_names else list(DEFAULT_CLASS_NAMES))
