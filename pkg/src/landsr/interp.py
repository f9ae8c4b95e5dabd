"""Classical upscaling kernels.

Covers three things: the unit-square bicubic coefficient solve (fit
p(x, y) = sum_ij a_ij x^i y^j to corner values and derivatives), plain
bilinear upscaling, and separable cubic-convolution upscaling with the
Keys kernel (a = -0.5, the third-order accurate variant).

Coordinate convention for whole-raster upscaling: output pixel k samples
the source at (k + 0.5) / factor - 0.5 (half-pixel centers), so repeated
integer upscaling introduces no drift. Borders replicate the edge sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import BandRaster, RasterError

KEYS_A = -0.5

# Corner ordering used throughout: (0,0), (1,0), (0,1), (1,1)
CORNER_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))

# Monomial coefficients of the cubic Hermite basis on [0, 1]:
# row r of _HERMITE gives the t^r coefficients for data (f(0), f(1), f'(0), f'(1)).
_HERMITE = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-3.0, 3.0, -2.0, -1.0],
        [2.0, -2.0, 1.0, 1.0],
    ]
)


@dataclass
class CornerData:
    """Function values and partials at the four unit-square corners.

    Each field is a 4-vector ordered per CORNER_ORDER.
    """

    f: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    fxy: np.ndarray

    def __post_init__(self):
        for name in ("f", "fx", "fy", "fxy"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (4,):
                raise ValueError(f"{name} must have exactly 4 entries")
            if not np.isfinite(v).all():
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, v)


@dataclass
class BicubicPatchCoeffs:
    """Coefficients a[i, j] of p(x, y) = sum_ij a[i, j] x^i y^j."""

    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        if self.a.shape != (4, 4):
            raise ValueError("coefficient matrix must be 4x4")


def solve_bicubic_patch(corners: CornerData) -> BicubicPatchCoeffs:
    """Fit the 16 bicubic coefficients to corner values and derivatives.

    Uses the tensor-product Hermite form: with F holding the corner data
    arranged by x-derivative order (rows) and y-derivative order (columns),
    a = H @ F @ H.T where H is the cubic Hermite basis matrix.
    """
    c = corners
    # F[k, l]: rows f(0,.), f(1,.), fx(0,.), fx(1,.); cols y-data (value at
    # y=0, value at y=1, d/dy at y=0, d/dy at y=1). Corner order: see module.
    f00, f10, f01, f11 = c.f
    fx00, fx10, fx01, fx11 = c.fx
    fy00, fy10, fy01, fy11 = c.fy
    fxy00, fxy10, fxy01, fxy11 = c.fxy
    F = np.array(
        [
            [f00, f01, fy00, fy01],
            [f10, f11, fy10, fy11],
            [fx00, fx01, fxy00, fxy01],
            [fx10, fx11, fxy10, fxy11],
        ]
    )
    return BicubicPatchCoeffs(_HERMITE @ F @ _HERMITE.T)


def eval_bicubic_patch(coeffs: BicubicPatchCoeffs, x: float, y: float) -> float:
    """Evaluate p(x, y) = sum_ij a[i, j] x^i y^j. No clamping."""
    xv = np.array([1.0, x, x * x, x * x * x])
    yv = np.array([1.0, y, y * y, y * y * y])
    return float(xv @ coeffs.a @ yv)


# ---------------------------------------------------------------------------
# Separable whole-raster upscaling
# ---------------------------------------------------------------------------


def bilinear_weights(t: float) -> np.ndarray:
    """Weights of the two source taps at fractional offset t in [0, 1)."""
    return np.array([1.0 - t, t])


def keys_weights(t: float, a: float = KEYS_A) -> np.ndarray:
    """Weights of the four source taps at fractional offset t in [0, 1)."""
    return np.array([_keys(t + 1.0, a), _keys(t, a), _keys(1.0 - t, a), _keys(2.0 - t, a)])


def _keys(s: float, a: float = KEYS_A) -> float:
    """Keys cubic-convolution kernel at distance s >= 0."""
    s = abs(s)
    if s <= 1.0:
        return (a + 2.0) * s**3 - (a + 3.0) * s**2 + 1.0
    if s < 2.0:
        return a * s**3 - 5.0 * a * s**2 + 8.0 * a * s - 4.0 * a
    return 0.0


def _source_positions(n_out: int, factor: int) -> np.ndarray:
    """Continuous source coordinate of each output pixel center."""
    return (np.arange(n_out) + 0.5) / factor - 0.5


def _resample_axis_linear(values: np.ndarray, factor: int, axis: int) -> np.ndarray:
    """Upscale one axis by an integer factor with 2-tap linear weights."""
    values = np.moveaxis(values, axis, -1)
    n = values.shape[-1]
    x = _source_positions(n * factor, factor)
    base = np.floor(x).astype(np.int64)
    t = x - base
    i0 = np.clip(base, 0, n - 1)
    i1 = np.clip(base + 1, 0, n - 1)
    out = values[..., i0] * (1.0 - t) + values[..., i1] * t
    return np.moveaxis(out, -1, axis)


def _resample_axis_keys(values: np.ndarray, factor: int, axis: int) -> np.ndarray:
    """Upscale one axis by an integer factor with the 4-tap Keys kernel."""
    values = np.moveaxis(values, axis, -1)
    n = values.shape[-1]
    x = _source_positions(n * factor, factor)
    base = np.floor(x).astype(np.int64)
    t = x - base
    out = np.zeros(values.shape[:-1] + (n * factor,))
    for m, off in enumerate((-1, 0, 1, 2)):
        w = np.array([_keys(abs(tv - off)) for tv in t])
        idx = np.clip(base + off, 0, n - 1)
        out += values[..., idx] * w
    return np.moveaxis(out, -1, axis)


def upscale_bilinear(raster: BandRaster, factor: int) -> BandRaster:
    """Bilinear upscaling by an integer factor >= 1, clamped to [0, 1]."""
    _check_factor(factor)
    if factor == 1:
        return BandRaster(raster.band_id, raster.samples.copy())
    out = _resample_axis_linear(raster.samples, factor, axis=1)
    out = _resample_axis_linear(out, factor, axis=0)
    return BandRaster(raster.band_id, np.clip(out, 0.0, 1.0))


def upscale_bicubic(raster: BandRaster, factor: int) -> BandRaster:
    """Separable cubic-convolution upscaling (Keys kernel, a = -0.5).

    Applies the 1-D kernel horizontally then vertically; the intermediate
    pass is not clamped, only the assembled raster is.
    """
    _check_factor(factor)
    if factor == 1:
        return BandRaster(raster.band_id, raster.samples.copy())
    out = _resample_axis_keys(raster.samples, factor, axis=1)
    out = _resample_axis_keys(out, factor, axis=0)
    return BandRaster(raster.band_id, np.clip(out, 0.0, 1.0))


def _check_factor(factor: int) -> None:
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise RasterError(f"upscale factor must be an integer >= 1, got {factor!r}")
