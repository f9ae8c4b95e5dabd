"""Image quality metrics: MSE, PSNR and the chained per-step PSNR protocol.

MSE and PSNR are computed in 8-bit units (intensities scaled by 255, peak
255^2) regardless of the normalized internal storage. Identical images
yield infinite PSNR, reported as the ``inf`` sentinel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raster import BandRaster, MultispectralScene, RasterError

PEAK = 255.0


def mse(f: BandRaster, g: BandRaster) -> float:
    """Mean squared error between two equally sized bands, in 8-bit units."""
    if f.samples.shape != g.samples.shape:
        raise RasterError(
            f"size mismatch: {f.width}x{f.height} vs {g.width}x{g.height}"
        )
    diff = (f.samples - g.samples) * PEAK
    return float((diff * diff).mean())


def psnr(f: BandRaster, g: BandRaster) -> float:
    """10 log10(255^2 / MSE); math.inf when the images are identical."""
    err = mse(f, g)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / err)


def downsample_block_mean(raster: BandRaster, factor: int) -> BandRaster:
    """Shrink by an integer factor, each output pixel the mean of its block.

    Trailing rows/columns that do not fill a block are floor-cropped.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise RasterError(f"downsample factor must be an integer >= 1, got {factor!r}")
    if factor == 1:
        return BandRaster(raster.band_id, raster.samples.copy())
    hh, ww = raster.height // factor, raster.width // factor
    if hh < 1 or ww < 1:
        raise RasterError("raster smaller than one block")
    blocks = raster.samples[: hh * factor, : ww * factor].reshape(hh, factor, ww, factor)
    return BandRaster(raster.band_id, blocks.mean(axis=(1, 3)))


@dataclass(frozen=True)
class PsnrRow:
    band_id: str
    method: str
    step: int
    psnr_db: float  # math.inf sentinel allowed


@dataclass
class PsnrReport:
    """Per-(band, method, step) PSNR rows from the chained protocol."""

    rows: list[PsnrRow]

    def __post_init__(self):
        keys = [(r.band_id, r.method, r.step) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (band, method, step) rows in report")
        for r in self.rows:
            if r.step < 1:
                raise ValueError(f"step must be >= 1, got {r.step}")
            if not (r.psnr_db > 0.0 or math.isinf(r.psnr_db)):
                raise ValueError(f"psnr_db must be positive or inf, got {r.psnr_db}")

    def __len__(self) -> int:
        return len(self.rows)

    def for_method(self, method: str) -> "PsnrReport":
        return PsnrReport([r for r in self.rows if r.method == method])

    def merged(self, other: "PsnrReport") -> "PsnrReport":
        return PsnrReport(self.rows + other.rows)


def chained_psnr(originals: MultispectralScene, upscaler, method: str,
                 steps: int) -> PsnrReport:
    """Run the per-step PSNR protocol for one upscaling method.

    Each band is upscaled 3x per step; at step n the step-n image is
    block-mean downsampled by 3 and compared (PSNR) against the step-(n-1)
    image, which is the reference the two share a size with. Rows are
    ordered by band, then step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rows = []
    for band in originals.bands:
        previous = band
        for step in range(1, steps + 1):
            current = upscaler(previous, 3)
            rows.append(
                PsnrRow(band.band_id, method, step,
                        psnr(downsample_block_mean(current, 3), previous))
            )
            previous = current
    return PsnrReport(rows)


def write_psnr_csv(report: PsnrReport, path) -> None:
    """CSV with header band,method,step,psnr_db; infinity as ``inf``."""
    with open(path, "w") as fh:
        fh.write("band,method,step,psnr_db\n")
        for r in report.rows:
            value = "inf" if math.isinf(r.psnr_db) else repr(r.psnr_db)
            fh.write(f"{r.band_id},{r.method},{r.step},{value}\n")


def read_psnr_csv(path) -> PsnrReport:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "band,method,step,psnr_db":
            raise ValueError(f"unexpected PSNR CSV header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            band, method, step, value = line.split(",")
            rows.append(PsnrRow(band, method, int(step),
                                math.inf if value == "inf" else float(value)))
    return PsnrReport(rows)
