"""Bicubic patch solve and the bilinear / cubic-convolution upscalers."""

import numpy as np
import pytest

from landsr import interp
from landsr.interp import BicubicPatchCoeffs, CornerData
from landsr.raster import BandRaster

from conftest import rand_band

CORNERS = ((0, 0), (1, 0), (0, 1), (1, 1))


def constraint_matrix():
    """Independent 16x16 system for the bicubic solve oracle.

    Unknown order: a[i, j] at column 4*i + j. Rows: f, fx, fy, fxy at each
    corner in CORNERS order.
    """
    rows = []
    for deriv in ("f", "fx", "fy", "fxy"):
        for x, y in CORNERS:
            row = np.zeros(16)
            for i in range(4):
                for j in range(4):
                    if deriv == "f":
                        v = x**i * y**j
                    elif deriv == "fx":
                        v = i * x ** max(i - 1, 0) * y**j
                    elif deriv == "fy":
                        v = x**i * j * y ** max(j - 1, 0)
                    else:
                        v = i * x ** max(i - 1, 0) * j * y ** max(j - 1, 0)
                    row[4 * i + j] = v
            rows.append(row)
    return np.array(rows)


def test_solve_constant_surface():
    c = CornerData(f=[0.7] * 4, fx=[0.0] * 4, fy=[0.0] * 4, fxy=[0.0] * 4)
    a = interp.solve_bicubic_patch(c).a
    assert abs(a[0, 0] - 0.7) < 1e-12
    rest = a.copy()
    rest[0, 0] = 0.0
    assert np.max(np.abs(rest)) < 1e-12


def test_solve_linear_surface():
    # f(x, y) = x: values 0,1,0,1 over CORNERS, fx = 1, others 0
    c = CornerData(f=[0.0, 1.0, 0.0, 1.0], fx=[1.0] * 4, fy=[0.0] * 4, fxy=[0.0] * 4)
    a = interp.solve_bicubic_patch(c).a
    expected = np.zeros((4, 4))
    expected[1, 0] = 1.0
    assert np.max(np.abs(a - expected)) < 1e-12


def test_solve_matches_linear_system_oracle(rng):
    A = constraint_matrix()
    for _ in range(20):
        vals = rng.normal(size=16)
        c = CornerData(f=vals[0:4], fx=vals[4:8], fy=vals[8:12], fxy=vals[12:16])
        got = interp.solve_bicubic_patch(c).a
        want = np.linalg.solve(A, vals).reshape(4, 4)
        assert np.max(np.abs(got - want)) < 1e-9


def test_solve_satisfies_all_constraints(rng):
    for _ in range(100):
        vals = rng.normal(size=16)
        c = CornerData(f=vals[0:4], fx=vals[4:8], fy=vals[8:12], fxy=vals[12:16])
        coeffs = interp.solve_bicubic_patch(c)
        a = coeffs.a
        i_idx = np.arange(4).reshape(4, 1)
        j_idx = np.arange(4).reshape(1, 4)
        for k, (x, y) in enumerate(CORNERS):
            xv = np.array([1.0, x, x * x, x**3])
            yv = np.array([1.0, y, y * y, y**3])
            dxv = np.array([0.0, 1.0, 2 * x, 3 * x * x])
            dyv = np.array([0.0, 1.0, 2 * y, 3 * y * y])
            assert abs(xv @ a @ yv - c.f[k]) < 1e-10
            assert abs(dxv @ a @ yv - c.fx[k]) < 1e-10
            assert abs(xv @ a @ dyv - c.fy[k]) < 1e-10
            assert abs(dxv @ a @ dyv - c.fxy[k]) < 1e-10


def test_corner_data_rejects_bad_input():
    with pytest.raises(ValueError):
        CornerData(f=[0.0] * 3, fx=[0.0] * 4, fy=[0.0] * 4, fxy=[0.0] * 4)
    with pytest.raises(ValueError):
        CornerData(f=[np.inf] * 4, fx=[0.0] * 4, fy=[0.0] * 4, fxy=[0.0] * 4)


def test_eval_bicubic_patch_identities(rng):
    a = rng.normal(size=(4, 4))
    coeffs = BicubicPatchCoeffs(a)
    assert abs(interp.eval_bicubic_patch(coeffs, 0.0, 0.0) - a[0, 0]) < 1e-12
    assert abs(interp.eval_bicubic_patch(coeffs, 1.0, 1.0) - a.sum()) < 1e-12
    x, y = rng.uniform(size=2)
    direct = sum(a[i, j] * x**i * y**j for i in range(4) for j in range(4))
    assert abs(interp.eval_bicubic_patch(coeffs, x, y) - direct) < 1e-12


def test_eval_constant_patch():
    c = CornerData(f=[0.25] * 4, fx=[0.0] * 4, fy=[0.0] * 4, fxy=[0.0] * 4)
    coeffs = interp.solve_bicubic_patch(c)
    for x, y in ((0.3, 0.9), (0.5, 0.5), (1.0, 0.0)):
        assert abs(interp.eval_bicubic_patch(coeffs, x, y) - 0.25) < 1e-12


# ---------------------------------------------------------------------------
# Whole-raster upscaling
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("upscale", [interp.upscale_bilinear, interp.upscale_bicubic])
def test_factor_one_is_identity(upscale, rng):
    band = rand_band(rng, 5, 7)
    out = upscale(band, 1)
    assert np.array_equal(out.samples, band.samples)


@pytest.mark.parametrize("upscale", [interp.upscale_bilinear, interp.upscale_bicubic])
def test_constant_stays_constant(upscale):
    out = upscale(BandRaster("B1", np.full((4, 5), 0.42)), 3)
    assert out.samples.shape == (12, 15)
    assert np.max(np.abs(out.samples - 0.42)) < 1e-12


@pytest.mark.parametrize("upscale", [interp.upscale_bilinear, interp.upscale_bicubic])
def test_factor_below_one_rejected(upscale, rng):
    with pytest.raises(ValueError):
        upscale(rand_band(rng, 3, 3), 0)


def test_bilinear_2x1_hand_values():
    # source coords (k + 0.5)/2 - 0.5 = -0.25, 0.25, 0.75, 1.25; edges replicate
    band = BandRaster("B1", np.array([[0.0, 1.0]]))
    out = interp.upscale_bilinear(band, 2)
    assert out.samples.shape == (2, 4)
    assert np.allclose(out.samples[0], [0.0, 0.25, 0.75, 1.0], atol=1e-12)
    assert np.allclose(out.samples[1], out.samples[0], atol=1e-12)


def test_source_samples_reappear_at_aligned_outputs(rng):
    # with factor 3, output 3i+1 maps exactly onto source i
    band = rand_band(rng, 6, 5)
    for out in (interp.upscale_bilinear(band, 3), interp.upscale_bicubic(band, 3)):
        aligned = out.samples[1::3, 1::3]
        assert np.max(np.abs(aligned - band.samples)) < 1e-12


def test_partition_of_unity(rng):
    for t in rng.uniform(size=1000):
        assert abs(interp.bilinear_weights(t).sum() - 1.0) < 1e-12
        assert abs(interp.keys_weights(t).sum() - 1.0) < 1e-12


def test_affine_reproduction_interior(rng):
    # both kernels reproduce affine rasters exactly away from borders
    h, w, f = 10, 12, 3
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    plane = (0.2 + 0.03 * ii + 0.02 * jj) / 2.0
    band = BandRaster("B1", plane)
    oi, oj = np.meshgrid(np.arange(h * f), np.arange(w * f), indexing="ij")
    si = (oi + 0.5) / f - 0.5
    sj = (oj + 0.5) / f - 0.5
    want = (0.2 + 0.03 * si + 0.02 * sj) / 2.0
    for upscale, guard in ((interp.upscale_bilinear, 1), (interp.upscale_bicubic, 2)):
        got = upscale(band, f).samples
        lo, hi = guard * f, -guard * f
        err = np.max(np.abs(got[lo:hi, lo:hi] - want[lo:hi, lo:hi]))
        assert err < 1e-10


def test_keys_reproduces_quadratic_interior():
    # a = -0.5 gives third-order accuracy: exact on quadratics up to fp error
    n, f = 16, 3
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = ii / (n - 1.0)
    band = BandRaster("B1", 0.9 * x * x)
    got = interp.upscale_bicubic(band, f).samples
    oi = (np.arange(n * f) + 0.5) / f - 0.5
    want = 0.9 * (oi / (n - 1.0)) ** 2
    interior = slice(2 * f, -2 * f)
    err = np.max(np.abs(got[interior, :] - want[interior, None]))
    assert err < 1e-6


def test_bilinear_outputs_bounded_by_neighbors(rng):
    band = rand_band(rng, 5, 5)
    out = interp.upscale_bilinear(band, 4).samples
    assert out.min() >= band.samples.min() - 1e-12
    assert out.max() <= band.samples.max() + 1e-12


def test_bicubic_output_clamped(rng):
    # step edge drives Keys overshoot; clamping keeps it in range
    x = np.zeros((8, 8))
    x[:, 4:] = 1.0
    out = interp.upscale_bicubic(BandRaster("B1", x), 3).samples
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_output_dims_scale_by_factor(rng):
    band = rand_band(rng, 3, 4)
    for f in (2, 3, 5):
        for upscale in (interp.upscale_bilinear, interp.upscale_bicubic):
            out = upscale(band, f)
            assert out.samples.shape == (3 * f, 4 * f)
