import numpy as np
import pytest

from shadowharmony import ColorSpace, CorrectionMask, ImageBuf, PipelineConfig, convert
from shadowharmony.evaluation import (
    CSV_HEADER,
    SyntheticCase,
    make_initial,
    make_shadow,
    reduction_pct,
    region_error,
    run_study,
    shadow_matte,
    standard_fixture,
)
from shadowharmony.exceptions import InputError
from shadowharmony.imaging import srgb_to_linear


def box(h, w, y0, y1, x0, x1):
    bits = np.zeros((h, w), bool)
    bits[y0:y1, x0:x1] = True
    return CorrectionMask(bits)


def rand_img(seed, h=20, w=20):
    return ImageBuf(np.random.default_rng(seed).uniform(0.1, 0.9, (h, w, 3)))


def test_unit_gains_change_nothing():
    img = rand_img(0)
    out = make_shadow(img, box(20, 20, 5, 15, 5, 15), (1, 1, 1), softness=2.0)
    assert np.allclose(out.data, img.data, atol=1e-12)


def test_hard_shadow_halves_linear_rgb():
    img = rand_img(1)
    region = box(20, 20, 5, 15, 5, 15)
    out = make_shadow(img, region, (0.5, 0.5, 0.5), softness=0.0)
    lin_in, lin_out = srgb_to_linear(img.data), srgb_to_linear(out.data)
    assert np.allclose(lin_out[region.bits], 0.5 * lin_in[region.bits], atol=1e-12)
    assert np.allclose(out.data[~region.bits], img.data[~region.bits], atol=1e-12)


def test_feather_band_is_fractional():
    matte = shadow_matte(box(40, 40, 10, 30, 10, 30), 2.0)
    band = matte[20, 8:13]
    assert np.all((band > 0) & (band < 1))
    assert matte[20, 20] == pytest.approx(1.0, abs=1e-6) and matte[0, 0] == pytest.approx(0.0, abs=1e-6)


def test_invalid_gains_rejected():
    with pytest.raises(InputError):
        make_shadow(rand_img(2), box(20, 20, 0, 5, 0, 5), (0.5, 0.5))
    with pytest.raises(InputError):
        make_shadow(rand_img(2), box(20, 20, 0, 5, 0, 5), (0.0, 0.5, 0.5))


def _case(alpha, noise=0.0, seed=0):
    free = rand_img(3)
    region = box(20, 20, 4, 16, 4, 16)
    full = make_shadow(free, region, (0.5, 0.6, 0.7))
    return SyntheticCase(free, full, region, alpha, noise, seed)


def test_blend_endpoints_and_midpoint():
    assert np.array_equal(make_initial(_case(0.0)).data, _case(0.0).shadow_free.data)
    assert np.allclose(make_initial(_case(1.0)).data, _case(1.0).shadow_full.data, atol=1e-15)
    c = _case(0.2)
    assert np.allclose(make_initial(c).data, 0.2 * c.shadow_full.data + 0.8 * c.shadow_free.data)


def test_noise_stays_in_region_and_is_seeded():
    c = _case(0.2, 0.03, seed=5)
    a, b = make_initial(c), make_initial(c)
    assert np.array_equal(a.data, b.data)
    clean = make_initial(_case(0.2))
    diff = np.abs(a.data - clean.data).max(axis=2) > 0
    assert diff[c.region.bits].mean() > 0.9 and not diff[~c.region.bits].any()
    # achromatic: one sample shared by all three channels wherever nothing clipped
    unclipped = ((a.data > 0) & (a.data < 1)).all(axis=2) & c.region.bits
    delta = (a.data - clean.data)[unclipped]
    assert np.allclose(delta, delta[:, :1], atol=1e-12)
    assert not np.array_equal(make_initial(_case(0.2, 0.03, seed=6)).data, a.data)


def test_case_validation():
    with pytest.raises(InputError):
        _case(1.5)


def test_region_error_examples():
    truth = rand_img(4)
    region = box(20, 20, 2, 9, 3, 17)
    assert region_error(truth, truth, region) == 0.0
    lab = convert(truth, ColorSpace.LAB_NORM).data.copy()
    lab[..., 0] += 0.1
    shifted = convert(ImageBuf(lab, ColorSpace.LAB_NORM), ColorSpace.SRGB)
    assert region_error(shifted, truth, region) == pytest.approx(0.1 / 3, abs=1e-9)


def test_region_error_independent_computation():
    from skimage.color import rgb2lab

    a, b = rand_img(5), rand_img(6)
    region = box(20, 20, 0, 10, 0, 20)
    scale = np.array([100.0, 128.0, 128.0])
    ref = np.abs(rgb2lab(a.data) / scale - rgb2lab(b.data) / scale)[region.bits].mean()
    assert region_error(a, b, region) == pytest.approx(ref, abs=1e-5)


def test_empty_region_warns():
    img = rand_img(7)
    with pytest.warns(RuntimeWarning):
        assert region_error(img, img, CorrectionMask(np.zeros((20, 20), bool))) == 0.0


def test_error_grows_with_alpha():
    fx = standard_fixture(size=64, box=24)
    errs = [region_error(make_initial(fx.case(a)), fx.shadow_free, fx.evaluation_region) for a in (0.0, 0.2, 0.5, 1)]
    assert errs[0] == 0.0
    assert all(b > a for a, b in zip(errs, errs[1:]))


def test_reduction_pct():
    assert reduction_pct(0.04, 0.03) == pytest.approx(25.0)
    assert reduction_pct(0.0, 0.0) == 0.0


def test_empty_study():
    report = run_study(alphas=())
    assert report.rows == []
    assert report.to_csv() == ",".join(CSV_HEADER) + "\n"


def test_single_case_study(tmp_path):
    fx = standard_fixture(size=96, box=36)
    report = run_study((0.2,), (0.0,), (0,), ("middle",), 0, PipelineConfig(), fx, tmp_path)
    assert len(report.rows) == 1
    row = report.rows[0]
    assert row.reduction_pct > 0 and not row.failed
    assert (tmp_path / "alpha0.2_noise0_model0_middle_result.png").exists()
    lines = report.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and lines[1].startswith("alpha0.2_noise0,0,middle,")
    assert "alpha0.2_noise0" in report.to_text()


def test_failed_case_is_recorded():
    fx = standard_fixture(size=64, box=24)
    bad = PipelineConfig(pyramid_min_dim=200, patch_size=63)  # no source patch fits
    report = run_study((0.2, 0.5), (0.0,), (0,), ("middle",), 0, bad, fx)
    assert len(report.rows) == 2 and all(r.failed for r in report.rows)
    assert "nan" in report.to_csv() and "FAILED" in report.to_text()
