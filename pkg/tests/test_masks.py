import numpy as np
import pytest

from shadowharmony import CorrectionMask, ImageBuf, accept_user_mask, make_mask
from shadowharmony.exceptions import InputError
from shadowharmony.imaging import ColorSpace
from shadowharmony.masks import read_mask, threshold_difference, write_mask


def _pair(size=30):
    orig = np.random.default_rng(0).random((size, size, 3)) * 0.4
    return orig, orig.copy()


def test_identical_images_give_empty_mask():
    orig, initial = _pair()
    mask = make_mask(ImageBuf(orig), ImageBuf(initial))
    assert mask.is_empty() and mask.count() == 0


def test_block_grows_by_one_pixel():
    orig, initial = _pair()
    initial[10:20, 10:20] += 0.5
    mask = make_mask(ImageBuf(orig), ImageBuf(initial), 2 / 255)
    expected = np.zeros((30, 30), bool)
    expected[9:21, 9:21] = True
    assert np.array_equal(mask.bits, expected)


def test_interior_hole_is_closed():
    orig, initial = _pair()
    initial[10:20, 10:20] += 0.5
    initial[15, 15] = orig[15, 15]
    raw = threshold_difference(ImageBuf(orig), ImageBuf(initial))
    assert not raw[15, 15]
    mask = make_mask(ImageBuf(orig), ImageBuf(initial))
    assert mask.bits[15, 15]
    assert mask.count() == 144


def test_mask_is_superset_of_threshold():
    rng = np.random.default_rng(1)
    orig = rng.random((25, 25, 3))
    initial = np.clip(orig + (rng.random((25, 25, 3)) < 0.05) * 0.3, 0, 1)
    raw = threshold_difference(ImageBuf(orig), ImageBuf(initial))
    mask = make_mask(ImageBuf(orig), ImageBuf(initial))
    assert np.all(mask.bits[raw])


def test_block_touching_border_stays_put():
    orig, initial = _pair(20)
    initial[0:5, 0:5] += 0.5
    mask = make_mask(ImageBuf(orig), ImageBuf(initial))
    expected = np.zeros((20, 20), bool)
    expected[0:6, 0:6] = True
    assert np.array_equal(mask.bits, expected)


def test_dimension_mismatch():
    with pytest.raises(InputError):
        make_mask(ImageBuf(np.zeros((4, 4, 3))), ImageBuf(np.zeros((5, 4, 3))))


@pytest.mark.parametrize(
    "data,expected",
    [
        (np.zeros((4, 4)), np.zeros((4, 4), bool)),
        (np.ones((4, 4)), np.ones((4, 4), bool)),
        (np.indices((4, 4)).sum(0) % 2 == 0, np.indices((4, 4)).sum(0) % 2 == 0),
    ],
)
def test_accept_user_mask(data, expected):
    mask = accept_user_mask(ImageBuf(np.asarray(data, float), ColorSpace.GRAY))
    assert np.array_equal(mask.bits, expected)


def test_accept_user_mask_rejects_rgb():
    with pytest.raises(InputError):
        accept_user_mask(ImageBuf(np.zeros((3, 3, 3))))


def test_mask_png_round_trip(tmp_path):
    bits = np.random.default_rng(2).random((9, 11)) < 0.4
    write_mask(tmp_path / "m.png", CorrectionMask(bits))
    assert np.array_equal(read_mask(tmp_path / "m.png").bits, bits)
