"""Correction-region masks."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import InputError
from .imaging import ColorSpace, ImageBuf

DEFAULT_THRESHOLD = 2.0 / 255.0
_SQUARE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class CorrectionMask:
    """Boolean raster; True marks the correction region, False the source region."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise InputError(f"mask must be 2-D, got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def source(self):
        return ~self.bits

    def count(self):
        return int(self.bits.sum())

    def is_empty(self):
        return not self.bits.any()

    def to_image(self):
        return ImageBuf(self.bits.astype(np.float64), ColorSpace.GRAY)


def threshold_difference(orig, initial, threshold=DEFAULT_THRESHOLD):
    if orig.shape != initial.shape:
        raise InputError(f"image shapes differ: {orig.shape} vs {initial.shape}")
    if orig.space is not initial.space:
        raise InputError(f"color spaces differ: {orig.space.value} vs {initial.space.value}")
    return np.abs(initial.data - orig.data).max(axis=2) > threshold


def make_mask(orig, initial, threshold=DEFAULT_THRESHOLD, dilate_radius=1):
    """Threshold ``|initial - orig|`` then close holes and grow the boundary by one pixel.

    The closing uses a 3x3 square applied ``dilate_radius`` times; a final 3x3
    dilation expands the region by one pixel on each side.
    """
    raw = threshold_difference(orig, initial, threshold)
    bits = raw
    if dilate_radius > 0 and raw.any():
        # pad so the closing does not erode at the image border
        pad = dilate_radius + 1
        padded = np.pad(raw, pad, mode="edge")
        closed = ndimage.binary_closing(padded, structure=_SQUARE, iterations=dilate_radius)
        bits = closed[pad:-pad, pad:-pad] | raw
    bits = ndimage.binary_dilation(bits, structure=_SQUARE)
    return CorrectionMask(bits)


def accept_user_mask(mask_img):
    """Binarize a single-channel mask image at 0.5."""
    if isinstance(mask_img, ImageBuf):
        if mask_img.channels != 1:
            raise InputError(f"mask image must have 1 channel, got {mask_img.channels}")
        data = mask_img.data[:, :, 0]
    else:
        data = np.asarray(mask_img, dtype=np.float64)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim != 2:
            raise InputError(f"mask image must have 1 channel, got shape {data.shape}")
    return CorrectionMask(data > 0.5)


def read_mask(path):
    from .imaging import read_png

    img = read_png(path, ColorSpace.GRAY)
    if img.channels == 3:
        img = ImageBuf(img.data.mean(axis=2, keepdims=True), ColorSpace.GRAY)
    return accept_user_mask(img)


def write_mask(path, mask):
    from .imaging import write_png

    return write_png(path, mask.to_image())
