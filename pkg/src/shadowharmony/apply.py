"""Applying a correction map to the initial result by overlapping-patch voting."""

import numpy as np
from scipy import ndimage

from .exceptions import InputError
from .imaging import ColorSpace, ImageBuf, box_sum, convert, local_stats

_FLAT = 1e-6


def _mask_bits(mask, shape):
    bits = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    if bits.shape != shape:
        raise InputError(f"mask shape {bits.shape} does not match image {shape}")
    return bits


def _vote_average(cmap, columns, half):
    """Mean of per-entry ``columns`` over all entries whose patch covers each pixel.

    Pixels no entry covers take the values of the nearest entry.
    """
    h, w = cmap.shape
    xs, ys = cmap.targets[:, 0], cmap.targets[:, 1]
    raster = np.zeros((h, w, columns.shape[1]))
    raster[ys, xs] = columns
    present = np.zeros((h, w))
    present[ys, xs] = 1.0
    total = box_sum(raster, half)
    count = box_sum(present, half)
    covered = count > 0
    mean = np.zeros_like(total)
    mean[covered] = total[covered] / count[covered][:, None]
    if not covered.all():
        _, (ny, nx) = ndimage.distance_transform_edt(present == 0, return_indices=True)
        fill = ~covered
        mean[fill] = raster[ny[fill], nx[fill]]
    return mean


def apply_color(initial, cmap, mask, patch_size=5):
    """Vote per-patch gains and biases onto the initial result (returns I^D in LAB_NORM).

    For a pixel covered by patches Q the value is the average over Q of
    ``gain(Q) * initial(p) + bias(Q)``, evaluated in the map's color space.
    """
    if initial.space is not ColorSpace.LAB_NORM:
        raise InputError("apply_color expects a LAB_NORM image")
    bits = _mask_bits(mask, initial.shape[:2])
    if len(cmap) == 0 or not bits.any():
        return initial
    model = cmap.model
    work = convert(initial, model.space)
    mean = _vote_average(cmap, np.hstack([cmap.gain, cmap.bias]), patch_size // 2)
    corrected = work.data * mean[..., :3] + mean[..., 3:]
    if model.space is ColorSpace.HLS_NORM:
        corrected[..., 0] %= 1.0
        corrected[..., 1:] = np.clip(corrected[..., 1:], 0.0, 1.0)
    out = np.where(bits[..., None], corrected, work.data)
    if model.space is not ColorSpace.LAB_NORM:
        out = convert(ImageBuf(out, model.space), ColorSpace.LAB_NORM).data
        out = np.where(bits[..., None], out, initial.data)
    return initial.with_data(out)


def texture_factors(corrected, initial, cmap, patch_size=5):
    """Per-entry contrast factor ``s * sigma_N / sigma_D`` and patch mean of the corrected L."""
    half = patch_size // 2
    xs, ys = cmap.targets[:, 0], cmap.targets[:, 1]
    mu_d, sd_d, _ = local_stats(corrected.data[..., 0], half)
    _, sd_n, _ = local_stats(initial.data[..., 0], half)
    mu_d, sd_d, sd_n = mu_d[ys, xs], sd_d[ys, xs], sd_n[ys, xs]
    flat = sd_d < _FLAT
    factor = np.where(flat, 1.0, cmap.texture_scale * sd_n / np.where(flat, 1.0, sd_d))
    return factor, mu_d


def apply_texture(corrected, initial, cmap, mask, patch_size=5):
    """Rescale L contrast around each patch mean and average the overlapping votes (returns I^C).

    Chroma passes through from ``corrected`` untouched; flat patches vote the
    corrected value unchanged.
    """
    bits = _mask_bits(mask, corrected.shape[:2])
    if len(cmap) == 0 or not bits.any():
        return corrected
    factor, mu_d = texture_factors(corrected, initial, cmap, patch_size)
    # vote of patch Q at p: factor * (D(p) - mu) + mu = factor * D(p) + (1 - factor) * mu
    mean = _vote_average(cmap, np.column_stack([factor, (1.0 - factor) * mu_d]), patch_size // 2)
    out = corrected.data.copy()
    lum = corrected.data[..., 0] * mean[..., 0] + mean[..., 1]
    out[..., 0] = np.where(bits, lum, corrected.data[..., 0])
    return corrected.with_data(out)
