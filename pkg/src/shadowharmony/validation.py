"""Input checks shared by the estimator, the pipeline entry points and the CLI."""

import numpy as np

from .exceptions import InputError
from .imaging import ColorSpace, ImageBuf
from .masks import CorrectionMask, accept_user_mask


def check_image(X, name="image"):
    """Coerce ``X`` to an sRGB ImageBuf.

    Accepts an ImageBuf, or an array of shape (H, W) or (H, W, 1|3|4) holding
    uint8, uint16 or float samples in [0, 1]. Gray input is replicated to RGB
    and an alpha channel is dropped.
    """
    if isinstance(X, ImageBuf):
        if X.space is ColorSpace.GRAY:
            return ImageBuf(np.repeat(X.data, 3, axis=2), ColorSpace.SRGB)
        return X
    arr = np.asarray(X)
    if arr.dtype == np.uint8:
        arr = arr / 255.0
    elif arr.dtype == np.uint16:
        arr = arr / 65535.0
    elif arr.dtype.kind in "iub":
        raise InputError(f"{name}: unsupported integer dtype {arr.dtype}")
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3, 4):
        raise InputError(f"{name}: expected (height, width[, channels]) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"{name}: image is empty")
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    elif arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name}: contains NaN or infinity")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InputError(f"{name}: float samples must lie in [0, 1]")
    return ImageBuf(arr, ColorSpace.SRGB)


def check_same_shape(a, b, names=("image", "initial")):
    if a.shape[:2] != b.shape[:2]:
        raise InputError(f"{names[0]} is {a.width}x{a.height} but {names[1]} is {b.width}x{b.height}")


def check_mask(mask, shape):
    """Coerce an optional mask (CorrectionMask, bool/float array or ImageBuf) to a CorrectionMask."""
    if mask is None:
        return None
    if not isinstance(mask, CorrectionMask):
        arr = mask if isinstance(mask, ImageBuf) else np.asarray(mask)
        if not isinstance(arr, ImageBuf) and arr.dtype == np.bool_:
            mask = CorrectionMask(arr)
        else:
            if not isinstance(arr, ImageBuf) and arr.dtype == np.uint8:
                arr = arr / 255.0
            mask = accept_user_mask(arr)
    if mask.bits.shape != tuple(shape[:2]):
        raise InputError(f"mask shape {mask.bits.shape} does not match image {tuple(shape[:2])}")
    return mask
