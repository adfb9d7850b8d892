"""Image containers, color conversion, pyramids and patch statistics.

All pixel data lives in float64 arrays of shape ``(height, width, channels)``.
Lab values are stored normalized as ``(L*/100, a*/128, b*/128)`` so that gain
and bias ranges share one scale across channels.
"""

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConversionError, InputError


class ColorSpace(str, enum.Enum):
    SRGB = "srgb"
    LINEAR_RGB = "linear_rgb"
    LAB_NORM = "lab_norm"
    HLS_NORM = "hls_norm"
    GRAY = "gray"


_THREE_CHANNEL = {ColorSpace.SRGB, ColorSpace.LINEAR_RGB, ColorSpace.LAB_NORM, ColorSpace.HLS_NORM}

# sRGB primaries, D65 white (IEC 61966-2-1)
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_LAB_SCALE = np.array([100.0, 128.0, 128.0])
_DELTA = 6.0 / 29.0


@dataclass(frozen=True, eq=False)
class ImageBuf:
    """Immutable float raster tagged with its color space."""

    data: np.ndarray
    space: ColorSpace = ColorSpace.SRGB

    def __post_init__(self):
        space = ColorSpace(self.space)
        data = np.array(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InputError(f"image data must be (height, width, channels), got {data.shape}")
        expected = 3 if space in _THREE_CHANNEL else 1
        if data.shape[2] != expected:
            raise InputError(f"{space.value} images need {expected} channel(s), got {data.shape[2]}")
        if not np.all(np.isfinite(data)):
            raise InputError("image contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "space", space)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data, space=None):
        return ImageBuf(data, self.space if space is None else space)


def srgb_to_linear(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((np.maximum(v, 0.04045) + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(
        v <= 0.0031308, 12.92 * v, 1.055 * np.maximum(v, 0.0031308) ** (1.0 / 2.4) - 0.055
    )


def _lab_f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _lab_finv(f):
    return np.where(f > _DELTA, f**3, 3 * _DELTA**2 * (f - 4.0 / 29.0))


def linear_to_lab(rgb):
    xyz = rgb @ _RGB_TO_XYZ.T / _WHITE
    fx, fy, fz = (_lab_f(xyz[..., i]) for i in range(3))
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    return lab / _LAB_SCALE


def lab_to_linear(lab):
    lab = lab * _LAB_SCALE
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_lab_finv(fx), _lab_finv(fy), _lab_finv(fz)], axis=-1) * _WHITE
    return xyz @ _XYZ_TO_RGB.T


def rgb_to_hls(rgb):
    """Vectorized ``colorsys.rgb_to_hls``; hue in [0, 1)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    span = maxc - minc
    light = (maxc + minc) / 2.0
    chromatic = span > 0
    safe = np.where(chromatic, span, 1.0)
    denom = np.where(light <= 0.5, maxc + minc, 2.0 - maxc - minc)
    sat = np.where(chromatic, span / np.where(denom > 0, denom, 1.0), 0.0)
    rc, gc, bc = (maxc - r) / safe, (maxc - g) / safe, (maxc - b) / safe
    hue = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    hue = np.where(chromatic, (hue / 6.0) % 1.0, 0.0)
    return np.stack([hue, light, sat], axis=-1)


def hls_to_rgb(hls):
    """Vectorized ``colorsys.hls_to_rgb``."""
    h, light, s = hls[..., 0], hls[..., 1], hls[..., 2]
    m2 = np.where(light <= 0.5, light * (1.0 + s), light + s - light * s)
    m1 = 2.0 * light - m2

    def channel(hue):
        hue = hue % 1.0
        return np.where(
            hue < 1 / 6,
            m1 + (m2 - m1) * hue * 6.0,
            np.where(hue < 0.5, m2, np.where(hue < 2 / 3, m1 + (m2 - m1) * (2 / 3 - hue) * 6.0, m1)),
        )

    rgb = np.stack([channel(h + 1 / 3), channel(h), channel(h - 1 / 3)], axis=-1)
    return np.where((s == 0)[..., None], light[..., None], rgb)


def _to_linear(data, space):
    if space is ColorSpace.LINEAR_RGB:
        return data
    if space is ColorSpace.SRGB:
        return srgb_to_linear(data)
    if space is ColorSpace.LAB_NORM:
        return lab_to_linear(data)
    if space is ColorSpace.HLS_NORM:
        return srgb_to_linear(hls_to_rgb(data))
    if space is ColorSpace.GRAY:
        return np.repeat(srgb_to_linear(data), 3, axis=2)
    raise ConversionError(f"cannot convert from {space!r}")


def _from_linear(lin, space):
    if space is ColorSpace.LINEAR_RGB:
        return lin
    if space is ColorSpace.SRGB:
        return linear_to_srgb(lin)
    if space is ColorSpace.LAB_NORM:
        return linear_to_lab(lin)
    if space is ColorSpace.HLS_NORM:
        return rgb_to_hls(np.clip(linear_to_srgb(lin), 0.0, 1.0))
    if space is ColorSpace.GRAY:
        luminance = lin @ _RGB_TO_XYZ[1]
        return linear_to_srgb(luminance)[..., None]
    raise ConversionError(f"cannot convert to {space!r}")


def convert(img, target):
    """Return ``img`` expressed in color space ``target``.

    Every conversion routes through linear RGB; Lab uses the D65 white point.
    """
    try:
        target = ColorSpace(target)
    except ValueError as exc:
        raise ConversionError(f"unsupported color space {target!r}") from exc
    if img.space is target:
        return img
    return ImageBuf(_from_linear(_to_linear(img.data, img.space), target), target)


# --------------------------------------------------------------------------- pyramid


@dataclass(frozen=True)
class Pyramid:
    levels: list  # coarsest first
    ratio: float = 1.4
    min_dim: int = 30

    def __len__(self):
        return len(self.levels)

    @property
    def finest(self):
        return self.levels[-1]


def pyramid_shapes(height, width, ratio=1.4, min_dim=30):
    """(height, width) of every pyramid level, coarsest first."""
    smallest = min(height, width)
    if smallest < min_dim:
        return [(height, width)]
    count = int(math.floor(math.log(smallest / min_dim) / math.log(ratio) + 1e-9)) + 1
    shapes = []
    for k in range(count - 1, 0, -1):
        factor = ratio**k
        shapes.append(
            (max(1, int(math.floor(height / factor + 1e-9))), max(1, int(math.floor(width / factor + 1e-9))))
        )
    shapes.append((height, width))
    return shapes


def _area_weights(n_in, n_out):
    scale = n_in / n_out
    edges = np.arange(n_out + 1) * scale
    cells = np.arange(n_in)
    lo = np.maximum(edges[:-1, None], cells[None, :])
    hi = np.minimum(edges[1:, None], cells[None, :] + 1)
    return np.clip(hi - lo, 0.0, None) / scale


def resize_area(data, height, width):
    """Area-weighted (box) resampling of an ``(H, W, C)`` or ``(H, W)`` array."""
    data = np.asarray(data, dtype=np.float64)
    wy = _area_weights(data.shape[0], height)
    wx = _area_weights(data.shape[1], width)
    rows = np.tensordot(wy, data, axes=(1, 0))
    return np.moveaxis(np.tensordot(wx, rows, axes=(1, 1)), 0, 1)


def build_pyramid(img, ratio=1.4, min_dim=30):
    """Coarse-to-fine pyramid whose coarsest smaller side lies in [min_dim, min_dim*ratio)."""
    shapes = pyramid_shapes(img.height, img.width, ratio, min_dim)
    levels = [img.with_data(resize_area(img.data, h, w)) for h, w in shapes[:-1]]
    levels.append(img)
    return Pyramid(levels, ratio, min_dim)


# --------------------------------------------------------------------------- patches


@dataclass(frozen=True)
class Patch:
    """Square patch of odd side ``size`` centred on pixel ``(x, y)``."""

    x: int
    y: int
    size: int = 5

    def __post_init__(self):
        if self.size < 3 or self.size % 2 == 0:
            raise InputError(f"patch size must be odd and >= 3, got {self.size}")

    @property
    def half(self):
        return self.size // 2

    def footprint(self, height, width):
        """Row and column slices of the patch clipped to the image."""
        h = self.half
        rows = slice(max(self.y - h, 0), min(self.y + h + 1, height))
        cols = slice(max(self.x - h, 0), min(self.x + h + 1, width))
        if rows.start >= rows.stop or cols.start >= cols.stop:
            raise InputError(f"patch at ({self.x}, {self.y}) does not intersect the image")
        return rows, cols


def patch_stats(img, p):
    """Per-channel mean and population standard deviation over the clipped patch."""
    rows, cols = p.footprint(img.height, img.width)
    values = img.data[rows, cols].reshape(-1, img.channels)
    mean = values.mean(axis=0)
    std = np.sqrt(np.maximum(((values - mean) ** 2).mean(axis=0), 0.0))
    return mean, std


def box_sum(a, half):
    """Sum of ``a`` over every clipped ``(2*half+1)``-square window; first two axes are spatial."""
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape[:2]
    padded = np.zeros((h + 1, w + 1) + a.shape[2:])
    padded[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    y0 = np.clip(np.arange(h) - half, 0, h)
    y1 = np.clip(np.arange(h) + half + 1, 0, h)
    x0 = np.clip(np.arange(w) - half, 0, w)
    x1 = np.clip(np.arange(w) + half + 1, 0, w)
    return (
        padded[y1][:, x1] - padded[y0][:, x1] - padded[y1][:, x0] + padded[y0][:, x0]
    )


def local_stats(data, half):
    """Mean and standard deviation maps over clipped windows, plus pixel counts."""
    data = np.asarray(data, dtype=np.float64)
    count = box_sum(np.ones(data.shape[:2]), half)
    shape = count.shape + (1,) * (data.ndim - 2)
    n = count.reshape(shape)
    mean = box_sum(data, half) / n
    var = box_sum(data * data, half) / n - mean * mean
    return mean, np.sqrt(np.maximum(var, 0.0)), count


def patch_offsets(half):
    """Integer (dy, dx) offsets of a patch in row-major order."""
    r = np.arange(-half, half + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    return dy.ravel(), dx.ravel()


def gather_patches(data, ys, xs, half):
    """Stack patch samples around each centre.

    Returns ``values`` of shape ``(n, k, C)`` and a boolean ``valid`` of shape
    ``(n, k)`` marking offsets that fall inside the image (invalid samples are 0).
    """
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[:, :, None]
    dy, dx = patch_offsets(half)
    yy = np.asarray(ys)[:, None] + dy[None, :]
    xx = np.asarray(xs)[:, None] + dx[None, :]
    valid = (yy >= 0) & (yy < data.shape[0]) & (xx >= 0) & (xx < data.shape[1])
    values = data[np.clip(yy, 0, data.shape[0] - 1), np.clip(xx, 0, data.shape[1] - 1)]
    values = np.where(valid[..., None], values, 0.0)
    return values, valid


# --------------------------------------------------------------------------- PNG I/O


def read_png(path, space=ColorSpace.SRGB):
    """Read an 8- or 16-bit PNG into an sRGB (or gray) ImageBuf with values in [0, 1]."""
    import cv2

    if not Path(path).is_file():
        raise InputError(f"no such image file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InputError(f"cannot read image {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise InputError(f"unsupported PNG sample type {raw.dtype} in {path}")
    if raw.ndim == 3:
        raw = raw[:, :, :3][:, :, ::-1]
    data = raw.astype(np.float64) / scale
    if data.ndim == 2 or data.shape[2] == 1:
        gray = data.reshape(data.shape[0], data.shape[1], 1)
        space = ColorSpace(space)
        if space is ColorSpace.GRAY:
            return ImageBuf(gray, ColorSpace.GRAY)
        return ImageBuf(np.repeat(gray, 3, axis=2), ColorSpace.SRGB)
    return ImageBuf(data, ColorSpace.SRGB)


def write_png(path, img, bits=8):
    """Write an sRGB or gray ImageBuf (other spaces are converted to sRGB first)."""
    import cv2

    if img.space not in (ColorSpace.SRGB, ColorSpace.GRAY):
        img = convert(img, ColorSpace.SRGB)
    if bits == 8:
        dtype, scale = np.uint8, 255.0
    elif bits == 16:
        dtype, scale = np.uint16, 65535.0
    else:
        raise InputError(f"bits must be 8 or 16, got {bits}")
    raw = np.round(np.clip(img.data, 0.0, 1.0) * scale).astype(dtype)
    raw = raw[:, :, 0] if img.channels == 1 else raw[:, :, ::-1]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(raw)):
        raise InputError(f"cannot write image {path}")
    return path
