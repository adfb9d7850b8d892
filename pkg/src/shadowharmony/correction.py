"""Per-patch correction parameters estimated from the synthesized image."""

import enum
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InputError
from .imaging import ColorSpace, ImageBuf, convert, gather_patches
from .synthesis import _kernels as K

CONFIDENCE_EPS = 0.01
_DEGENERATE = 1e-6


class ChannelModel(enum.IntEnum):
    """Which color space the correction uses and which channels get gain or bias."""

    MODEL0 = 0  # Lab: L gain, a/b bias
    MODEL1 = 1  # Lab: L gain, L/a/b bias
    MODEL2 = 2  # RGB: gains
    MODEL3 = 3  # RGB: gains and biases
    MODEL4 = 4  # HLS: L gain, H/S bias

    @property
    def space(self):
        return _MODEL_SPACE[self]

    @property
    def gain_channels(self):
        return _MODEL_GAIN[self]

    @property
    def bias_channels(self):
        return _MODEL_BIAS[self]

    @property
    def active_channels(self):
        return tuple(c for c in range(3) if self.gain_channels[c] or self.bias_channels[c])


_MODEL_SPACE = {
    ChannelModel.MODEL0: ColorSpace.LAB_NORM,
    ChannelModel.MODEL1: ColorSpace.LAB_NORM,
    ChannelModel.MODEL2: ColorSpace.SRGB,
    ChannelModel.MODEL3: ColorSpace.SRGB,
    ChannelModel.MODEL4: ColorSpace.HLS_NORM,
}
_MODEL_GAIN = {
    ChannelModel.MODEL0: (True, False, False),
    ChannelModel.MODEL1: (True, False, False),
    ChannelModel.MODEL2: (True, True, True),
    ChannelModel.MODEL3: (True, True, True),
    ChannelModel.MODEL4: (False, True, False),
}
_MODEL_BIAS = {
    ChannelModel.MODEL0: (False, True, True),
    ChannelModel.MODEL1: (True, True, True),
    ChannelModel.MODEL2: (False, False, False),
    ChannelModel.MODEL3: (True, True, True),
    ChannelModel.MODEL4: (True, False, True),
}


@dataclass(frozen=True, eq=False)
class CorrectionMap:
    """Correction parameters for every patch centred in the correction region.

    ``gain`` and ``bias`` hold one column per channel of the model's color
    space; disabled channels carry 1 and 0. Under the default model the five
    map channels are ``g_L``, ``b_a``, ``b_b``, ``s_L`` and ``conf``.
    """

    shape: tuple
    targets: np.ndarray
    gain: np.ndarray
    bias: np.ndarray
    texture_scale: np.ndarray
    confidence: np.ndarray
    model: ChannelModel = ChannelModel.MODEL0

    def __post_init__(self):
        n = len(self.targets)
        for name in ("gain", "bias"):
            if getattr(self, name).shape != (n, 3):
                raise InputError(f"{name} must have shape ({n}, 3)")
        for name in ("texture_scale", "confidence"):
            if getattr(self, name).shape != (n,):
                raise InputError(f"{name} must have shape ({n},)")

    def __len__(self):
        return len(self.targets)

    @property
    def g_L(self):
        return self.gain[:, 0]

    @property
    def b_a(self):
        return self.bias[:, 1]

    @property
    def b_b(self):
        return self.bias[:, 2]

    @property
    def s_L(self):
        return self.texture_scale

    @property
    def conf(self):
        return self.confidence

    def channels(self):
        """The five-channel ``(g_L, b_a, b_b, s_L, conf)`` table."""
        return np.column_stack([self.g_L, self.b_a, self.b_b, self.s_L, self.conf])

    def replace(self, **changes):
        return replace(self, **changes)

    def raster(self, values, fill=np.nan):
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.targets[:, 1], self.targets[:, 0]] = values
        return out


def _patch_arrays(img, p):
    data = img.data if isinstance(img, ImageBuf) else np.asarray(img, dtype=np.float64)
    values, valid = gather_patches(data, np.array([p.y]), np.array([p.x]), p.half)
    return values[0][valid[0]]


def fit_gain_bias(n_l, s_l, d_a, d_b, count, gain_range, bias_range):
    """Clamped least-squares L gain and a/b biases mapping initial onto synth.

    Inputs are per-patch sums: ``n_l = sum(N_L^2)``, ``s_l = sum(N_L * S_L)``,
    ``d_a = sum(S_a - N_a)``, ``d_b = sum(S_b - N_b)``. The objective separates
    by channel, so clamping each unconstrained optimum gives the box optimum.
    """
    gain = np.where(n_l > 1e-12, s_l / np.where(n_l > 1e-12, n_l, 1.0), 1.0)
    gain = np.clip(gain, *gain_range)
    bias_a = np.clip(d_a / count, *bias_range)
    bias_b = np.clip(d_b / count, *bias_range)
    return gain, bias_a, bias_b


def _confidence_batch(nv, sv, valid, gain_range, bias_range, eps):
    """Confidence for stacked patches ``nv``/``sv`` of shape (n, k, 3)."""
    w = valid.astype(np.float64)
    count = w.sum(axis=1)
    nl, sl = nv[..., 0] * w, sv[..., 0] * w
    gain, bias_a, bias_b = fit_gain_bias(
        (nl * nl).sum(1), (nl * sl).sum(1),
        ((sv[..., 1] - nv[..., 1]) * w).sum(1), ((sv[..., 2] - nv[..., 2]) * w).sum(1),
        count, gain_range, bias_range,
    )
    res_l = gain[:, None] * nv[..., 0] - sv[..., 0]
    res_a = nv[..., 1] + bias_a[:, None] - sv[..., 1]
    res_b = nv[..., 2] + bias_b[:, None] - sv[..., 2]
    sq = ((res_l**2 + res_a**2 + res_b**2) * w).sum(1)
    residual = np.sqrt(sq / (3.0 * count))
    luminance = np.sqrt((nl * nl).sum(1) / count)
    conf = np.clip(1.0 - residual / (luminance + eps), 0.0, 1.0)
    return conf, residual, (gain, bias_a, bias_b)


def estimate_color_params(initial, synth, p):
    """``(g_L, b_a, b_b)`` for patch ``p``: ratio of L sums and mean a/b differences."""
    nv, sv = _patch_arrays(initial, p), _patch_arrays(synth, p)
    total = nv[:, 0].sum()
    g = 1.0 if total < _DEGENERATE else sv[:, 0].sum() / total
    d = (sv - nv).mean(axis=0)
    return float(g), float(d[1]), float(d[2])


def estimate_texture_param(initial, nnf_entry, source, p, mask=None):
    """Ratio of the matched source patch's L deviation to the initial patch's."""
    src = np.ascontiguousarray(source.data if isinstance(source, ImageBuf) else source, dtype=np.float64)
    srcvalid = np.ones(src.shape[:2], bool) if mask is None else ~np.asarray(getattr(mask, "bits", mask), bool)
    geo = np.array(
        [[nnf_entry.source_x, nnf_entry.source_y, nnf_entry.rotation, nnf_entry.scale, float(nnf_entry.reflected)]]
    )
    sigma_q = _source_sigma(src, srcvalid, np.array([[p.x, p.y]]), geo, p.half)[0]
    sigma_p = _patch_arrays(initial, p)[:, 0].std()
    if sigma_p < _DEGENERATE:
        return 1.0
    return float(sigma_q / sigma_p)


def _source_sigma(src, srcvalid, targets, geo, half):
    k = (2 * half + 1) ** 2
    values = np.zeros((len(targets), k, src.shape[2]))
    valid = np.zeros((len(targets), k), dtype=np.bool_)
    K.sample_patches(
        np.ascontiguousarray(src), np.ascontiguousarray(srcvalid), np.ascontiguousarray(targets, dtype=np.int64),
        np.ascontiguousarray(geo, dtype=np.float64), half, values, valid,
    )
    w = valid.astype(np.float64)
    count = np.maximum(w.sum(1), 1.0)
    mean = (values[..., 0] * w).sum(1) / count
    var = (((values[..., 0] - mean[:, None]) ** 2) * w).sum(1) / count
    return np.sqrt(var)


def estimate_confidence(initial, synth, p, gain_range=(0.9, 1.11), bias_range=(-0.05, 0.05), eps=CONFIDENCE_EPS):
    """How well the synthesized patch is an in-range gain/bias recolor of the initial one."""
    nv, sv = _patch_arrays(initial, p), _patch_arrays(synth, p)
    valid = np.ones((1, len(nv)), dtype=bool)
    conf, _, _ = _confidence_batch(nv[None], sv[None], valid, gain_range, bias_range, eps)
    if nv[:, 0].sum() < _DEGENERATE:
        return 0.0
    return float(conf[0])


def confidence_residual(initial, synth, p, gain_range=(0.9, 1.11), bias_range=(-0.05, 0.05)):
    """Minimum RMS residual over in-range gain/bias and the minimizing parameters."""
    nv, sv = _patch_arrays(initial, p), _patch_arrays(synth, p)
    valid = np.ones((1, len(nv)), dtype=bool)
    _, residual, params = _confidence_batch(nv[None], sv[None], valid, gain_range, bias_range, CONFIDENCE_EPS)
    return float(residual[0]), tuple(float(v[0]) for v in params)


def _wrap_hue(d):
    return (d + 0.5) % 1.0 - 0.5


def _color_params(nv, sv, w, model):
    """Per-channel gain and bias in the model's color space."""
    count = w.sum(1)
    gain = np.ones((len(nv), 3))
    bias = np.zeros((len(nv), 3))
    degenerate = np.zeros(len(nv), dtype=bool)
    hls = model.space is ColorSpace.HLS_NORM
    for c in range(3):
        n_c, s_c = nv[..., c], sv[..., c]
        if model.gain_channels[c] and model.bias_channels[c]:
            mu_n = (n_c * w).sum(1) / count
            mu_s = (s_c * w).sum(1) / count
            sd_n = np.sqrt((((n_c - mu_n[:, None]) ** 2) * w).sum(1) / count)
            sd_s = np.sqrt((((s_c - mu_s[:, None]) ** 2) * w).sum(1) / count)
            g = np.where(sd_n < _DEGENERATE, 1.0, sd_s / np.where(sd_n < _DEGENERATE, 1.0, sd_n))
            gain[:, c] = g
            bias[:, c] = mu_s - g * mu_n
        elif model.gain_channels[c]:
            total_n = (n_c * w).sum(1)
            flat = total_n < _DEGENERATE
            gain[:, c] = np.where(flat, 1.0, (s_c * w).sum(1) / np.where(flat, 1.0, total_n))
            degenerate |= flat
        elif model.bias_channels[c]:
            diff = s_c - n_c
            if hls and c == 0:
                diff = _wrap_hue(diff)
            bias[:, c] = (diff * w).sum(1) / count
    return gain, bias, degenerate


def build_map(
    initial,
    synth,
    nnf,
    mask,
    model=ChannelModel.MODEL0,
    source=None,
    gain_range=(0.9, 1.11),
    bias_range=(-0.05, 0.05),
    eps=CONFIDENCE_EPS,
    patch_size=5,
):
    """Assemble the correction map for every patch centred in the mask.

    ``initial`` and ``synth`` are LAB_NORM images. Color parameters are fitted
    in ``model``'s space; texture scale and confidence always use Lab.
    ``source`` defaults to ``synth``, which equals the original on the source region.
    """
    model = ChannelModel(model)
    bits = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    if initial.shape != synth.shape or bits.shape != initial.shape[:2]:
        raise InputError("initial, synth and mask must share dimensions")
    half = patch_size // 2
    ys, xs = np.nonzero(bits)
    targets = np.stack([xs, ys], axis=1).astype(np.int64)
    n = len(targets)
    if n == 0:
        return CorrectionMap(
            bits.shape, targets, np.ones((0, 3)), np.zeros((0, 3)), np.ones(0), np.ones(0), model
        )

    nv, valid = gather_patches(initial.data, ys, xs, half)
    sv, _ = gather_patches(synth.data, ys, xs, half)
    w = valid.astype(np.float64)
    conf, _, _ = _confidence_batch(nv, sv, valid, gain_range, bias_range, eps)

    if model.space is ColorSpace.LAB_NORM:
        mn, ms = nv, sv
    else:
        mn, _ = gather_patches(convert(initial, model.space).data, ys, xs, half)
        ms, _ = gather_patches(convert(synth, model.space).data, ys, xs, half)
    gain, bias, degenerate = _color_params(mn, ms, w, model)
    degenerate |= (nv[..., 0] * w).sum(1) < _DEGENERATE
    conf = np.where(degenerate, 0.0, conf)

    # texture scale from the matched source patch, not from the blurred synthesis
    if nnf is not None and len(nnf):
        grid = nnf.index_grid()
        idx = grid[ys, xs]
        if (idx < 0).any():
            raise InputError("nearest-neighbour field does not cover every masked pixel")
        src = synth if source is None else source
        srcvalid = np.ones(bits.shape, bool)
        sigma_q = _source_sigma(src.data, srcvalid, targets, nnf.geo[idx], half)
    else:
        count = w.sum(1)
        mu = (sv[..., 0] * w).sum(1) / count
        sigma_q = np.sqrt((((sv[..., 0] - mu[:, None]) ** 2) * w).sum(1) / count)
    count = w.sum(1)
    mu_p = (nv[..., 0] * w).sum(1) / count
    sigma_p = np.sqrt((((nv[..., 0] - mu_p[:, None]) ** 2) * w).sum(1) / count)
    flat = sigma_p < _DEGENERATE
    s_l = np.where(flat, 1.0, sigma_q / np.where(flat, 1.0, sigma_p))

    return CorrectionMap(bits.shape, targets, gain, bias, s_l, conf, model)
