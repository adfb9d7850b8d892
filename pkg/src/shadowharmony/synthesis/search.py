"""Guided coarse-to-fine patch synthesis of the correction region."""

import logging
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..exceptions import InputError, SynthesisError
from ..imaging import ColorSpace, ImageBuf, pyramid_shapes, resize_area
from . import _kernels as K
from .field import NNField, SynthesisConfig

logger = logging.getLogger(__name__)


def _as_array(img):
    return np.ascontiguousarray(img.data if isinstance(img, ImageBuf) else img, dtype=np.float64)


def _mask_bits(mask, shape):
    if mask is None:
        return np.zeros(shape, dtype=bool)
    bits = getattr(mask, "bits", mask)
    bits = np.ascontiguousarray(bits, dtype=bool)
    if bits.shape != shape:
        raise InputError(f"mask shape {bits.shape} does not match image {shape}")
    return bits


def patch_distance(target, t, current, initial, source, cfg=None, mask=None):
    """Guided distance between target patch ``target`` and its match under transform ``t``.

    Returns ``(distance, (gain_L, bias_a, bias_b))`` where the gain and bias
    are the clamped least-squares fit used by the guidance term. ``mask``
    marks the correction region; its complement is where sources may lie.
    The distance is ``inf`` when the transformed footprint leaves the source region.
    """
    cfg = cfg or SynthesisConfig()
    cur, ini, src = _as_array(current), _as_array(initial), _as_array(source)
    srcvalid = ~_mask_bits(mask, src.shape[:2])
    out = np.empty(4)
    K.patch_cost(
        cur, ini, src, srcvalid, int(target.x), int(target.y),
        float(t.source_x), float(t.source_y), float(t.rotation), float(t.scale),
        1.0 if t.reflected else 0.0, target.size // 2, cfg.cost_params(), out,
    )
    return float(out[3]), (float(out[0]), float(out[1]), float(out[2]))


def source_centers(srcvalid, half):
    """Pixels whose untransformed square patch lies entirely inside the source region."""
    size = 2 * half + 1
    inner = ndimage.binary_erosion(srcvalid, structure=np.ones((size, size), bool), border_value=0)
    ys, xs = np.nonzero(inner)
    if len(xs) == 0:
        raise SynthesisError("source region is too small to hold a single full patch")
    return np.stack([xs, ys], axis=1)


def random_field(mask, cfg=None, seed=0, centers=None):
    """Field over every correction-region pixel with uniformly random source patches."""
    cfg = cfg or SynthesisConfig()
    bits = np.ascontiguousarray(getattr(mask, "bits", mask), dtype=bool)
    if centers is None:
        centers = source_centers(~bits, cfg.half)
    ys, xs = np.nonzero(bits)
    targets = np.stack([xs, ys], axis=1)
    rng = np.random.default_rng(seed)
    picks = centers[rng.integers(len(centers), size=len(targets))]
    geo = np.zeros((len(targets), 5))
    geo[:, K.SX], geo[:, K.SY], geo[:, K.SCALE] = picks[:, 0], picks[:, 1], 1.0
    return NNField(bits.shape, targets, geo)


class _Level:
    """Arrays for one pyramid level, in the layout the kernels expect."""

    def __init__(self, current, initial, source, mask, cfg):
        self.cur = _as_array(current)
        self.ini = _as_array(initial)
        self.src = _as_array(source)
        self.tmask = _mask_bits(mask, self.src.shape[:2])
        self.srcvalid = np.ascontiguousarray(~self.tmask)
        self.cfg = cfg
        self.params = cfg.cost_params()
        self.search = cfg.search_params()

    def costs(self, nnf):
        K.field_costs(self.cur, self.ini, self.src, self.srcvalid, nnf.targets, nnf.geo, nnf.photo, self.cfg.half, self.params)

    def sweep(self, nnf, index, seed, stream):
        state = K.seed_state(np.uint64(seed), np.uint64(stream))
        for reverse in (False, True):
            K.pm_sweep(
                self.cur, self.ini, self.src, self.srcvalid, nnf.targets, index, nnf.geo, nnf.photo,
                self.cfg.half, self.params, self.search, state, reverse,
            )

    def vote(self, nnf, fallback=None):
        return _vote_arrays(self.src, self.tmask, nnf, self.cfg.half, fallback)


def pm_search(nnf, current, initial, source, mask, cfg=None, seed=0, iteration=0):
    """One forward and one backward propagation/random-search pass.

    Distances are first re-evaluated against ``current``; an entry changes only
    when a candidate is strictly better, so the total distance never increases.
    """
    cfg = cfg or SynthesisConfig()
    level = _Level(current, initial, source, mask, cfg)
    if not level.srcvalid.any():
        raise SynthesisError("source region is empty")
    source_centers(level.srcvalid, cfg.half)
    out = nnf.copy()
    level.costs(out)
    level.sweep(out, out.index_grid(), seed, iteration)
    return out


def _vote_arrays(src, tmask, nnf, half, fallback):
    acc = np.zeros(src.shape)
    cnt = np.zeros(src.shape[:2])
    K.vote_field(src, np.ascontiguousarray(~tmask), tmask, nnf.targets, nnf.geo, nnf.photo, half, acc, cnt)
    out = (src if fallback is None else _as_array(fallback)).copy()
    hit = cnt > 0
    out[hit] = acc[hit] / cnt[hit][:, None]
    return out


def vote(nnf, source, mask, patch_size=5, fallback=None):
    """Average the untransformed source samples of all matches covering each correction pixel.

    Pixels outside the mask, and any the field leaves uncovered, come from
    ``fallback`` (default: the source image).
    """
    src = source if isinstance(source, ImageBuf) else ImageBuf(source, ColorSpace.LAB_NORM)
    data = _as_array(src)
    tmask = _mask_bits(mask, data.shape[:2])
    return src.with_data(_vote_arrays(data, tmask, nnf, patch_size // 2, fallback))


def upsample_field(coarse, shape, mask, cfg, seed=0, centers=None):
    """Carry a coarse field to a finer level: positions scale, transforms are kept."""
    bits = np.ascontiguousarray(getattr(mask, "bits", mask), dtype=bool)
    fine = random_field(bits, cfg, seed, centers)
    if len(coarse) == 0 or len(fine) == 0:
        return fine
    ch, cw = coarse.shape
    h, w = shape
    ry, rx = h / ch, w / cw
    grid = coarse.index_grid()
    xs, ys = fine.targets[:, 0], fine.targets[:, 1]
    xc = np.clip(np.floor((xs + 0.5) / rx).astype(int), 0, cw - 1)
    yc = np.clip(np.floor((ys + 0.5) / ry).astype(int), 0, ch - 1)
    # nearest coarse entry for fine targets whose parent pixel has none
    _, (near_y, near_x) = ndimage.distance_transform_edt(grid < 0, return_indices=True)
    parent = grid[near_y[yc, xc], near_x[yc, xc]]
    xc, yc = coarse.targets[parent, 0], coarse.targets[parent, 1]
    g = coarse.geo[parent]
    c, s = np.cos(g[:, K.ROT]) * g[:, K.SCALE], np.sin(g[:, K.ROT]) * g[:, K.SCALE]
    f = np.where(g[:, K.REFL] > 0.5, -1.0, 1.0)
    ox = xs - ((xc + 0.5) * rx - 0.5)
    oy = ys - ((yc + 0.5) * ry - 0.5)
    fine.geo[:, K.SX] = np.round((g[:, K.SX] + 0.5) * rx - 0.5 + c * f * ox - s * oy)
    fine.geo[:, K.SY] = np.round((g[:, K.SY] + 0.5) * ry - 0.5 + s * f * ox + c * oy)
    fine.geo[:, K.ROT:] = g[:, K.ROT:]
    return fine


def em_schedule(n_levels, cfg):
    """EM iteration count per level, interpolated linearly from coarse to fine."""
    if n_levels == 1:
        return [cfg.em_iters_coarse]
    steps = np.linspace(cfg.em_iters_coarse, cfg.em_iters_fine, n_levels)
    return [int(round(v)) for v in steps]


def _reseed_invalid(nnf, level, centers, seed):
    level.costs(nnf)
    bad = ~np.isfinite(nnf.photo[:, K.DIST])
    if bad.any():
        rng = np.random.default_rng(seed)
        picks = centers[rng.integers(len(centers), size=int(bad.sum()))]
        nnf.geo[bad] = 0.0
        nnf.geo[bad, K.SX], nnf.geo[bad, K.SY], nnf.geo[bad, K.SCALE] = picks[:, 0], picks[:, 1], 1.0
        level.costs(nnf)


def synthesize(orig, initial, mask, cfg=None, seed=0, dump_dir=None):
    """Fill the correction region from source patches, guided by the initial result.

    ``orig`` and ``initial`` are LAB_NORM images. Returns the synthesized image
    and the full-resolution field of matches.
    """
    cfg = cfg or SynthesisConfig()
    if orig.shape != initial.shape:
        raise InputError(f"image shapes differ: {orig.shape} vs {initial.shape}")
    bits = _mask_bits(mask, orig.shape[:2])
    if not bits.any():
        return orig, NNField(bits.shape, np.zeros((0, 2)), np.zeros((0, 5)))
    shapes = pyramid_shapes(orig.height, orig.width, cfg.pyramid_ratio, cfg.pyramid_min_dim)
    schedule = em_schedule(len(shapes), cfg)
    dump_dir = Path(dump_dir) if dump_dir is not None else None
    nnf = None
    cur = None
    for lvl, ((h, w), iters) in enumerate(zip(shapes, schedule)):
        finest = lvl == len(shapes) - 1
        if finest:
            o, n, m = orig.data, initial.data, bits
        else:
            o = resize_area(orig.data, h, w)
            n = resize_area(initial.data, h, w)
            m = resize_area(bits.astype(np.float64), h, w) > 1e-9
        level = _Level(np.where(m[..., None], n, o), n, o, m, cfg)
        try:
            centers = source_centers(level.srcvalid, cfg.half)
        except SynthesisError as exc:
            raise SynthesisError(f"level {lvl} ({w}x{h}): {exc}") from None
        level_seed = (seed * 7919 + lvl) & 0xFFFFFFFF
        if nnf is None:
            nnf = random_field(m, cfg, level_seed, centers)
        else:
            nnf = upsample_field(nnf, (h, w), m, cfg, level_seed, centers)
            _reseed_invalid(nnf, level, centers, level_seed + 1)
            level.cur = level.vote(nnf, fallback=level.cur)
        _reseed_invalid(nnf, level, centers, level_seed + 2)
        index = nnf.index_grid()
        for em in range(iters):
            level.costs(nnf)
            for p in range(cfg.pm_iters_per_em):
                level.sweep(nnf, index, seed, (lvl << 20) | (em << 8) | p)
            level.cur = level.vote(nnf, fallback=level.cur)
        logger.debug("level %d %dx%d: %d EM iterations, mean distance %.4f", lvl, w, h, iters, nnf.dist.mean())
        if dump_dir is not None:
            from ..imaging import convert, write_png

            write_png(dump_dir / f"synth_level{lvl:02d}.png", convert(ImageBuf(level.cur, ColorSpace.LAB_NORM), ColorSpace.SRGB))
        cur = level.cur
    level.costs(nnf)
    result = np.where(bits[..., None], cur, orig.data)
    if dump_dir is not None:
        nnf.save(dump_dir / "nnf.bin")
    return ImageBuf(result, ColorSpace.LAB_NORM), nnf
