"""End-to-end harmonization and the flat pipeline configuration."""

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .apply import apply_color, apply_texture
from .correction import CONFIDENCE_EPS, ChannelModel, build_map
from .exceptions import HarmonizeError, InputError, StageError
from .imaging import ColorSpace, ImageBuf, convert, write_png
from .masks import DEFAULT_THRESHOLD, CorrectionMask, make_mask
from .refine import RefineConfig, refine_color, refine_texture
from .synthesis import SynthesisConfig, synthesize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline as one flat record."""

    patch_size: int = 5
    pyramid_ratio: float = 1.4
    pyramid_min_dim: int = 30
    beta: float = 30.0
    gamma: float = 4.0
    gain_range: tuple = (0.9, 1.11)
    bias_range: tuple = (-0.05, 0.05)
    rotation_range: tuple = (-math.pi, math.pi)
    scale_range: tuple = (2.0 / 3.0, 1.5)
    allow_reflection: bool = True
    em_iters_coarse: int = 20
    em_iters_fine: int = 4
    pm_iters_per_em: int = 2
    lambda_s: float = 10.0
    sigma_m: float = 0.2
    cg_tol: float = 1e-8
    cg_max_iters: int = 2000
    confidence_eps: float = CONFIDENCE_EPS
    model: int = 0
    mask_threshold: float = DEFAULT_THRESHOLD
    mask_dilate_radius: int = 1
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        ChannelModel(self.model)
        if self.threads < 1:
            raise InputError("threads must be at least 1")
        if self.confidence_eps <= 0:
            raise InputError("confidence_eps must be positive")
        # building the sub-configs validates their fields
        self.synthesis
        self.refine

    @property
    def synthesis(self):
        names = {f.name for f in fields(SynthesisConfig)}
        return SynthesisConfig(**{k: v for k, v in asdict(self).items() if k in names})

    @property
    def refine(self):
        return RefineConfig(self.lambda_s, self.sigma_m, self.cg_tol, self.cg_max_iters)

    @property
    def channel_model(self):
        return ChannelModel(self.model)

    def replace(self, **changes):
        return replace(self, **changes)


_TUPLE_KEYS = {"gain_range", "bias_range", "rotation_range", "scale_range"}


def _parse_value(key, text, default):
    if key in _TUPLE_KEYS:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2:
            raise InputError(f"{key} needs two comma-separated numbers, got {text!r}")
        return tuple(float(p) for p in parts)
    if isinstance(default, bool):
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise InputError(f"{key} needs a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    return float(text)


def parse_config(text, base=None):
    """Parse ``key = value`` lines (``#`` starts a comment) onto ``base``."""
    base = base or PipelineConfig()
    known = {f.name: getattr(base, f.name) for f in fields(PipelineConfig)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        try:
            changes[key] = _parse_value(key, value, known[key])
        except ValueError as exc:
            raise InputError(f"config line {lineno}: bad value for {key}: {exc}") from None
    return replace(base, **changes)


def load_config(path, base=None):
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def format_config(cfg):
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = ",".join(repr(float(v)) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def save_config(path, cfg):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(cfg), encoding="utf-8")
    return path


def set_threads(threads):
    import numba

    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


class _stage:
    """Attach the stage name to any failure raised inside the block."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        logger.debug("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class Correction:
    """Everything estimated from an image pair, ready to apply."""

    mask: CorrectionMask
    synthesized: ImageBuf
    field: object
    raw_map: object
    refined_map: object


def estimate_correction(orig, initial, mask=None, cfg=None, dump_dir=None):
    """Run mask generation, synthesis, map estimation and refinement."""
    cfg = cfg or PipelineConfig()
    if orig.shape != initial.shape:
        raise InputError(f"image shapes differ: {orig.shape} vs {initial.shape}")
    if mask is not None and mask.bits.shape != orig.shape[:2]:
        raise InputError(f"mask shape {mask.bits.shape} does not match image {orig.shape[:2]}")
    set_threads(cfg.threads)
    if mask is None:
        with _stage("mask"):
            mask = make_mask(convert(orig, ColorSpace.SRGB), convert(initial, ColorSpace.SRGB),
                             cfg.mask_threshold, cfg.mask_dilate_radius)
    orig_lab = convert(orig, ColorSpace.LAB_NORM)
    initial_lab = convert(initial, ColorSpace.LAB_NORM)
    if mask.is_empty():
        return Correction(mask, orig_lab, None, None, None)
    with _stage("synthesis"):
        synth, nnf = synthesize(orig_lab, initial_lab, mask, cfg.synthesis, cfg.seed, dump_dir)
    with _stage("correction-map"):
        raw = build_map(
            initial_lab, synth, nnf, mask, cfg.channel_model, orig_lab,
            cfg.gain_range, cfg.bias_range, cfg.confidence_eps, cfg.patch_size,
        )
    with _stage("refine"):
        refined = refine_texture(refine_color(raw, initial_lab, cfg.refine, cfg.patch_size))
    if dump_dir is not None:
        dump_map(dump_dir, raw, "raw")
        dump_map(dump_dir, refined, "refined")
    return Correction(mask, synth, nnf, raw, refined)


def apply_correction(initial, correction, cfg=None):
    """Apply a refined map to ``initial``; pixels outside the mask are returned bit-exact."""
    cfg = cfg or PipelineConfig()
    mask = correction.mask
    if mask.bits.shape != initial.shape[:2]:
        raise InputError(f"mask shape {mask.bits.shape} does not match image {initial.shape[:2]}")
    srgb = convert(initial, ColorSpace.SRGB)
    if mask.is_empty() or correction.refined_map is None:
        return srgb
    with _stage("apply"):
        initial_lab = convert(initial, ColorSpace.LAB_NORM)
        color = apply_color(initial_lab, correction.refined_map, mask, cfg.patch_size)
        final = apply_texture(color, initial_lab, correction.refined_map, mask, cfg.patch_size)
        out = np.clip(convert(final, ColorSpace.SRGB).data, 0.0, 1.0)
        out = np.where(mask.bits[..., None], out, srgb.data)
    return ImageBuf(out, ColorSpace.SRGB)


def harmonize(orig, initial, mask=None, cfg=None, dump_dir=None):
    """Harmonize the de-shadowed region of ``initial`` with the rest of the image (sRGB out)."""
    correction = estimate_correction(orig, initial, mask, cfg, dump_dir)
    return apply_correction(initial, correction, cfg)


def dump_map(directory, cmap, prefix):
    """Write the five map channels as grayscale PNGs scaled to their display ranges."""
    directory = Path(directory)
    scales = {
        "gain_L": (cmap.g_L, 0.5, 1.5),
        "bias_a": (cmap.b_a, -0.1, 0.1),
        "bias_b": (cmap.b_b, -0.1, 0.1),
        "texture_L": (cmap.s_L, 0.0, 2.0),
        "confidence": (cmap.conf, 0.0, 1.0),
    }
    for name, (values, lo, hi) in scales.items():
        raster = cmap.raster((values - lo) / (hi - lo), fill=0.0)
        write_png(directory / f"{prefix}_{name}.png", ImageBuf(np.clip(raster, 0, 1), ColorSpace.GRAY))


__all__ = [
    "Correction",
    "HarmonizeError",
    "PipelineConfig",
    "apply_correction",
    "estimate_correction",
    "format_config",
    "harmonize",
    "load_config",
    "parse_config",
    "save_config",
]
