"""Synthetic residual-shadow experiments and error metrics."""

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .exceptions import InputError
from .imaging import ColorSpace, ImageBuf, convert, linear_to_srgb, srgb_to_linear, write_png
from .masks import CorrectionMask, make_mask
from .pipeline import PipelineConfig, harmonize

logger = logging.getLogger(__name__)

CSV_HEADER = ("case", "model", "ranges", "err_before", "err_after", "reduction_pct")
FIXTURE_GAINS = (0.45, 0.5, 0.6)


@dataclass(frozen=True, eq=False)
class SyntheticCase:
    shadow_free: ImageBuf
    shadow_full: ImageBuf
    region: CorrectionMask
    alpha: float = 0.2
    noise_sigma: float = 0.0
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.shadow_free.shape != self.shadow_full.shape:
            raise InputError("shadow-free and shadowed images differ in shape")
        if self.region.bits.shape != self.shadow_free.shape[:2]:
            raise InputError("region does not match the image size")


def shadow_matte(region, softness):
    bits = np.asarray(getattr(region, "bits", region), dtype=np.float64)
    if softness <= 0:
        return bits
    return np.clip(ndimage.gaussian_filter(bits, softness, mode="nearest"), 0.0, 1.0)


def make_shadow(shadow_free, region, gain_rgb=FIXTURE_GAINS, softness=0.0, seed=0):
    """Darken ``shadow_free`` per linear-RGB channel under a Gaussian-feathered matte.

    ``seed`` is accepted for interface symmetry; the shadow itself is deterministic.
    """
    gains = np.asarray(gain_rgb, dtype=np.float64)
    if gains.shape != (3,) or np.any(gains <= 0) or np.any(gains > 1):
        raise InputError(f"gains must be three values in (0, 1], got {gain_rgb}")
    matte = shadow_matte(region, softness)[..., None]
    linear = convert(shadow_free, ColorSpace.LINEAR_RGB).data
    darkened = linear * (1.0 - matte * (1.0 - gains))
    return ImageBuf(np.clip(linear_to_srgb(darkened), 0.0, 1.0), ColorSpace.SRGB)


def make_initial(case):
    """Synthetic imperfect removal: alpha-blend of shadowed and shadow-free images plus noise.

    The noise is achromatic: one Gaussian sample per pixel is added to all
    three sRGB channels inside the region.
    """
    blend = case.alpha * case.shadow_full.data + (1.0 - case.alpha) * case.shadow_free.data
    if case.noise_sigma > 0:
        rng = np.random.default_rng(case.seed)
        noise = rng.normal(0.0, case.noise_sigma, blend.shape[:2])[..., None]
        blend = np.where(case.region.bits[..., None], np.clip(blend + noise, 0.0, 1.0), blend)
    return ImageBuf(blend, ColorSpace.SRGB)


def region_error(result, truth, region):
    """Mean absolute normalized-Lab difference over the region's pixels and channels."""
    if result.shape != truth.shape:
        raise InputError(f"shapes differ: {result.shape} vs {truth.shape}")
    bits = np.asarray(getattr(region, "bits", region), dtype=bool)
    if not bits.any():
        warnings.warn("empty evaluation region; reporting zero error", RuntimeWarning)
        return 0.0
    a = convert(result, ColorSpace.LAB_NORM).data
    b = convert(truth, ColorSpace.LAB_NORM).data
    return float(np.abs(a - b)[bits].mean())


def fixture_texture(size=256, seed=0, grain=0.01):
    """Montage of a checkerboard, a colored noise texture and periodic gradient bands.

    The three textures occupy vertical thirds so each continues above and below
    a centred shadow. A faint grain keeps flat areas from being perfectly flat.
    """
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size, 3))
    yy, xx = np.mgrid[0:size, 0:size]
    c1, c2 = int(size * 7 / 16), int(size * 9 / 16)

    checker = ((yy // 16 + xx // 16) % 2).astype(bool)
    tile_a = np.array([0.78, 0.64, 0.46])
    tile_b = np.array([0.46, 0.56, 0.70])
    img[:, :c1] = np.where(checker[:, :c1, None], tile_a, tile_b)

    noise = ndimage.gaussian_filter(rng.normal(size=(size, size)), 1.2, mode="wrap")
    noise /= noise.std()
    base = np.array([0.45, 0.62, 0.35])
    img[:, c1:c2] = np.clip(base + 0.08 * noise[:, c1:c2, None], 0.0, 1.0)

    phase = (yy % 24) / 24.0
    band_lo = np.array([0.85, 0.55, 0.40])
    band_hi = np.array([0.55, 0.35, 0.60])
    bands = band_lo + (band_hi - band_lo) * phase[..., None]
    img[:, c2:] = bands[:, c2:]

    if grain > 0:
        img = img + rng.normal(0.0, grain, img.shape)
    return ImageBuf(np.clip(img, 0.0, 1.0), ColorSpace.SRGB)


def fixture_region(size=256, box=96):
    bits = np.zeros((size, size), dtype=bool)
    lo = (size - box) // 2
    bits[lo:lo + box, lo:lo + box] = True
    return CorrectionMask(bits)


@dataclass(frozen=True, eq=False)
class Fixture:
    shadow_free: ImageBuf
    shadow_full: ImageBuf
    region: CorrectionMask
    evaluation_region: CorrectionMask

    def case(self, alpha=0.2, noise_sigma=0.0, seed=0):
        name = f"alpha{alpha:g}_noise{noise_sigma:g}"
        return SyntheticCase(self.shadow_free, self.shadow_full, self.region, alpha, noise_sigma, seed, name)


def standard_fixture(size=256, box=96, softness=3.0, gains=FIXTURE_GAINS, seed=0):
    """The standard textured scene with a feathered square cast shadow."""
    free = fixture_texture(size, seed)
    region = fixture_region(size, box)
    full = make_shadow(free, region, gains, softness, seed)
    evaluation = make_mask(full, free)
    return Fixture(free, full, region, evaluation)


@dataclass
class StudyRow:
    case: str
    model: int
    ranges: str
    err_before: float
    err_after: float
    reduction_pct: float
    failed: str = ""

    def as_csv(self):
        if self.failed:
            return [self.case, str(self.model), self.ranges, "nan", "nan", "nan"]
        return [
            self.case, str(self.model), self.ranges,
            f"{self.err_before:.6f}", f"{self.err_after:.6f}", f"{self.reduction_pct:.3f}",
        ]


@dataclass
class StudyReport:
    rows: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow(row.as_csv())
        return buf.getvalue()

    def to_text(self):
        lines = [f"{'case':<24}{'model':>6}{'ranges':>9}{'before':>10}{'after':>10}{'reduction':>11}"]
        for r in self.rows:
            if r.failed:
                lines.append(f"{r.case:<24}{r.model:>6}{r.ranges:>9}  FAILED: {r.failed}")
            else:
                lines.append(
                    f"{r.case:<24}{r.model:>6}{r.ranges:>9}{r.err_before:>10.5f}{r.err_after:>10.5f}{r.reduction_pct:>10.2f}%"
                )
        return "\n".join(lines) + "\n"


def evaluate_case(case, evaluation_region, cfg):
    initial = make_initial(case)
    result = harmonize(case.shadow_full, initial, None, cfg)
    before = region_error(initial, case.shadow_free, evaluation_region)
    after = region_error(result, case.shadow_free, evaluation_region)
    return initial, result, before, after


def reduction_pct(before, after):
    return 0.0 if before <= 0 else 100.0 * (before - after) / before


def run_study(
    alphas=(0.2, 0.5),
    noises=(0.0,),
    models=(0,),
    ranges=("middle",),
    seed=0,
    base=None,
    fixture=None,
    out_dir=None,
):
    """Run every (alpha, noise, model, range) combination on the standard fixture.

    Failures are recorded in their row and the study moves on.
    """
    base = base or PipelineConfig()
    report = StudyReport()
    combos = [(a, s, m, r) for a in alphas for s in noises for m in models for r in ranges]
    if not combos:
        return report
    fixture = fixture or standard_fixture(seed=seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        write_png(out_dir / "truth.png", fixture.shadow_free)
        write_png(out_dir / "shadow.png", fixture.shadow_full)
    for alpha, noise, model, preset in combos:
        case = fixture.case(alpha, noise, seed)
        synth = base.synthesis.with_ranges(preset)
        cfg = base.replace(model=int(model), seed=seed, gain_range=synth.gain_range, bias_range=synth.bias_range)
        try:
            initial, result, before, after = evaluate_case(case, fixture.evaluation_region, cfg)
        except Exception as exc:  # a failing case must not abort the study
            logger.error("case %s model %s ranges %s failed: %s", case.name, model, preset, exc)
            report.rows.append(StudyRow(case.name, int(model), preset, np.nan, np.nan, np.nan, str(exc)))
            continue
        report.rows.append(StudyRow(case.name, int(model), preset, before, after, reduction_pct(before, after)))
        if out_dir is not None:
            stem = f"{case.name}_model{model}_{preset}"
            write_png(out_dir / f"{stem}_initial.png", initial)
            write_png(out_dir / f"{stem}_result.png", result)
    return report
