"""Patch-based harmonization of de-shadowed image regions."""

from .apply import apply_color, apply_texture
from .correction import ChannelModel, CorrectionMap, build_map
from .estimator import ShadowHarmonizer
from .exceptions import ConversionError, HarmonizeError, InputError, StageError, SynthesisError
from .imaging import ColorSpace, ImageBuf, Patch, build_pyramid, convert, patch_stats, read_png, write_png
from .masks import CorrectionMask, accept_user_mask, make_mask
from .pipeline import PipelineConfig, apply_correction, estimate_correction, harmonize
from .refine import RefineConfig, refine_color, refine_texture
from .synthesis import NNField, PatchTransform, SynthesisConfig, synthesize
from .validation import check_image, check_mask

__version__ = "0.1.0"
