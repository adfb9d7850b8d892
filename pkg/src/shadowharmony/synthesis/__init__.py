from .field import NNField, PatchTransform, RANGE_PRESETS, SynthesisConfig, load_field_records
from .search import (
    em_schedule,
    patch_distance,
    pm_search,
    random_field,
    source_centers,
    synthesize,
    upsample_field,
    vote,
)

__all__ = [
    "NNField",
    "PatchTransform",
    "RANGE_PRESETS",
    "SynthesisConfig",
    "em_schedule",
    "load_field_records",
    "patch_distance",
    "pm_search",
    "random_field",
    "source_centers",
    "synthesize",
    "upsample_field",
    "vote",
]
