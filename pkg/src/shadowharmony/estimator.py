"""scikit-learn style front end: fit a correction map on an image pair, then transform."""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .correction import CONFIDENCE_EPS
from .imaging import ImageBuf
from .masks import DEFAULT_THRESHOLD
from .pipeline import Correction, PipelineConfig, apply_correction, estimate_correction
from .validation import check_image, check_mask, check_same_shape


class ShadowHarmonizer(TransformerMixin, BaseEstimator):
    """Make a de-shadowed region consistent in color and texture with its surroundings.

    ``fit(image, initial)`` takes the original photograph and an initial
    shadow-removal result, derives the correction region, reconstructs it
    from outside patches and estimates a refined per-patch correction map.
    ``transform(initial)`` applies that map. Images are sRGB arrays of shape
    (H, W, 3) with float samples in [0, 1] (uint8/uint16 are rescaled), or
    ``ImageBuf`` objects; outputs match the input kind.

    Fitted attributes: ``mask_``, ``synthesized_`` (Lab), ``field_``,
    ``raw_map_``, ``correction_map_`` and ``n_patches_``.
    """

    def __init__(
        self,
        patch_size=5,
        pyramid_ratio=1.4,
        pyramid_min_dim=30,
        beta=30.0,
        gamma=4.0,
        gain_range=(0.9, 1.11),
        bias_range=(-0.05, 0.05),
        rotation_range=(-math.pi, math.pi),
        scale_range=(2.0 / 3.0, 1.5),
        allow_reflection=True,
        em_iters_coarse=20,
        em_iters_fine=4,
        pm_iters_per_em=2,
        lambda_s=10.0,
        sigma_m=0.2,
        cg_tol=1e-8,
        cg_max_iters=2000,
        confidence_eps=CONFIDENCE_EPS,
        model=0,
        mask_threshold=DEFAULT_THRESHOLD,
        mask_dilate_radius=1,
        seed=0,
        threads=1,
    ):
        self.patch_size = patch_size
        self.pyramid_ratio = pyramid_ratio
        self.pyramid_min_dim = pyramid_min_dim
        self.beta = beta
        self.gamma = gamma
        self.gain_range = gain_range
        self.bias_range = bias_range
        self.rotation_range = rotation_range
        self.scale_range = scale_range
        self.allow_reflection = allow_reflection
        self.em_iters_coarse = em_iters_coarse
        self.em_iters_fine = em_iters_fine
        self.pm_iters_per_em = pm_iters_per_em
        self.lambda_s = lambda_s
        self.sigma_m = sigma_m
        self.cg_tol = cg_tol
        self.cg_max_iters = cg_max_iters
        self.confidence_eps = confidence_eps
        self.model = model
        self.mask_threshold = mask_threshold
        self.mask_dilate_radius = mask_dilate_radius
        self.seed = seed
        self.threads = threads

    @classmethod
    def from_config(cls, cfg):
        return cls(**{name: getattr(cfg, name) for name in cls._get_param_names()})

    def to_config(self):
        return PipelineConfig(**self.get_params())

    def fit(self, image, initial, mask=None):
        cfg = self.to_config()
        image = check_image(image, "image")
        initial = check_image(initial, "initial")
        check_same_shape(image, initial)
        mask = check_mask(mask, image.shape)
        correction = estimate_correction(image, initial, mask, cfg)
        self.mask_ = correction.mask
        self.synthesized_ = correction.synthesized
        self.field_ = correction.field
        self.raw_map_ = correction.raw_map
        self.correction_map_ = correction.refined_map
        self.n_patches_ = 0 if correction.refined_map is None else len(correction.refined_map)
        self.image_shape_ = image.shape
        return self

    def transform(self, initial):
        check_is_fitted(self, "mask_")
        as_buffer = isinstance(initial, ImageBuf)
        img = check_image(initial, "initial")
        if img.shape != self.image_shape_:
            raise ValueError(f"initial has shape {img.shape}, fitted on {self.image_shape_}")
        correction = Correction(self.mask_, self.synthesized_, self.field_, self.raw_map_, self.correction_map_)
        out = apply_correction(img, correction, self.to_config())
        return out if as_buffer else np.array(out.data)

    def fit_transform(self, image, initial, mask=None):
        return self.fit(image, initial, mask).transform(initial)
