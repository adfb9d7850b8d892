"""Synthesis settings and the nearest-neighbour field container."""

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..exceptions import InputError
from . import _kernels as K

RANGE_PRESETS = {
    "narrow": ((0.99, 1.01), (-0.01, 0.01)),
    "middle": ((0.9, 1.11), (-0.05, 0.05)),
    "wide": ((0.8, 1.25), (-0.1, 0.1)),
}


@dataclass(frozen=True)
class SynthesisConfig:
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

    def __post_init__(self):
        for name in ("gain_range", "bias_range", "rotation_range", "scale_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if lo > hi:
                raise InputError(f"{name} is empty: [{lo}, {hi}]")
            object.__setattr__(self, name, (lo, hi))
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise InputError(f"patch_size must be odd and >= 3, got {self.patch_size}")
        if self.beta <= 0:
            raise InputError("beta must be positive")
        if self.gamma < 0:
            raise InputError("gamma must be non-negative")
        if not self.gain_range[0] <= 1.0 <= self.gain_range[1]:
            raise InputError("gain_range must contain 1")
        if not self.bias_range[0] <= 0.0 <= self.bias_range[1]:
            raise InputError("bias_range must contain 0")
        if self.scale_range[0] <= 0:
            raise InputError("scale_range must be positive")
        if self.pyramid_ratio <= 1.0 or self.pyramid_min_dim < 1:
            raise InputError("pyramid_ratio must exceed 1 and pyramid_min_dim be positive")
        if min(self.em_iters_coarse, self.em_iters_fine, self.pm_iters_per_em) < 1:
            raise InputError("iteration counts must be at least 1")

    @property
    def half(self):
        return self.patch_size // 2

    def with_ranges(self, preset):
        """Copy with gain/bias ranges taken from ``narrow``, ``middle`` or ``wide``."""
        try:
            gains, biases = RANGE_PRESETS[preset]
        except KeyError:
            raise InputError(f"unknown range preset {preset!r}") from None
        return replace(self, gain_range=gains, bias_range=biases)

    def translation_only(self):
        """Copy with rotation, scaling, reflection and gain/bias disabled."""
        return replace(
            self,
            gain_range=(1.0, 1.0),
            bias_range=(0.0, 0.0),
            rotation_range=(0.0, 0.0),
            scale_range=(1.0, 1.0),
            allow_reflection=False,
        )

    def cost_params(self):
        return np.array([self.beta, self.gamma, *self.gain_range, *self.bias_range], dtype=np.float64)

    def search_params(self):
        return np.array(
            [*self.rotation_range, *self.scale_range, 1.0 if self.allow_reflection else 0.0],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class PatchTransform:
    source_x: float
    source_y: float
    rotation: float = 0.0
    scale: float = 1.0
    reflected: bool = False
    gain_L: float = 1.0
    bias_a: float = 0.0
    bias_b: float = 0.0


NNF_RECORD = np.dtype(
    [
        ("target_x", "<f4"),
        ("target_y", "<f4"),
        ("source_x", "<f4"),
        ("source_y", "<f4"),
        ("rotation", "<f4"),
        ("scale", "<f4"),
        ("reflected", "u1"),
        ("gain", "<f4"),
        ("bias_a", "<f4"),
        ("bias_b", "<f4"),
        ("dist", "<f4"),
    ]
)


@dataclass(eq=False)
class NNField:
    """Best source match for every target patch centre, in scanline order.

    ``targets`` holds integer (x, y) centres; ``geo`` columns are source x,
    source y, rotation, scale and reflection flag; ``photo`` columns are the
    fitted L gain, a bias, b bias and the patch distance.
    """

    shape: tuple
    targets: np.ndarray
    geo: np.ndarray
    photo: np.ndarray = field(default=None)

    def __post_init__(self):
        self.targets = np.ascontiguousarray(self.targets, dtype=np.int64).reshape(-1, 2)
        self.geo = np.ascontiguousarray(self.geo, dtype=np.float64).reshape(-1, 5)
        if self.photo is None:
            self.photo = np.zeros((len(self.targets), 4))
            self.photo[:, K.GAIN] = 1.0
            self.photo[:, K.DIST] = np.inf
        self.photo = np.ascontiguousarray(self.photo, dtype=np.float64).reshape(-1, 4)
        if not len(self.targets) == len(self.geo) == len(self.photo):
            raise InputError("field arrays disagree in length")

    def __len__(self):
        return len(self.targets)

    def copy(self):
        return NNField(self.shape, self.targets.copy(), self.geo.copy(), self.photo.copy())

    @property
    def dist(self):
        return self.photo[:, K.DIST]

    def total_distance(self):
        return float(self.photo[:, K.DIST].sum())

    def index_grid(self):
        grid = np.full(self.shape, -1, dtype=np.int64)
        grid[self.targets[:, 1], self.targets[:, 0]] = np.arange(len(self))
        return grid

    def transform(self, i):
        g, p = self.geo[i], self.photo[i]
        return PatchTransform(
            float(g[K.SX]), float(g[K.SY]), float(g[K.ROT]), float(g[K.SCALE]), bool(g[K.REFL] > 0.5),
            float(p[K.GAIN]), float(p[K.BIAS_A]), float(p[K.BIAS_B]),
        )

    def to_records(self):
        rec = np.zeros(len(self), dtype=NNF_RECORD)
        rec["target_x"], rec["target_y"] = self.targets[:, 0], self.targets[:, 1]
        rec["source_x"], rec["source_y"] = self.geo[:, K.SX], self.geo[:, K.SY]
        rec["rotation"], rec["scale"] = self.geo[:, K.ROT], self.geo[:, K.SCALE]
        rec["reflected"] = self.geo[:, K.REFL] > 0.5
        rec["gain"], rec["bias_a"], rec["bias_b"] = (self.photo[:, c] for c in range(3))
        rec["dist"] = self.photo[:, K.DIST]
        return rec

    def save(self, path):
        """Write the field as packed little-endian records (see ``NNF_RECORD``)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_records().tobytes())
        return path


def load_field_records(path):
    return np.frombuffer(Path(path).read_bytes(), dtype=NNF_RECORD)


def config_fields():
    return [f.name for f in fields(SynthesisConfig)]
