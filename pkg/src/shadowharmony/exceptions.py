class HarmonizeError(Exception):
    """Base class for errors raised by shadowharmony."""


class InputError(HarmonizeError, ValueError):
    """Inputs have the wrong shape, channel count or value range."""


class ConversionError(HarmonizeError, ValueError):
    """No conversion path between two color spaces."""


class SynthesisError(HarmonizeError, RuntimeError):
    """Patch synthesis cannot proceed, e.g. the source region holds no full patch."""


class StageError(HarmonizeError, RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")
