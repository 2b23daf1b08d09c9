"""Exception types shared across the toolkit.

Exit-code mapping used by the CLI and service:
  InputError / ConfigurationError  -> exit 2 (bad input)
  NumericalFailure / TrainingDivergedError -> exit 3 (numerical failure)
"""


class MaskbeamError(Exception):
    """Base class for all toolkit errors."""


class InputError(MaskbeamError):
    """Invalid input data: bad shapes, unreadable files, empty signals."""


class ConfigurationError(MaskbeamError):
    """Invalid configuration, e.g. a window/hop pair that is not COLA."""


class NumericalFailure(MaskbeamError):
    """A linear-algebra kernel failed (singular system, non-convergence).

    ``bin_index`` identifies the frequency bin when the failure occurred
    inside a per-bin computation, else None.
    """

    def __init__(self, message, bin_index=None):
        if bin_index is not None:
            message = f"{message} (frequency bin {bin_index})"
        super().__init__(message)
        self.bin_index = bin_index


class DegenerateBinError(MaskbeamError):
    """A per-bin statistic degenerated (e.g. vanishing RTF reference power).

    Callers are expected to substitute a documented fallback value.
    """

    def __init__(self, message, bin_index=None):
        if bin_index is not None:
            message = f"{message} (frequency bin {bin_index})"
        super().__init__(message)
        self.bin_index = bin_index


class DegenerateMaskError(MaskbeamError):
    """A mask row sums to zero so the masked PSD is undefined for that bin."""

    def __init__(self, message, bins=None):
        if bins:
            message = f"{message} (bins {list(bins)[:8]}{'...' if len(bins) > 8 else ''})"
        super().__init__(message)
        self.bins = list(bins) if bins else []


class TrainingDivergedError(MaskbeamError):
    """Mask-estimator training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch
