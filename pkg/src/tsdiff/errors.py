"""Exception hierarchy shared by all tsdiff modules."""


class TsdiffError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(TsdiffError):
    """Operand shapes do not conform to a kernel's contract."""


class NumericError(TsdiffError):
    """A forward/backward pass or sampler produced NaN or Inf."""


class ConfigError(TsdiffError):
    """A configuration value is out of its legal range."""


class ContractError(TsdiffError):
    """A documented precondition was violated by the caller."""


class StepIndexError(TsdiffError):
    """A diffusion step index lies outside [1, T]."""


class IngestionError(TsdiffError):
    """A cohort manifest or subject file failed to load or validate."""


class CheckpointError(TsdiffError):
    """A checkpoint file has bad magic, version, or CRC."""


class UsageError(TsdiffError):
    """Bad command line arguments."""
