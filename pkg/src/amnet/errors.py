"""Exception hierarchy shared by every amnet component.

The CLI maps these onto process exit codes: config problems exit 2,
data problems exit 3, everything else exits 1.
"""


class AmnetError(Exception):
    """Base class for all library errors."""


class DimensionError(AmnetError):
    """Tensor shapes are incompatible for the requested operation."""


class DomainError(AmnetError):
    """A value is outside the mathematical domain of an operation."""


class ContractError(AmnetError):
    """A documented precondition of an API was violated."""


class ConfigError(AmnetError):
    """A configuration value is invalid or inconsistent."""


class DataError(AmnetError):
    """Input data could not be parsed, aligned, or transformed."""


class UndefinedMetricError(AmnetError):
    """The metric is mathematically undefined for the given inputs."""


class TrainingDivergedError(AmnetError):
    """Training produced a non-finite loss."""


class CheckpointError(AmnetError):
    """A checkpoint file is malformed or has an unsupported version."""
