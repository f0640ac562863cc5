"""amnet: interpretable attention modular networks for time series.

Three cooperating components make up the model: a recurrent encoder that
learns temporal structure, an attention head stack that scores and selects
input features, and one small additive network per selected feature whose
summed outputs form the prediction. Every prediction decomposes exactly
into per-feature contributions, which is what makes the model explainable.
"""

from .autodiff import Tensor, backward, grad_check, no_grad
from .errors import (
    AmnetError,
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    DomainError,
    TrainingDivergedError,
    UndefinedMetricError,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "grad_check",
    "no_grad",
    "AmnetError",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DomainError",
    "TrainingDivergedError",
    "UndefinedMetricError",
    "__version__",
]
