"""Learning conservative and dissipative decompositions of planar vector fields."""

from .errors import (CheckpointError, DataError, IntegrationError, NumericalError,
                     TrainingDiverged)

__version__ = "0.1.0"

__all__ = ["CheckpointError", "DataError", "IntegrationError", "NumericalError",
           "TrainingDiverged", "__version__"]
