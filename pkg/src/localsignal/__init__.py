"""Detection and segmentation of local signals in serially dependent time series."""

from .errors import (
    DegenerateInputError,
    InputError,
    LocalSignalError,
    ThresholdError,
    UnsupportedShapeError,
)
from .model import (
    AnalysisConfig,
    BumpProfile,
    NuisanceModel,
    Regression,
    RhoSpec,
    ShapeKind,
    Sigma2Spec,
    SignalShape,
    TimeSeries,
    evaluate_shape,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "BumpProfile",
    "DegenerateInputError",
    "InputError",
    "LocalSignalError",
    "NuisanceModel",
    "Regression",
    "RhoSpec",
    "ShapeKind",
    "Sigma2Spec",
    "SignalShape",
    "ThresholdError",
    "TimeSeries",
    "UnsupportedShapeError",
    "evaluate_shape",
]
