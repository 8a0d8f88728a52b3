"""Ridge-regularized CUSUM tests for mean changes in high-dimensional panels."""

from ._backend import BACKEND
from .datamodel import ObservationMatrix, SegmentPrefix, load_csv
from .exceptions import (
    CacheIOError,
    ConvergenceError,
    DegenerateDataError,
    RidgeCusumError,
    ValidationError,
)
from .spectral import RidgeContext, eigendecompose, pooled_covariance
from .scan import ScanResult, ScanTriple, t_mc, t_mc_grid, t_sc

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ObservationMatrix",
    "SegmentPrefix",
    "load_csv",
    "RidgeContext",
    "eigendecompose",
    "pooled_covariance",
    "ScanResult",
    "ScanTriple",
    "t_sc",
    "t_mc",
    "t_mc_grid",
    "RidgeCusumError",
    "ValidationError",
    "DegenerateDataError",
    "ConvergenceError",
    "CacheIOError",
]
