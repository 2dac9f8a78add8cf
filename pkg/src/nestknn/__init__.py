"""Nested k-nearest-neighbour detection of precipitation occurrence and phase
from multichannel brightness temperatures."""

from .calibration import CalibrationResult, RocCurve, auc, calibrate_all, max_curvature_point, roc_curve, select_k
from .core import (
    AtmosphericClass,
    ContingencyTable,
    LandSurfaceClass,
    MatchedSample,
    PhaseLabel,
    Query,
    StageParams,
    WeightMatrix,
)
from .database import AprioriDatabase, build_balanced_database, load_database, persist_database
from .detector import Detection, Detector, LandParams, detect_phase, retrieve
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    InvariantError,
    NestedKnnError,
    StratumShortfallError,
    UndefinedMetricError,
    ValidationError,
)
from .grid import PhaseGrid, grid_accumulate, merge_grids, zonal_mean
from .knn import SearchIndex, brute_force_knn, build_index, query_knn
from .synthetic import scenario_separable

__version__ = "0.1.0"

__all__ = [
    "AprioriDatabase",
    "AtmosphericClass",
    "CalibrationResult",
    "ConfigError",
    "ContingencyTable",
    "DataError",
    "Detection",
    "Detector",
    "FormatError",
    "InvariantError",
    "LandParams",
    "LandSurfaceClass",
    "MatchedSample",
    "NestedKnnError",
    "PhaseGrid",
    "PhaseLabel",
    "Query",
    "RocCurve",
    "SearchIndex",
    "StageParams",
    "StratumShortfallError",
    "UndefinedMetricError",
    "ValidationError",
    "WeightMatrix",
    "auc",
    "brute_force_knn",
    "build_balanced_database",
    "build_index",
    "calibrate_all",
    "detect_phase",
    "grid_accumulate",
    "load_database",
    "max_curvature_point",
    "merge_grids",
    "persist_database",
    "query_knn",
    "retrieve",
    "roc_curve",
    "scenario_separable",
    "select_k",
    "zonal_mean",
]
